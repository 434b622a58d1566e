import os

import numpy as np
import regex
from scipy.spatial.distance import cdist

from otalign.constants import ABBREVIATIONS, Metric
from otalign.exceptions import InvalidParameter, ParseError, FormatError, ShapeError
from otalign.transport import CostMatrix
from otalign.utilities import get_abs_metric, iter_lines, warn

# Terminator(s), optional closing quotes, then whitespace and the start of a new sentence
SENTENCE_BOUNDARY = regex.compile(
    r"[.!?]+[\"'”’)]*(?=\s+[\"'“‘(]?[\p{Lu}\p{N}])"
)
WORD = regex.compile(r"[\p{L}\p{N}]+")


class SpanSet:
    def __init__(self, spans, source_id=None):
        _spans = [" ".join(str(s).split()) for s in spans]

        if len(_spans) == 0:
            raise InvalidParameter("A span set needs at least one span")

        for ind, span in enumerate(_spans):
            if span == "":
                raise InvalidParameter(f"Span {ind} is empty")

        self.spans = _spans
        self.source_id = source_id

    def __len__(self):
        return len(self.spans)

    def __iter__(self):
        return iter(self.spans)

    def __getitem__(self, ind):
        return self.spans[ind]


def _is_abbreviation(text, start, end):
    words = text[start:end].split()
    if not words:
        return False
    return words[-1].lower().rstrip("\"')”’") in ABBREVIATIONS


def split_sentences(text, source_id=None):
    """
    Rule-based sentence splitter: a span ends at '.', '!' or '?' followed by
    whitespace and an uppercase letter, a digit or an opening quote, unless
    the period closes a known abbreviation.
    """
    if text is None or text.strip() == "":
        raise InvalidParameter("Cannot split an empty text into sentences")

    spans = []
    start = 0
    for match in SENTENCE_BOUNDARY.finditer(text):
        end = match.end()
        if match.group().startswith(".") and _is_abbreviation(text, start, end):
            continue
        span = text[start:end].strip()
        if span:
            spans.append(span)
        start = end

    tail = text[start:].strip()
    if tail:
        spans.append(tail)

    return SpanSet(spans, source_id)


class EmbeddingTable:
    def __init__(self, entries, dimension=None):
        if dimension is None:
            if len(entries) == 0:
                raise InvalidParameter("Cannot infer the dimension of an empty table")
            dimension = len(next(iter(entries.values())))

        self.dimension = int(dimension)
        self.entries = {}
        for token, vec in entries.items():
            v = np.array(vec, dtype=float)
            if v.shape != (self.dimension,):
                raise FormatError(
                    f"Vector of '{token}' has {v.size} components, expected {self.dimension}"
                )
            v.flags.writeable = False
            self.entries[token] = v

    def __len__(self):
        return len(self.entries)

    def __contains__(self, token):
        return token in self.entries

    def __getitem__(self, token):
        return self.entries[token]

    def get(self, token, default=None):
        return self.entries.get(token, default)


def _is_header(fields):
    return len(fields) == 2 and all(f.isdigit() for f in fields)


def load_embeddings(path):
    """
    Reads word vectors in the text format: an optional "count dim" header,
    then one "token v1 ... vd" line per token. The first occurrence of a
    duplicated token is kept.
    """
    if not os.path.isfile(path):
        raise InvalidParameter(f"Embedding file not found: {path}")

    entries = {}
    dimension = None
    declared_count = None

    for lineno, line in enumerate(iter_lines(path), start=1):
        fields = line.split()
        if not fields:
            continue

        if lineno == 1 and _is_header(fields):
            declared_count, dimension = int(fields[0]), int(fields[1])
            continue

        token, raw = fields[0], fields[1:]
        if len(raw) == 0:
            raise ParseError(f"Line {lineno} of {path} has no vector components")

        try:
            vec = [float(x) for x in raw]
        except ValueError:
            raise ParseError(f"Line {lineno} of {path} contains an invalid number")

        if dimension is None:
            dimension = len(vec)
        elif len(vec) != dimension:
            raise FormatError(
                f"Line {lineno} of {path} has {len(vec)} components, expected {dimension}"
            )

        if token not in entries:
            entries[token] = vec

    if len(entries) == 0:
        raise ParseError(f"No vectors found in {path}")

    if declared_count is not None and declared_count != len(entries):
        warn(
            f"The header of {path} announces {declared_count} vectors "
            f"but {len(entries)} distinct tokens were read"
        )

    return EmbeddingTable(entries, dimension)


def tokenize(span):
    return WORD.findall(span.lower())


def embed_span(span, table):
    """
    Mean of the vectors of the in-vocabulary tokens of a span.
    Returns the vector and a flag that is True when every token is unknown.
    """
    if len(table) == 0:
        raise InvalidParameter("The embedding table is empty")

    vectors = [table[t] for t in tokenize(span) if t in table]
    if len(vectors) == 0:
        return np.zeros(table.dimension), True
    return np.mean(vectors, axis=0), False


def embed_span_set(spans, table):
    """Stacks the span vectors. Also returns the indices of all-OOV spans."""
    vectors = []
    oov = []
    for ind, span in enumerate(spans):
        vec, is_oov = embed_span(span, table)
        vectors.append(vec)
        if is_oov:
            oov.append(ind)
    return np.vstack(vectors), oov


def _as_matrix(vectors, name):
    try:
        arr = np.atleast_2d(np.array(vectors, dtype=float))
    except (ValueError, TypeError):
        raise InvalidParameter(f"Invalid {name} vectors")

    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ShapeError(f"The {name} vectors must form a non-empty 2D array")
    return arr


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def cost_matrix(xs, ys, metric=Metric.COSINE_DISTANCE):
    """
    Pairwise costs between two sets of vectors. With the cosine metrics a
    zero vector has similarity 0 with everything.
    """
    X = _as_matrix(xs, "first")
    Y = _as_matrix(ys, "second")
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(
            f"Vector dimensions differ: {X.shape[1]} and {Y.shape[1]}"
        )

    metric = get_abs_metric(metric)
    if metric in (Metric.COSINE_DISTANCE, Metric.NEGATIVE_COSINE):
        cos = np.clip(_unit_rows(X).dot(_unit_rows(Y).T), -1.0, 1.0)
        values = 1.0 - cos if metric == Metric.COSINE_DISTANCE else -cos
    elif metric == Metric.EUCLIDEAN:
        values = cdist(X, Y, "euclidean")
    else:
        values = -X.dot(Y.T)

    return CostMatrix(values)
