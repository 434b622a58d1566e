import os
import sys
import json
import string

import numpy as np

from otalign.constants import (
    SYN_VARIANTS,
    SYN_METRICS,
    VARIANT_KEYWORDS,
    METRIC_KEYWORDS,
    LAMBDA_FACTOR,
    THREADS_ENV_VAR,
    Variant,
    Metric,
)
from otalign.exceptions import InvalidParameter, ParseError


def warn(msg):
    print(f"*** {msg} ***", file=sys.stderr)


def indexify(txt):
    INDEX_CHARS = string.ascii_lowercase + string.digits
    _txt = txt.lower()
    return "".join([i for i in _txt if i in INDEX_CHARS])


def get_abs_variant(variant):
    """
    Converts a string variant into the correct Variant.
    Takes into account different equivalent ways to write the variants
    ("one_to_k", "1:k", "One-to-k assignment", ...).
    """
    if isinstance(variant, Variant):
        return variant

    _variant = indexify(str(variant))
    for v, synonyms in SYN_VARIANTS.items():
        if _variant in synonyms or _variant == indexify(VARIANT_KEYWORDS[v]):
            return v

    raise InvalidParameter(f"Unknown alignment variant: '{variant}'")


def get_abs_metric(metric):
    if isinstance(metric, Metric):
        return metric

    _metric = indexify(str(metric))
    for m, synonyms in SYN_METRICS.items():
        if _metric in synonyms or _metric == indexify(METRIC_KEYWORDS[m]):
            return m

    raise InvalidParameter(f"Unknown cost metric: '{metric}'")


def default_lambda(n, m):
    return LAMBDA_FACTOR / (n * m)


def parse_positive_int(value, name, minimum=1):
    try:
        _value = int(value)
    except (ValueError, TypeError):
        raise InvalidParameter(f"Invalid {name}: '{value}'")

    if abs(_value - float(value)) > 1e-4:
        raise InvalidParameter(f"The {name} must be an integer (received '{value}')")

    if _value < minimum:
        raise InvalidParameter(
            f"The {name} must be at least {minimum} (received '{value}')"
        )
    return _value


def parse_real(value, name):
    try:
        _value = float(value)
    except (ValueError, TypeError):
        raise InvalidParameter(f"Invalid {name}: '{value}'")

    if not np.isfinite(_value):
        raise InvalidParameter(f"The {name} must be finite (received '{value}')")
    return _value


def read_json(path):
    if not os.path.isfile(path):
        raise InvalidParameter(f"Input file not found: {path}")

    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.decoder.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in {path}: {e}")
    except UnicodeDecodeError:
        raise ParseError(f"{path} is not valid UTF-8 text")


def read_text(path):
    if not os.path.isfile(path):
        raise InvalidParameter(f"Input file not found: {path}")

    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except UnicodeDecodeError:
        raise ParseError(f"{path} is not valid UTF-8 text")


def iter_lines(path):
    """Lines of a UTF-8 text file, read lazily"""
    try:
        with open(path, encoding="utf-8") as f:
            yield from f
    except UnicodeDecodeError:
        raise ParseError(f"{path} is not valid UTF-8 text")


def dump_json(obj, path=None):
    txt = json.dumps(obj, indent=2, allow_nan=False)
    if path:
        with open(path, "w", encoding="utf-8") as out:
            out.write(txt + "\n")
    return txt


def get_thread_count():
    env = os.environ.get(THREADS_ENV_VAR, "").strip()
    if env == "":
        return os.cpu_count() or 1
    return parse_positive_int(env, f"thread count ({THREADS_ENV_VAR})")
