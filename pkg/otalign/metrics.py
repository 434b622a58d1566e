import numpy as np

from otalign.exceptions import InvalidParameter
from otalign.transport import transport_cost
from otalign.utilities import default_lambda, parse_real, warn


class RankedList:
    """
    Candidates of one query sorted by decreasing score.
    Equal scores are ordered by candidate id.
    """

    def __init__(self, query_id, candidates):
        _candidates = []
        for candidate in candidates:
            try:
                cid, score, relevant = candidate
            except (ValueError, TypeError):
                raise InvalidParameter(
                    f"Candidates must be (id, score, relevant) triples (received '{candidate}')"
                )
            _candidates.append(
                (cid, parse_real(score, f"score of candidate {cid}"), bool(relevant))
            )

        if len(_candidates) == 0:
            raise InvalidParameter(f"Query '{query_id}' has no candidates")

        self.query_id = query_id
        self.candidates = sorted(_candidates, key=lambda c: (-c[1], c[0]))

    @property
    def relevance(self):
        return np.array([rel for _, _, rel in self.candidates], dtype=bool)

    @property
    def scores(self):
        return np.array([score for _, score, _ in self.candidates])

    @property
    def has_relevant(self):
        return bool(self.relevance.any())

    @property
    def has_irrelevant(self):
        return bool((~self.relevance).any())

    def __len__(self):
        return len(self.candidates)


def score_pair(c, p):
    """Similarity of two documents: -<C, P>, so that higher is better"""
    return -transport_cost(c, p)


def average_precision(ranked):
    ranks = np.flatnonzero(ranked.relevance) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def reciprocal_rank(ranked):
    return 1.0 / (int(np.argmax(ranked.relevance)) + 1)


def pairwise_auc(ranked):
    rel = ranked.relevance
    pos = ranked.scores[rel]
    neg = ranked.scores[~rel]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (pos.size * neg.size))


def _evaluate(lists, fn, name, need_irrelevant=False):
    values = []
    skipped = []
    for ranked in lists:
        if not ranked.has_relevant:
            missing = "relevant"
        elif need_irrelevant and not ranked.has_irrelevant:
            missing = "irrelevant"
        else:
            values.append(fn(ranked))
            continue

        warn(f"Query '{ranked.query_id}' skipped for {name}: no {missing} candidate")
        skipped.append(ranked.query_id)

    if len(values) == 0:
        return None, skipped
    return float(np.mean(values)), skipped


def mean_average_precision(lists):
    return _evaluate(lists, average_precision, "MAP")[0]


def mean_reciprocal_rank(lists):
    return _evaluate(lists, reciprocal_rank, "MRR")[0]


def precision_at_1(lists):
    return _evaluate(lists, lambda r: float(r.relevance[0]), "P@1")[0]


def auc(lists):
    return _evaluate(lists, pairwise_auc, "AUC", need_irrelevant=True)[0]


def evaluate_rankings(lists):
    """
    All four ranking metrics. Queries without a relevant candidate are
    skipped and listed; AUC also skips queries without irrelevant candidates.
    """
    lists = list(lists)
    _map, skipped = _evaluate(lists, average_precision, "MAP")
    _mrr, _ = _evaluate([r for r in lists if r.has_relevant], reciprocal_rank, "MRR")
    _p1, _ = _evaluate(
        [r for r in lists if r.has_relevant], lambda r: float(r.relevance[0]), "P@1"
    )
    _auc, auc_skipped = _evaluate(
        [r for r in lists if r.has_relevant], pairwise_auc, "AUC", need_irrelevant=True
    )

    return {
        "auc": _auc,
        "map": _map,
        "mrr": _mrr,
        "p_at_1": _p1,
        "evaluated_queries": len(lists) - len(skipped),
        "skipped_queries": skipped,
        "auc_skipped_queries": auc_skipped,
    }


def sparsity_stats(plans, lam=None):
    """
    Mean number of active alignments and mean fraction of active entries,
    the fraction being computed per plan before averaging.
    """
    counts = []
    fractions = []
    for p in plans:
        _lam = default_lambda(p.n, p.m) if lam is None else lam
        if _lam < 0:
            raise InvalidParameter(f"The active threshold must be nonnegative (received {_lam})")
        count = int(np.count_nonzero(p.values > _lam))
        counts.append(count)
        fractions.append(count / (p.n * p.m))

    if len(counts) == 0:
        return {"mean_active_count": 0.0, "mean_active_percent": 0.0}

    return {
        "mean_active_count": float(np.mean(counts)),
        "mean_active_percent": float(np.mean(fractions)),
    }
