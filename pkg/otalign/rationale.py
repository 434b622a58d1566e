import numpy as np

from otalign.constants import (
    CROSS_ENTROPY_CLIP,
    DEFAULT_ALPHA,
    DEFAULT_DELTA_GRID_SIZE,
    DELTA_GRID_FACTOR,
)
from otalign.exceptions import InvalidParameter, ShapeError
from otalign.transport import TransportPlan, transport_cost
from otalign.utilities import default_lambda, parse_real


def _binary_vector(values, name):
    try:
        v = np.array(values, dtype=float).ravel()
    except (ValueError, TypeError):
        raise InvalidParameter(f"Invalid {name}: '{values}'")

    if not np.all((v == 0) | (v == 1)):
        raise InvalidParameter(f"The {name} must only contain 0 and 1")
    return v.astype(int)


class RationalePair:
    def __init__(self, r_x, r_y):
        self.r_x = _binary_vector(r_x, "rationale of the first document")
        self.r_y = _binary_vector(r_y, "rationale of the second document")

    def to_dict(self):
        return {"x": self.r_x.tolist(), "y": self.r_y.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["x"], d["y"])
        except (KeyError, TypeError):
            raise InvalidParameter("Rationales need the keys 'x' and 'y'")

    def __eq__(self, other):
        return (
            isinstance(other, RationalePair)
            and np.array_equal(self.r_x, other.r_x)
            and np.array_equal(self.r_y, other.r_y)
        )


class SoftRationales:
    def __init__(self, s_x, s_y):
        self.s_x = np.asarray(s_x, dtype=float)
        self.s_y = np.asarray(s_y, dtype=float)

    def scaled(self, factor):
        return SoftRationales(factor * self.s_x, factor * self.s_y)


def _plan_values(p):
    return p.values if isinstance(p, TransportPlan) else np.asarray(p, dtype=float)


def _check_delta(delta):
    delta = parse_real(delta, "threshold delta")
    if delta < 0:
        raise InvalidParameter(f"The threshold delta must be nonnegative (received {delta})")
    return delta


def binarize(p, delta):
    """R^x_i = 1 iff some P_ij > delta, and likewise for R^y_j"""
    delta = _check_delta(delta)
    above = _plan_values(p) > delta
    return RationalePair(above.any(axis=1).astype(int), above.any(axis=0).astype(int))


def soft_rationales(p):
    P = _plan_values(p)
    return SoftRationales(P.sum(axis=1), P.sum(axis=0))


def token_f1(pred, gold):
    """
    Token-level F1 of a binary selection. Two empty selections agree
    perfectly and score 1.
    """
    pred = _binary_vector(pred, "predicted rationale")
    gold = _binary_vector(gold, "gold rationale")
    if pred.shape != gold.shape:
        raise ShapeError(
            f"Rationale lengths differ: {pred.size} predicted, {gold.size} gold"
        )

    if not pred.any() and not gold.any():
        return 1.0

    tp = int(np.sum(pred & gold))
    if tp == 0:
        return 0.0

    precision = tp / pred.sum()
    recall = tp / gold.sum()
    return float(2 * precision * recall / (precision + recall))


def pair_f1(rationales, gold):
    """Mean token F1 over both documents"""
    return 0.5 * (token_f1(rationales.r_x, gold.r_x) + token_f1(rationales.r_y, gold.r_y))


def default_delta_grid(plans, size=DEFAULT_DELTA_GRID_SIZE):
    largest = max(p.n * p.m for p in plans)
    return np.logspace(np.log10(DELTA_GRID_FACTOR / largest), 0.0, size).tolist()


def select_delta(plans, golds, grid=None):
    """
    Grid value of delta with the best mean F1 over all pairs.
    The grid is scanned in increasing order, so ties keep the smallest delta.
    """
    if len(plans) == 0:
        raise InvalidParameter("No plans to select a threshold on")

    if len(plans) != len(golds):
        raise ShapeError(f"Received {len(plans)} plans but {len(golds)} gold rationales")

    if grid is None:
        grid = default_delta_grid(plans)

    if len(grid) == 0:
        raise InvalidParameter("The threshold grid is empty")

    best_delta = None
    best_score = -np.inf
    for delta in sorted(_check_delta(d) for d in grid):
        score = np.mean([pair_f1(binarize(p, delta), g) for p, g in zip(plans, golds)])
        if score > best_score:
            best_score = score
            best_delta = delta
    return best_delta


def sufficiency_mask(p, lam=None):
    """Plan restricted to its active entries; masses are not renormalized"""
    if lam is None:
        lam = default_lambda(p.n, p.m)
    if lam < 0:
        raise InvalidParameter(f"The active threshold must be nonnegative (received {lam})")

    values = np.where(p.values > lam, p.values, 0.0)
    return TransportPlan(
        values, p.row_marginal, p.col_marginal, feasibility_tol=p.feasibility_tol
    )


def sufficiency_score(c, p, lam=None):
    return -transport_cost(c, sufficiency_mask(p, lam))


def hinge_contrastive_loss(cost_pos, costs_neg, margin):
    costs_neg = list(costs_neg)
    if len(costs_neg) == 0:
        raise InvalidParameter("The contrastive loss needs at least one negative")

    margin = parse_real(margin, "hinge margin")
    if margin < 0:
        raise InvalidParameter(f"The hinge margin must be nonnegative (received {margin})")

    cost_pos = parse_real(cost_pos, "positive cost")
    hinges = [
        max(cost_pos - parse_real(c, "negative cost") + margin, 0.0) for c in costs_neg
    ]
    return float(max(hinges))


def combined_loss(task_loss, rationale_loss, alpha=DEFAULT_ALPHA):
    alpha = parse_real(alpha, "loss weight alpha")
    if not 0 <= alpha <= 1:
        raise InvalidParameter(f"alpha must lie in [0, 1] (received {alpha})")

    return float(alpha * task_loss + (1 - alpha) * rationale_loss)


def rationale_cross_entropy(soft, gold_x, gold_y):
    """
    Mean binary cross-entropy between soft rationales and the gold selections,
    over the positions of both documents. Probabilities are clipped to
    [1e-7, 1 - 1e-7].
    """
    gold_x = _binary_vector(gold_x, "gold rationale")
    gold_y = _binary_vector(gold_y, "gold rationale")
    if soft.s_x.shape != gold_x.shape or soft.s_y.shape != gold_y.shape:
        raise ShapeError(
            f"Soft rationales of lengths ({soft.s_x.size}, {soft.s_y.size}) do not match "
            f"gold rationales of lengths ({gold_x.size}, {gold_y.size})"
        )

    s = np.clip(
        np.concatenate([soft.s_x, soft.s_y]), CROSS_ENTROPY_CLIP, 1 - CROSS_ENTROPY_CLIP
    )
    g = np.concatenate([gold_x, gold_y])
    return float(-np.mean(g * np.log(s) + (1 - g) * np.log1p(-s)))
