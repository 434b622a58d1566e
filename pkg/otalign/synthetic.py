import numpy as np

from otalign.constants import (
    Variant,
    SYNTH_BAND_HIGH,
    SYNTH_BACKGROUND_LOW,
    SYNTH_RELAXED_OFFSET,
)
from otalign.constraints import ConstraintSpec, solve_constrained, shift_positive
from otalign.exceptions import ConstraintSignError
from otalign.transport import CostMatrix
from otalign.utilities import parse_positive_int, warn


def band_cells(rows, cols):
    """Diagonal cells (i, floor(i * cols / rows)) of the middle half of the rows"""
    start = rows // 4
    stop = start + max(rows // 2, 1)
    return [(i, i * cols // rows) for i in range(start, stop)]


def synthetic_cost_matrix(rows, cols, seed=0):
    """
    Seeded cost matrix with a background in [0.2, 1] and a planted band of
    low costs in [0, 0.1]. Draws come from numpy's PCG64 generator: first the
    rows x cols background, then one value per band cell.
    """
    rows = parse_positive_int(rows, "number of rows")
    cols = parse_positive_int(cols, "number of columns")

    rng = np.random.default_rng(seed)
    C = SYNTH_BACKGROUND_LOW + (1 - SYNTH_BACKGROUND_LOW) * rng.uniform(size=(rows, cols))

    cells = band_cells(rows, cols)
    band = SYNTH_BAND_HIGH * rng.uniform(size=len(cells))
    for (i, j), value in zip(cells, band):
        C[i, j] = value
    return CostMatrix(C)


def synthetic_k(variant, k, rows, cols):
    """Largest admissible k not above the requested one"""
    small, large = sorted((rows, cols))
    if variant in (Variant.ONE_TO_K, Variant.RELAXED_ONE_TO_K):
        return max(1, min(k, large // small))
    if variant == Variant.EXACT_K:
        return min(k, small)
    return None


def solve_synthetic(c, k, cfg=None, lam=None):
    """
    Solves every variant on the same matrix. Relaxed one-to-k runs on the
    costs shifted down by 0.15, so that only the band is negative.
    Returns a dict Variant -> ConstrainedAlignment (None when skipped).
    """
    results = {}
    for variant in Variant:
        spec = ConstraintSpec(variant, synthetic_k(variant, k, c.n, c.m))

        cost = c
        if variant == Variant.RELAXED_ONE_TO_K:
            cost = c.shifted(-SYNTH_RELAXED_OFFSET)
        elif variant == Variant.EXACT_K:
            cost, _ = shift_positive(c)

        try:
            results[variant] = solve_constrained(cost, spec, cfg, lam=lam)
        except ConstraintSignError as e:
            warn(f"Skipping {spec.name}: {e}")
            results[variant] = None
    return results
