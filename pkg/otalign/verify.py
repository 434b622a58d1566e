"""
Randomized property suite behind the verify command.

Each check draws its instances from its own PCG64 stream seeded with
(seed, check index), so a report only depends on the seed and the number of
trials.
"""

import numpy as np

from otalign.constants import (
    Variant,
    VERIFY_MAX_SIZE,
    VERIFY_MAX_SQUARE,
    VERIFY_MAX_PERTURBED,
    VERIFY_MAX_BIRKHOFF,
    VERIFY_MAX_TERMS,
    VERIFY_COST_TOL,
    VERIFY_RECONSTRUCTION_TOL,
    VERIFY_OPTIMALITY_TOL,
    VERIFY_PERTURBATION_EPSILONS,
    VERIFY_MAX_NON_UNIQUE_RATE,
    MAX_ORACLE_ROWS,
    DEFAULT_FEASIBILITY_TOL,
)
from otalign.constraints import ConstraintSpec, solve_constrained
from otalign.exact import (
    Permutation,
    brute_force_assignment,
    brute_force_constrained,
    birkhoff_decompose,
    check_sparsity_bound,
    solve_lp,
    verify_perturbation,
)
from otalign.exceptions import AlignException
from otalign.rationale import binarize, sufficiency_score
from otalign.metrics import score_pair
from otalign.sinkhorn import sinkhorn_epsilon_scaled
from otalign.transport import (
    CostMatrix,
    Marginals,
    TransportPlan,
    transport_cost,
    validate_plan,
)
from otalign.utilities import default_lambda, warn

# Largest second dimension used for the constrained oracle checks
ORACLE_CHECK_COLS = 6


class CheckResult:
    def __init__(self, name, trials):
        self.name = name
        self.trials = trials
        self.passes = 0
        self.worst_gap = None
        self.extra = {}

    def record(self, passed, gap=None):
        if passed:
            self.passes += 1
        if gap is not None:
            gap = float(gap)
            if self.worst_gap is None or gap > self.worst_gap:
                self.worst_gap = gap

    @property
    def passed(self):
        return self.passes == self.trials

    def to_dict(self):
        d = {
            "name": self.name,
            "trials": self.trials,
            "passes": self.passes,
            "worst_gap": self.worst_gap,
        }
        d.update(self.extra)
        return d


def _uniform_cost(rng, n, m, low=0.0, high=1.0):
    return CostMatrix(rng.uniform(low, high, size=(n, m)))


def check_vanilla_sparsity(rng, trials, cfg=None):
    """
    Rounded vanilla plans have at most n + m - 1 active entries and cost
    within VERIFY_COST_TOL of the exact transport LP.
    """
    result = CheckResult("vanilla_sparsity", trials)
    worst_lp_gap = 0.0
    for _ in range(trials):
        n, m = (int(x) for x in rng.integers(1, VERIFY_MAX_SIZE + 1, size=2))
        c = _uniform_cost(rng, n, m)
        try:
            alignment = solve_constrained(c, ConstraintSpec(Variant.VANILLA), cfg)
            _, optimum = solve_lp(c, Marginals.uniform(n), Marginals.uniform(m))
        except AlignException as e:
            warn(f"vanilla_sparsity: {e}")
            result.record(False)
            continue

        lp_gap = abs(transport_cost(c, alignment.plan) - optimum)
        worst_lp_gap = max(worst_lp_gap, lp_gap)

        report = check_sparsity_bound(alignment.plan)
        result.record(
            report["passed"] and lp_gap <= VERIFY_COST_TOL, report["count"] - report["bound"]
        )

    result.extra["worst_lp_gap"] = worst_lp_gap
    return result


def _is_permutation_plan(P):
    N = P.shape[0]
    lam = default_lambda(N, N)
    active = P > lam
    return (
        np.all(active.sum(axis=0) == 1)
        and np.all(active.sum(axis=1) == 1)
        and np.allclose(P[active], 1.0 / N, atol=DEFAULT_FEASIBILITY_TOL)
    )


def check_square_permutation(rng, trials, cfg=None):
    """Square uniform problems round to an optimal permutation"""
    result = CheckResult("square_permutation", trials)
    for _ in range(trials):
        N = int(rng.integers(1, VERIFY_MAX_SQUARE + 1))
        c = _uniform_cost(rng, N, N)
        try:
            alignment = solve_constrained(c, ConstraintSpec(Variant.VANILLA), cfg)
        except AlignException as e:
            warn(f"square_permutation: {e}")
            result.record(False)
            continue

        _, optimum = brute_force_assignment(c)
        gap = abs(transport_cost(c, alignment.plan) - optimum / N)
        result.record(_is_permutation_plan(alignment.plan.values) and gap <= VERIFY_COST_TOL, gap)
    return result


def _random_constrained_instance(rng, variant):
    n = int(rng.integers(1, MAX_ORACLE_ROWS + 1))
    m = int(rng.integers(max(n, 2), ORACLE_CHECK_COLS + 1))

    if variant == Variant.ONE_TO_K:
        k = int(rng.integers(1, m // n + 1))
        C = rng.uniform(0.0, 1.0, size=(n, m))
    elif variant == Variant.RELAXED_ONE_TO_K:
        k = int(rng.integers(1, 3))
        C = rng.uniform(-1.0, 1.0, size=(n, m))
        # Both signs are required
        C[0, 0] = -abs(C[0, 0]) - 1e-3
        C[-1, -1] = abs(C[-1, -1]) + 1e-3
    else:
        k = int(rng.integers(1, n + 1))
        C = rng.uniform(0.05, 1.0, size=(n, m))

    if rng.uniform() < 0.5:
        C = C.T
    return CostMatrix(C), ConstraintSpec(variant, k)


def check_constrained(rng, trials, variant, cfg=None):
    """Sparsity counts of a variant and agreement with the enumeration oracle"""
    spec_name = ConstraintSpec(variant, 1).name
    result = CheckResult(f"constrained_{spec_name}", trials)
    for _ in range(trials):
        c, spec = _random_constrained_instance(rng, variant)
        try:
            alignment = solve_constrained(c, spec, cfg)
        except AlignException as e:
            warn(f"constrained_{spec_name}: {e}")
            result.record(False)
            continue

        _, optimum = brute_force_constrained(c, spec)
        gap = abs(alignment.support_cost - optimum)
        result.record(alignment.satisfies_sparsity() and gap <= VERIFY_COST_TOL, gap)
    return result


def check_perturbation(rng, trials):
    """
    Perturbed optima cost at most epsilon more than the true optimum and are
    unique, up to a small rate of machine-precision ties.
    """
    result = CheckResult("perturbation", trials)
    non_unique = 0
    for t in range(trials):
        N = int(rng.integers(2, VERIFY_MAX_PERTURBED + 1))
        epsilon = VERIFY_PERTURBATION_EPSILONS[t % len(VERIFY_PERTURBATION_EPSILONS)]
        c = _uniform_cost(rng, N, N)
        report = verify_perturbation(c, epsilon, seed=int(rng.integers(2**31)))
        if not report["unique"]:
            non_unique += 1
        result.record(report["holds"], report["gap"] - epsilon)

    result.extra["non_unique"] = non_unique
    if non_unique > VERIFY_MAX_NON_UNIQUE_RATE * trials:
        # Counts as failed trials so that the check does not pass
        result.passes = min(result.passes, trials - 1)
    return result


def _random_permutation(rng, N):
    return Permutation(rng.permutation(N))


def check_birkhoff(rng, trials):
    """
    Decompositions reconstruct constructed convex combinations, and every
    permutation of an optimal plan is itself optimal.
    """
    result = CheckResult("birkhoff", trials)
    for _ in range(trials):
        N = int(rng.integers(2, VERIFY_MAX_BIRKHOFF + 1))
        r = int(rng.integers(1, VERIFY_MAX_TERMS + 1))
        perms = [_random_permutation(rng, N) for _ in range(r)]
        weights = rng.dirichlet(np.ones(r))

        P = sum(w * perm.to_matrix() for w, perm in zip(weights, perms)) / N
        try:
            decomposition = birkhoff_decompose(TransportPlan(P))
        except AlignException as e:
            warn(f"birkhoff: {e}")
            result.record(False)
            continue

        reconstruction = float(np.max(np.abs(decomposition.reconstruct() - P)))
        weight_error = abs(sum(decomposition.weights) - 1.0)

        # Zero cost on the support of P, positive elsewhere: P is optimal
        C = np.where(P > 0, 0.0, rng.uniform(0.1, 1.0, size=(N, N)))
        _, optimum = brute_force_assignment(C)
        optimality = max(abs(perm.cost(C) - optimum) for perm in decomposition.permutations)

        result.record(
            reconstruction <= VERIFY_RECONSTRUCTION_TOL
            and weight_error <= VERIFY_RECONSTRUCTION_TOL
            and optimality <= VERIFY_OPTIMALITY_TOL,
            max(reconstruction, weight_error, optimality),
        )
    return result


def check_sinkhorn(rng, trials, cfg=None):
    """Solver outputs are feasible at 1e-6 and bitwise reproducible"""
    result = CheckResult("sinkhorn_feasibility", trials)
    for _ in range(trials):
        n, m = rng.integers(1, VERIFY_MAX_SIZE + 1, size=2)
        c = _uniform_cost(rng, n, m)
        a = Marginals(rng.dirichlet(np.ones(n)))
        b = Marginals(rng.dirichlet(np.ones(m)))

        plan, _ = sinkhorn_epsilon_scaled(c, a, b, cfg)
        again, _ = sinkhorn_epsilon_scaled(c, a, b, cfg)
        report = validate_plan(plan, a, b, DEFAULT_FEASIBILITY_TOL)
        result.record(
            report.passed and np.array_equal(plan.values, again.values),
            max(report.row_violation, report.col_violation),
        )
    return result


def _random_plan(rng):
    n, m = rng.integers(1, VERIFY_MAX_SIZE + 1, size=2)
    P = rng.uniform(size=(n, m)) * (rng.uniform(size=(n, m)) < 0.5)
    total = P.sum()
    if total > 0:
        P /= total
    return TransportPlan(P)


def check_binarize(rng, trials):
    """Raising delta never adds positions to a rationale"""
    result = CheckResult("rationale_monotonicity", trials)
    for _ in range(trials):
        p = _random_plan(rng)
        d1, d2 = np.sort(rng.uniform(0.0, 0.5, size=2))
        low = binarize(p, d1)
        high = binarize(p, d2)
        result.record(
            np.all(high.r_x <= low.r_x) and np.all(high.r_y <= low.r_y)
        )
    return result


def check_sufficiency(rng, trials):
    """Assignment-structured plans keep their exact score once masked"""
    result = CheckResult("sufficiency", trials)
    for _ in range(trials):
        n, m = (int(x) for x in rng.integers(1, VERIFY_MAX_SIZE + 1, size=2))
        k = int(rng.integers(1, min(n, m) + 1))
        N = n + m - k
        rows = rng.choice(n, size=k, replace=False)
        cols = rng.choice(m, size=k, replace=False)
        P = np.zeros((n, m))
        P[rows, cols] = 1.0 / N
        p = TransportPlan(P)
        c = _uniform_cost(rng, n, m)

        full = score_pair(c, p)
        masked = sufficiency_score(c, p)
        result.record(full == masked, abs(full - masked))
    return result


def run_suite(seed=0, trials=1000, cfg=None):
    """
    Runs every check and returns the report
    {"seed", "trials", "passed", "checks": [{name, trials, passes, worst_gap}, ...]}.
    Check sizes are derived from trials.
    """
    def streams():
        index = 0
        while True:
            yield np.random.default_rng([seed, index])
            index += 1

    rngs = streams()
    few = max(trials // 2, 1)
    fewer = max(trials // 5, 1)
    fewest = max(trials // 10, 1)

    checks = [
        check_vanilla_sparsity(next(rngs), few, cfg),
        check_square_permutation(next(rngs), few, cfg),
        check_constrained(next(rngs), fewer, Variant.ONE_TO_K, cfg),
        check_constrained(next(rngs), fewer, Variant.RELAXED_ONE_TO_K, cfg),
        check_constrained(next(rngs), fewer, Variant.EXACT_K, cfg),
        check_perturbation(next(rngs), trials),
        check_birkhoff(next(rngs), fewest),
        check_sinkhorn(next(rngs), fewest, cfg),
        check_binarize(next(rngs), trials),
        check_sufficiency(next(rngs), trials),
    ]

    return {
        "seed": seed,
        "trials": trials,
        "passed": all(check.passed for check in checks),
        "checks": [check.to_dict() for check in checks],
    }
