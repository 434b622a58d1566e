import numpy as np

from otalign.constants import (
    Variant,
    PointKind,
    VARIANT_KEYWORDS,
    MIN_CAPTURED_MASS,
    EXACT_K_COST_FLOOR,
)
from otalign.exact import (
    Permutation,
    round_to_vertex,
    support_permutation,
    perturb_costs,
)
from otalign.exceptions import (
    InvalidParameter,
    ShapeError,
    BoundError,
    ConstraintSignError,
    RoundingError,
    DecompositionError,
)
from otalign.sinkhorn import sinkhorn_epsilon_scaled
from otalign.transport import CostMatrix, Marginals, TransportPlan, transport_cost
from otalign.utilities import get_abs_variant, default_lambda, warn


class ConstraintSpec:
    """
    Which assignment family to enforce, and its k.
    The bounds on k depend on the problem size and are checked by
    check_bounds(n, m) once the problem is oriented so that n <= m.
    """

    def __init__(self, variant, k=None):
        self.variant = get_abs_variant(variant)

        if self.variant == Variant.VANILLA:
            self.k = None if k is None else self._parse_k(k)
        else:
            if k is None:
                raise BoundError(
                    f"The {VARIANT_KEYWORDS[self.variant]} variant requires a value of k"
                )
            self.k = self._parse_k(k)

    def _parse_k(self, k):
        try:
            _k = int(k)
        except (ValueError, TypeError):
            raise InvalidParameter(f"Invalid value of k: '{k}'")

        if abs(_k - float(k)) > 1e-4:
            raise InvalidParameter(f"k must be an integer (received '{k}')")

        if _k < 1:
            raise BoundError(f"k must be at least 1 (received {k})")
        return _k

    @property
    def name(self):
        return VARIANT_KEYWORDS[self.variant]

    def check_bounds(self, n, m):
        if n > m:
            raise ShapeError(
                f"Constrained problems need n <= m (received {n}x{m}); transpose first"
            )

        if self.variant == Variant.ONE_TO_K and self.k > m // n:
            raise BoundError(
                f"One-to-k needs k <= floor(m/n) = {m // n} for a {n}x{m} problem "
                f"(received k={self.k})"
            )

        if self.variant == Variant.EXACT_K and self.k > n:
            raise BoundError(
                f"Exact-k needs k <= min(n, m) = {n} (received k={self.k})"
            )

    def to_dict(self):
        return {"variant": self.name, "k": self.k}

    @classmethod
    def from_dict(cls, d):
        if "variant" not in d:
            raise InvalidParameter("A constraint specification needs a 'variant'")
        return cls(d["variant"], d.get("k"))

    def __eq__(self, other):
        return (
            isinstance(other, ConstraintSpec)
            and self.variant == other.variant
            and self.k == other.k
        )

    def __repr__(self):
        return f"ConstraintSpec({self.name}, k={self.k})"


class AugmentedProblem:
    def __init__(self, c_hat, a_hat, b_hat, row_kind, col_kind, n_original, m_original):
        self.c_hat = c_hat
        self.a_hat = a_hat
        self.b_hat = b_hat
        self.row_kind = row_kind
        self.col_kind = col_kind
        self.n_original = n_original
        self.m_original = m_original

    @property
    def N(self):
        return self.c_hat.n

    @staticmethod
    def _groups(kinds):
        return np.array([-1 if kind == PointKind.DUMMY else idx for kind, idx in kinds])

    @property
    def row_groups(self):
        """Original row index of every augmented row, -1 for dummies"""
        return self._groups(self.row_kind)

    @property
    def col_groups(self):
        return self._groups(self.col_kind)

    @property
    def original_mask(self):
        return (self.row_groups >= 0)[:, None] & (self.col_groups >= 0)[None, :]


def _originals(count):
    return [(PointKind.ORIGINAL, i) for i in range(count)]


def _dummies(count):
    return [(PointKind.DUMMY, None)] * count


def _check_signs(C, spec):
    if spec.variant == Variant.EXACT_K and C.min() <= 0:
        raise ConstraintSignError(
            f"Exact-k needs strictly positive costs (minimum is {C.min():.6g})"
        )

    if spec.variant == Variant.RELAXED_ONE_TO_K and not C.min() < 0 < C.max():
        raise ConstraintSignError(
            "Relaxed one-to-k needs costs taking both positive and negative values "
            f"(range is [{C.min():.6g}, {C.max():.6g}])"
        )


def shift_positive(c, floor=EXACT_K_COST_FLOOR):
    """
    Moves a cost matrix so that its minimum equals floor when it is not
    strictly positive. Adding a constant to every pair leaves the ranking of
    exact-k supports unchanged. Returns the matrix and the shift applied.
    """
    if not isinstance(c, CostMatrix):
        c = CostMatrix(c)

    low = float(c.values.min())
    if low > 0:
        return c, 0.0

    shift = floor - low
    warn(f"Shifting the costs by {shift:.6g} to make them strictly positive for exact-k")
    return c.shifted(shift), shift


def augment(c, spec, enforce_signs=True):
    """
    Builds the square uniform problem whose permutation solutions encode the
    constrained family of spec. Replica rows copy the costs of their original
    row and dummy points cost 0 against everything.
    """
    if not isinstance(c, CostMatrix):
        c = CostMatrix(c)
    n, m = c.shape
    spec.check_bounds(n, m)
    C = c.values

    if enforce_signs:
        _check_signs(C, spec)

    if spec.variant == Variant.VANILLA:
        return AugmentedProblem(
            c, Marginals.uniform(n), Marginals.uniform(m), _originals(n), _originals(m), n, m
        )

    k = spec.k
    replicas = [(PointKind.REPLICA, i) for i in range(n) for _ in range(k)]
    replicated = np.repeat(C, k, axis=0)

    if spec.variant == Variant.ONE_TO_K:
        N = m
        row_kind = replicas + _dummies(m - k * n)
        col_kind = _originals(m)
        c_hat = np.zeros((N, N))
        c_hat[: k * n, :] = replicated
    elif spec.variant == Variant.RELAXED_ONE_TO_K:
        N = m + k * n
        row_kind = replicas + _dummies(m)
        col_kind = _originals(m) + _dummies(k * n)
        c_hat = np.zeros((N, N))
        c_hat[: k * n, :m] = replicated
    else:
        N = n + m - k
        row_kind = _originals(n) + _dummies(m - k)
        col_kind = _originals(m) + _dummies(n - k)
        c_hat = np.zeros((N, N))
        c_hat[:n, :m] = C

    return AugmentedProblem(
        CostMatrix(c_hat),
        Marginals.uniform(N),
        Marginals.uniform(N),
        row_kind,
        col_kind,
        n,
        m,
    )


def _group_matrix(values, row_groups, col_groups):
    # Dummies form one extra group on each side
    r = np.where(row_groups < 0, row_groups.max() + 1, row_groups)
    c = np.where(col_groups < 0, col_groups.max() + 1, col_groups)
    out = np.zeros((r.max() + 1, c.max() + 1))
    np.add.at(out, (r[:, None], c[None, :]), values)
    return out


def captured_mass(p_hat, perm, row_groups=None, col_groups=None):
    """
    Fraction of the plan mass covered by a permutation. With groups, replicas
    of the same point (and dummies) are interchangeable and the overlap is
    measured between the grouped matrices.
    """
    P = p_hat.values if isinstance(p_hat, TransportPlan) else np.asarray(p_hat)
    N = P.shape[0]
    total = P.sum()
    if total <= 0:
        return 0.0

    A = np.zeros_like(P)
    A[np.arange(N), perm.mapping] = total / N

    if row_groups is None:
        row_groups = np.arange(N)
    if col_groups is None:
        col_groups = np.arange(N)

    GP = _group_matrix(P, np.asarray(row_groups), np.asarray(col_groups))
    GA = _group_matrix(A, np.asarray(row_groups), np.asarray(col_groups))
    return float(np.minimum(GP, GA).sum() / total)


def round_to_assignment(
    p_hat, row_groups=None, col_groups=None, min_captured=MIN_CAPTURED_MASS
):
    """
    Greedy rounding of a square plan to a permutation: the largest remaining
    entry is matched first and its row and column are removed. Ties go to the
    lowest row, then the lowest column.
    """
    P = p_hat.values if isinstance(p_hat, TransportPlan) else np.asarray(p_hat)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError(f"Rounding to an assignment needs a square plan (got {P.shape})")
    N = P.shape[0]

    mapping = [-1] * N
    used_cols = np.zeros(N, dtype=bool)
    remaining = N
    order = np.argsort(-P.ravel(), kind="stable")
    for flat in order:
        i, j = divmod(int(flat), N)
        if mapping[i] != -1 or used_cols[j]:
            continue
        mapping[i] = j
        used_cols[j] = True
        remaining -= 1
        if remaining == 0:
            break

    perm = Permutation(mapping)
    captured = captured_mass(P, perm, row_groups, col_groups)
    if captured < min_captured:
        raise RoundingError(
            f"The plan is too diffuse to round: the best greedy assignment captures "
            f"{captured:.1%} of the mass. Try a smaller epsilon_final"
        )
    return perm


def extract(p_hat, problem):
    """
    Sums augmented mass back onto the original n x m pairs and drops dummies.
    The marginals of the result are the realized (partial) sums.
    """
    P = p_hat.values if isinstance(p_hat, TransportPlan) else np.asarray(p_hat)
    rows = problem.row_groups
    cols = problem.col_groups
    keep_r = rows >= 0
    keep_c = cols >= 0

    out = np.zeros((problem.n_original, problem.m_original))
    np.add.at(
        out,
        (rows[keep_r][:, None], cols[keep_c][None, :]),
        P[np.ix_(keep_r, keep_c)],
    )
    return TransportPlan(out)


def active_alignments(p, lam=None):
    """
    Entries of the plan above lam, the active threshold (0.01 / (n * m) by
    default). Returns the count and the (i, j) pairs in row-major order.
    """
    if lam is None:
        lam = default_lambda(p.n, p.m)
    if lam < 0:
        raise InvalidParameter(f"The active threshold must be nonnegative (received {lam})")

    rows, cols = np.nonzero(p.values > lam)
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols)]
    return len(pairs), pairs


class ConstrainedAlignment:
    def __init__(
        self,
        plan,
        active_pairs,
        spec,
        augmented_cost,
        original_cost,
        support_cost,
        state=None,
        transposed=False,
        rounding="greedy",
        augmented_size=None,
    ):
        self.plan = plan
        self.active_pairs = active_pairs
        self.spec = spec
        self.augmented_cost = augmented_cost
        self.original_cost = original_cost
        self.support_cost = support_cost
        self.state = state
        self.transposed = transposed
        self.rounding = rounding
        self.augmented_size = augmented_size

    @property
    def active_count(self):
        return len(self.active_pairs)

    def satisfies_sparsity(self):
        """Checks the sparsity guarantee of the variant on the active pairs"""
        n, m = self.plan.shape
        count = self.active_count

        if self.spec.variant == Variant.VANILLA:
            return count <= n + m - 1

        # Index on the smaller side first
        pairs = [(j, i) if self.transposed else (i, j) for i, j, _ in self.active_pairs]
        small = min(n, m)
        small_counts = np.bincount([i for i, _ in pairs], minlength=small)
        large_counts = np.bincount([j for _, j in pairs], minlength=max(n, m))
        k = self.spec.k

        if self.spec.variant == Variant.ONE_TO_K:
            return (
                count == k * small
                and np.all(small_counts == k)
                and np.all(large_counts <= 1)
            )
        elif self.spec.variant == Variant.RELAXED_ONE_TO_K:
            return (
                count <= k * small
                and np.all(small_counts <= k)
                and np.all(large_counts <= 1)
            )
        return count == k and np.all(small_counts <= 1) and np.all(large_counts <= 1)

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "plan": self.plan.to_dict(),
            "active_pairs": [[i, j, mass] for i, j, mass in self.active_pairs],
            "augmented_cost": self.augmented_cost,
            "original_cost": self.original_cost,
            "support_cost": self.support_cost,
            "rounding": self.rounding,
            "augmented_size": self.augmented_size,
            "solver": None if self.state is None else self.state.to_dict(),
        }


def _perturbed(problem, epsilon, seed):
    noise = perturb_costs(np.zeros(problem.c_hat.shape), epsilon, seed).values
    return CostMatrix(problem.c_hat.values + noise * problem.original_mask)


def _round(plan_hat, cost, problem):
    """
    Greedy rounding and the bottleneck matching of the plan support; the
    cheaper permutation is kept, the greedy one on ties.
    """
    try:
        greedy = round_to_assignment(plan_hat, problem.row_groups, problem.col_groups)
    except RoundingError as e:
        warn(f"{e}; using the bottleneck matching of the plan support instead")
        greedy = None

    try:
        bottleneck = support_permutation(plan_hat)
    except DecompositionError:
        if greedy is None:
            raise RoundingError("No permutation could be recovered from the plan")
        return greedy, "greedy"

    if greedy is not None and greedy.cost(cost) <= bottleneck.cost(cost):
        return greedy, "greedy"
    return bottleneck, "support"


def solve_constrained(
    c,
    spec,
    cfg=None,
    lam=None,
    perturbation=None,
    seed=0,
    enforce_signs=True,
):
    """
    Solves a constrained alignment: augment, epsilon-scaled Sinkhorn on the
    square problem, round to a permutation and extract the original pairs.
    Vanilla problems are solved directly; rectangular ones are rounded to a
    vertex of the transport polytope.

    When perturbation is given, seeded uniform noise on [0, perturbation] is
    added to the original pairs of the augmented cost, which makes the
    optimum unique with probability one.
    """
    if not isinstance(c, CostMatrix):
        c = CostMatrix(c)
    if not isinstance(spec, ConstraintSpec):
        spec = ConstraintSpec.from_dict(spec) if isinstance(spec, dict) else ConstraintSpec(spec)

    transposed = c.n > c.m
    work = c.T if transposed else c
    problem = augment(work, spec, enforce_signs=enforce_signs)

    c_solve = problem.c_hat
    if perturbation:
        c_solve = _perturbed(problem, perturbation, seed)

    plan_hat, state = sinkhorn_epsilon_scaled(c_solve, problem.a_hat, problem.b_hat, cfg)

    if spec.variant == Variant.VANILLA and problem.c_hat.n != problem.c_hat.m:
        rounded = round_to_vertex(plan_hat)
        plan = rounded
        rounding = "vertex"
    else:
        perm, rounding = _round(plan_hat, c_solve, problem)
        rounded = perm.to_plan()
        plan = extract(rounded, problem)

    augmented_cost = transport_cost(problem.c_hat, rounded)

    if transposed:
        plan = plan.T

    if lam is None:
        lam = default_lambda(c.n, c.m)
    _, pairs = active_alignments(plan, lam)

    C, P = c.values, plan.values
    active = [(i, j, float(P[i, j])) for i, j in pairs]
    original_cost = float(sum(C[i, j] * mass for i, j, mass in active))
    support_cost = float(sum(C[i, j] for i, j, _ in active))

    return ConstrainedAlignment(
        plan,
        active,
        spec,
        augmented_cost,
        original_cost,
        support_cost,
        state=state,
        transposed=transposed,
        rounding=rounding,
        augmented_size=problem.N,
    )
