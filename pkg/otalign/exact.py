import itertools
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from otalign.constants import (
    Variant,
    MAX_ASSIGNMENT_SIZE,
    MAX_PERTURBATION_SIZE,
    MAX_ORACLE_ROWS,
    MAX_ORACLE_COLS,
    UNIQUENESS_MARGIN,
)
from otalign.exceptions import (
    InvalidParameter,
    ShapeError,
    SizeError,
    SolverError,
    DecompositionError,
)
from otalign.transport import CostMatrix, Marginals, TransportPlan
from otalign.utilities import default_lambda, parse_real


class Permutation:
    def __init__(self, mapping):
        try:
            _mapping = tuple(int(i) for i in mapping)
        except (ValueError, TypeError):
            raise InvalidParameter(f"Invalid permutation: '{mapping}'")

        if sorted(_mapping) != list(range(len(_mapping))):
            raise InvalidParameter(
                f"A permutation must be a bijection on 0..N-1 (received {_mapping})"
            )
        self.mapping = _mapping

    def __len__(self):
        return len(self.mapping)

    def __iter__(self):
        return iter(self.mapping)

    def __eq__(self, other):
        return isinstance(other, Permutation) and self.mapping == other.mapping

    def __hash__(self):
        return hash(self.mapping)

    def __repr__(self):
        return f"Permutation({list(self.mapping)})"

    def to_matrix(self):
        N = len(self)
        M = np.zeros((N, N))
        M[np.arange(N), self.mapping] = 1.0
        return M

    def to_plan(self):
        return TransportPlan.from_permutation(self.mapping)

    def cost(self, c):
        C = c.values if isinstance(c, CostMatrix) else np.asarray(c, dtype=float)
        return float(C[np.arange(len(self)), self.mapping].sum())


class BirkhoffDecomposition:
    def __init__(self, terms, residual_norm):
        self.terms = terms
        self.residual_norm = float(residual_norm)

    @property
    def weights(self):
        return [w for w, _ in self.terms]

    @property
    def permutations(self):
        return [perm for _, perm in self.terms]

    def reconstruct(self):
        N = len(self.terms[0][1])
        out = np.zeros((N, N))
        for w, perm in self.terms:
            out += w * perm.to_matrix()
        return out / N

    def __len__(self):
        return len(self.terms)


def _as_cost(c):
    if isinstance(c, CostMatrix):
        return c
    return CostMatrix(c)


def _check_square(values, what):
    if values.shape[0] != values.shape[1]:
        raise ShapeError(f"{what} requires a square matrix (got {values.shape})")


@lru_cache(maxsize=None)
def _all_permutations(N):
    # itertools yields the permutations in lexicographic order
    return np.array(list(itertools.permutations(range(N))), dtype=np.intp).reshape(
        -1, N
    )


def _permutation_costs(C):
    N = C.shape[0]
    perms = _all_permutations(N)
    return perms, C[np.arange(N), perms].sum(axis=1)


def brute_force_assignment(c):
    """
    Enumerates the N! permutations of a square cost matrix.
    Returns the minimizing Permutation and its total cost sum_i C[i, s(i)].
    Ties go to the lexicographically smallest mapping.
    """
    c = _as_cost(c)
    _check_square(c.values, "The assignment oracle")

    if c.n > MAX_ASSIGNMENT_SIZE:
        raise SizeError(
            f"The assignment oracle enumerates at most {MAX_ASSIGNMENT_SIZE}! "
            f"permutations (received N={c.n})"
        )

    perms, costs = _permutation_costs(c.values)
    best = int(np.argmin(costs))
    return Permutation(perms[best]), float(costs[best])


def _one_to_k_supports(n, m, k, relaxed):
    def rec(i, free):
        if i == n:
            yield ()
            return
        sizes = range(0, k + 1) if relaxed else (k,)
        for size in sizes:
            for cols in itertools.combinations(free, size):
                rest = tuple(j for j in free if j not in cols)
                for tail in rec(i + 1, rest):
                    yield tuple((i, j) for j in cols) + tail

    return rec(0, tuple(range(m)))


def _exact_k_supports(n, m, k):
    for rows in itertools.combinations(range(n), k):
        for cols in itertools.permutations(range(m), k):
            yield tuple(zip(rows, cols))


def brute_force_constrained(c, spec):
    """
    Enumerates every support allowed by a constrained family and returns the
    cheapest one with its total cost sum_{(i,j)} C_ij. Supports are sorted
    lists of (i, j) pairs in the orientation of c.
    """
    c = _as_cost(c)
    transposed = c.n > c.m
    C = c.values.T if transposed else c.values
    n, m = C.shape

    if n > MAX_ORACLE_ROWS or m > MAX_ORACLE_COLS:
        raise SizeError(
            f"The constrained oracle is limited to {MAX_ORACLE_ROWS}x{MAX_ORACLE_COLS} "
            f"instances (received {c.n}x{c.m})"
        )

    spec.check_bounds(n, m)

    if spec.variant == Variant.VANILLA:
        raise InvalidParameter(
            "The constrained oracle has no combinatorial family for vanilla OT; "
            "use solve_lp instead"
        )
    elif spec.variant == Variant.EXACT_K:
        candidates = _exact_k_supports(n, m, spec.k)
    else:
        candidates = _one_to_k_supports(
            n, m, spec.k, relaxed=spec.variant == Variant.RELAXED_ONE_TO_K
        )

    best_support = None
    best_cost = np.inf
    for support in candidates:
        cost = sum(C[i, j] for i, j in support)
        if cost < best_cost:
            best_cost = cost
            best_support = support

    if transposed:
        best_support = tuple((j, i) for i, j in best_support)
    return sorted(best_support), float(best_cost)


def _perfect_matching(support):
    """
    Augmenting-path matching on a boolean N x N support graph.
    Rows try their columns in increasing index order. Returns None when no
    perfect matching exists.
    """
    N = support.shape[0]
    neighbours = [np.flatnonzero(support[i]) for i in range(N)]
    match_row = [-1] * N

    def augment(i, seen):
        for j in neighbours[i]:
            if seen[j]:
                continue
            seen[j] = True
            if match_row[j] == -1 or augment(match_row[j], seen):
                match_row[j] = i
                return True
        return False

    for i in range(N):
        if not augment(i, [False] * N):
            return None

    mapping = [0] * N
    for j, i in enumerate(match_row):
        mapping[i] = j
    return Permutation(mapping)


def _bottleneck_matching(values, tol):
    """
    Perfect matching on the entries > tol maximizing its smallest entry.
    Binary search over the distinct entry values.
    """
    levels = np.unique(values[values > tol])
    if levels.size == 0:
        return None

    best = _perfect_matching(values > tol)
    if best is None:
        return None

    lo, hi = 0, levels.size - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        perm = _perfect_matching(values >= levels[mid])
        if perm is None:
            hi = mid - 1
        else:
            best = perm
            lo = mid
    return best


def support_permutation(p, tol=0.0):
    """
    Permutation inside the support of a square plan whose smallest matched
    entry is as large as possible. Any permutation in the support of an
    optimal plan is itself optimal.
    """
    P = p.values if isinstance(p, TransportPlan) else np.asarray(p, dtype=float)
    _check_square(P, "Support matching")

    perm = _bottleneck_matching(P, tol)
    if perm is None:
        raise DecompositionError("The plan support contains no perfect matching")
    return perm


def birkhoff_decompose(p, tol=1e-9):
    """
    Writes N * P as a convex combination of permutation matrices.
    Each step takes the bottleneck matching of the remaining support and
    removes it with the weight of its smallest entry.
    """
    P = p.values if isinstance(p, TransportPlan) else np.asarray(p, dtype=float)
    _check_square(P, "The Birkhoff decomposition")
    tol = parse_real(tol, "decomposition tolerance")
    N = P.shape[0]

    D = N * np.array(P, dtype=float)
    stochastic_tol = max(tol, 1e-6)
    if (
        np.any(D < -stochastic_tol)
        or np.max(np.abs(D.sum(axis=1) - 1)) > stochastic_tol
        or np.max(np.abs(D.sum(axis=0) - 1)) > stochastic_tol
    ):
        raise DecompositionError(
            "The plan is not in the Birkhoff polytope: N * P must be doubly stochastic"
        )

    rows = np.arange(N)
    terms = []
    while D.max() > tol and len(terms) < N * N:
        perm = _bottleneck_matching(D, tol)
        if perm is None:
            raise DecompositionError(
                f"No perfect matching in the support while mass {D.sum():.3g} remains"
            )
        cols = np.array(perm.mapping)
        w = float(D[rows, cols].min())
        D[rows, cols] -= w
        terms.append((w, perm))

    decomposition = BirkhoffDecomposition(terms, 0.0)
    decomposition.residual_norm = float(np.max(np.abs(P - decomposition.reconstruct())))
    return decomposition


def perturb_costs(c, epsilon, seed=0):
    """C + E with E_ij iid uniform on [0, epsilon], drawn from a PCG64 generator"""
    c = _as_cost(c)
    epsilon = parse_real(epsilon, "perturbation size")
    if epsilon <= 0:
        raise InvalidParameter(f"The perturbation size must be positive (received {epsilon})")

    rng = np.random.default_rng(seed)
    return CostMatrix(c.values + rng.uniform(0.0, epsilon, size=c.shape))


def verify_perturbation(c, epsilon, seed=0):
    """
    Compares the optimal permutation of C with the optimal permutation of the
    perturbed costs. The gap is measured on mass-1/N permutation plans and
    must lie in [0, epsilon].
    """
    c = _as_cost(c)
    _check_square(c.values, "The perturbation check")
    if c.n > MAX_PERTURBATION_SIZE:
        raise SizeError(
            f"The perturbation check is limited to N <= {MAX_PERTURBATION_SIZE} (received {c.n})"
        )

    perturbed = perturb_costs(c, epsilon, seed)
    perms, costs = _permutation_costs(c.values)
    _, perturbed_costs = _permutation_costs(perturbed.values)

    best = int(np.argmin(costs))
    best_perturbed = int(np.argmin(perturbed_costs))
    N = c.n
    gap = float((costs[best_perturbed] - costs[best]) / N)

    if perturbed_costs.size > 1:
        two = np.partition(perturbed_costs, 1)[:2]
        unique = bool(two[1] - two[0] > UNIQUENESS_MARGIN)
    else:
        unique = True

    return {
        "gap": gap,
        "epsilon": float(epsilon),
        "unique": unique,
        "is_permutation": True,
        "holds": -UNIQUENESS_MARGIN <= gap <= epsilon + UNIQUENESS_MARGIN,
        "permutation": list(map(int, perms[best_perturbed])),
    }


def check_sparsity_bound(p, lam=None):
    if lam is None:
        lam = default_lambda(p.n, p.m)
    count = int(np.count_nonzero(p.values > lam))
    bound = p.n + p.m - 1
    return {
        "count": count,
        "bound": bound,
        "lambda": float(lam),
        "passed": count <= bound,
    }


def round_to_vertex(p):
    """
    Greedy basic feasible solution: entries are visited by decreasing mass
    (lowest row, then lowest column on ties) and receive the smaller of the
    remaining row and column masses. Each assignment exhausts a row or a
    column, so the result has at most n + m - 1 nonzeros.
    """
    P = p.values
    r = np.array(p.row_marginal.weights, dtype=float)
    s = np.array(p.col_marginal.weights, dtype=float)

    Q = np.zeros(P.shape)
    order = np.argsort(-P.ravel(), kind="stable")
    for i, j in zip(*np.unravel_index(order, P.shape)):
        x = min(r[i], s[j])
        if x <= 0:
            continue
        Q[i, j] = x
        r[i] -= x
        s[j] -= x

    return TransportPlan(
        Q, p.row_marginal, p.col_marginal, feasibility_tol=p.feasibility_tol
    )


def solve_lp(c, a, b):
    """Exact transport LP solved with HiGHS. Returns the optimal plan and <C, P>."""
    c = _as_cost(c)
    if not isinstance(a, Marginals):
        a = Marginals(a)
    if not isinstance(b, Marginals):
        b = Marginals(b)

    n, m = c.shape
    if (n, m) != (len(a), len(b)):
        raise ShapeError(
            f"Cost matrix of shape {c.shape} does not match marginals ({len(a)}, {len(b)})"
        )

    A_rows = np.kron(np.eye(n), np.ones((1, m)))
    A_cols = np.kron(np.ones((1, n)), np.eye(m))
    res = linprog(
        c.values.ravel(),
        A_eq=np.vstack([A_rows, A_cols]),
        b_eq=np.concatenate([a.weights, b.weights]),
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise SolverError(f"The transport LP could not be solved: {res.message}")

    values = np.maximum(res.x.reshape(n, m), 0.0)
    return TransportPlan(values, a, b), float(res.fun)
