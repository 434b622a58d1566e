import numpy as np
from scipy.special import xlogy

from otalign.constants import (
    MARGINAL_TOL,
    DEFAULT_FEASIBILITY_TOL,
    DEFAULT_EPSILON_FINAL,
    DEFAULT_EPSILON_START,
    DEFAULT_SCALING_FACTOR,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_CONVERGENCE_TOL,
)
from otalign.exceptions import InvalidParameter, ShapeError
from otalign.utilities import parse_real, parse_positive_int


def _frozen(arr):
    arr.flags.writeable = False
    return arr


class Marginals:
    """
    Probability mass over one of the two point sets.

    Plans extracted from augmented problems only carry part of the mass; their
    marginals are built with check_sum=False and are not renormalized.
    """

    def __init__(self, weights, check_sum=True, tol=MARGINAL_TOL):
        try:
            w = np.array(weights, dtype=float).ravel()
        except (ValueError, TypeError):
            raise InvalidParameter(f"Invalid marginal weights: '{weights}'")

        if w.size == 0:
            raise InvalidParameter("Marginals need at least one entry")

        if not np.all(np.isfinite(w)):
            raise InvalidParameter("Marginal weights must be finite")

        if np.any(w < 0):
            raise InvalidParameter(
                f"Marginal weights must be nonnegative (found {w.min()})"
            )

        if check_sum and abs(w.sum() - 1.0) > tol:
            raise InvalidParameter(
                f"Marginal weights must sum to 1 (sum is {w.sum():.12g})"
            )

        self.weights = _frozen(w)

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n))

    @property
    def total(self):
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)

    def __eq__(self, other):
        return isinstance(other, Marginals) and np.array_equal(
            self.weights, other.weights
        )


class CostMatrix:
    def __init__(self, values):
        try:
            v = np.array(values, dtype=float)
        except (ValueError, TypeError):
            raise InvalidParameter("Cost matrix entries must be real numbers")

        if v.ndim != 2:
            raise ShapeError(f"A cost matrix must be 2-dimensional (got {v.ndim})")

        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeError(f"Empty cost matrix: shape {v.shape}")

        if not np.all(np.isfinite(v)):
            raise InvalidParameter("Cost matrix entries must be finite (no NaN/inf)")

        self.values = _frozen(v)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def T(self):
        return CostMatrix(self.values.T)

    def scaled(self, alpha):
        return CostMatrix(alpha * self.values)

    def shifted(self, offset):
        return CostMatrix(self.values + offset)

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "values": self.values.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            n, m, values = int(d["n"]), int(d["m"]), d["values"]
        except (KeyError, TypeError, ValueError):
            raise InvalidParameter("A cost matrix needs the keys 'n', 'm' and 'values'")

        if len(values) != n * m:
            raise ShapeError(
                f"Cost matrix declares {n}x{m} entries but contains {len(values)}"
            )
        return cls(np.reshape(np.array(values, dtype=float), (n, m)))

    def __eq__(self, other):
        return isinstance(other, CostMatrix) and np.array_equal(
            self.values, other.values
        )


class TransportPlan:
    """
    Nonnegative n x m matrix with its row and column marginals.
    When the marginals are omitted, the realized row and column sums are used.
    """

    def __init__(
        self,
        values,
        row_marginal=None,
        col_marginal=None,
        feasibility_tol=DEFAULT_FEASIBILITY_TOL,
    ):
        try:
            v = np.array(values, dtype=float)
        except (ValueError, TypeError):
            raise InvalidParameter("Plan entries must be real numbers")

        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeError(f"Invalid plan shape: {v.shape}")

        if not np.all(np.isfinite(v)):
            raise InvalidParameter("Plan entries must be finite")

        if np.any(v < -feasibility_tol):
            raise InvalidParameter(f"Plan entries must be nonnegative (found {v.min()})")

        self.feasibility_tol = parse_real(feasibility_tol, "feasibility tolerance")

        if row_marginal is None:
            row_marginal = Marginals(v.sum(axis=1), check_sum=False)
        elif not isinstance(row_marginal, Marginals):
            row_marginal = Marginals(row_marginal)

        if col_marginal is None:
            col_marginal = Marginals(v.sum(axis=0), check_sum=False)
        elif not isinstance(col_marginal, Marginals):
            col_marginal = Marginals(col_marginal)

        if len(row_marginal) != v.shape[0] or len(col_marginal) != v.shape[1]:
            raise ShapeError(
                f"Marginals of lengths ({len(row_marginal)}, {len(col_marginal)}) "
                f"do not fit a plan of shape {v.shape}"
            )

        self.values = _frozen(v)
        self.row_marginal = row_marginal
        self.col_marginal = col_marginal

    @classmethod
    def from_permutation(cls, mapping):
        N = len(mapping)
        values = np.zeros((N, N))
        values[np.arange(N), np.asarray(mapping)] = 1.0 / N
        return cls(values, Marginals.uniform(N), Marginals.uniform(N))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def mass(self):
        return float(self.values.sum())

    @property
    def T(self):
        return TransportPlan(
            self.values.T,
            self.col_marginal,
            self.row_marginal,
            feasibility_tol=self.feasibility_tol,
        )

    def is_feasible(self, tol=None):
        if tol is None:
            tol = self.feasibility_tol
        return validate_plan(self, self.row_marginal, self.col_marginal, tol).passed

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "values": self.values.ravel().tolist(),
            "row_marginal": self.row_marginal.weights.tolist(),
            "col_marginal": self.col_marginal.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            n, m, values = int(d["n"]), int(d["m"]), d["values"]
        except (KeyError, TypeError, ValueError):
            raise InvalidParameter("A plan needs the keys 'n', 'm' and 'values'")

        if len(values) != n * m:
            raise ShapeError(f"Plan declares {n}x{m} entries but contains {len(values)}")

        arr = np.reshape(np.array(values, dtype=float), (n, m))
        row = d.get("row_marginal")
        col = d.get("col_marginal")
        return cls(
            arr,
            None if row is None else Marginals(row, check_sum=False),
            None if col is None else Marginals(col, check_sum=False),
        )


class SolverConfig:
    """Parameters of the epsilon-scaled Sinkhorn solver"""

    def __init__(
        self,
        epsilon_final=None,
        epsilon_start=None,
        scaling_factor=None,
        max_iterations_per_epsilon=None,
        convergence_tol=None,
        log_domain=True,
    ):
        if epsilon_final is None:
            epsilon_final = DEFAULT_EPSILON_FINAL
        if scaling_factor is None:
            scaling_factor = DEFAULT_SCALING_FACTOR
        if max_iterations_per_epsilon is None:
            max_iterations_per_epsilon = DEFAULT_MAX_ITERATIONS
        if convergence_tol is None:
            convergence_tol = DEFAULT_CONVERGENCE_TOL

        self.epsilon_final = parse_real(epsilon_final, "final epsilon")
        if self.epsilon_final <= 0:
            raise InvalidParameter(
                f"The final epsilon must be positive (received '{epsilon_final}')"
            )

        if epsilon_start is None:
            epsilon_start = max(DEFAULT_EPSILON_START, self.epsilon_final)

        self.epsilon_start = parse_real(epsilon_start, "initial epsilon")
        if self.epsilon_start < self.epsilon_final:
            raise InvalidParameter(
                f"The initial epsilon ({epsilon_start}) must not be smaller "
                f"than the final epsilon ({epsilon_final})"
            )

        self.scaling_factor = parse_real(scaling_factor, "epsilon scaling factor")
        if not 0 < self.scaling_factor < 1:
            raise InvalidParameter(
                f"The epsilon scaling factor must lie in (0, 1) (received '{scaling_factor}')"
            )

        self.max_iterations_per_epsilon = parse_positive_int(
            max_iterations_per_epsilon, "number of iterations per epsilon"
        )

        self.convergence_tol = parse_real(convergence_tol, "convergence tolerance")
        if self.convergence_tol <= 0:
            raise InvalidParameter(
                f"The convergence tolerance must be positive (received '{convergence_tol}')"
            )

        self.log_domain = bool(log_domain)

    def epsilon_schedule(self):
        """Decreasing epsilons ending exactly at epsilon_final"""
        schedule = []
        eps = self.epsilon_start
        while eps > self.epsilon_final * (1 + 1e-12):
            schedule.append(eps)
            eps *= self.scaling_factor
        schedule.append(self.epsilon_final)
        return schedule

    @property
    def total_budget(self):
        return len(self.epsilon_schedule()) * self.max_iterations_per_epsilon

    def to_dict(self):
        return {
            "epsilon_final": self.epsilon_final,
            "epsilon_start": self.epsilon_start,
            "scaling_factor": self.scaling_factor,
            "max_iter": self.max_iterations_per_epsilon,
            "tol": self.convergence_tol,
            "log_domain": self.log_domain,
        }

    @classmethod
    def from_dict(cls, d):
        KEYS = {"epsilon_final", "epsilon_start", "scaling_factor", "max_iter", "tol", "log_domain"}
        unknown = set(d) - KEYS
        if unknown:
            raise InvalidParameter(
                f"Unknown solver configuration keys: {', '.join(sorted(unknown))}"
            )
        return cls(
            epsilon_final=d.get("epsilon_final"),
            epsilon_start=d.get("epsilon_start"),
            scaling_factor=d.get("scaling_factor"),
            max_iterations_per_epsilon=d.get("max_iter"),
            convergence_tol=d.get("tol"),
            log_domain=d.get("log_domain", True),
        )

    def __eq__(self, other):
        return isinstance(other, SolverConfig) and self.to_dict() == other.to_dict()


class ValidationReport:
    def __init__(self, row_violation, col_violation, min_entry, tol):
        self.row_violation = float(row_violation)
        self.col_violation = float(col_violation)
        self.min_entry = float(min_entry)
        self.tol = tol

    @property
    def passed(self):
        return (
            self.row_violation <= self.tol
            and self.col_violation <= self.tol
            and self.min_entry >= -self.tol
        )

    def __bool__(self):
        return self.passed

    def to_dict(self):
        return {
            "row_violation": self.row_violation,
            "col_violation": self.col_violation,
            "min_entry": self.min_entry,
            "tol": self.tol,
            "passed": self.passed,
        }


def _check_same_shape(c, p):
    if c.shape != p.shape:
        raise ShapeError(f"Shape mismatch: cost {c.shape} and plan {p.shape}")


def transport_cost(c, p):
    """Returns <C, P>"""
    _check_same_shape(c, p)
    return float(np.sum(c.values * p.values))


def entropy(p):
    """
    H(P) = -sum P_ij (log P_ij - 1), with 0 log 0 = 0
    """
    P = p.values
    return float(-np.sum(xlogy(P, P) - P))


def validate_plan(p, a, b, tol=DEFAULT_FEASIBILITY_TOL):
    if not isinstance(a, Marginals):
        a = Marginals(a, check_sum=False)
    if not isinstance(b, Marginals):
        b = Marginals(b, check_sum=False)

    if p.shape != (len(a), len(b)):
        raise ShapeError(
            f"Plan of shape {p.shape} does not match marginals ({len(a)}, {len(b)})"
        )

    row_violation = np.max(np.abs(p.values.sum(axis=1) - a.weights))
    col_violation = np.max(np.abs(p.values.sum(axis=0) - b.weights))
    return ValidationReport(row_violation, col_violation, p.values.min(), tol)


def round_to_feasible(values, a, b):
    """
    Repairs the marginals of an approximate plan: rows are scaled down to at
    most a, columns to at most b, and the remaining deficits are spread with a
    rank-one correction. The output satisfies both marginals exactly (up to
    floating point) and differs from the input by at most the violation.
    """
    P = np.array(values, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    with np.errstate(divide="ignore", invalid="ignore"):
        row_sums = P.sum(axis=1)
        x = np.where(row_sums > a, a / row_sums, 1.0)
        P *= x[:, None]

        col_sums = P.sum(axis=0)
        y = np.where(col_sums > b, b / col_sums, 1.0)
        P *= y[None, :]

    err_r = np.maximum(a - P.sum(axis=1), 0.0)
    err_c = np.maximum(b - P.sum(axis=0), 0.0)
    deficit = err_r.sum()
    if deficit > 0:
        P += np.outer(err_r, err_c) / deficit
    return P
