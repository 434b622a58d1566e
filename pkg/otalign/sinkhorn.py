import numpy as np
from scipy.special import logsumexp

from otalign.constants import CONVERGENCE_CHECK_PERIOD
from otalign.exceptions import ShapeError
from otalign.transport import (
    CostMatrix,
    Marginals,
    TransportPlan,
    SolverConfig,
    round_to_feasible,
)
from otalign.utilities import warn


class SinkhornState:
    """
    Dual state of a Sinkhorn run. The scalings u = exp(f / eps) and
    v = exp(g / eps) are derived from the potentials f and g, which is the
    form kept between epsilon stages.
    """

    def __init__(self, f, g, epsilon_current, iterations_used, converged, violation):
        self.f = f
        self.g = g
        self.epsilon_current = epsilon_current
        self.iterations_used = iterations_used
        self.converged = converged
        self.violation = violation

    @property
    def u(self):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(self.f / self.epsilon_current)

    @property
    def v(self):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(self.g / self.epsilon_current)

    def to_dict(self):
        return {
            "epsilon": self.epsilon_current,
            "iterations": self.iterations_used,
            "converged": self.converged,
            "violation": self.violation,
        }


def _marginal_violation(P, a, b):
    return max(
        float(np.max(np.abs(P.sum(axis=1) - a))),
        float(np.max(np.abs(P.sum(axis=0) - b))),
    )


def _log_stage(C, a, b, eps, max_iter, tol, f, g):
    """
    Log-domain updates on the scaled potentials f / eps and g / eps. After a
    column update the column marginals are exact, so the row violation read
    off the next row update is the marginal violation of the current plan.
    """
    with np.errstate(divide="ignore"):
        loga = np.log(a)
        logb = np.log(b)

    M = -C / eps
    fe = f / eps
    ge = g / eps

    it = 0
    while it < max_iter:
        lse = logsumexp(M + ge[None, :], axis=1)
        if it > 0 and np.max(np.abs(np.exp(fe + lse) - a)) < tol:
            break
        fe = loga - lse
        ge = logb - logsumexp(M + fe[:, None], axis=0)
        it += 1

    P = np.exp(M + fe[:, None] + ge[None, :])
    return eps * fe, eps * ge, P, it, _marginal_violation(P, a, b)


def _linear_stage(C, a, b, eps, max_iter, tol, f, g):
    # Underflows for small eps; kept for comparison with the log-domain updates
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        K = np.exp(-C / eps)
        u = np.exp(f / eps)
        v = np.exp(g / eps)

        P = u[:, None] * K * v[None, :]
        violation = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            u_prev, v_prev = u, v
            u = a / K.dot(v)
            v = b / K.T.dot(u)

            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                warn(f"Numerical errors in the linear-domain iterations at epsilon={eps:g}")
                u, v = u_prev, v_prev
                P = u[:, None] * K * v[None, :]
                violation = _marginal_violation(P, a, b)
                break

            if it % CONVERGENCE_CHECK_PERIOD == 0 or it == max_iter:
                P = u[:, None] * K * v[None, :]
                violation = _marginal_violation(P, a, b)
                if violation < tol:
                    break

        f = eps * np.log(u)
        g = eps * np.log(v)

    return f, g, P, it, violation


def _prepare(c, a, b):
    if not isinstance(c, CostMatrix):
        c = CostMatrix(c)
    if not isinstance(a, Marginals):
        a = Marginals(a)
    if not isinstance(b, Marginals):
        b = Marginals(b)

    if c.shape != (len(a), len(b)):
        raise ShapeError(
            f"Cost matrix of shape {c.shape} does not match marginals "
            f"({len(a)}, {len(b)})"
        )
    return c, a, b


def _run(c, a, b, cfg, schedule):
    C = c.values
    f = np.zeros(c.n)
    g = np.zeros(c.m)
    stage = _log_stage if cfg.log_domain else _linear_stage

    iterations = 0
    P = None
    violation = np.inf
    last = len(schedule) - 1
    for index, eps in enumerate(schedule):
        # Intermediate stages stop at max(tol, eps)
        tol = cfg.convergence_tol if index == last else max(cfg.convergence_tol, eps)
        f, g, P, it, violation = stage(
            C,
            a.weights,
            b.weights,
            eps,
            cfg.max_iterations_per_epsilon,
            tol,
            f,
            g,
        )
        iterations += it

    converged = violation < cfg.convergence_tol
    if not converged:
        warn(
            f"Sinkhorn did not converge at epsilon={schedule[-1]:g} "
            f"(marginal violation {violation:.3g} after {iterations} iterations)"
        )

    values = round_to_feasible(P, a.weights, b.weights)
    plan = TransportPlan(values, a, b)
    state = SinkhornState(f, g, schedule[-1], iterations, converged, violation)
    return plan, state


def sinkhorn_solve(c, a, b, cfg=None):
    """
    Entropy-regularized OT at epsilon = cfg.epsilon_final.
    The returned plan always satisfies the marginals; state.converged tells
    whether the iterations reached cfg.convergence_tol within the budget.
    """
    if cfg is None:
        cfg = SolverConfig()
    c, a, b = _prepare(c, a, b)
    return _run(c, a, b, cfg, [cfg.epsilon_final])


def sinkhorn_epsilon_scaled(c, a, b, cfg=None):
    """
    Runs the Sinkhorn iterations for epsilon_start, epsilon_start * scaling_factor,
    ... down to epsilon_final, warm-starting each stage from the previous
    dual potentials.
    """
    if cfg is None:
        cfg = SolverConfig()
    c, a, b = _prepare(c, a, b)
    return _run(c, a, b, cfg, cfg.epsilon_schedule())
