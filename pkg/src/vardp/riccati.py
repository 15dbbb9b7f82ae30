"""Backward passes: classical LQR and the variational implicit Riccati recursion.

The variational stage solves, for the joint Gaussian q(x_k, u_k),

    S = R + B^T P' B
    K = -S^-1 B^T P' E[J]
    beta = -S^-1 B^T P' (E[f] - alpha')
    0 = Q (alpha - x*) + E[J^T P' (f + B u - alpha')]
    P = Q - E[J]^T P' B S^-1 B^T P' E[J] + E[J^T P' J + H]

where J = df/dx, primes denote stage k+1 and every expectation is under the
state marginal N(alpha, eps P^-1) (u enters affinely, so it is replaced by
its conditional mean).  The equations are implicit and solved by a short
fixed-point loop started from the eps = 0 (linearized) solution.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CapabilityError, ParameterError, SPDError, VardpError
from .gauss import GaussianJointStep, TerminalValue, check_spd, symmetrize
from .quadrature import _hessian_on_rule, _jacobian_on_rule, cubature_points, integrate

HESSIAN_MODES = ("full", "gauss_newton")
JACOBIAN_MODES = ("analytic", "stein")

# width of the surrogate Gaussian used to linearize without a Jacobian
STEIN_SURROGATE_STD = 1e-6


@dataclass(frozen=True)
class SolverOptions:
    inner_iterations: int = 10
    fixed_point_tolerance: float = 1e-9
    hessian_mode: str = "full"
    jacobian_mode: str = "analytic"
    fallback_gauss_newton: bool = False
    # skip the alpha/beta updates when oddness forces them to zero
    use_symmetry: bool = True

    def __post_init__(self):
        if int(self.inner_iterations) < 1:
            raise ParameterError("inner_iterations must be >= 1")
        if self.hessian_mode not in HESSIAN_MODES:
            raise ParameterError(f"hessian_mode must be one of {HESSIAN_MODES}")
        if self.jacobian_mode not in JACOBIAN_MODES:
            raise ParameterError(f"jacobian_mode must be one of {JACOBIAN_MODES}")


@dataclass(frozen=True, eq=False)
class PolicySchedule:
    steps: Sequence[GaussianJointStep]
    terminal: TerminalValue
    epsilon: float
    cost: Optional[object] = None
    label: str = "variational"
    # inner sweeps actually run per stage (diagnostic)
    iterations: Sequence[int] = field(default=())

    def __post_init__(self):
        steps = tuple(self.steps)
        if not steps:
            raise ParameterError("a schedule needs at least one step")
        if any(s.epsilon != self.epsilon for s in steps):
            raise ParameterError("all steps must share epsilon")
        object.__setattr__(self, "steps", steps)

    @property
    def horizon(self):
        return len(self.steps)

    def __len__(self):
        return len(self.steps)

    def __getitem__(self, k):
        return self.steps[k]

    @property
    def gains(self):
        return np.stack([s.gainK for s in self.steps])

    @property
    def precisions(self):
        """P_0 .. P_K, terminal included."""
        return np.stack([s.precP for s in self.steps] + [self.terminal.precPK])

    def value_at(self, k, x):
        from .gauss import value_quadratic
        target = self.steps[k] if k < self.horizon else self.terminal
        return value_quadratic(target, x)


def _annotate(exc, stage):
    exc.stage = stage
    if exc.args and isinstance(exc.args[0], str) and not exc.args[0].startswith("stage "):
        exc.args = (f"stage {stage}: {exc.args[0]}",) + exc.args[1:]
    return exc


def lqr_backward(A, B, Q, R, terminalP, horizon):
    """Classical finite-horizon Riccati recursion.

    Returns a list of (gain K_k, P_k) for k = 0..K-1; P_K is ``terminalP``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = check_spd(Q, "Q")
    R = check_spd(R, "R")
    P = check_spd(terminalP, "terminalP")
    out = []
    for _ in range(int(horizon)):
        S = symmetrize(R + B.T @ P @ B)
        BPA = B.T @ P @ A
        gain = -np.linalg.solve(S, BPA)
        P = symmetrize(A.T @ P @ A + Q - BPA.T @ np.linalg.solve(S, BPA))
        out.append((gain, P))
    out.reverse()
    return out


def lqr_schedule(A, B, cost, epsilon):
    """LQR solution packaged as a centered :class:`PolicySchedule` (S_k = R + B^T P_{k+1} B)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    d, m = B.shape
    P = cost.terminalP
    steps = []
    for k in reversed(range(cost.horizon)):
        Q, R = cost.Q_at(k), cost.R_at(k)
        S = symmetrize(R + B.T @ P @ B)
        BPA = B.T @ P @ A
        gain = -np.linalg.solve(S, BPA)
        P = symmetrize(A.T @ P @ A + Q - BPA.T @ np.linalg.solve(S, BPA))
        steps.append(GaussianJointStep(np.zeros(d), np.zeros(m), gain, S, P, epsilon))
    steps.reverse()
    terminal = TerminalValue(np.zeros(d), cost.terminalP)
    return PolicySchedule(steps, terminal, float(epsilon), cost=cost, label="lqr")


def _linearization(model, x, mode):
    if mode == "analytic" or model.has_jacobian:
        if not model.has_jacobian:
            raise CapabilityError("no analytic Jacobian available")
        return model.jac(x)
    rule = cubature_points(x, (STEIN_SURROGATE_STD * max(1.0, np.max(np.abs(x)))) ** 2
                           * np.eye(x.size))
    return _jacobian_on_rule(model, rule, "stein")


def _symmetric_case(model, nxt, x_ref, opts):
    return opts.use_symmetry and model.is_odd and not np.any(nxt.alpha) and not np.any(x_ref)


def initialize_step_epsilon_zero(model, cost, nxt, x_ref, epsilon=1.0, k=0, opts=None):
    """The eps = 0 step: LQR around the expansion point x_ref with A = df/dx(x_ref)."""
    opts = opts or SolverOptions()
    x_ref = np.atleast_1d(np.asarray(x_ref, dtype=float))
    B, Q, R = model.B_at(k), cost.Q_at(k), cost.R_at(k)
    a1, P1 = nxt.alpha, nxt.precP
    A = _linearization(model, x_ref, opts.jacobian_mode)
    S = symmetrize(R + B.T @ P1 @ B)
    BPA = B.T @ P1 @ A
    gain = -np.linalg.solve(S, BPA)
    P = symmetrize(Q + A.T @ P1 @ A - BPA.T @ np.linalg.solve(S, BPA))
    try:
        check_spd(P, "P")
    except ParameterError as exc:
        raise SPDError(f"initial P not SPD: {exc}", iteration=0) from None
    if _symmetric_case(model, nxt, x_ref, opts):
        alpha = np.zeros(model.dim_state)
        beta = np.zeros(model.dim_control)
    else:
        alpha = x_ref.copy()
        beta = -np.linalg.solve(S, B.T @ P1 @ (model.f(x_ref) - a1))
    return GaussianJointStep(alpha, beta, gain, S, P, epsilon)


def _rel_change(new, old):
    scale = max(np.max(np.abs(new)), np.max(np.abs(old)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(new - old)) / scale)


def _sweep(model, cost, nxt, x_ref, step, S, opts, k, hessian_mode, symmetric):
    """One fixed-point sweep: K, beta, alpha, then P.  Returns the new step."""
    B, Q = model.B_at(k), cost.Q_at(k)
    a1, P1 = nxt.alpha, nxt.precP
    eps = step.epsilon
    alpha, beta, P = step.alpha, step.beta, step.precP
    BP1 = B.T @ P1

    rule = cubature_points(alpha, eps * np.linalg.inv(P))
    EJ = _jacobian_on_rule(model, rule, opts.jacobian_mode)
    gain = -np.linalg.solve(S, BP1 @ EJ)

    if not symmetric:
        Ef = integrate(rule, model.f)
        beta = -np.linalg.solve(S, BP1 @ (Ef - a1))
        resid = Q @ (alpha - x_ref) + _expect_jt_p_resid(
            model, rule, alpha, beta, gain, a1, P1, B, EJ, opts.jacobian_mode)
        # Newton step on the mean: the joint precision's state block inverse is P^-1
        delta = -np.linalg.solve(P, resid)
        alpha = alpha + delta
        beta = beta + gain @ delta
        rule = cubature_points(alpha, eps * np.linalg.inv(P))
        EJ = _jacobian_on_rule(model, rule, opts.jacobian_mode)

    if model.has_jacobian:
        EJPJ = integrate(rule, lambda x: (lambda J: J.T @ P1 @ J)(model.jac(x)))
    else:
        EJPJ = EJ.T @ P1 @ EJ
    P_new = Q - EJ.T @ BP1.T @ np.linalg.solve(S, BP1 @ EJ) + EJPJ
    if hessian_mode == "full":
        P_new = P_new + _hessian_on_rule(model, rule, a1, P1, alpha, beta, gain, k)
    P_new = symmetrize(P_new)
    return alpha, beta, gain, P_new


def _expect_jt_p_resid(model, rule, alpha, beta, gain, a1, P1, B, EJ, mode):
    """E[J(x)^T P' (f(x) + B u(x) - alpha')] with u(x) = beta + K (x - alpha)."""
    def resid(x):
        return model.f(x) + B @ (beta + gain @ (x - alpha)) - a1

    if model.has_jacobian:
        return integrate(rule, lambda x: model.jac(x).T @ (P1 @ resid(x)))
    # Stein: E[grad phi] with phi = 0.5 r^T P' r, grad phi = (J + B K)^T P' r
    mean = integrate(rule, lambda x: x)
    cov = integrate(rule, lambda x: np.outer(x - mean, x - mean))
    grad_phi = np.linalg.solve(cov, integrate(
        rule, lambda x: (x - mean) * (0.5 * resid(x) @ P1 @ resid(x))))
    Er = integrate(rule, resid)
    return grad_phi - gain.T @ B.T @ P1 @ Er


def _check_capabilities(model, opts, hessian_mode):
    if opts.jacobian_mode == "analytic" and not model.has_jacobian:
        raise CapabilityError("jacobian_mode='analytic' requires model.jacobian")
    if hessian_mode == "full" and not model.has_hessian:
        raise CapabilityError("hessian_mode='full' requires model.hessian")


def _solve_stage(model, cost, nxt, x_ref, epsilon, opts, k, hessian_mode):
    _check_capabilities(model, opts, hessian_mode)
    symmetric = _symmetric_case(model, nxt, x_ref, opts)
    step = initialize_step_epsilon_zero(model, cost, nxt, x_ref, epsilon, k, opts)
    S = step.precS
    sweeps = 0
    for it in range(1, opts.inner_iterations + 1):
        sweeps = it
        alpha, beta, gain, P = _sweep(model, cost, nxt, x_ref, step, S, opts, k,
                                      hessian_mode, symmetric)
        try:
            P = check_spd(P, "P")
        except ParameterError as exc:
            raise SPDError(f"P lost positive definiteness at inner iteration {it} ({exc})",
                           iteration=it) from None
        change = max(_rel_change(alpha, step.alpha), _rel_change(beta, step.beta),
                     _rel_change(gain, step.gainK), _rel_change(P, step.precP))
        step = GaussianJointStep(alpha, beta, gain, S, P, epsilon)
        if change < opts.fixed_point_tolerance:
            break
    return step, sweeps


def variational_backward_step(model, cost, nxt, x_ref, epsilon, opts=None, k=0,
                              return_iterations=False):
    """Solve one stage of the variational recursion given the next value (alpha', P')."""
    opts = opts or SolverOptions()
    if not float(epsilon) > 0.0:
        raise ParameterError("epsilon must be positive")
    x_ref = np.atleast_1d(np.asarray(x_ref, dtype=float))
    try:
        step, sweeps = _solve_stage(model, cost, nxt, x_ref, epsilon, opts, k, opts.hessian_mode)
    except SPDError:
        if not (opts.fallback_gauss_newton and opts.hessian_mode == "full"):
            raise
        step, sweeps = _solve_stage(model, cost, nxt, x_ref, epsilon, opts, k, "gauss_newton")
    return (step, sweeps) if return_iterations else step


def variational_backward(model, cost, epsilon, opts=None):
    """Run the variational recursion from the terminal value N(x*_K, eps P_K^-1) back to stage 0."""
    opts = opts or SolverOptions()
    if cost.dim_state != model.dim_state or cost.dim_control != model.dim_control:
        raise ParameterError("cost and model dimensions differ")
    K = cost.horizon
    if model.inputB.ndim == 3 and model.inputB.shape[0] != K:
        raise ParameterError("time-varying B must have one slice per stage")
    terminal = TerminalValue(cost.reference[K], cost.terminalP)
    nxt = terminal
    steps, sweeps = [None] * K, [0] * K
    for k in reversed(range(K)):
        try:
            step, n = variational_backward_step(model, cost, nxt, cost.reference[k], epsilon,
                                                opts, k=k, return_iterations=True)
        except VardpError as exc:
            raise _annotate(exc, k)
        steps[k], sweeps[k] = step, n
        nxt = step
    return PolicySchedule(steps, terminal, float(epsilon), cost=cost, iterations=tuple(sweeps))
