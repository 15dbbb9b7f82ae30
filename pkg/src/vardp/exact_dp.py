"""Exact grid dynamic programming for scalar problems (d = m = 1).

The full-entropy recursion has a closed form: with
    Q(x, u) = KL(p(x' | x, u) || r(x, u) phi(x'))
            = -H(p(. | x, u)) + l(x, u) / eps - E_p[log phi(x')],
the optimal policy is exp(-Q(x, u)) / phi_k(x) with phi_k(x) = int exp(-Q(x, u)) du,
and the value is -eps log phi_k.  Everything here is tabulated on uniform grids
and integrated with the trapezoid rule; it serves as a reference for the
Gaussian approximation.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp
from scipy.stats import norm

from .errors import GridCoverageError, ParameterError

PHI_FLOOR = 1e-300
COVERAGE_TOL = 1e-6
LOG_PHI_FLOOR = np.log(PHI_FLOOR)


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParameterError("grid needs lo < hi")
        if int(self.n) < 64:
            raise ParameterError("grid needs at least 64 nodes")

    @classmethod
    def centered(cls, center, halfwidth, n=2001):
        return cls(center - halfwidth, center + halfwidth, n)

    @property
    def nodes(self):
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def spacing(self):
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def weights(self):
        w = np.full(self.n, self.spacing)
        w[[0, -1]] *= 0.5
        return w

    def integrate(self, values, axis=-1):
        return np.tensordot(np.moveaxis(np.asarray(values, dtype=float), axis, -1),
                            self.weights, axes=1)

    def refined(self):
        """Same interval, half the spacing."""
        return Grid1D(self.lo, self.hi, 2 * self.n - 1)


@dataclass(frozen=True, eq=False)
class TabulatedValue:
    """Unnormalized value density phi = exp(-V / eps) on a grid, stored as log phi."""

    grid: Grid1D
    log_phi: np.ndarray
    epsilon: float

    def __post_init__(self):
        lp = np.asarray(self.log_phi, dtype=float).ravel()
        if lp.size != self.grid.n:
            raise ParameterError("log_phi does not match the grid")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise ParameterError("log_phi must be finite or -inf")
        lp = np.maximum(lp, LOG_PHI_FLOOR)
        lp.setflags(write=False)
        object.__setattr__(self, "log_phi", lp)
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")

    @classmethod
    def from_phi(cls, grid, phi, epsilon):
        return cls(grid, np.log(np.maximum(np.asarray(phi, dtype=float), PHI_FLOOR)), epsilon)

    @classmethod
    def from_quadratic(cls, grid, alpha, P, epsilon):
        """phi(x) = exp(-P (x - alpha)^2 / (2 eps))."""
        x = grid.nodes
        return cls(grid, -0.5 * P * (x - alpha) ** 2 / epsilon, epsilon)

    @property
    def phi(self):
        return np.maximum(np.exp(self.log_phi), PHI_FLOOR)

    @property
    def value(self):
        """V(x) = -eps log phi(x)."""
        return -self.epsilon * self.log_phi

    def value_offset(self, x0=0.0):
        """V(x) - V(x0), with V(x0) interpolated."""
        V = self.value
        return V - np.interp(x0, self.grid.nodes, V)


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Exact policy density p*(u | x) on (state grid) x (control grid)."""

    xgrid: Grid1D
    ugrid: Grid1D
    density: np.ndarray  # (nx, nu)
    q_values: np.ndarray  # Q(x, u) table

    def row_mass(self):
        return self.ugrid.integrate(self.density)

    def row_mean(self):
        return self.ugrid.integrate(self.density * self.ugrid.nodes)

    def row_variance(self):
        mean = self.row_mean()
        return self.ugrid.integrate(self.density * (self.ugrid.nodes - mean[:, None]) ** 2)


def _scalar(v):
    return float(np.asarray(v, dtype=float).ravel()[0])


def _scalar_problem(model, cost, k):
    if model.dim_state != 1 or model.dim_control != 1:
        raise ParameterError("exact DP supports d = m = 1 only")
    b = _scalar(model.B_at(k))
    c = _scalar(model.noiseC)
    q = _scalar(cost.Q_at(k))
    r = _scalar(cost.R_at(k))
    xref = _scalar(cost.reference[k])
    return b, c, q, r, xref


def _neg_entropy(c):
    return -0.5 * np.log(2.0 * np.pi * np.e * c)


def _escaped_mass(mean, c, grid):
    s = np.sqrt(c)
    return norm.cdf((grid.lo - mean) / s) + norm.sf((grid.hi - mean) / s)


def q_function(model, cost, x, u, nextPhi, epsilon, k=0):
    """Q(x, u) = -H(N(f(x) + B u, C)) + l(x, u) / eps - int p(x' | x, u) log phi(x') dx'."""
    b, c, q, r, xref = _scalar_problem(model, cost, k)
    mean = _scalar(model.f(np.array([x]))) + b * u
    grid = nextPhi.grid
    escaped = _escaped_mass(mean, c, grid)
    if escaped > COVERAGE_TOL:
        raise GridCoverageError(f"transition mass {escaped:.3g} leaves the grid at x={x}, u={u}")
    dens = norm.pdf(grid.nodes, loc=mean, scale=np.sqrt(c))
    cross = grid.integrate(dens * nextPhi.log_phi) + escaped * LOG_PHI_FLOOR
    stage = 0.5 * q * (x - xref) ** 2 + 0.5 * r * u ** 2
    return _neg_entropy(c) + stage / epsilon - cross


def _smoothed_log_phi(nextPhi, c, means):
    """G(m) = int N(x'; m, C) log phi(x') dx' at every entry of ``means``.

    G is evaluated by the trapezoid rule on a uniform grid of means at half the
    state spacing and interpolated with a cubic spline.  Off the grid phi is
    taken at its floor, so escaping transitions are priced as expensive as
    the table allows.
    """
    grid = nextPhi.grid
    lo, hi = float(means.min()), float(means.max())
    h = 0.5 * grid.spacing
    n = max(int(np.ceil((hi - lo) / h)) + 1, 4)
    mgrid = np.linspace(lo, hi, n) if hi > lo else np.linspace(lo - h, lo + h, 4)
    xs = grid.nodes
    wl = grid.weights * nextPhi.log_phi
    G = np.empty(mgrid.size)
    s = np.sqrt(c)
    for start in range(0, mgrid.size, 512):
        block = mgrid[start:start + 512]
        G[start:start + 512] = (norm.pdf(xs[None, :], loc=block[:, None], scale=s) @ wl
                                + _escaped_mass(block, c, grid) * LOG_PHI_FLOOR)
    return CubicSpline(mgrid, G)(means)


def exact_backward_step(model, cost, nextPhi, epsilon, ugrid, k=0, xgrid=None):
    """One step of the exact recursion.  Returns (TabulatedValue, PolicyTable).

    Raises :class:`GridCoverageError` when a state/control pair carrying policy
    mass above 1e-6 sends more than 1e-6 of its transition mass off the grid.
    """
    b, c, q, r, xref = _scalar_problem(model, cost, k)
    xgrid = xgrid or nextPhi.grid
    xs, us = xgrid.nodes, ugrid.nodes
    fx = np.array([_scalar(model.f(np.array([x]))) for x in xs])
    means = fx[:, None] + b * us[None, :]
    G = _smoothed_log_phi(nextPhi, c, means.ravel()).reshape(means.shape)
    stage = 0.5 * q * (xs[:, None] - xref) ** 2 + 0.5 * r * us[None, :] ** 2
    Q = _neg_entropy(c) + stage / epsilon - G

    log_w = np.log(ugrid.weights)
    log_phi = logsumexp(-Q + log_w[None, :], axis=1)
    density = np.exp(-Q - log_phi[:, None])

    escaped = _escaped_mass(means, c, nextPhi.grid)
    weight = density * ugrid.weights[None, :]
    flagged = (escaped > COVERAGE_TOL) & (weight > COVERAGE_TOL)
    if np.any(flagged):
        i, j = np.argwhere(flagged)[0]
        raise GridCoverageError(
            f"transition mass {escaped[i, j]:.3g} leaves the grid at x={xs[i]:.4g}, u={us[j]:.4g}")
    return TabulatedValue(xgrid, log_phi, epsilon), PolicyTable(xgrid, ugrid, density, Q)


def exact_backward(model, cost, epsilon, xgrid, ugrid, margin=None):
    """Iterate :func:`exact_backward_step` from phi_K = exp(-L_K / eps).

    phi_K lives on ``xgrid``; each earlier stage is tabulated on a grid
    narrower by ``margin`` on both sides (default: a quarter of the initial
    half-width, same node count) so that its transitions stay inside the
    support of the next table.  Returns lists over k of values (length K+1)
    and policies (length K).
    """
    K = cost.horizon
    half = 0.5 * (xgrid.hi - xgrid.lo)
    margin = 0.25 * half if margin is None else float(margin)
    if margin * K >= half:
        raise ParameterError("grid too narrow for the requested margin and horizon")
    center = 0.5 * (xgrid.lo + xgrid.hi)
    phi = TabulatedValue.from_quadratic(xgrid, _scalar(cost.reference[K]),
                                        _scalar(cost.terminalP), epsilon)
    values, policies = [phi], []
    for i, k in enumerate(reversed(range(K)), start=1):
        grid = Grid1D.centered(center, half - i * margin, xgrid.n)
        phi, pol = exact_backward_step(model, cost, phi, epsilon, ugrid, k=k, xgrid=grid)
        values.append(phi)
        policies.append(pol)
    values.reverse()
    policies.reverse()
    return values, policies


def kl_objective(pz, conditional, h, zgrid, xgrid):
    """int int p(z) p(x|z) log(p(z) p(x|z) / h(x, z)) dx dz, with 0 log 0 = 0.

    ``conditional`` is indexed [z, x]; ``h`` is indexed [x, z].
    """
    pz = np.asarray(pz, dtype=float)
    cond = np.asarray(conditional, dtype=float)
    hz = np.asarray(h, dtype=float).T
    joint = pz[:, None] * cond
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(joint > 0, joint * (np.log(joint) - np.log(hz)), 0.0)
    return float(zgrid.integrate(xgrid.integrate(integrand)))


def kl_minimizer_check(conditional, h, zgrid, xgrid):
    """Minimizer over p(z) of KL(p(z) p(x|z) || h(x, z)) and the minimum -log Z."""
    cond = np.asarray(conditional, dtype=float)
    hz = np.asarray(h, dtype=float).T
    if cond.shape != (zgrid.n, xgrid.n) or hz.shape != cond.shape:
        raise ParameterError("tables must be (nz, nx) for conditional and (nx, nz) for h")
    if np.any(hz <= 0):
        raise ParameterError("h must be positive")
    mass = xgrid.integrate(cond)
    if np.max(np.abs(mass - 1.0)) > 1e-6:
        raise ParameterError("conditional rows must integrate to one")
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.where(cond > 0, cond * (np.log(cond) - np.log(hz)), 0.0)
    log_f = -xgrid.integrate(inner)
    log_Z = logsumexp(log_f + np.log(zgrid.weights))
    return np.exp(log_f - log_Z), float(-log_Z)


def write_value_table(path, value):
    """Delimited text dump of (x, V(x)) for plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "V"])
        for x, v in zip(value.grid.nodes, value.value):
            w.writerow([f"{x:.17g}", f"{v:.17g}"])


def write_policy_slices(path, policy, x_values):
    """Policy densities p*(u | x) at the grid nodes nearest to ``x_values``."""
    xs = policy.xgrid.nodes
    idx = [int(np.argmin(np.abs(xs - x))) for x in x_values]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u"] + [f"x={xs[i]:.17g}" for i in idx])
        for j, u in enumerate(policy.ugrid.nodes):
            w.writerow([f"{u:.17g}"] + [f"{policy.density[i, j]:.17g}" for i in idx])
