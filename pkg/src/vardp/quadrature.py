"""Gaussian expectations with the symmetric 2d-point cubature rule.

Points sit at mean +/- sqrt(d) L e_i with L the lower Cholesky factor of the
covariance, all weights 1/(2d).  The rule matches moments up to order three.
"""
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ParameterError
from .gauss import check_spd, symmetrize


@dataclass(frozen=True, eq=False)
class CubatureRule:
    points: np.ndarray  # (M, d)
    weights: np.ndarray  # (M,)
    paired: bool = False  # points ordered as (+v1, -v1, +v2, -v2, ...)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise ParameterError("points and weights differ in length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be positive and sum to one")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    def permuted(self, order):
        return CubatureRule(self.points[order], self.weights[order])


def cubature_points(mean, covariance):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size
    cov = check_spd(np.atleast_2d(covariance), "covariance")
    if cov.shape != (d, d):
        raise ParameterError("covariance shape does not match mean")
    L = np.linalg.cholesky(cov)
    offsets = np.sqrt(d) * L.T  # row i is sqrt(d) L e_i
    pts = np.empty((2 * d, d))
    pts[0::2] = mean + offsets
    pts[1::2] = mean - offsets
    return CubatureRule(pts, np.full(2 * d, 1.0 / (2 * d)), paired=True)


def integrate(rule, g):
    """Weighted sum of ``g`` over the rule's points; ``g`` may return any array shape."""
    vals = np.stack([np.asarray(g(x), dtype=float) for x in rule.points])
    if rule.paired and np.all(rule.weights == rule.weights[0]):
        # pairwise first so odd integrands cancel exactly at a centered rule
        return rule.weights[0] * (vals[0::2] + vals[1::2]).sum(axis=0)
    return np.tensordot(rule.weights, vals, axes=1)


def expect(g, mean, covariance):
    return integrate(cubature_points(mean, covariance), g)


def expect_jacobian(model, mean, covariance, mode="analytic"):
    """E[df/dx] under N(mean, covariance).

    ``stein`` mode needs only f and uses Gaussian integration by parts,
    E[df/dx] = E[f(x) (x - mean)^T] covariance^-1.
    """
    rule = cubature_points(mean, covariance)
    return _jacobian_on_rule(model, rule, mode)


def _jacobian_on_rule(model, rule, mode):
    if mode == "analytic":
        if not model.has_jacobian:
            raise CapabilityError("analytic Jacobian mode requires model.jacobian")
        return integrate(rule, model.jac)
    if mode == "stein":
        mean = integrate(rule, lambda x: x)
        cov = integrate(rule, lambda x: np.outer(x - mean, x - mean))
        cross = integrate(rule, lambda x: np.outer(model.f(x), x - mean))
        return np.linalg.solve(cov, cross.T).T
    raise ParameterError(f"unknown jacobian mode {mode!r}")


def hessian_contraction(model, x, u, nextAlpha, nextP, k=0):
    """H[mu, nu] = sum_ij P'_ij (f(x) + B u - alpha')_i d2 f_j / dx_mu dx_nu at one point."""
    resid = model.f(x) + model.B_at(k) @ u - nextAlpha
    return np.einsum("j,jmn->mn", nextP @ resid, model.hess(x))


def expect_hessian_contraction(model, nextAlpha, nextP, step, k=0):
    """E_q[H] with u replaced by its conditional mean (H is affine in u)."""
    if not model.has_hessian:
        raise CapabilityError("Hessian contraction requires model.hessian")
    rule = cubature_points(step.alpha, step.state_covariance)
    return _hessian_on_rule(model, rule, nextAlpha, nextP, step.alpha, step.beta, step.gainK, k)


def _hessian_on_rule(model, rule, nextAlpha, nextP, alpha, beta, K, k):
    H = integrate(rule, lambda x: hessian_contraction(
        model, x, beta + K @ (x - alpha), nextAlpha, nextP, k))
    return symmetrize(H)
