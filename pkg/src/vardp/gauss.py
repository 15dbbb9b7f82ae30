"""Joint Gaussian policy/value parametrization.

A stage is described by the joint Gaussian over (state, control)

    q(x, u) = N([alpha; beta], eps * [[P^-1, P^-1 K^T], [K P^-1, K P^-1 K^T + S^-1]])

whose state marginal N(alpha, eps P^-1) stands for the value distribution and
whose conditional N(beta + K (x - alpha), eps S^-1) is the feedback policy.
Precisions are stored rather than covariances.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

SYMMETRY_TOL = 1e-10


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def check_spd(M, name="matrix"):
    """Return ``M`` symmetrized if it is SPD, raise :class:`ParameterError` otherwise."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ParameterError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > SYMMETRY_TOL * scale:
        raise ParameterError(f"{name} is not symmetric")
    M = symmetrize(M)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ParameterError(f"{name} is not positive definite") from None
    return M


def is_spd(M):
    try:
        check_spd(M)
    except ParameterError:
        return False
    return True


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _as_vector(v, name):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1:
        raise ParameterError(f"{name} must be a vector, got shape {v.shape}")
    return v


@dataclass(frozen=True, eq=False)
class GaussianJointStep:
    """Per-stage variational parameters (alpha, beta, K, S, P) at temperature epsilon."""

    alpha: np.ndarray
    beta: np.ndarray
    gainK: np.ndarray
    precS: np.ndarray
    precP: np.ndarray
    epsilon: float

    def __post_init__(self):
        alpha = _as_vector(self.alpha, "alpha")
        beta = _as_vector(self.beta, "beta")
        d, m = alpha.size, beta.size
        gainK = np.asarray(self.gainK, dtype=float)
        if gainK.size != m * d:
            raise ParameterError(f"gainK must be {m}x{d}, got shape {gainK.shape}")
        gainK = gainK.reshape(m, d)
        precS = check_spd(self.precS, "precS")
        precP = check_spd(self.precP, "precP")
        if precS.shape != (m, m) or precP.shape != (d, d):
            raise ParameterError("precision shapes do not match alpha/beta")
        eps = float(self.epsilon)
        if not eps > 0.0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "alpha", _frozen(alpha))
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "gainK", _frozen(gainK))
        object.__setattr__(self, "precS", _frozen(precS))
        object.__setattr__(self, "precP", _frozen(precP))
        object.__setattr__(self, "epsilon", eps)

    @property
    def dim_state(self):
        return self.alpha.size

    @property
    def dim_control(self):
        return self.beta.size

    @property
    def mean(self):
        return np.concatenate([self.alpha, self.beta])

    @property
    def state_covariance(self):
        return self.epsilon * np.linalg.inv(self.precP)

    def replace(self, **changes):
        fields = dict(alpha=self.alpha, beta=self.beta, gainK=self.gainK,
                      precS=self.precS, precP=self.precP, epsilon=self.epsilon)
        fields.update(changes)
        return GaussianJointStep(**fields)


@dataclass(frozen=True, eq=False)
class TerminalValue:
    """Terminal value distribution N(alphaK, eps * precPK^-1)."""

    alphaK: np.ndarray
    precPK: np.ndarray

    def __post_init__(self):
        alpha = _as_vector(self.alphaK, "alphaK")
        P = check_spd(self.precPK, "precPK")
        if P.shape != (alpha.size, alpha.size):
            raise ParameterError("precPK shape does not match alphaK")
        object.__setattr__(self, "alphaK", _frozen(alpha))
        object.__setattr__(self, "precPK", _frozen(P))

    # uniform accessors shared with GaussianJointStep
    @property
    def alpha(self):
        return self.alphaK

    @property
    def precP(self):
        return self.precPK


def joint_covariance(step):
    """Covariance of q(x, u): eps * [[P^-1, P^-1 K^T], [K P^-1, K P^-1 K^T + S^-1]]."""
    Pinv = np.linalg.inv(step.precP)
    Sinv = np.linalg.inv(step.precS)
    K = step.gainK
    top = np.hstack([Pinv, Pinv @ K.T])
    bottom = np.hstack([K @ Pinv, K @ Pinv @ K.T + Sinv])
    return symmetrize(step.epsilon * np.vstack([top, bottom]))


def joint_precision(step):
    """Inverse of :func:`joint_covariance` in closed form."""
    P, S, K = step.precP, step.precS, step.gainK
    top = np.hstack([P + K.T @ S @ K, -K.T @ S])
    bottom = np.hstack([-S @ K, S])
    return symmetrize(np.vstack([top, bottom]) / step.epsilon)


def conditional_policy_params(step, x):
    """Mean and covariance of the policy q(u | x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != step.alpha.shape:
        raise ParameterError(f"state has shape {x.shape}, expected {step.alpha.shape}")
    mean = step.beta + step.gainK @ (x - step.alpha)
    cov = step.epsilon * np.linalg.inv(step.precS)
    return mean, symmetrize(cov)


def value_quadratic(step, x):
    """Quadratic cost-to-go 0.5 (x - alpha)^T P (x - alpha); ``step`` may be terminal."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r = x - step.alpha
    return 0.5 * float(r @ step.precP @ r)
