"""Control-affine dynamics and quadratic costs."""
import numpy as np

from .errors import CapabilityError, ParameterError
from .gauss import check_spd

ODDNESS_TOL = 1e-10


class ControlAffineModel:
    """Discrete dynamics x' = f(x) + B u + nu with nu ~ N(0, C).

    ``jacobian(x)`` returns df/dx (d x d, rows are components of f) and
    ``hessian(x)`` the d x d x d tensor indexed [component j, mu, nu]; both are
    optional.  ``inputB`` may be a (d, m) matrix or a (K, d, m) stack for a
    time-varying input matrix.  ``noise_factor`` (d x r) generates the forward
    simulation noise as G w; it defaults to the Cholesky factor of ``noiseC``.
    ``semi_implicit`` optionally supplies a symplectic step ``(x, u, noise) -> x'``.
    """

    def __init__(self, dim_state, dim_control, drift, inputB, noiseC, jacobian=None,
                 hessian=None, is_odd=False, noise_factor=None, semi_implicit=None,
                 name="custom", oddness_seed=0):
        self.dim_state = int(dim_state)
        self.dim_control = int(dim_control)
        self.drift = drift
        self.jacobian = jacobian
        self.hessian = hessian
        self.is_odd = bool(is_odd)
        self.semi_implicit = semi_implicit
        self.name = name
        d, m = self.dim_state, self.dim_control

        B = np.asarray(inputB, dtype=float)
        if B.ndim == 1 and B.size == d * m:
            B = B.reshape(d, m)
        if B.shape[-2:] != (d, m) or B.ndim not in (2, 3):
            raise ParameterError(f"inputB must be ({d}, {m}) or (K, {d}, {m}), got {B.shape}")
        self.inputB = B
        self.noiseC = check_spd(noiseC, "noiseC")
        if self.noiseC.shape != (d, d):
            raise ParameterError("noiseC shape does not match the state dimension")
        if noise_factor is None:
            noise_factor = np.linalg.cholesky(self.noiseC)
        self.noise_factor = np.atleast_2d(np.asarray(noise_factor, dtype=float))
        if self.noise_factor.shape[0] != d:
            raise ParameterError("noise_factor must have d rows")

        if self.is_odd:
            rng = np.random.default_rng(oddness_seed)
            for x in rng.normal(scale=2.0, size=(100, d)):
                fp, fm = self.f(x), self.f(-x)
                if np.max(np.abs(fp + fm)) > ODDNESS_TOL * max(1.0, np.max(np.abs(fp))):
                    raise ParameterError("model flagged is_odd but f(-x) != -f(x)")

    def f(self, x):
        fx = self.drift(np.asarray(x, dtype=float))
        return np.asarray(fx, dtype=float).reshape(self.dim_state)

    def jac(self, x):
        if self.jacobian is None:
            raise CapabilityError("model has no analytic Jacobian")
        return np.asarray(self.jacobian(np.asarray(x, dtype=float)), dtype=float).reshape(
            self.dim_state, self.dim_state)

    def hess(self, x):
        if self.hessian is None:
            raise CapabilityError("model has no Hessian; use hessian_mode='gauss_newton'")
        d = self.dim_state
        return np.asarray(self.hessian(np.asarray(x, dtype=float)), dtype=float).reshape(d, d, d)

    @property
    def has_jacobian(self):
        return self.jacobian is not None

    @property
    def has_hessian(self):
        return self.hessian is not None

    def B_at(self, k):
        return self.inputB if self.inputB.ndim == 2 else self.inputB[k]

    def __repr__(self):
        return f"ControlAffineModel({self.name!r}, d={self.dim_state}, m={self.dim_control})"


def linear_model(A, B, C=None, name="linear"):
    """Model with f(x) = A x; odd by construction."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    d = A.shape[0]
    B = B.reshape(d, -1) if B.ndim < 2 else B
    m = B.shape[-1]
    if C is None:
        C = np.eye(d)
    return ControlAffineModel(
        d, m,
        drift=lambda x: A @ x,
        jacobian=lambda x: A,
        hessian=lambda x: np.zeros((d, d, d)),
        inputB=B, noiseC=C, is_odd=True, name=name,
    )


class QuadraticCost:
    """Stage cost 0.5 (x - x*_k)^T Q (x - x*_k) + 0.5 u^T R u.

    The terminal cost is 0.5 (x - x*_K)^T P_K (x - x*_K).

    ``Q`` and ``R`` may be single matrices or (K, ., .) stacks.  ``reference``
    holds x*_k for k = 0..K (shape (K+1, d)); a (K, d) array is read as
    k = 1..K with x*_0 taken equal to x*_1.  ``None`` means a zero reference.
    """

    def __init__(self, Q, R, terminalP, horizon, reference=None):
        self.horizon = int(horizon)
        if self.horizon < 1:
            raise ParameterError("horizon must be at least 1")
        self.Q = self._stack_spd(Q, "Q")
        self.R = self._stack_spd(R, "R")
        self.terminalP = check_spd(terminalP, "terminalP")
        d = self.terminalP.shape[0]
        if self.Q.shape[-1] != d:
            raise ParameterError("Q and terminalP dimensions differ")
        K = self.horizon
        if reference is None:
            ref = np.zeros((K + 1, d))
        else:
            ref = np.asarray(reference, dtype=float).reshape(-1, d)
            if ref.shape[0] == K:
                ref = np.vstack([ref[:1], ref])
            elif ref.shape[0] != K + 1:
                raise ParameterError(f"reference must have K or K+1 rows, got {ref.shape[0]}")
        self.reference = ref

    def _stack_spd(self, M, name):
        M = np.asarray(M, dtype=float)
        if M.ndim == 3:
            if M.shape[0] != self.horizon:
                raise ParameterError(f"time-varying {name} must have K={self.horizon} slices")
            return np.stack([check_spd(Mk, f"{name}[{k}]") for k, Mk in enumerate(M)])
        return check_spd(M, name)

    @property
    def dim_state(self):
        return self.terminalP.shape[0]

    @property
    def dim_control(self):
        return self.R.shape[-1]

    def Q_at(self, k):
        return self.Q if self.Q.ndim == 2 else self.Q[k]

    def R_at(self, k):
        return self.R if self.R.ndim == 2 else self.R[k]

    def stage_cost(self, k, x, u):
        dx = np.asarray(x, dtype=float) - self.reference[k]
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return 0.5 * float(dx @ self.Q_at(k) @ dx) + 0.5 * float(u @ self.R_at(k) @ u)

    def terminal_cost(self, x):
        dx = np.asarray(x, dtype=float) - self.reference[self.horizon]
        return 0.5 * float(dx @ self.terminalP @ dx)

    @property
    def is_centered(self):
        return not np.any(self.reference)
