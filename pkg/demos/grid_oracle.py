"""The Gaussian recursion against brute-force dynamic programming on a grid.

For a linear scalar system the tabulated soft value function is exactly
quadratic and the tabulated policy is exactly Gaussian, so both solvers
must agree.  On the sine model the Gaussian family is an approximation and
the gap becomes visible.
"""
import numpy as np

from vardp import QuadraticCost, TerminalValue, linear_model, variational_backward_step
from vardp.exact_dp import Grid1D, TabulatedValue, exact_backward_step
from vardp.models import ControlAffineModel

eps = 0.5
cost = QuadraticCost([[1.0]], [[1.0]], [[1.0]], 1)
ugrid = Grid1D(-8, 8, 2001)
xgrid = Grid1D(-2.5, 2.5, 501)
phi = TabulatedValue.from_quadratic(Grid1D(-8, 8, 2001), 0.0, 1.0, eps)

models = {
    "linear": linear_model([[1.0]], [[1.0]], [[0.05]]),
    "sine": ControlAffineModel(1, 1, drift=np.sin, jacobian=lambda x: np.cos(x),
                               hessian=lambda x: -np.sin(x), inputB=[[1.0]],
                               noiseC=[[0.05]], is_odd=True),
}
for name, model in models.items():
    value, policy = exact_backward_step(model, cost, phi, eps, ugrid, xgrid=xgrid)
    step = variational_backward_step(model, cost, TerminalValue([0.0], [[1.0]]), [0.0], eps)
    P, K, S = step.precP[0, 0], step.gainK[0, 0], step.precS[0, 0]
    x = value.grid.nodes
    inner = np.abs(x) <= 2
    verr = np.abs(value.value_offset(0.0) - 0.5 * P * x ** 2)[inner].max()
    merr = np.abs(policy.row_mean() - K * policy.xgrid.nodes).max()
    print(f"{name:>6}: max value gap {verr:.2e}, max policy-mean gap {merr:.2e}, "
          f"grid variance / (eps/S) = {policy.row_variance().mean() / (eps / S):.4f}")
