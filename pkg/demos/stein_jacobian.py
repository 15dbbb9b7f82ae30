"""Two ways to estimate the expected Jacobian of the dynamics.

The analytic estimate averages the model Jacobian over the cubature points.
The derivative-free estimate uses Stein's identity, E[J] = E[f(x)(x - m)^T] S^-1,
on the same points.  Both are exact for linear dynamics.  For sin(x) the exact
answer is exp(-var / 2), and the derivative-free estimate falls behind as the
variance grows because it only sees two points per dimension.
"""
import numpy as np

from vardp import ControlAffineModel, expect_jacobian

model = ControlAffineModel(1, 1, drift=np.sin, jacobian=lambda x: np.cos(x),
                           inputB=[[1.0]], noiseC=[[1.0]])

print(f"{'var':>6} {'exact':>8} {'analytic':>9} {'stein':>8} {'rel err':>8}")
for var in (0.01, 0.05, 0.1, 0.25, 0.5, 1.0):
    exact = np.exp(-var / 2)
    a = expect_jacobian(model, [0.0], [[var]], "analytic")[0, 0]
    s = expect_jacobian(model, [0.0], [[var]], "stein")[0, 0]
    print(f"{var:6.2f} {exact:8.4f} {a:9.4f} {s:8.4f} {abs(s - exact) / exact:8.2%}")
