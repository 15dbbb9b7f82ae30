"""Variational dynamic programming for entropy-regularized stochastic control."""
from .errors import (CapabilityError, DivergenceError, GridCoverageError, ParameterError,
                     SPDError, VardpError)
from .gauss import (GaussianJointStep, TerminalValue, conditional_policy_params,
                    joint_covariance, joint_precision, value_quadratic)
from .models import ControlAffineModel, QuadraticCost, linear_model
from .quadrature import (CubatureRule, cubature_points, expect, expect_hessian_contraction,
                         expect_jacobian, integrate)
from .riccati import (PolicySchedule, SolverOptions, initialize_step_epsilon_zero, lqr_backward,
                      lqr_schedule, variational_backward, variational_backward_step)
from .simulator import (EnsembleSummary, PendulumParams, RolloutRecord, monte_carlo,
                        pendulum_linear_model, pendulum_model, rollout)

__version__ = "0.1.0"
