"""Thirty noisy rollouts that sample controls from the Gaussian policy.

The heavy terminal weight squeezes the ensemble late in the horizon, so the
spread in the middle of the run is much wider than at the end.
"""
import numpy as np

from vardp import monte_carlo, variational_backward
from vardp.harness import build_problem, get_preset

cfg = get_preset("xp2")
model, cost, x0 = build_problem(cfg)
sched = variational_backward(model, cost, cfg.epsilon)
summ = monte_carlo(model, sched, x0, cfg.n_runs, cfg.policy_mode, cfg.integrator,
                   cfg.base_seed, cost=cost)

# %% spread over time
K = cost.horizon
for k in range(0, K + 1, K // 10):
    bar = "#" * int(round(summ.theta_std[k]))
    print(f"t = {k * cfg.dt:5.1f} s  std = {summ.theta_std[k]:5.2f} deg  {bar}")

# %% mid-horizon against the final 5%
thetas = np.stack([r.theta_deg for r in summ.records])
mid = summ.theta_std[K // 4:K // 4 + K // 2 + 1].max()
tail = thetas[:, K + 1 - int(round(0.05 * (K + 1))):].std()
print(f"\nmid-horizon peak std {mid:.2f} deg, final-window std {tail:.2f} deg, "
      f"ratio {mid / tail:.2f}")
print(f"mean |theta(10 s)| = {np.abs(thetas[:, -1]).mean():.2f} deg, "
      f"diverged runs: {summ.n_diverged}")
print(f"total cost: mean {summ.total_costs.mean():.3f}, std {summ.total_costs.std():.3f}")
