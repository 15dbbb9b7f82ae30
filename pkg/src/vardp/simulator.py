"""Forward simulation: pendulum model, rollouts and Monte-Carlo ensembles."""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CapabilityError, DivergenceError, ParameterError
from .gauss import conditional_policy_params
from .models import ControlAffineModel

# position-noise variance floor so that C passes SPD validation
NOISE_FLOOR = 1e-12


@dataclass(frozen=True)
class PendulumParams:
    """Inverted pendulum, theta measured from the upright (unstable) position."""

    gravity: float = 9.8
    mass: float = 1.0
    length: float = 1.0
    damping: float = 1.0
    noise: float = 0.02
    dt: float = 0.01
    horizon: int = 1000

    def __post_init__(self):
        for name, value in asdict(self).items():
            # damping and noise may be switched off
            ok = value >= 0 if name in ("damping", "noise") else value > 0
            if not ok:
                raise ParameterError(f"{name} out of range: {value}")

    @property
    def lam(self):
        return self.damping / self.mass

    @property
    def omega2(self):
        return self.gravity / self.length

    @property
    def input_gain(self):
        return 1.0 / (self.mass * self.length ** 2)

    def linearized_A(self):
        dt = self.dt
        return np.array([[1.0, dt], [dt * self.omega2, 1.0 - dt * self.lam]])

    def energy(self, x):
        """Mechanical energy per unit m l^2: 0.5 thetadot^2 + omega^2 cos(theta)."""
        x = np.asarray(x, dtype=float)
        return 0.5 * x[..., 1] ** 2 + self.omega2 * np.cos(x[..., 0])


def pendulum_model(params):
    p = params
    dt, lam, w2 = p.dt, p.lam, p.omega2

    def drift(x):
        th, om = x
        return np.array([th + dt * om, om + dt * (-lam * om + w2 * np.sin(th))])

    def jacobian(x):
        return np.array([[1.0, dt], [dt * w2 * np.cos(x[0]), 1.0 - dt * lam]])

    def hessian(x):
        H = np.zeros((2, 2, 2))
        H[1, 0, 0] = -dt * w2 * np.sin(x[0])
        return H

    def semi_implicit(x, u, noise):
        th, om = x
        om_new = om + dt * (w2 * np.sin(th) - lam * om) + dt * p.input_gain * u[0] + noise[1]
        return np.array([th + dt * om_new, om_new])

    B = np.array([[0.0], [dt * p.input_gain]])
    C = np.diag([NOISE_FLOOR, max(dt * p.noise, NOISE_FLOOR)])
    G = np.array([[0.0], [np.sqrt(dt * p.noise)]])
    return ControlAffineModel(2, 1, drift, B, C, jacobian=jacobian, hessian=hessian,
                              is_odd=True, noise_factor=G, semi_implicit=semi_implicit,
                              name="pendulum")


def pendulum_linear_model(params):
    """The pendulum linearized at the upright equilibrium, same B and noise."""
    base = pendulum_model(params)
    A = params.linearized_A()
    dt, lam, w2, gain = params.dt, params.lam, params.omega2, params.input_gain

    def semi_implicit(x, u, noise):
        th, om = x
        om_new = om + dt * (w2 * th - lam * om) + dt * gain * u[0] + noise[1]
        return np.array([th + dt * om_new, om_new])

    return ControlAffineModel(
        2, 1, drift=lambda x: A @ x, inputB=base.inputB, noiseC=base.noiseC,
        jacobian=lambda x: A, hessian=lambda x: np.zeros((2, 2, 2)), is_odd=True,
        noise_factor=base.noise_factor, semi_implicit=semi_implicit, name="pendulum-linearized")


def make_rng(seed):
    """Counter-based stream, one per run."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class RolloutRecord:
    states: np.ndarray  # (K+1, d)
    controls: np.ndarray  # (K, m)
    stage_costs: np.ndarray  # (K,)
    cost_to_go: np.ndarray  # (K+1,)
    seed: int
    terminal_cost: float = 0.0

    @property
    def total_cost(self):
        return float(self.stage_costs.sum() + self.terminal_cost)

    @property
    def theta_deg(self):
        return np.degrees(self.states[:, 0])


def rollout(model, schedule, x0, policy_mode="mean", integrator="explicit", seed=0, cost=None,
            noise=True):
    """Simulate one trajectory under ``schedule``.

    ``policy_mode`` is ``mean`` (u = beta + K (x - alpha)) or ``sample`` (u drawn
    from the Gaussian policy).  ``integrator`` is ``explicit`` (apply f) or
    ``semi_implicit`` (model-provided symplectic step).  Process noise is
    ``model.noise_factor @ w``; pass ``noise=False`` for a noise-free run.
    """
    if policy_mode not in ("mean", "sample"):
        raise ParameterError(f"unknown policy_mode {policy_mode!r}")
    if integrator not in ("explicit", "semi_implicit"):
        raise ParameterError(f"unknown integrator {integrator!r}")
    if integrator == "semi_implicit" and model.semi_implicit is None:
        raise CapabilityError("model provides no semi-implicit step")
    cost = cost if cost is not None else schedule.cost
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x.shape != (model.dim_state,) or not np.all(np.isfinite(x)):
        raise ParameterError("x0 must be a finite state vector")
    if cost is not None and cost.horizon != schedule.horizon:
        raise ParameterError("cost horizon does not match the schedule")

    K, d, m = schedule.horizon, model.dim_state, model.dim_control
    rng = make_rng(seed)
    G = model.noise_factor
    states = np.empty((K + 1, d))
    controls = np.empty((K, m))
    stage_costs = np.zeros(K)
    ctg = np.empty(K + 1)
    states[0] = x
    # overflow is reported below as a divergence
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            step = schedule.steps[k]
            mean, cov = conditional_policy_params(step, x)
            if policy_mode == "sample":
                u = mean + np.linalg.cholesky(cov) @ rng.standard_normal(m)
            else:
                u = mean
            w = G @ rng.standard_normal(G.shape[1]) if noise else np.zeros(d)
            ctg[k] = schedule.value_at(k, x)
            if cost is not None:
                stage_costs[k] = cost.stage_cost(k, x, u)
            if integrator == "explicit":
                x = model.f(x) + model.B_at(k) @ u + w
            else:
                x = np.asarray(model.semi_implicit(x, u, w), dtype=float)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"state became non-finite at step {k + 1}",
                                      step=k + 1, seed=seed)
            controls[k] = u
            states[k + 1] = x
    ctg[K] = schedule.value_at(K, x)
    terminal_cost = cost.terminal_cost(x) if cost is not None else 0.0
    return RolloutRecord(states, controls, stage_costs, ctg, int(seed), terminal_cost)


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    seeds: np.ndarray  # seeds of the runs kept
    theta_mean: np.ndarray  # first state component, degrees by default, (K+1,)
    theta_std: np.ndarray
    u_mean: np.ndarray  # first control component, (K,)
    u_std: np.ndarray
    ctg_mean: np.ndarray  # (K+1,)
    ctg_std: np.ndarray
    total_costs: np.ndarray  # per kept run
    diverged: tuple  # seeds of runs that blew up
    records: tuple

    @property
    def n_diverged(self):
        return len(self.diverged)


def monte_carlo(model, schedule, x0, n_runs, policy_mode="sample", integrator="semi_implicit",
                base_seed=0, cost=None):
    """Run ``n_runs`` rollouts with seeds base_seed .. base_seed + n_runs - 1."""
    if n_runs < 2:
        raise ParameterError("n_runs must be >= 2")
    records, diverged = [], []
    for seed in range(base_seed, base_seed + n_runs):
        try:
            records.append(rollout(model, schedule, x0, policy_mode, integrator, seed, cost))
        except DivergenceError:
            diverged.append(seed)
    if not records:
        raise DivergenceError("every run diverged")
    return summarize(records, diverged)


def summarize(records, diverged=(), degrees=True):
    """Per-time ensemble statistics over rollouts (population std).

    The first state component is reported in degrees unless ``degrees`` is False.
    """
    theta = np.stack([r.theta_deg if degrees else r.states[:, 0] for r in records])
    u = np.stack([r.controls[:, 0] for r in records])
    ctg = np.stack([r.cost_to_go for r in records])
    return EnsembleSummary(
        seeds=np.array([r.seed for r in records]),
        theta_mean=theta.mean(axis=0), theta_std=theta.std(axis=0),
        u_mean=u.mean(axis=0), u_std=u.std(axis=0),
        ctg_mean=ctg.mean(axis=0), ctg_std=ctg.std(axis=0),
        total_costs=np.array([r.total_cost for r in records]),
        diverged=tuple(diverged), records=tuple(records),
    )
