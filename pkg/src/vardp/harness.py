"""Experiment configuration, presets and CSV output.

Configurations are flat ``key = value`` text files; ``config.echo`` written by
:func:`run_experiment` loads back into an identical :class:`ExperimentConfig`.
"""
import argparse
import csv
import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import exact_dp
from .errors import DivergenceError, ParameterError, VardpError
from .models import ControlAffineModel, QuadraticCost, linear_model
from .riccati import SolverOptions, lqr_schedule, variational_backward
from .simulator import PendulumParams, pendulum_linear_model, pendulum_model, rollout, summarize

MODELS = ("pendulum", "linear", "custom-scalar")


def fmt(x):
    return format(float(x), ".17g")


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    model: str = "pendulum"
    # pendulum / time grid
    gravity: float = 9.8
    mass: float = 1.0
    length: float = 1.0
    damping: float = 1.0
    noise: float = 0.02
    dt: float = 0.01
    horizon: int = 1000
    theta0: float = math.pi / 6
    thetadot0: float = 0.0
    # custom-scalar: x' = a x + b u (drift 'linear') or a sin x + b u (drift 'sin'), variance c
    scalar_drift: str = "linear"
    scalar_a: float = 1.0
    scalar_b: float = 1.0
    scalar_c: float = 0.05
    # costs: each scale multiplies dt * identity
    q_scale: float = 0.01
    r_scale: float = 0.01
    pK_scale: float = 1.0
    epsilon: float = 0.02 ** 2
    # solver
    inner_iterations: int = 10
    fixed_point_tolerance: float = 1e-9
    hessian_mode: str = "full"
    jacobian_mode: str = "analytic"
    fallback_gauss_newton: bool = False
    # simulation
    policy_mode: str = "mean"
    integrator: str = "semi_implicit"
    n_runs: int = 1
    base_seed: int = 0
    baseline_lqr: bool = True
    out_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ParameterError(f"model must be one of {MODELS}")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if self.n_runs < 1:
            raise ParameterError("n_runs must be >= 1")
        if self.scalar_drift not in ("linear", "sin"):
            raise ParameterError("scalar_drift must be 'linear' or 'sin'")
        if self.policy_mode not in ("mean", "sample"):
            raise ParameterError("policy_mode must be 'mean' or 'sample'")
        if self.integrator not in ("explicit", "semi_implicit"):
            raise ParameterError("integrator must be 'explicit' or 'semi_implicit'")
        self.solver_options  # validates the solver fields
        if self.model == "custom-scalar" and self.integrator != "explicit":
            raise ParameterError("custom-scalar supports only the explicit integrator")

    @property
    def pendulum_params(self):
        return PendulumParams(self.gravity, self.mass, self.length, self.damping, self.noise,
                              self.dt, self.horizon)

    @property
    def solver_options(self):
        return SolverOptions(self.inner_iterations, self.fixed_point_tolerance, self.hessian_mode,
                             self.jacobian_mode, self.fallback_gauss_newton)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        return "".join(f"{f.name} = {_encode(getattr(self, f.name))}\n" for f in fields(self))


def _encode(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _decode(text, kind):
    text = text.strip()
    if kind is bool or kind == "bool":
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ParameterError(f"not a boolean: {text!r}")
        return text.lower() in ("true", "1", "yes")
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    return text


def parse_config_text(text, base=None):
    """Apply ``key = value`` lines (``#`` comments allowed) on top of ``base``."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        values[key] = _decode(value, types[key])
    base = base or ExperimentConfig()
    return base.replace(**values)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)


def presets():
    xp1 = ExperimentConfig(preset="xp1", noise=0.02, q_scale=0.01, r_scale=0.01, pK_scale=1.0,
                           policy_mode="mean", n_runs=1)
    cfgs = {
        "xp1_eps002": xp1.replace(preset="xp1_eps002", epsilon=0.02 ** 2),
        "xp1_eps007": xp1.replace(preset="xp1_eps007", epsilon=0.07 ** 2),
        "xp1_eps010": xp1.replace(preset="xp1_eps010", epsilon=0.10 ** 2),
        "xp2": xp1.replace(preset="xp2", noise=0.2, pK_scale=1000.0, epsilon=0.10 ** 2,
                           policy_mode="sample", n_runs=30),
        "linear_check": xp1.replace(preset="linear_check", model="linear"),
        "oracle_check": ExperimentConfig(
            preset="oracle_check", model="custom-scalar", dt=1.0, horizon=1, theta0=1.0,
            q_scale=1.0, r_scale=1.0, pK_scale=1.0, epsilon=0.5, integrator="explicit"),
    }
    return cfgs


PRESET_ALIASES = {"xp1": "xp1_eps002", "linear-check": "linear_check",
                  "oracle-check": "oracle_check"}


def get_preset(name):
    table = presets()
    key = PRESET_ALIASES.get(name, name).replace("-", "_")
    if key not in table:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(table)}")
    return table[key]


def build_problem(config):
    """(model, cost, x0) for a configuration."""
    c = config
    if c.model == "custom-scalar":
        a, b = c.scalar_a, c.scalar_b
        if c.scalar_drift == "linear":
            model = linear_model([[a]], [[b]], [[c.scalar_c]], name="scalar-linear")
        else:
            model = ControlAffineModel(
                1, 1, drift=lambda x: a * np.sin(x), jacobian=lambda x: a * np.cos(x),
                hessian=lambda x: -a * np.sin(x), inputB=[[b]], noiseC=[[c.scalar_c]],
                is_odd=True, name="scalar-sin")
        x0 = np.array([c.theta0])
    else:
        params = c.pendulum_params
        model = pendulum_model(params) if c.model == "pendulum" else pendulum_linear_model(params)
        x0 = np.array([c.theta0, c.thetadot0])
    d, m = model.dim_state, model.dim_control
    cost = QuadraticCost(c.dt * c.q_scale * np.eye(d), c.dt * c.r_scale * np.eye(m),
                         c.dt * c.pK_scale * np.eye(d), c.horizon)
    return model, cost, x0


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_schedule(path, schedule):
    first = schedule.steps[0]
    d, m = first.dim_state, first.dim_control
    header = (["k"] + [f"alpha_{i}" for i in range(d)] + [f"beta_{j}" for j in range(m)]
              + [f"K_{j}_{i}" for j in range(m) for i in range(d)]
              + [f"P_{i}{i}" for i in range(d)] + [f"S_{j}{j}" for j in range(m)])
    rows = []
    for k, s in enumerate(schedule.steps):
        vals = [*s.alpha, *s.beta, *s.gainK.ravel(), *np.diag(s.precP), *np.diag(s.precS)]
        rows.append([k] + [fmt(v) for v in vals])
    _write_csv(path, header, rows)


def write_rollout(path, record, dt, angle=True):
    K = len(record.controls)
    if angle:
        header = ["t", "theta_deg", "theta_dot", "u", "stage_cost", "cost_to_go"]
    else:
        header = ["t", "x", "u", "stage_cost", "cost_to_go"]
    rows = []
    for k in range(K + 1):
        x = record.states[k]
        state = [fmt(np.degrees(x[0])), fmt(x[1])] if angle else [fmt(x[0])]
        ctrl = [fmt(record.controls[k, 0]), fmt(record.stage_costs[k])] if k < K else ["", ""]
        rows.append([fmt(k * dt)] + state + ctrl + [fmt(record.cost_to_go[k])])
    _write_csv(path, header, rows)


def write_summary(path, summary, dt):
    K = len(summary.u_mean)
    header = ["t", "theta_mean", "theta_std", "u_mean", "u_std", "ctg_mean", "ctg_std"]
    rows = []
    for k in range(K + 1):
        u = [fmt(summary.u_mean[k]), fmt(summary.u_std[k])] if k < K else ["", ""]
        rows.append([fmt(k * dt), fmt(summary.theta_mean[k]), fmt(summary.theta_std[k])] + u
                    + [fmt(summary.ctg_mean[k]), fmt(summary.ctg_std[k])])
    _write_csv(path, header, rows)


def write_totals(path, summary):
    rows = [[int(s), fmt(c), 0] for s, c in zip(summary.seeds, summary.total_costs)]
    rows += [[int(s), "", 1] for s in summary.diverged]
    _write_csv(path, ["seed", "total_cost", "diverged"], rows)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    files: list = field(default_factory=list)
    schedule: object = None
    baseline: object = None
    summary: object = None
    baseline_summary: object = None


def _simulate(model, schedule, x0, config, out, prefix, angle):
    records, diverged = [], []
    for seed in range(config.base_seed, config.base_seed + config.n_runs):
        try:
            rec = rollout(model, schedule, x0, config.policy_mode, config.integrator, seed)
        except DivergenceError:
            diverged.append(seed)
            continue
        records.append(rec)
    files = []
    for rec in records:
        path = os.path.join(out, f"{prefix}rollout_{rec.seed}.csv")
        write_rollout(path, rec, config.dt, angle)
        files.append(path)
    if not records:
        raise DivergenceError(f"all {config.n_runs} runs diverged")
    summary = summarize(records, diverged, degrees=angle)
    path = os.path.join(out, prefix + "summary.csv")
    write_summary(path, summary, config.dt)
    files.append(path)
    path = os.path.join(out, prefix + "totals.csv")
    write_totals(path, summary)
    files.append(path)
    return summary, files


def run_experiment(config):
    """Solve, simulate and write the artifact set into ``config.out_dir``."""
    config.validate()
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    model, cost, x0 = build_problem(config)
    angle = config.model != "custom-scalar"
    result = ExperimentResult(config)

    schedule = variational_backward(model, cost, config.epsilon, config.solver_options)
    result.schedule = schedule
    path = os.path.join(out, "schedule.csv")
    write_schedule(path, schedule)
    result.files.append(path)
    result.summary, files = _simulate(model, schedule, x0, config, out, "", angle)
    result.files += files

    if config.baseline_lqr:
        A = model.jac(np.zeros(model.dim_state))
        base = lqr_schedule(A, model.B_at(0), cost, config.epsilon)
        result.baseline = base
        path = os.path.join(out, "lqr_schedule.csv")
        write_schedule(path, base)
        result.files.append(path)
        result.baseline_summary, files = _simulate(model, base, x0, config, out, "lqr_", angle)
        result.files += files

    if config.model == "custom-scalar" and config.horizon == 1:
        result.files += _oracle_outputs(model, cost, schedule, config, out)

    path = os.path.join(out, "config.echo")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config.to_text())
    result.files.append(path)
    return result


def _oracle_outputs(model, cost, schedule, config, out):
    """Exact grid DP for a single scalar stage next to the Gaussian solution."""
    eps = config.epsilon
    P0 = float(schedule.steps[0].precP[0, 0])
    std = math.sqrt(eps / P0)
    pgrid = exact_dp.Grid1D.centered(0.0, 16 * std, 2001)
    xgrid = exact_dp.Grid1D.centered(0.0, 8 * std, 2001)
    S0 = float(schedule.steps[0].precS[0, 0])
    K0 = float(schedule.steps[0].gainK[0, 0])
    ugrid = exact_dp.Grid1D.centered(0.0, abs(K0) * 8 * std + 8 * math.sqrt(eps / S0), 2001)
    terminal = exact_dp.TabulatedValue.from_quadratic(
        pgrid, float(cost.reference[1][0]), float(cost.terminalP[0, 0]), eps)
    value, policy = exact_dp.exact_backward_step(model, cost, terminal, eps, ugrid, xgrid=xgrid)
    files = [os.path.join(out, n) for n in ("exact_value.csv", "exact_policy.csv",
                                            "oracle_compare.csv")]
    exact_dp.write_value_table(files[0], value)
    exact_dp.write_policy_slices(files[1], policy, [-2 * std, 0.0, 2 * std])
    xs = xgrid.nodes
    gauss = 0.5 * P0 * xs ** 2
    rows = [[fmt(x), fmt(v), fmt(g), fmt(mu), fmt(var)]
            for x, v, g, mu, var in zip(xs, value.value_offset(0.0), gauss, policy.row_mean(),
                                        policy.row_variance())]
    _write_csv(files[2], ["x", "V_exact_minus_V0", "V_gauss", "policy_mean", "policy_var"], rows)
    return files


def build_arg_parser():
    p = argparse.ArgumentParser(
        prog="vardp", description="Run entropy-regularized control experiments.")
    p.add_argument("--preset", default="xp1_eps002",
                   help="one of: " + ", ".join(sorted(presets())))
    p.add_argument("--config", help="key = value file applied on top of the preset")
    p.add_argument("--epsilon-sqrt", type=float, help="sqrt of the temperature")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--runs", type=int, help="number of rollouts")
    p.add_argument("--out", help="output directory")
    p.add_argument("--mode", choices=("mean", "sample"), help="policy mode")
    p.add_argument("--inner-iters", type=int, help="fixed-point sweeps per stage")
    return p


def config_from_args(args):
    cfg = get_preset(args.preset)
    if args.config:
        cfg = load_config(args.config, cfg)
    changes = {}
    if args.epsilon_sqrt is not None:
        changes["epsilon"] = args.epsilon_sqrt ** 2
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.runs is not None:
        changes["n_runs"] = args.runs
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.mode is not None:
        changes["policy_mode"] = args.mode
    if args.inner_iters is not None:
        changes["inner_iterations"] = args.inner_iters
    return cfg.replace(**changes)


def main(argv=None):
    args = build_arg_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        result = run_experiment(cfg)
    except (VardpError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"vardp: error: {msg}", file=sys.stderr)
        return 1
    print(f"wrote {len(result.files)} files to {cfg.out_dir}")
    return 0
