"""Batch experiment runner.

Configs are flat JSON objects; command-line flags override file values.
Every run writes ``manifest.json`` into the output directory before any
other artifact. Exit codes: 0 ok, 2 invalid config, 3 solver failure,
4 I/O failure.

Recognised config keys
    command, kind, output_dir, seed, initial, amplitude, mode, network,
    n_points, lengths, dt, t_end, scheme, snapshot_every, audit_every,
    write_fields, eps_list, T, prepared, jobs, norm, approx_order,
    project_correction, volume, plus every field of :class:`Params`.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels, energetics, grid_ops, multiscale
from .grid_ops import Grid, format_number
from .models import ModelKind, ModelSpec, build_rhs, homogeneous_steady_state
from .params import Params
from .reaction_net import ParseError, conserved_moieties, parse_network
from .solver import SolverError, StepperConfig, integrate, write_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("simulate", "equilibria", "energy-audit", "convergence", "slow-manifold", "parse")
PRESETS = ("equilibrium", "extinct", "equilibrium-perturbed", "random")
PARAM_KEYS = tuple(f.name for f in dataclasses.fields(Params))
RUN_KEYS = (
    "command", "kind", "output_dir", "seed", "initial", "amplitude", "mode", "network",
    "n_points", "lengths", "dt", "t_end", "scheme", "snapshot_every", "audit_every",
    "write_fields", "eps_list", "T", "prepared", "jobs", "norm", "approx_order",
    "project_correction", "volume",
)
GSPT_COMMANDS = ("convergence", "slow-manifold")

DEFAULTS = {
    "kind": "ClosedSix",
    "output_dir": "envara-out",
    "seed": 0,
    "initial": "random",
    "amplitude": 0.1,
    "mode": 1,
    "n_points": 64,
    "dt": 1e-3,
    "t_end": 1.0,
    "scheme": "imex-euler",
    "write_fields": True,
    "prepared": True,
    "jobs": 1,
    "norm": "H1",
    "approx_order": 0,
    "project_correction": False,
    "volume": 1.0,
}
GSPT_DEFAULTS = {
    "n_points": 256,
    "eps_list": [1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
    "T": 1.0,
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config assembly
# --------------------------------------------------------------------------

def resolve(config):
    """Fill defaults; GSPT commands start from the reference sweep parameters."""
    cfg = dict(DEFAULTS)
    if config.get("command") in GSPT_COMMANDS:
        cfg.update(GSPT_DEFAULTS)
    cfg.update({k: v for k, v in config.items() if v is not None})
    return cfg


def make_params(cfg):
    values = {k: cfg[k] for k in PARAM_KEYS if k in cfg}
    if cfg.get("command") in GSPT_COMMANDS:
        return multiscale.default_gspt_params(**values)
    return Params(**values)


def make_grid(cfg):
    return Grid(cfg["n_points"], cfg.get("lengths"))


def _writable(path):
    path = Path(path).absolute()
    while not path.exists():
        if path.parent == path:
            return False
        path = path.parent
    return path.is_dir() and os.access(path, os.W_OK | os.X_OK)


def _is_preset(name):
    return name in PRESETS


def validate(config):
    """Violations that would stop :func:`run`; an empty list means it can start."""
    out = []
    cfg = resolve(config)
    unknown = sorted(set(cfg) - set(RUN_KEYS) - set(PARAM_KEYS))
    if unknown:
        out.append(f"unknown config key(s): {', '.join(unknown)}")
    command = cfg.get("command")
    if command not in COMMANDS:
        out.append(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
        return out
    if cfg["kind"] not in ModelKind.__members__:
        out.append(f"unknown model kind {cfg['kind']!r}")

    try:
        p = make_params(cfg)
    except (TypeError, ValueError) as exc:
        out.append(f"invalid parameters: {exc}")
        p = None
    try:
        make_grid(cfg)
    except (TypeError, ValueError) as exc:
        out.append(f"invalid grid: {exc}")

    if command in ("simulate", "energy-audit"):
        try:
            StepperConfig(cfg["dt"], cfg["t_end"], cfg["scheme"], cfg.get("snapshot_every") or 1,
                          audit_every=cfg.get("audit_every"))
        except (TypeError, ValueError) as exc:
            out.append(f"invalid stepper: {exc}")
        init = cfg["initial"]
        if not _is_preset(init) and not Path(init).is_file():
            out.append(f"initial data {init!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
        if command == "energy-audit" and cfg["kind"] != "ClosedSix":
            out.append("energy-audit requires kind ClosedSix")

    if command == "parse":
        net = cfg.get("network")
        if not net:
            out.append("parse requires a network file")
        elif not Path(net).is_file():
            out.append(f"network file {net!r} does not exist")

    gspt = command in GSPT_COMMANDS or (command == "simulate" and cfg["kind"] == "SlowFlow")
    if p is not None and gspt:
        if not p.p2 < p.mst:
            out.append(f"spectral gap condition requires p2 < m_s_tilde, got p2={p.p2:g} "
                       f"m_s_tilde={p.mst:g}")
        eps_values = cfg.get("eps_list") or [p.eps]
        try:
            eps_values = [float(e) for e in eps_values]
        except (TypeError, ValueError):
            out.append(f"eps_list must be numeric, got {eps_values!r}")
            eps_values = []
        if eps_values:
            worst = max(eps_values)
            if not worst / p.zeta_value < 1:
                out.append(f"time-scale separation requires eps/zeta < 1, got "
                           f"{worst:g}/{p.zeta_value:g}")
        if command in GSPT_COMMANDS:
            if len(eps_values) < 3:
                out.append("eps_list needs at least 3 values to fit a slope")
            if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
                out.append("eps_list must be strictly decreasing")
            if any(not e > 0 for e in eps_values):
                out.append("eps values must be positive")
            if command == "convergence" and not cfg["T"] > 0:
                out.append("T must be positive")
    if command == "simulate" and cfg["kind"] == "HollingIIFastSlow" and p is not None and not p.eps > 0:
        out.append("HollingIIFastSlow requires eps > 0")
    if cfg["norm"] not in ("L2", "H1", "Linf"):
        out.append(f"unknown norm {cfg['norm']!r}")
    if not int(cfg["jobs"]) >= 1:
        out.append("jobs must be >= 1")
    if not _writable(cfg["output_dir"]):
        out.append(f"output directory {cfg['output_dir']!r} is not writable")
    return out


# --------------------------------------------------------------------------
# initial data
# --------------------------------------------------------------------------

def _broadcast(values, grid):
    values = np.asarray(values, dtype=float)
    return np.broadcast_to(values.reshape((-1,) + (1,) * grid.dim), (values.size,) + grid.shape).copy()


def _homogeneous_state(model, cfg, extinct):
    p = model.params
    if model.closed:
        M0 = p.M0
        fn = energetics.equilibrium_extinct if extinct else energetics.equilibrium_conserved
        return fn(p, M0, model.grid.volume).cbar
    fixed = tuple(n for n in model.species if n not in ("W", "A")) if extinct else ()
    return homogeneous_steady_state(model, np.ones(len(model.species)), fixed_zero=fixed)


def _load_state(path, model):
    path = Path(path)
    if path.suffix == ".npy":
        c = np.load(path)
    else:
        c = np.loadtxt(path, delimiter=",", ndmin=2)
    c = np.asarray(c, dtype=float).reshape((len(model.species),) + model.grid.shape)
    return c


def initial_state(model, cfg):
    """Stacked initial data for ``model`` from a preset name or a file.

    ``random`` draws ``U(0.5, 1.5)`` factors from ``numpy.random.default_rng(seed)``
    (PCG64) and, for closed models, rescales the total mass to ``M0``.
    """
    grid = model.grid
    name = cfg["initial"]
    if name == "equilibrium":
        return _broadcast(_homogeneous_state(model, cfg, False), grid)
    if name == "extinct":
        return _broadcast(_homogeneous_state(model, cfg, True), grid)
    if name == "equilibrium-perturbed":
        base = _broadcast(_homogeneous_state(model, cfg, False), grid)
        shape = np.ones(grid.shape)
        for x, L in zip(grid.mesh(), grid.lengths):
            shape = shape * np.cos(int(cfg["mode"]) * math.pi * x / L)
        return base * (1.0 + float(cfg["amplitude"]) * shape)
    if name == "random":
        rng = np.random.default_rng(int(cfg["seed"]))
        c = rng.uniform(0.5, 1.5, size=(len(model.species),) + grid.shape)
        if model.closed:
            c *= model.params.M0 / energetics.total_mass(c, grid)
        return c
    return _load_state(name, model)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _versions():
    import numba
    import scipy

    from . import __version__

    return {"envara_rds": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "kernel_backend": _kernels.BACKEND}


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _num(x):
    return None if x is None else float(x)


def _model(cfg):
    return build_rhs(ModelSpec(ModelKind(cfg["kind"]), make_params(cfg), make_grid(cfg),
                               approx_order=int(cfg["approx_order"]),
                               project_correction=bool(cfg["project_correction"])))


def _stepper(cfg, audit_every=None):
    n_steps = max(1, int(round(cfg["t_end"] / cfg["dt"])))
    snap = cfg.get("snapshot_every") or max(1, n_steps // 10)
    return StepperConfig(cfg["dt"], cfg["t_end"], cfg["scheme"], snap,
                         audit_every=audit_every or cfg.get("audit_every"))


def cmd_simulate(cfg, out):
    model = _model(cfg)
    c0 = initial_state(model, cfg)
    eq = None
    if model.closed:
        eq = energetics.equilibrium_conserved(model.params, model.params.M0, model.grid.volume)
    traj = integrate(model, c0, _stepper(cfg), eq=eq)
    write_trajectory(traj, out, model.grid, fields=bool(cfg["write_fields"]))
    masses = [a.mass for a in traj.audits]
    summary = {
        "kind": model.kind.value,
        "species": list(model.species),
        "t_final": traj.final.time,
        "steady_state_time": _num(traj.steady_state_time),
        "min_concentration": min(a.min_concentration for a in traj.audits),
        "mass_initial": masses[0],
        "mass_final": masses[-1],
        "final_mean": [float(v) for v in grid_ops.integrate(traj.final.values, model.grid) / model.grid.volume],
    }
    _dump(out / "summary.json", summary)
    for name, v in zip(model.species, summary["final_mean"]):
        print(f"{name} {format_number(v)}")
    return EXIT_OK


def cmd_equilibria(cfg, out):
    p = make_params(cfg)
    vol = float(cfg["volume"])
    cons = energetics.equilibrium_conserved(p, p.M0, vol)
    ext = energetics.equilibrium_extinct(p, p.M0, vol)
    res = energetics.detailed_balance_residuals(p, cons)
    _dump(out / "equilibria.json", {
        "species": list(cons.species),
        "conserved": [float(v) for v in cons.cbar],
        "extinct": [float(v) for v in ext.cbar],
        "balance_residuals": [float(v) for v in res],
        "M0": p.M0,
        "volume": vol,
    })
    for v in cons.cbar:
        print(format_number(v))
    return EXIT_OK


def cmd_energy_audit(cfg, out):
    model = _model(cfg)
    c0 = initial_state(model, cfg)
    eq = energetics.equilibrium_conserved(model.params, model.params.M0, model.grid.volume)
    traj = integrate(model, c0, _stepper(cfg, audit_every=1), eq=eq)
    write_trajectory(traj, out, model.grid, fields=bool(cfg["write_fields"]))
    a = traj.audits
    F = np.array([x.free_energy for x in a])
    D = np.array([x.diss_diffusion + x.diss_reaction for x in a])
    t = np.array([x.t for x in a])
    mass = np.array([x.mass for x in a])
    incr = np.diff(F)
    resid = incr / np.diff(t) + D[:-1]
    report = {
        "steps": len(a) - 1,
        "F_initial": float(F[0]),
        "F_final": float(F[-1]),
        "max_F_increase": float(np.nanmax(incr)) if incr.size else 0.0,
        "F_monotone": bool(np.all(incr <= 1e-10)),
        "max_energy_residual": float(np.nanmax(np.abs(resid))) if resid.size else 0.0,
        "relative_mass_drift": float(np.max(np.abs(mass - mass[0])) / mass[0]),
    }
    _dump(out / "energy.json", report)
    for k in ("F_monotone", "max_F_increase", "max_energy_residual", "relative_mass_drift"):
        v = report[k]
        print(f"{k} {v if isinstance(v, bool) else format_number(v)}")
    return EXIT_OK if report["F_monotone"] else EXIT_SOLVER


def cmd_convergence(cfg, out):
    p = make_params(cfg)
    grid = make_grid(cfg)
    initial = multiscale.default_initial_data(grid, seed=int(cfg["seed"]))
    rep = multiscale.convergence_study([float(e) for e in cfg["eps_list"]], float(cfg["T"]), grid, p,
                                       prepared=bool(cfg["prepared"]), initial=initial,
                                       jobs=int(cfg["jobs"]), norm=cfg["norm"])
    rep.write(out)
    print(rep.to_json())
    return EXIT_OK


def cmd_slow_manifold(cfg, out):
    p = make_params(cfg)
    grid = make_grid(cfg)
    state = (multiscale.smooth_field(grid, 1.0, 0.3, (1, 2)), multiscale.smooth_field(grid, 1.5, 0.2, (1,)))
    eps = [float(e) for e in cfg["eps_list"]]
    sweep = multiscale.defect_sweep(eps, state, p, grid)
    report = {"eps": eps, "norm": "H1"}
    for order, res in sweep.items():
        report[f"order{order}"] = {"defects": [float(d) for d in res["defects"]], "slope": float(res["slope"])}
    _dump(out / "slow_manifold.json", report)
    with open(out / "slow_manifold.csv", "w") as fh:
        fh.write("eps,defect_order0,defect_order1\n")
        for i, e in enumerate(eps):
            fh.write(",".join(format_number(v) for v in (e, sweep[0]["defects"][i], sweep[1]["defects"][i])) + "\n")
    for order in sweep:
        print(f"order{order}_slope {format_number(sweep[order]['slope'])}")
    return EXIT_OK


def cmd_parse(cfg, out):
    net = parse_network(Path(cfg["network"]).read_text())
    moieties = conserved_moieties(net)
    _dump(out / "network.json", {
        "species": list(net.names),
        "sigma": net.sigma.tolist(),
        "k_forward": net.k_forward.tolist(),
        "k_backward": net.k_backward.tolist(),
        "conserved_moieties": [[str(v) for v in m] for m in moieties],
    })
    print("species: " + " ".join(net.names))
    print("sigma:")
    for row in net.sigma:
        print("  " + " ".join(f"{int(v):3d}" for v in row))
    for m in moieties:
        print("conserved: " + " ".join(str(v) for v in m))
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "energy-audit": cmd_energy_audit,
    "convergence": cmd_convergence,
    "slow-manifold": cmd_slow_manifold,
    "parse": cmd_parse,
}


def _fail(code, status, message):
    print(json.dumps({"status": status, "reason": message}), file=sys.stderr)
    return code


def run(config):
    """Validate, write the manifest, dispatch. Returns the process exit code."""
    problems = validate(config)
    if problems:
        return _fail(EXIT_CONFIG, "config-invalid", "; ".join(problems))
    cfg = resolve(config)
    out = Path(cfg["output_dir"])
    manifest = {"config": cfg, "versions": _versions(), "wall_time_seconds": None, "status": "running"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        _dump(out / "manifest.json", manifest)
    except OSError as exc:
        return _fail(EXIT_IO, "io-failure", str(exc))

    start = time.perf_counter()
    try:
        code = HANDLERS[cfg["command"]](cfg, out)
        status = "ok" if code == EXIT_OK else "failed"
    except (SolverError, RuntimeError, FloatingPointError) as exc:
        code, status = _fail(EXIT_SOLVER, "solver-failure", str(exc)), "solver-failure"
    except OSError as exc:
        code, status = _fail(EXIT_IO, "io-failure", str(exc)), "io-failure"
    except (ParseError, ValueError) as exc:
        code, status = _fail(EXIT_CONFIG, "config-invalid", str(exc)), "config-invalid"
    manifest.update(wall_time_seconds=time.perf_counter() - start, status=status)
    try:
        _dump(out / "manifest.json", manifest)
    except OSError as exc:
        return _fail(EXIT_IO, "io-failure", str(exc))
    return code


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _eps_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _points(text):
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    return vals[0] if len(vals) == 1 else vals


def _assignment(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key.strip(), json.loads(value)
    except json.JSONDecodeError:
        return key.strip(), value


def build_parser():
    parser = argparse.ArgumentParser(prog="envara-rds", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--kind", choices=list(ModelKind.__members__))
    common.add_argument("--all-rates", dest="all_rates", type=float,
                        help="set every forward and backward rate of the closed network")
    common.add_argument("--M0", type=float)
    common.add_argument("--eps", type=_eps_list, help="single eps or comma-separated eps list")
    common.add_argument("--prepared", action=argparse.BooleanOptionalAction, default=None)
    common.add_argument("--n-points", dest="n_points", type=_points)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-end", dest="t_end", type=float)
    common.add_argument("--T", type=float)
    common.add_argument("--scheme", choices=["imex-euler", "strang"])
    common.add_argument("--initial", help=f"preset ({', '.join(PRESETS)}) or .npy/.csv path")
    common.add_argument("--set", dest="assignments", action="append", type=_assignment, default=[],
                        metavar="KEY=VALUE", help="override any config key (JSON-typed value)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "parse":
            sp.add_argument("network", help="reaction network file")
    return parser


_RATE_NAMES = ("p1", "p2", "m_s", "m_h", "m_w", "r", "eps1", "eps2", "eps3", "eps4")


def config_from_args(args):
    config = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {args.config!r} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config!r} is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        config.update(loaded)
    config["command"] = args.command
    if args.all_rates is not None:
        config.update({n: args.all_rates for n in _RATE_NAMES})
    if args.eps is not None:
        if args.command in GSPT_COMMANDS:
            config["eps_list"] = args.eps
        elif len(args.eps) == 1:
            config["eps"] = args.eps[0]
        else:
            raise ConfigError(f"{args.command} takes a single eps value")
    for key in ("output_dir", "seed", "jobs", "kind", "M0", "prepared", "n_points", "dt", "t_end", "T",
                "scheme", "initial"):
        val = getattr(args, key)
        if val is not None:
            config[key] = val
    if args.command == "parse":
        config["network"] = args.network
    for key, val in args.assignments:
        config[key] = val
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config-invalid", str(exc))
    return run(config)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
