"""Fast-slow Holling II pair: prepared data, eps-sweeps, slow-manifold graphs.

The slow manifold graph is approximated by the asymptotic expansion
``h = h0 + eps * h1`` with

    h1 = (d_vs Lap h0 - Dh0 . G) / (p1_tilde w + m_s_tilde),

where ``G`` is the full slow right-hand side evaluated on ``h0``. Its quality
is certified by the invariance defect, i.e. the residual of the fast equation
restricted to the graph.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import grid_ops
from .grid_ops import laplacian_neumann, project
from .models import (ModelKind, ModelSpec, build_rhs, critical_manifold_h0,
                     fast_reaction, slow_reactions)
from .params import Params
from .solver import StepperConfig, SystemState, integrate


def prepare_initial_data(v_h0, w0, params: Params):
    """Fast initial value on the critical manifold."""
    return critical_manifold_h0(v_h0, w0, params)


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def rough_field(grid, rng, mean=1.0, amplitude=0.4, exponent=2.5):
    """Random cosine series with mode amplitudes ``|k|**-exponent``.

    The result is rescaled so that ``max |f - mean| = amplitude * mean``.
    The default exponent sits at the edge of H2 regularity.
    """
    kk = np.meshgrid(*[np.arange(n, dtype=float) for n in grid.shape], indexing="ij")
    kmag = np.sqrt(sum(k * k for k in kk))
    coef = np.zeros(grid.shape)
    nz = kmag > 0
    coef[nz] = kmag[nz] ** (-exponent) * rng.standard_normal(int(nz.sum()))
    f = grid_ops.from_modes(coef, grid)
    f = f / np.max(np.abs(f))
    return mean * (1.0 + amplitude * f)


def smooth_field(grid, mean=1.0, amplitude=0.3, modes=(1, 2)):
    """Deterministic low-mode cosine field."""
    x = grid.mesh()
    out = np.zeros(grid.shape)
    for j, k in enumerate(modes):
        term = np.ones(grid.shape)
        for axis, xa in enumerate(x):
            term = term * np.cos((k + axis) * math.pi * xa / grid.lengths[axis])
        out += term / (j + 1)
    return mean * (1.0 + amplitude * out / np.max(np.abs(out)))


# --------------------------------------------------------------------------
# eps-sweeps
# --------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    eps_values: list[float]
    errors: list[float]
    fitted_rate: float
    norm: str = "H1"
    prepared: bool = True
    T: float = 1.0
    runtime_seconds: float = 0.0
    component_errors: list[tuple[float, float, float]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.eps_values) != len(self.errors):
            raise ValueError("eps_values and errors differ in length")
        if any(b >= a for a, b in zip(self.eps_values, self.eps_values[1:])):
            raise ValueError("eps_values must be strictly decreasing")

    def to_json(self):
        return json.dumps({
            "norm": self.norm,
            "prepared": self.prepared,
            "eps": [float(e) for e in self.eps_values],
            "errors": [float(e) for e in self.errors],
            "fitted_rate": float(self.fitted_rate),
            "runtime_seconds": float(self.runtime_seconds),
        }, indent=2)

    def write(self, outdir):
        from pathlib import Path

        outdir = Path(outdir)
        (outdir / "convergence.json").write_text(self.to_json() + "\n")
        with open(outdir / "convergence.csv", "w") as fh:
            fh.write("eps,error\n")
            for e, err in zip(self.eps_values, self.errors):
                fh.write(f"{grid_ops.format_number(e)},{grid_ops.format_number(err)}\n")


def default_gspt_params(**changes):
    """Reference parameter set for the Holling II sweeps.

    Rough prepared data only feels the ``eps * d_vs * Lap`` correction at
    wavenumbers near ``sqrt(K / (eps d_vs))``; ``d_vs = 10`` keeps that
    crossover inside a 256-point grid for eps in ``[1e-4, 1e-2]``, and slow
    diffusion is switched off so it does not smooth the data away by ``T``.
    """
    base = dict(p1_tilde=1.0, m_s_tilde=1.0, p2=0.5, m_h=0.2, m_w=0.2, a0=0.5,
                d_vs=10.0, d_vh=0.0, d_w=0.0, eps=1e-2, zeta=0.1)
    base.update(changes)
    return Params(**base)


def default_initial_data(grid, seed=0):
    rng = np.random.default_rng(seed)
    v_h0 = rough_field(grid, rng, mean=1.0, amplitude=0.4)
    w0 = rough_field(grid, rng, mean=1.0, amplitude=0.4)
    return v_h0, w0


def _stable_dt(eps, params, w_max, dt_max=1e-3, safety=0.25):
    K = params.p1t * w_max + params.mst
    return min(dt_max, safety * eps / K)


def run_fast_slow(eps, T, grid, params, vs0, v_h0, w0, dt, scheme="imex-euler"):
    """Integrate the fast-slow pair; returns the final ``(vs, v_h, w)`` stack."""
    p = params.replace(eps=eps)
    model = build_rhs(ModelSpec(ModelKind.HollingIIFastSlow, p, grid))
    cfg = StepperConfig(dt=dt, t_end=T, scheme=scheme, snapshot_every=10**9)
    traj = integrate(model, SystemState(np.stack([vs0, v_h0, w0])), cfg)
    return traj.final.values


def run_reduced(T, grid, params, v_h0, w0, dt, scheme="imex-euler"):
    """Integrate the reduced pair; returns ``(h0, v_h, w)`` at ``T``."""
    model = build_rhs(ModelSpec(ModelKind.HollingIIReduced, params, grid))
    cfg = StepperConfig(dt=dt, t_end=T, scheme=scheme, snapshot_every=10**9)
    vh, w = integrate(model, SystemState(np.stack([v_h0, w0])), cfg).final.values
    return np.stack([critical_manifold_h0(vh, w, params), vh, w])


def _sweep_member(args):
    eps, T, grid, params, vs0, v_h0, w0, dt, scheme = args
    return run_fast_slow(eps, T, grid, params, vs0, v_h0, w0, dt, scheme)


def convergence_study(eps_list, T, grid, params: Params, prepared=True, initial=None,
                      vs0=None, dt=None, scheme="imex-euler", jobs=1, norm="H1"):
    """H1 distance at ``T`` between fast-slow solutions and the reduced solution.

    ``initial`` is ``(v_h0, w0)``; by default a seeded rough field pair.
    Unprepared runs start the fast species at ``vs0`` (default zero).
    ``dt`` defaults to a per-eps stable step; the reduced run uses the
    smallest of them.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("need at least 3 eps values to fit a rate")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be strictly decreasing")
    if not T > 0:
        raise ValueError("T must be positive")
    t_start = time.perf_counter()
    v_h0, w0 = initial if initial is not None else default_initial_data(grid)
    h0 = prepare_initial_data(v_h0, w0, params)
    if prepared:
        vs_init = h0
    else:
        vs_init = np.zeros(grid.shape) if vs0 is None else np.asarray(vs0, dtype=float)
    w_max = max(float(np.max(w0)), params.a0 / params.m_w if params.m_w > 0 else 0.0)
    dts = [dt if dt is not None else _stable_dt(e, params, 1.5 * w_max) for e in eps_list]

    tasks = [(e, T, grid, params, vs_init, v_h0, w0, d, scheme) for e, d in zip(eps_list, dts)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            finals = list(ex.map(_sweep_member, tasks))
    else:
        finals = []
        for task in tasks:
            try:
                finals.append(_sweep_member(task))
            except Exception as exc:
                raise RuntimeError(f"fast-slow run failed at eps={task[0]:g}: {exc}") from exc

    ref = run_reduced(T, grid, params, v_h0, w0, min(dts), scheme)
    errors, parts = [], []
    for fin in finals:
        comp = tuple(grid_ops.norm(fin[i] - ref[i], grid, norm) for i in range(3))
        parts.append(comp)
        errors.append(math.sqrt(sum(c * c for c in comp)))
    return ConvergenceReport(
        eps_values=eps_list, errors=errors, fitted_rate=loglog_slope(eps_list, errors),
        norm=norm, prepared=prepared, T=T, runtime_seconds=time.perf_counter() - t_start,
        component_errors=parts)


def fast_gap(vs, v_h, w, params, grid, norm="L2"):
    """Distance of the fast species from the critical manifold."""
    return grid_ops.norm(vs - critical_manifold_h0(v_h, w, params), grid, norm)


def fast_attraction(eps, grid, params, v_h0, w0, vs0, t_probe=None, dt=None, norm="L2"):
    """Ratio ``gap(0) / gap(t_probe)`` for unprepared fast-slow data (default probe ``5 eps``)."""
    t_probe = 5 * eps if t_probe is None else t_probe
    if dt is None:
        dt = min(t_probe / 50, _stable_dt(eps, params, 1.5 * float(np.max(w0)), safety=0.05))
    vs, vh, w = run_fast_slow(eps, t_probe, grid, params, vs0, v_h0, w0, dt)
    return fast_gap(vs0, v_h0, w0, params, grid, norm) / fast_gap(vs, vh, w, params, grid, norm)


# --------------------------------------------------------------------------
# slow manifold
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SlowManifoldApprox:
    order: int
    split: grid_ops.SpectralSplit
    eps: float
    project_correction: bool = False

    def __post_init__(self):
        if self.order not in (0, 1):
            raise ValueError(f"order must be 0 or 1, got {self.order}")
        if self.order == 1 and not self.eps > 0:
            raise ValueError("a first-order graph needs eps > 0")


def _h0(v_h, w, p):
    return p.p2 * v_h / (p.p1t * w + p.mst)


def _slow_full_rhs(vs, v_h, w, p, grid):
    g1, g2 = slow_reactions(vs, v_h, w, p)
    return (p.d_vh * laplacian_neumann(v_h, grid) + g1,
            p.d_w * laplacian_neumann(w, grid) + g2)


def _first_order_correction(v_h, w, p, grid):
    K = p.p1t * w + p.mst
    h0 = p.p2 * v_h / K
    G1, G2 = _slow_full_rhs(h0, v_h, w, p, grid)
    dh0_G = (p.p2 / K) * G1 - (p.p1t * p.p2 * v_h / K**2) * G2
    return (p.d_vs * laplacian_neumann(h0, grid) - dh0_G) / K


def _graph(v_h, w, p, approx):
    h = _h0(v_h, w, p)
    if approx.order == 1:
        h1 = _first_order_correction(v_h, w, p, approx.split.grid)
        if approx.project_correction:
            h1 = project(h1, approx.split, "slow")
        h = h + approx.eps * h1
    return h


def slow_manifold_approx(v_h, w, params: Params, approx: SlowManifoldApprox):
    """Graph ``h(v_h, w)`` of the approximate slow manifold (order 0 or 1)."""
    zeta = approx.split.zeta
    if approx.eps / zeta >= 1:
        raise ValueError(f"eps/zeta = {approx.eps / zeta:g} >= 1: outside the slow-manifold regime")
    v_h = approx.split.grid.check(v_h)
    w = approx.split.grid.check(w)
    if np.any(v_h < 0) or np.any(w < 0):
        raise ValueError("slow manifold graph requires nonnegative fields")
    critical_manifold_h0(v_h, w, params)  # validates the denominator
    return _graph(v_h, w, params, approx)


def graph_map(params, approx):
    """Callable ``(v_h, w) -> h`` suitable for :func:`invariance_defect`."""
    return lambda v_h, w: _graph(v_h, w, params, approx)


def invariance_defect(graph, state, params: Params, eps, grid, norm="H1", rel_step=1e-6):
    """H1 norm of ``eps Dh.G - eps d_vs Lap h - f(h, v_h, w)`` on the graph.

    ``Dh.G`` is a central directional difference along the slow velocity.
    """
    v_h, w = (grid.check(s) for s in state)
    h = graph(v_h, w)
    G1, G2 = _slow_full_rhs(h, v_h, w, params, grid)
    scale = max(float(np.max(np.abs(v_h))), float(np.max(np.abs(w))), 1e-300)
    gmax = max(float(np.max(np.abs(G1))), float(np.max(np.abs(G2))), 1e-300)
    delta = rel_step * scale / gmax
    dhG = (graph(v_h + delta * G1, w + delta * G2) - graph(v_h - delta * G1, w - delta * G2)) / (2 * delta)
    resid = eps * dhG - eps * params.d_vs * laplacian_neumann(h, grid) - fast_reaction(h, v_h, w, params)
    return grid_ops.norm(resid, grid, norm)


def defect_sweep(eps_list, state, params: Params, grid, split=None, orders=(0, 1)):
    """Invariance defects per order along ``eps_list`` and their log-log slopes."""
    split = split or grid_ops.build_split(params.zeta_value, params.mst, grid)
    out = {}
    for order in orders:
        vals = []
        for e in eps_list:
            approx = SlowManifoldApprox(order, split, e)
            if e / split.zeta >= 1:
                raise ValueError(f"eps={e:g} violates eps/zeta < 1 for zeta={split.zeta:g}")
            vals.append(invariance_defect(graph_map(params, approx), state, params, e, grid))
        out[order] = {"defects": vals, "slope": loglog_slope(eps_list, vals)}
    return out


def _require_slow(f, split, name):
    fast = project(f, split, "fast")
    tol = 1e-10 * max(1.0, float(np.max(np.abs(f))))
    leak = float(np.max(np.abs(fast)))
    if leak > tol:
        raise ValueError(f"{name} has fast-mode content {leak:.3e} > {tol:.1e}")


def slow_flow_reaction(v_h_s, w_s, params: Params, split, approx):
    p = params
    h = _graph(v_h_s, w_s, p, approx)
    coupling = project(w_s * h, split, "slow")
    m_h = p.m_h if p.m_v is None else p.m_v
    return (2.0 * p.p1t * coupling - m_h * v_h_s - p.p2 * v_h_s,
            -p.p1t * coupling - p.m_w * w_s + p.a0)


def slow_flow_rhs(v_h_s, w_s, params: Params, split, approx):
    """Right-hand side of the projected slow flow; inputs must be slow fields."""
    grid = split.grid
    v_h_s = grid.check(v_h_s)
    w_s = grid.check(w_s)
    _require_slow(v_h_s, split, "v_h")
    _require_slow(w_s, split, "w")
    r1, r2 = slow_flow_reaction(v_h_s, w_s, params, split, approx)
    return (params.d_vh * laplacian_neumann(v_h_s, grid) + r1,
            params.d_w * laplacian_neumann(w_s, grid) + r2)
