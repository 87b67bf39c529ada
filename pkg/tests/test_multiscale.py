import json

import numpy as np
import pytest

from envara_rds import grid_ops
from envara_rds import multiscale as ms
from envara_rds.grid_ops import Grid, build_split, project
from envara_rds.models import ModelKind, ModelSpec, build_rhs, critical_manifold_h0
from envara_rds.params import Params

G = Grid.line(48)
P = ms.default_gspt_params(d_vh=0.3, d_w=0.6)


def slow_state(grid=G):
    return ms.smooth_field(grid, 1.0, 0.3, (1, 2)), ms.smooth_field(grid, 1.5, 0.2, (1,))


def test_prepared_data():
    p = Params(p2=2.0, p1_tilde=1.0, m_s_tilde=1.0)
    assert ms.prepare_initial_data(1.0, 1.0, p) == pytest.approx(1.0)
    assert np.all(ms.prepare_initial_data(np.zeros(5), np.ones(5), p) == 0)
    vh, w = np.random.default_rng(0).random((2, 20))
    assert np.array_equal(ms.prepare_initial_data(vh, w, P), critical_manifold_h0(vh, w, P))


def test_loglog_slope_exact():
    x = np.array([1e-1, 1e-2, 1e-3])
    assert ms.loglog_slope(x, 3 * x**0.5) == pytest.approx(0.5)


def test_rough_field_scaling():
    f = ms.rough_field(G, np.random.default_rng(1), mean=2.0, amplitude=0.25)
    assert np.max(np.abs(f - 2.0)) == pytest.approx(0.5)
    assert np.min(f) > 0


def test_sweep_argument_checks():
    with pytest.raises(ValueError, match="at least 3"):
        ms.convergence_study([1e-2], 0.1, G, P)
    with pytest.raises(ValueError, match="decreasing"):
        ms.convergence_study([1e-3, 1e-2, 1e-4], 0.1, G, P)
    with pytest.raises(ValueError):
        ms.convergence_study([1e-2, 1e-3, 1e-4], 0.0, G, P)


def test_small_sweep_report(tmp_path):
    rep = ms.convergence_study([4e-2, 2e-2, 1e-2], 0.05, G, P)
    assert len(rep.errors) == 3 and all(e > 0 for e in rep.errors)
    assert rep.errors[0] > rep.errors[-1]
    rep.write(tmp_path)
    data = json.loads((tmp_path / "convergence.json").read_text())
    assert set(data) == {"norm", "prepared", "eps", "errors", "fitted_rate", "runtime_seconds"}
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0] == "eps,error" and len(lines) == 4


def test_parallel_sweep_is_deterministic():
    a = ms.convergence_study([4e-2, 2e-2, 1e-2], 0.02, G, P, jobs=1)
    b = ms.convergence_study([4e-2, 2e-2, 1e-2], 0.02, G, P, jobs=2)
    assert a.errors == b.errors


def test_unprepared_sweep_has_larger_errors():
    prep = ms.convergence_study([4e-2, 2e-2, 1e-2], 0.01, G, P, prepared=True)
    unprep = ms.convergence_study([4e-2, 2e-2, 1e-2], 0.01, G, P, prepared=False)
    assert all(u > p for u, p in zip(unprep.errors, prep.errors))


def test_failure_names_eps():
    with pytest.raises(RuntimeError, match="eps=0.04"):
        ms.convergence_study([4e-2, 2e-2, 1e-2], 0.5, G, P, dt=0.25)


def test_report_validation():
    with pytest.raises(ValueError):
        ms.ConvergenceReport([1e-2, 1e-3], [1.0], 0.5)
    with pytest.raises(ValueError):
        ms.ConvergenceReport([1e-3, 1e-2], [1.0, 2.0], 0.5)


def test_fast_attraction_small_grid():
    vh, w = slow_state()
    ratio = ms.fast_attraction(1e-3, G, P, vh, w, np.zeros(G.shape))
    assert ratio >= np.exp(4)


def test_graph_orders_and_errors():
    split = build_split(P.zeta_value, P.mst, G)
    vh, w = slow_state()
    h0 = critical_manifold_h0(vh, w, P)
    approx0 = ms.SlowManifoldApprox(0, split, 0.0)
    assert np.array_equal(ms.slow_manifold_approx(vh, w, P, approx0), h0)
    with pytest.raises(ValueError, match="eps > 0"):
        ms.SlowManifoldApprox(1, split, 0.0)
    with pytest.raises(ValueError):
        ms.SlowManifoldApprox(2, split, 0.01)
    with pytest.raises(ValueError, match="eps/zeta"):
        ms.slow_manifold_approx(vh, w, P, ms.SlowManifoldApprox(0, split, split.zeta))
    with pytest.raises(ValueError):
        ms.slow_manifold_approx(-vh, w, P, approx0)
    approx1 = ms.SlowManifoldApprox(1, split, 1e-3, project_correction=True)
    h1 = ms.slow_manifold_approx(vh, w, P, approx1)
    corr = (h1 - h0) / 1e-3
    assert np.max(np.abs(project(corr, split, "fast"))) < 1e-10


def test_invariance_defect_properties():
    split = build_split(P.zeta_value, P.mst, G)
    vh, w = slow_state()
    graph0 = ms.graph_map(P, ms.SlowManifoldApprox(0, split, 0.0))
    assert ms.invariance_defect(graph0, (vh, w), P, 0.0, G) < 1e-14
    eps = 1e-4
    d = ms.invariance_defect(graph0, (vh, w), P, eps, G)
    assert d >= 0
    # leading term: eps * || Dh0.G - d_vs Lap h0 ||
    h0 = critical_manifold_h0(vh, w, P)
    K = P.p1t * w + P.mst
    G1, G2 = ms._slow_full_rhs(h0, vh, w, P, G)
    dhG = P.p2 / K * G1 - P.p1t * P.p2 * vh / K**2 * G2
    lead = eps * grid_ops.norm(dhG - P.d_vs * grid_ops.laplacian_neumann(h0, G), G, "H1")
    assert d == pytest.approx(lead, rel=1e-5)


def test_defect_sweep_slopes_small_grid():
    out = ms.defect_sweep([1e-2, 3e-3, 1e-3, 3e-4], slow_state(), P, G)
    assert out[0]["slope"] == pytest.approx(1.0, abs=0.1)
    assert out[1]["slope"] >= 1.5


def test_slow_flow_rhs_properties():
    split = build_split(P.zeta_value, P.mst, G)
    approx = ms.SlowManifoldApprox(1, split, 1e-3)
    vh, w = (project(f, split, "slow") for f in slow_state())
    r1, r2 = ms.slow_flow_rhs(vh, w, P, split, approx)
    for r in (r1, r2):
        assert np.max(np.abs(project(r, split, "fast"))) < 1e-10
    const = np.full(G.shape, 0.8), np.full(G.shape, 1.2)
    c1, c2 = ms.slow_flow_rhs(*const, P, split, ms.SlowManifoldApprox(0, split, 0.0))
    h = P.p2 * 0.8 / (P.p1t * 1.2 + P.mst)
    np.testing.assert_allclose(c1, 2 * P.p1t * 1.2 * h - (P.m_h + P.p2) * 0.8, rtol=1e-12)
    np.testing.assert_allclose(c2, -P.p1t * 1.2 * h - P.m_w * 1.2 + P.a0, rtol=1e-12)
    bumped = vh + np.cos((split.k0 + 1) * G.coords[0])
    with pytest.raises(ValueError, match="fast-mode"):
        ms.slow_flow_rhs(bumped, w, P, split, approx)


def test_slow_flow_model_integrates():
    split = build_split(P.zeta_value, P.mst, G)
    m = build_rhs(ModelSpec(ModelKind.SlowFlow, P, G, split=split, approx_order=1))
    from envara_rds.solver import StepperConfig, integrate
    vh, w = (project(f, split, "slow") for f in slow_state())
    traj = integrate(m, np.stack([vh, w]), StepperConfig(1e-2, 0.5, snapshot_every=10))
    final = traj.final.values
    assert np.max(np.abs(project(final[0], split, "fast"))) < 1e-10


@pytest.mark.slow
def test_sweep_error_tracks_sqrt_eps(gspt_sweep):
    ratios = [e / np.sqrt(eps) for e, eps in zip(gspt_sweep.errors, gspt_sweep.eps_values)]
    assert max(ratios) / min(ratios) < 3.0


@pytest.mark.slow
def test_sweep_rate_invariant_under_eps_scaling(gspt_sweep):
    from conftest import SWEEP_EPS
    doubled = ms.convergence_study([2 * e for e in SWEEP_EPS], 1.0, Grid.line(256), ms.default_gspt_params())
    assert abs(doubled.fitted_rate - gspt_sweep.fitted_rate) <= 0.05
