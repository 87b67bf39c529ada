import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envara_rds import grid_ops
from envara_rds.grid_ops import Grid
from envara_rds.models import (ModelKind, ModelSpec, build_rhs, critical_manifold_h0, holling_response,
                               homogeneous_steady_state)
from envara_rds.params import Params

G = Grid.line(33)
RNG = np.random.default_rng(7)
GSPT = Params(p1_tilde=1.3, m_s_tilde=0.9, p2=0.6, m_h=0.3, m_w=0.4, a0=0.7, d_vs=2.0, d_vh=0.5,
              d_w=1.5, eps=0.02)


def model(kind, params=GSPT, grid=G, **kw):
    return build_rhs(ModelSpec(kind, params, grid, **kw))


def positive(n_species, grid=G, lo=0.2, hi=2.0):
    return RNG.uniform(lo, hi, (n_species,) + grid.shape)


def test_every_kind_builds_and_evaluates():
    for kind in ModelKind:
        m = model(kind)
        c = positive(len(m.species))
        if kind is ModelKind.SlowFlow:
            split = grid_ops.build_split(GSPT.zeta_value, GSPT.mst, G)
            c = np.stack([grid_ops.project(f, split, "slow") for f in c])
        out = m.rhs(c)
        assert out.shape == c.shape and np.all(np.isfinite(out))


def test_closed_rhs_conserves_mass():
    m = model(ModelKind.ClosedSix, Params(p1=2.0, m_s=0.3, eps3=1.7))
    c = positive(6)
    assert abs(grid_ops.integrate(m.rhs(c).sum(axis=0), G)) < 1e-12


def test_reduced_three_matches_rescaled_open_limit():
    p = Params(p1=1.2, p2=0.8, m_s=0.5, m_h=0.7, m_w=0.3, r=0.9, a0=1.4, eps1=0, eps2=0, eps3=0, eps4=0)
    open_ = model(ModelKind.RescaledOpen, p)
    red = model(ModelKind.ReducedThree, p)
    c = positive(6)
    c[5] = p.a0
    np.testing.assert_allclose(red.rhs(c[:3]), open_.rhs(c)[:3], rtol=1e-13, atol=1e-13)


def test_rescaled_open_environment_prefactors():
    p = Params(eps5=0.1, eps6=0.2, eps7=0.3, m_s=0.5, eps1=0.4)
    m = model(ModelKind.RescaledOpen, p)
    assert np.all(m.diffusion[3:] == 0)
    c = positive(6)
    expected = 0.1 * (p.m_s * c[0] - p.eps1 * c[3])
    np.testing.assert_allclose(m.rhs(c)[3], expected, rtol=1e-13)


def test_holling_i_is_fast_switching_limit_of_closed_system():
    big = 1e12
    p = Params(p1=1.1, p2=big, m_s=0.6, m_h=0.8, m_w=0.5, r=0.7, a0=1.3, eps1=0, eps2=0, eps3=0.4,
               eps4=1.0, d_vs=0.9, d_vh=0.9, d_w=1.2)
    closed = model(ModelKind.ClosedSix, p)
    holling = model(ModelKind.HollingI, p)
    v, w = positive(2)
    vs = v * big / (big + p.eps4)
    vh = v - vs  # prepared: Vh <-> Vs in balance
    c = np.stack([vs, vh, w, np.zeros_like(v), np.zeros_like(v), np.full_like(v, p.a0)])
    r = closed.rhs(c)
    h = holling.rhs(np.stack([v, w]))
    np.testing.assert_allclose(h[0], r[0] + r[1], rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(h[1], r[2], rtol=1e-8, atol=1e-8)


def test_klausmeier_nonlinearity():
    p = Params(p1=1.7, m_w=0.2, r=0.5)
    m = model(ModelKind.Klausmeier, p)
    v, w = positive(2)
    diff = m.rhs(np.stack([v, w]))[0] - m.rhs(np.stack([v, np.zeros_like(w)]))[0]
    np.testing.assert_allclose(diff, p.p1 * w * v * v, rtol=1e-12, atol=1e-13)


def test_holling_ii_reduced_at_zero_water():
    m = model(ModelKind.HollingIIReduced)
    vh = positive(1)[0]
    out = m.reaction(np.stack([vh, np.zeros_like(vh)]))
    np.testing.assert_allclose(out[0], -(GSPT.m_h + GSPT.p2) * vh, rtol=1e-14)


def test_holling_responses():
    p = Params(p1_tilde=1.0, p2=2.0, m_s_tilde=1.0, p1=3.0)
    assert holling_response("II", 1.0, p) == pytest.approx(1.0)
    assert holling_response("I", 0.0, p) == 0.0 and holling_response("III", 0.0, p) == 0.0
    assert holling_response("I", 2.0, p) == pytest.approx(6.0)
    w = RNG.uniform(0, 5, 50)
    np.testing.assert_allclose(holling_response("III", w, p, k=1), holling_response("II", w, p), rtol=1e-15)
    assert abs(holling_response("II", 1e9, GSPT) - GSPT.p2) < 1e-6
    with pytest.raises(ValueError):
        holling_response("II", -1.0, p)
    with pytest.raises(ValueError):
        holling_response("IV", 1.0, p)


def test_critical_manifold():
    p = Params(p2=2.0, p1_tilde=1.0, m_s_tilde=1.0)
    assert critical_manifold_h0(3.0, 1.0, p) == pytest.approx(3.0)
    assert np.all(critical_manifold_h0(np.zeros(4), np.ones(4), p) == 0)
    vh, w = positive(2)
    h = critical_manifold_h0(vh, w, GSPT)
    assert np.max(np.abs(-GSPT.p1t * w * h - GSPT.mst * h + GSPT.p2 * vh)) < 1e-12
    with pytest.raises(ValueError):
        critical_manifold_h0(1.0, 0.0, Params(p1_tilde=1.0, m_s_tilde=0.0))
    with pytest.raises(ValueError):
        critical_manifold_h0(-1.0, 1.0, p)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 0.5))
def test_fast_slow_reduces_on_critical_manifold(seed, eps):
    rng = np.random.default_rng(seed)
    p = GSPT.replace(eps=eps)
    vh, w = rng.uniform(0.0, 3.0, (2,) + G.shape)
    h = critical_manifold_h0(vh, w, p)
    full = model(ModelKind.HollingIIFastSlow, p).rhs(np.stack([h, vh, w]))
    red = model(ModelKind.HollingIIReduced, p).rhs(np.stack([vh, w]))
    np.testing.assert_allclose(full[1:], red, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("k", [2, 3])
def test_holling_iii_from_modified_uptake(k):
    p = GSPT.replace(k=k)
    vh, w = positive(2)
    out = model(ModelKind.HollingIII, p).reaction(np.stack([vh, w]))
    h = p.p2 * vh / (p.p1t * w**k + p.mst)
    np.testing.assert_allclose(out[0], (k + 1) * p.p1t * w**k * h - (p.m_h + p.p2) * vh, rtol=1e-12)
    np.testing.assert_allclose(out[1], -k * p.p1t * w**k * h - p.m_w * w + p.a0, rtol=1e-12)
    # uptake on the manifold is the type III response per unit of Vh
    np.testing.assert_allclose(p.p1t * w**k * h, vh * holling_response("III", w, p), rtol=1e-12)


def test_kind_specific_errors():
    with pytest.raises(ValueError, match="k >= 2"):
        model(ModelKind.HollingIII, GSPT.replace(k=1))
    with pytest.raises(ValueError, match="eps > 0"):
        model(ModelKind.HollingIIFastSlow, GSPT.replace(eps=0.0))
    with pytest.raises(ValueError):
        ModelSpec("Lotka", GSPT, G)


def test_slow_flow_with_everything_slow_equals_reduced():
    p = GSPT.replace(eps=0.0, zeta=1e-6)
    split = grid_ops.build_split(1e-6, p.mst, G)
    assert split.slow_mask.all()
    flow = model(ModelKind.SlowFlow, p, split=split)
    red = model(ModelKind.HollingIIReduced, p)
    c = positive(2)
    np.testing.assert_allclose(flow.rhs(c), red.rhs(c), rtol=1e-11, atol=1e-12)


def test_homogeneous_steady_state_of_reduced_model():
    m = model(ModelKind.HollingIIReduced)
    ss = homogeneous_steady_state(m, [1.0, 1.0])
    assert np.max(np.abs(m.reaction(ss[:, None] * np.ones((2, 3))))) < 1e-12
    ext = homogeneous_steady_state(m, [1.0, 1.0], fixed_zero=("Vh",))
    assert ext[0] == 0 and ext[1] == pytest.approx(GSPT.a0 / GSPT.m_w)


def test_default_merged_death_rate_is_fast_species_rate():
    p = Params(m_s=0.25, m_h=4.0, p1=1.0)
    m = model(ModelKind.HollingI, p)
    v = positive(1)[0]
    out = m.reaction(np.stack([v, np.zeros_like(v)]))
    np.testing.assert_allclose(out[0], -p.m_s * v, rtol=1e-14)
    m2 = model(ModelKind.HollingI, p.replace(m_v=1.5))
    np.testing.assert_allclose(m2.reaction(np.stack([v, np.zeros_like(v)]))[0], -1.5 * v, rtol=1e-14)
