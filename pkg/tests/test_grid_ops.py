import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envara_rds import grid_ops
from envara_rds.grid_ops import Grid, build_split, cutoff_k0, laplacian_neumann, norm, project


def test_grid_defaults_and_validation():
    g = Grid.line(11)
    assert g.lengths == (math.pi,)
    assert g.spacing == pytest.approx((math.pi / 10,))
    with pytest.raises(ValueError):
        Grid.line(2)
    with pytest.raises(ValueError):
        Grid((4, 4, 4))
    with pytest.raises(ValueError):
        Grid.line(5, length=0.0)
    with pytest.raises(ValueError):
        g.check(np.zeros(12))


def test_constant_has_zero_laplacian():
    for g in (Grid.line(17), Grid.rect(9, 13)):
        assert np.max(np.abs(laplacian_neumann(g.constant(3.5), g))) < 1e-10


def test_cos2x_eigenfunction():
    g = Grid.line(257)
    x = g.coords[0]
    err = np.max(np.abs(laplacian_neumann(np.cos(2 * x), g) + 4 * np.cos(2 * x)))
    assert err < 1e-3


def test_2d_eigenfunction():
    g = Grid.rect(129, 129)
    X, Y = g.mesh()
    f = np.cos(X) * np.cos(Y)
    assert np.max(np.abs(laplacian_neumann(f, g) + 2 * f)) < 1e-3


def test_symbol_matches_stencil_exactly():
    g = Grid.rect(9, 12, 2.0, 3.0)
    modes = np.zeros(g.shape)
    modes[3, 5] = 1.0
    f = grid_ops.from_modes(modes, g)
    np.testing.assert_allclose(laplacian_neumann(f, g), g.laplacian_symbol[3, 5] * f, atol=1e-11)


def _assembled(n):
    g = Grid.line(n, length=1.7)
    return g, np.column_stack([laplacian_neumann(e, g) for e in np.eye(n)])


@pytest.mark.parametrize("n", [3, 6, 11])
def test_stencil_is_symmetric_nsd_with_constant_kernel(n):
    g, L = _assembled(n)
    W = np.diag(g.weights)
    S = W @ L
    np.testing.assert_allclose(S, S.T, atol=1e-10)
    eig = np.linalg.eigvalsh(0.5 * (S + S.T))
    assert np.all(eig <= 1e-9)
    assert np.sum(np.abs(eig) < 1e-9) == 1
    np.testing.assert_allclose(L @ np.ones(n), 0, atol=1e-10)


def test_discrete_divergence_theorem():
    rng = np.random.default_rng(1)
    for g in (Grid.line(33), Grid.rect(10, 14)):
        f = rng.random(g.shape)
        assert abs(grid_ops.integrate(laplacian_neumann(f, g), g)) < 1e-10


def test_norm_examples():
    g = Grid.line(201)
    assert norm(g.constant(2.0), g, "L2") == pytest.approx(2 * math.sqrt(math.pi), rel=1e-12)
    for which in ("L2", "H1", "Linf"):
        assert norm(g.constant(0.0), g, which) == 0.0
    assert norm(np.cos(g.coords[0]), g, "H1") == pytest.approx(math.sqrt(math.pi), rel=1e-3)
    with pytest.raises(ValueError):
        norm(g.constant(1.0), g, "H2")


@pytest.mark.parametrize("m, zeta, k0", [(1.0, 0.1, 3), (1.0, 2.0, 0), (1.0, 0.25, 2), (9.0, 1.0, 3)])
def test_cutoff_examples(m, zeta, k0):
    assert cutoff_k0(zeta, m) == k0


def test_cutoff_rejects_nonpositive():
    with pytest.raises(ValueError):
        cutoff_k0(0.0, 1.0)
    with pytest.raises(ValueError):
        build_split(-1.0, 1.0, Grid.line(8))


def test_projection_of_single_modes():
    g = Grid.line(65)
    split = build_split(0.1, 1.0, g)
    x = g.coords[0]
    inband = np.cos(split.k0 * x)
    outband = np.cos((split.k0 + 1) * x)
    np.testing.assert_allclose(project(inband, split, "slow"), inband, atol=1e-12)
    np.testing.assert_allclose(project(outband, split, "slow"), 0, atol=1e-12)
    assert split.slow_modes == [(k,) for k in range(split.k0 + 1)]
    with pytest.raises(ValueError):
        project(inband, split, "medium")


def test_slow_mask_2d_uses_per_axis_wavenumbers():
    g = Grid.rect(16, 16, math.pi, 2 * math.pi)
    split = build_split(0.25, 1.0, g)  # k0 = 2
    assert split.k0 == 2
    assert split.slow_mask.sum() == 3 * 5  # kx in {0,1,2}; ky = j/2 <= 2 for j <= 4


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 40), st.floats(1e-3, 10), st.floats(1e-3, 10), st.integers(0, 2**31))
def test_projector_algebra(n, zeta, m, seed):
    g = Grid.line(n)
    split = build_split(zeta, m, g)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    ps, pf = project(f, split, "slow"), project(f, split, "fast")
    scale = max(1.0, np.max(np.abs(f)))
    assert np.max(np.abs(ps + pf - f)) <= 1e-12 * scale
    assert np.max(np.abs(project(ps, split, "slow") - ps)) <= 1e-12 * scale
    lap = laplacian_neumann
    comm = project(lap(f, g), split, "slow") - lap(ps, g)
    assert np.max(np.abs(comm)) <= 1e-10 * max(1.0, np.max(np.abs(lap(f, g))))


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 1e4), st.floats(1e-4, 1e4))
def test_k0_invariant(m, zeta):
    k0 = cutoff_k0(zeta, m)
    assert k0 ** 2 <= m / zeta < (k0 + 1) ** 2


def test_number_format():
    assert grid_ops.format_number(1) == "1.0"
    assert grid_ops.format_number(0.1) == "0.10000000000000001"
    assert float(grid_ops.format_number(math.pi)) == math.pi


@pytest.mark.parametrize("grid", [Grid.line(7, 2.0), Grid.rect(4, 5, 1.0, 3.0)])
def test_field_io_round_trip(tmp_path, grid):
    f = np.random.default_rng(2).random(grid.shape)
    grid_ops.write_field_csv(tmp_path / "f.csv", f, grid)
    assert np.array_equal(grid_ops.read_field_csv(tmp_path / "f.csv", grid), f)
    grid_ops.write_field_binary(tmp_path / "f.bin", f, grid)
    f2, g2 = grid_ops.read_field_binary(tmp_path / "f.bin")
    assert g2 == grid and np.array_equal(f2, f)
    raw = (tmp_path / "f.bin").read_bytes()
    assert int.from_bytes(raw[:8], "little") == grid.dim


def test_binary_rejects_truncated(tmp_path):
    g = Grid.line(5)
    grid_ops.write_field_binary(tmp_path / "f.bin", np.ones(5), g)
    data = (tmp_path / "f.bin").read_bytes()
    (tmp_path / "g.bin").write_bytes(data[:-8])
    with pytest.raises(ValueError):
        grid_ops.read_field_binary(tmp_path / "g.bin")
