import os
import subprocess
import sys

import numpy as np
import pytest

from envara_rds import _kernels
from envara_rds.models import closed_network
from envara_rds.params import Params

nb = _kernels.numba_kernels
npk = _kernels.numpy_kernels
needs_numba = pytest.mark.skipif(nb is None, reason="numba backend disabled")


@pytest.fixture
def inputs():
    rng = np.random.default_rng(3)
    net = closed_network(Params(p1=1.3, p2=0.7, eps3=0.9, m_h=2.0))
    c = rng.uniform(0.1, 2.0, (6, 37))
    return net, c


@needs_numba
def test_laplacians_agree():
    rng = np.random.default_rng(0)
    f1 = rng.random((3, 21))
    f2 = rng.random((2, 9, 14))
    np.testing.assert_allclose(nb.laplacian_1d(f1, 0.1), npk.laplacian_1d(f1, 0.1), rtol=1e-13)
    np.testing.assert_allclose(nb.laplacian_2d(f2, 0.1, 0.3), npk.laplacian_2d(f2, 0.1, 0.3), rtol=1e-12,
                               atol=1e-12)


@needs_numba
def test_mass_action_agrees(inputs):
    net, c = inputs
    args = (net.reactant_orders, net.product_orders, net.k_forward, net.k_backward)
    for a, b in zip(nb.mass_action_fluxes(c, *args), npk.mass_action_fluxes(c, *args)):
        np.testing.assert_allclose(a, b, rtol=1e-14)
    np.testing.assert_allclose(nb.mass_action_source(c, *args, net.sigma),
                               npk.mass_action_source(c, *args, net.sigma), rtol=1e-13, atol=1e-14)
    fwd, bwd = npk.mass_action_fluxes(c, *args)
    np.testing.assert_allclose(nb.stoich_source(fwd, bwd, net.sigma), npk.stoich_source(fwd, bwd, net.sigma),
                               rtol=1e-13, atol=1e-14)


def test_higher_orders():
    c = np.array([[2.0, 3.0], [0.5, 1.0]])
    nu_f = np.array([[3, 1]])
    nu_b = np.array([[0, 4]])
    for k in filter(None, (nb, npk)):
        fwd, bwd = k.mass_action_fluxes(c, nu_f, nu_b, np.array([2.0]), np.array([1.0]))
        np.testing.assert_allclose(fwd[0], 2.0 * c[0] ** 3 * c[1])
        np.testing.assert_allclose(bwd[0], c[1] ** 4)


@pytest.mark.parametrize("kernels", [pytest.param(nb, marks=needs_numba), npk], ids=["numba", "numpy"])
def test_implicit_solve_matches_dense(kernels):
    n = 12
    rng = np.random.default_rng(5)
    rhs = rng.random((3, n))
    r = np.array([0.0, 0.4, 7.0])
    L = np.column_stack([npk.laplacian_1d(e[None], 1.0)[0] for e in np.eye(n)])
    out = kernels.neumann_implicit_1d(rhs, r)
    for a in range(3):
        np.testing.assert_allclose((np.eye(n) - r[a] * L) @ out[a], rhs[a], atol=1e-12)


def test_env_flag_selects_numpy():
    code = "from envara_rds import _kernels as k; print(k.BACKEND, k.numba_kernels is None)"
    env = dict(os.environ, ENVARA_RDS_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]
