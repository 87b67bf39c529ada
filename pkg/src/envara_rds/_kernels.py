"""Hot inner loops: Neumann Laplacian stencils and mass-action fluxes.

Every kernel has a numba implementation and a pure-numpy twin with the same
signature. The numba path is used when numba imports cleanly and the
environment variable ``ENVARA_RDS_DISABLE_NUMBA`` is unset (or ``0``).
Both namespaces stay importable so they can be compared directly.
"""

import os
from types import SimpleNamespace

import numpy as np

_FLAG = "ENVARA_RDS_DISABLE_NUMBA"


def _numba_requested():
    return os.environ.get(_FLAG, "").strip().lower() in ("", "0", "false", "no")


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def _np_laplacian_1d(f, h):
    # f: (m, n); ghost reflection f[-1] = f[1], f[n] = f[n-2]
    out = np.empty_like(f)
    inv = 1.0 / (h * h)
    out[:, 1:-1] = (f[:, :-2] - 2.0 * f[:, 1:-1] + f[:, 2:]) * inv
    out[:, 0] = 2.0 * (f[:, 1] - f[:, 0]) * inv
    out[:, -1] = 2.0 * (f[:, -2] - f[:, -1]) * inv
    return out


def _np_laplacian_2d(f, hx, hy):
    # f: (m, nx, ny)
    m, nx, ny = f.shape
    gx = _np_laplacian_1d(f.transpose(0, 2, 1).reshape(m * ny, nx), hx)
    gx = gx.reshape(m, ny, nx).transpose(0, 2, 1)
    gy = _np_laplacian_1d(f.reshape(m * nx, ny), hy).reshape(m, nx, ny)
    return gx + gy


def _np_mass_action_fluxes(c, nu_f, nu_b, kf, kb):
    # c: (S, P); nu_*: (R, S) int; returns forward and backward fluxes (R, P)
    n_r = nu_f.shape[0]
    fwd = np.empty((n_r, c.shape[1]))
    bwd = np.empty((n_r, c.shape[1]))
    for i in range(n_r):
        fwd[i] = kf[i]
        bwd[i] = kb[i]
        for s in np.nonzero(nu_f[i])[0]:
            fwd[i] *= c[s] ** int(nu_f[i, s])
        for s in np.nonzero(nu_b[i])[0]:
            bwd[i] *= c[s] ** int(nu_b[i, s])
    return fwd, bwd


def _np_stoich_source(fwd, bwd, sigma):
    # sigma: (R, S); returns sigma^T (fwd - bwd): (S, P)
    return sigma.T.astype(np.float64) @ (fwd - bwd)


def _np_mass_action_source(c, nu_f, nu_b, kf, kb, sigma):
    fwd, bwd = _np_mass_action_fluxes(c, nu_f, nu_b, kf, kb)
    return _np_stoich_source(fwd, bwd, sigma)


def _np_neumann_implicit_1d(rhs, r):
    """Solve ``(I - r_a L) x_a = rhs_a`` per row, ``L`` the h=1 ghost-reflection stencil.

    The stencil is diagonal in the type-I cosine basis, so the numpy path
    solves it spectrally.
    """
    from scipy import fft as sfft

    n = rhs.shape[1]
    lam = -4.0 * np.sin(0.5 * np.pi * np.arange(n) / (n - 1)) ** 2
    modes = sfft.dct(rhs, type=1, axis=-1)
    return sfft.idct(modes / (1.0 - r[:, None] * lam[None, :]), type=1, axis=-1)


numpy_kernels = SimpleNamespace(
    laplacian_1d=_np_laplacian_1d,
    laplacian_2d=_np_laplacian_2d,
    mass_action_fluxes=_np_mass_action_fluxes,
    stoich_source=_np_stoich_source,
    mass_action_source=_np_mass_action_source,
    neumann_implicit_1d=_np_neumann_implicit_1d,
    backend="numpy",
)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

def _build_numba():
    from numba import njit

    @njit(cache=True)
    def laplacian_1d(f, h):
        m, n = f.shape
        out = np.empty_like(f)
        inv = 1.0 / (h * h)
        for a in range(m):
            out[a, 0] = 2.0 * (f[a, 1] - f[a, 0]) * inv
            for j in range(1, n - 1):
                out[a, j] = (f[a, j - 1] - 2.0 * f[a, j] + f[a, j + 1]) * inv
            out[a, n - 1] = 2.0 * (f[a, n - 2] - f[a, n - 1]) * inv
        return out

    @njit(cache=True)
    def laplacian_2d(f, hx, hy):
        m, nx, ny = f.shape
        out = np.empty_like(f)
        ix = 1.0 / (hx * hx)
        iy = 1.0 / (hy * hy)
        for a in range(m):
            for i in range(nx):
                im = i - 1 if i > 0 else 1
                ip = i + 1 if i < nx - 1 else nx - 2
                for j in range(ny):
                    jm = j - 1 if j > 0 else 1
                    jp = j + 1 if j < ny - 1 else ny - 2
                    c = f[a, i, j]
                    out[a, i, j] = ((f[a, im, j] - 2.0 * c + f[a, ip, j]) * ix
                                    + (f[a, i, jm] - 2.0 * c + f[a, i, jp]) * iy)
        return out

    @njit(cache=True)
    def _power_into(out, x, k):
        # out *= x**k along the point axis
        n_p = x.shape[0]
        if k == 1:
            for p in range(n_p):
                out[p] *= x[p]
        elif k == 2:
            for p in range(n_p):
                out[p] *= x[p] * x[p]
        else:
            for p in range(n_p):
                v = 1.0
                for _ in range(k):
                    v *= x[p]
                out[p] *= v

    @njit(cache=True)
    def mass_action_fluxes(c, nu_f, nu_b, kf, kb):
        n_s, n_p = c.shape
        n_r = nu_f.shape[0]
        fwd = np.empty((n_r, n_p))
        bwd = np.empty((n_r, n_p))
        for i in range(n_r):
            fwd[i, :] = kf[i]
            bwd[i, :] = kb[i]
            for s in range(n_s):
                if nu_f[i, s] > 0:
                    _power_into(fwd[i], c[s], nu_f[i, s])
                if nu_b[i, s] > 0:
                    _power_into(bwd[i], c[s], nu_b[i, s])
        return fwd, bwd

    @njit(cache=True)
    def stoich_source(fwd, bwd, sigma):
        n_r, n_p = fwd.shape
        n_s = sigma.shape[1]
        out = np.zeros((n_s, n_p))
        for i in range(n_r):
            for s in range(n_s):
                g = float(sigma[i, s])
                if g != 0.0:
                    for p in range(n_p):
                        out[s, p] += g * (fwd[i, p] - bwd[i, p])
        return out

    @njit(cache=True)
    def mass_action_source(c, nu_f, nu_b, kf, kb, sigma):
        n_s, n_p = c.shape
        n_r = nu_f.shape[0]
        out = np.zeros((n_s, n_p))
        a = np.empty(n_p)
        b = np.empty(n_p)
        for i in range(n_r):
            a[:] = kf[i]
            b[:] = kb[i]
            for s in range(n_s):
                if nu_f[i, s] > 0:
                    _power_into(a, c[s], nu_f[i, s])
                if nu_b[i, s] > 0:
                    _power_into(b, c[s], nu_b[i, s])
            for s in range(n_s):
                g = float(sigma[i, s])
                if g != 0.0:
                    for p in range(n_p):
                        out[s, p] += g * (a[p] - b[p])
        return out

    @njit(cache=True)
    def neumann_implicit_1d(rhs, r):
        # Thomas algorithm; rows 0 and n-1 carry the reflected ghost (-2r).
        m, n = rhs.shape
        out = np.empty_like(rhs)
        cp = np.empty(n)
        dp = np.empty(n)
        for a in range(m):
            ra = r[a]
            diag = 1.0 + 2.0 * ra
            cp[0] = -2.0 * ra / diag
            dp[0] = rhs[a, 0] / diag
            for j in range(1, n):
                lower = -2.0 * ra if j == n - 1 else -ra
                upper = -ra
                den = diag - lower * cp[j - 1]
                cp[j] = upper / den
                dp[j] = (rhs[a, j] - lower * dp[j - 1]) / den
            out[a, n - 1] = dp[n - 1]
            for j in range(n - 2, -1, -1):
                out[a, j] = dp[j] - cp[j] * out[a, j + 1]
        return out

    return SimpleNamespace(
        laplacian_1d=laplacian_1d,
        laplacian_2d=laplacian_2d,
        mass_action_fluxes=mass_action_fluxes,
        stoich_source=stoich_source,
        mass_action_source=mass_action_source,
        neumann_implicit_1d=neumann_implicit_1d,
        backend="numba",
    )


numba_kernels = None
if _numba_requested():
    try:
        numba_kernels = _build_numba()
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_kernels = None

active = numba_kernels if numba_kernels is not None else numpy_kernels
BACKEND = active.backend

laplacian_1d = active.laplacian_1d
laplacian_2d = active.laplacian_2d
mass_action_fluxes = active.mass_action_fluxes
stoich_source = active.stoich_source
mass_action_source = active.mass_action_source
neumann_implicit_1d = active.neumann_implicit_1d
