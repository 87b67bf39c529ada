"""Uniform vertex grids, the Neumann Laplacian, norms and slow/fast splitting.

Grid points sit at ``x_j = j * h`` with ``h = L / (n - 1)``, so both walls are
grid nodes. The zero-flux condition is imposed by ghost reflection, which makes
the discrete Laplacian diagonal in the type-I cosine basis
``cos(k * pi * x / L)``. Spectral operations (projections, implicit diffusion
solves) use that basis so they commute with the stencil to rounding error.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from . import _kernels


@dataclass(frozen=True)
class Grid:
    """Uniform grid on an interval or a rectangle with Neumann walls."""

    n_points: tuple[int, ...]
    lengths: tuple[float, ...] | None = None

    def __post_init__(self):
        n_points = tuple(int(n) for n in np.atleast_1d(self.n_points))
        if len(n_points) not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {len(n_points)}")
        if any(n < 3 for n in n_points):
            raise ValueError(f"need at least 3 points per axis, got {n_points}")
        lengths = self.lengths
        if lengths is None:
            lengths = (math.pi,) * len(n_points)
        lengths = tuple(float(v) for v in np.atleast_1d(lengths))
        if len(lengths) != len(n_points):
            raise ValueError("lengths and n_points disagree in dimension")
        if any(not v > 0 for v in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        object.__setattr__(self, "n_points", n_points)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def line(cls, n, length=math.pi):
        return cls((n,), (length,))

    @classmethod
    def rect(cls, nx, ny, lx=math.pi, ly=math.pi):
        return cls((nx, ny), (lx, ly))

    @property
    def dim(self):
        return len(self.n_points)

    @property
    def shape(self):
        return self.n_points

    @property
    def axes(self):
        return tuple(range(-self.dim, 0))

    @property
    def spacing(self):
        return tuple(L / (n - 1) for L, n in zip(self.lengths, self.n_points))

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    @cached_property
    def coords(self):
        return tuple(np.linspace(0.0, L, n) for L, n in zip(self.lengths, self.n_points))

    def mesh(self):
        return np.meshgrid(*self.coords, indexing="ij")

    @cached_property
    def weights(self):
        """Trapezoid quadrature weights, shape ``grid.shape``."""
        w1 = []
        for h, n in zip(self.spacing, self.n_points):
            w = np.full(n, h)
            w[0] = w[-1] = 0.5 * h
            w1.append(w)
        if self.dim == 1:
            return w1[0]
        return np.outer(w1[0], w1[1])

    @cached_property
    def wavenumbers(self):
        """Per-axis cosine wavenumbers ``k * pi / L``."""
        return tuple(np.arange(n) * math.pi / L for L, n in zip(self.lengths, self.n_points))

    @cached_property
    def laplacian_symbol(self):
        """Exact eigenvalues of the discrete Neumann stencil on each cosine mode."""
        parts = []
        for h, n in zip(self.spacing, self.n_points):
            k = np.arange(n)
            parts.append(-(4.0 / h**2) * np.sin(0.5 * math.pi * k / (n - 1)) ** 2)
        if self.dim == 1:
            return parts[0]
        return parts[0][:, None] + parts[1][None, :]

    def check(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[-self.dim:] != self.shape:
            raise ValueError(f"field of shape {f.shape} does not conform to grid {self.shape}")
        return f

    def constant(self, value):
        return np.full(self.shape, float(value))


def laplacian_neumann(f, grid):
    """Second-order Neumann Laplacian; accepts a field or a stack of fields."""
    f = grid.check(f)
    lead = f.shape[: f.ndim - grid.dim]
    batch = np.ascontiguousarray(f.reshape((-1,) + grid.shape))
    if grid.dim == 1:
        out = _kernels.laplacian_1d(batch, grid.spacing[0])
    else:
        out = _kernels.laplacian_2d(batch, *grid.spacing)
    return out.reshape(lead + grid.shape)


def to_modes(f, grid):
    """Forward type-I cosine transform over the grid axes."""
    return sfft.dctn(f, type=1, axes=grid.axes)


def from_modes(fhat, grid):
    return sfft.idctn(fhat, type=1, axes=grid.axes)


def integrate(f, grid):
    """Trapezoid quadrature over the grid axes."""
    f = grid.check(f)
    return np.sum(f * grid.weights, axis=grid.axes)


def gradient(f, grid):
    """Centered differences inside, second-order one-sided at the walls."""
    f = grid.check(f)
    return [np.gradient(f, h, axis=ax, edge_order=2) for ax, h in zip(grid.axes, grid.spacing)]


def norm(f, grid, which="L2"):
    """Discrete L2, H1 or Linf norm of a single field."""
    f = grid.check(f)
    which = which.upper()
    if which == "LINF":
        return float(np.max(np.abs(f)))
    l2sq = float(integrate(f * f, grid))
    if which == "L2":
        return math.sqrt(l2sq)
    if which == "H1":
        g2 = sum(float(integrate(g * g, grid)) for g in gradient(f, grid))
        return math.sqrt(l2sq + g2)
    raise ValueError(f"unknown norm {which!r}; expected L2, H1 or Linf")


# --------------------------------------------------------------------------
# slow/fast splitting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralSplit:
    """Cosine modes with per-axis wavenumber ``<= k0`` form the slow space."""

    zeta: float
    m_s_tilde: float
    k0: int
    grid: Grid = field(compare=False)

    @cached_property
    def slow_mask(self):
        tol = 1e-9
        masks = [kw <= self.k0 + tol for kw in self.grid.wavenumbers]
        if self.grid.dim == 1:
            return masks[0]
        return masks[0][:, None] & masks[1][None, :]

    @property
    def slow_modes(self):
        return [tuple(int(i) for i in idx) for idx in np.argwhere(self.slow_mask)]


def cutoff_k0(zeta, m_s_tilde):
    """Largest integer k0 with ``k0**2 <= m_s_tilde / zeta``."""
    if not zeta > 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    if not m_s_tilde > 0:
        raise ValueError(f"m_s_tilde must be positive, got {m_s_tilde}")
    ratio = m_s_tilde / zeta
    k0 = int(math.sqrt(ratio))
    # sqrt rounding can miss by one near perfect squares
    while (k0 + 1) ** 2 <= ratio:
        k0 += 1
    while k0 > 0 and k0 ** 2 > ratio:
        k0 -= 1
    return k0


def build_split(zeta, m_s_tilde, grid):
    return SpectralSplit(float(zeta), float(m_s_tilde), cutoff_k0(zeta, m_s_tilde), grid)


def project(f, split, part="slow"):
    """Project onto the slow or fast cosine subspace of ``split``."""
    grid = split.grid
    f = grid.check(f)
    if part not in ("slow", "fast"):
        raise ValueError(f"part must be 'slow' or 'fast', got {part!r}")
    mask = split.slow_mask if part == "slow" else ~split.slow_mask
    return from_modes(to_modes(f, grid) * mask, grid)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def format_number(x):
    """Decimal with 17 significant digits; integral values keep a trailing .0."""
    s = "%.17g" % float(x)
    if s.lstrip("-").isdigit():
        s += ".0"
    return s


def write_field_csv(path, f, grid):
    f = grid.check(f)
    rows = f.reshape(1, -1) if grid.dim == 1 else f
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def read_field_csv(path, grid=None):
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    f = np.array(rows, dtype=float)
    if f.shape[0] == 1:
        f = f[0]
    if grid is not None:
        grid.check(f)
    return f


def write_field_binary(path, f, grid):
    """Header: dim, n_points..., lengths... (little-endian 64-bit), then row-major float64."""
    f = grid.check(f)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<q", grid.dim))
        fh.write(struct.pack(f"<{grid.dim}q", *grid.n_points))
        fh.write(struct.pack(f"<{grid.dim}d", *grid.lengths))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_field_binary(path):
    data = Path(path).read_bytes()
    (dim,) = struct.unpack_from("<q", data, 0)
    if dim not in (1, 2):
        raise ValueError(f"corrupt field file {path}: dim={dim}")
    off = 8
    n_points = struct.unpack_from(f"<{dim}q", data, off)
    off += 8 * dim
    lengths = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    grid = Grid(tuple(n_points), tuple(lengths))
    values = np.frombuffer(data, dtype="<f8", offset=off)
    if values.size != int(np.prod(n_points)):
        raise ValueError(f"corrupt field file {path}: expected {np.prod(n_points)} values, got {values.size}")
    return values.reshape(grid.shape).astype(float), grid
