"""Equilibria, free energy, affinities and dissipation of the closed network.

Sign convention: with ``D_d, D_r >= 0`` the closed system obeys
``dF/dt = -(D_d + D_r)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid_ops
from .reaction_net import mass_action_fluxes

CLOSED_SPECIES = ("Vs", "Vh", "W", "Bs", "Bh", "A")


@dataclass(frozen=True)
class EquilibriumState:
    cbar: np.ndarray
    species: tuple[str, ...] = CLOSED_SPECIES

    def __getitem__(self, name):
        return float(self.cbar[self.species.index(name)])

    def as_dict(self):
        return {n: float(v) for n, v in zip(self.species, self.cbar)}


@dataclass(frozen=True)
class EnergyAudit:
    t: float
    mass: float
    free_energy: float
    diss_diffusion: float
    diss_reaction: float
    min_concentration: float
    affinities: tuple[float, ...] = ()
    rhs_inf: float = float("nan")

    CSV_HEADER = ("t", "mass", "F", "D_d", "D_r", "min_c")

    def csv_row(self):
        vals = (self.t, self.mass, self.free_energy, self.diss_diffusion,
                self.diss_reaction, self.min_concentration)
        return [grid_ops.format_number(v) for v in vals]


def equilibrium_conserved(params, M0, volume=1.0):
    """Positive detailed-balance equilibrium with total mass ``M0`` on a domain of measure ``volume``."""
    p = params
    denominators = {"p1": p.p1, "p2": p.p2, "r": p.r, "eps1": p.eps1, "eps2": p.eps2}
    zero = [n for n, v in denominators.items() if v == 0]
    if zero:
        raise ValueError(f"equilibrium undefined: rate(s) {', '.join(zero)} are zero")
    if M0 < 0:
        raise ValueError("M0 must be nonnegative")
    e34 = p.eps3 * p.eps4**2 / (p.p1 * p.p2**2)
    ratios = np.array([
        1.0,
        p.eps4 / p.p2,
        e34,
        p.m_s / p.eps1,
        p.m_h * p.eps4 / (p.p2 * p.eps2),
        p.m_w * e34 / p.r,
    ])
    return EquilibriumState(ratios * (M0 / volume) / ratios.sum())


def equilibrium_extinct(params, M0, volume=1.0):
    p = params
    if p.m_w + p.r == 0:
        raise ValueError("extinct equilibrium undefined: m_w + r = 0")
    m = M0 / volume
    return EquilibriumState(np.array([0.0, 0.0, p.r * m / (p.m_w + p.r), 0.0, 0.0,
                                      p.m_w * m / (p.m_w + p.r)]))


def detailed_balance_residuals(params, eq):
    """Residuals of the five per-reaction balance relations, in network order."""
    p = params
    vs, vh, w, bs, bh, a = eq.cbar
    return np.array([
        p.p1 * w * vs - p.eps3 * vh**2,
        p.p2 * vh - p.eps4 * vs,
        p.m_s * vs - p.eps1 * bs,
        p.m_h * vh - p.eps2 * bh,
        p.m_w * w - p.r * a,
    ])


def _cbar(eq, grid):
    return np.asarray(eq.cbar, dtype=float).reshape((-1,) + (1,) * grid.dim)


def free_energy(state, eq, grid):
    """Quadrature of ``sum_a c (ln(c / cbar) - 1)`` with ``0 ln 0 = 0``."""
    c = grid.check(state)
    if np.any(c < 0):
        raise ValueError("negative concentration")
    cbar = _cbar(eq, grid)
    if np.any((cbar <= 0) & (c > 0)):
        raise ValueError("free energy is infinite relative to an equilibrium with zero components")
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(c > 0, c * (np.log(c / cbar) - 1.0), 0.0)
    return float(grid_ops.integrate(dens.sum(axis=0), grid))


def _require_positive(c):
    if np.any(c <= 0):
        raise ValueError("zero or negative concentration: logarithmic quantity undefined")


def affinity(net, state, eq):
    """Pointwise ``A_i = sum_a sigma[i, a] ln(c_a / cbar_a)``, shape ``(n_reactions, ...)``."""
    c = np.asarray(state, dtype=float)
    _require_positive(c)
    cbar = np.asarray(eq.cbar, dtype=float).reshape((-1,) + (1,) * (c.ndim - 1))
    _require_positive(cbar)
    return np.tensordot(net.sigma.astype(float), np.log(c / cbar), axes=(1, 0))


def reaction_dissipation_density(rdot, r_minus):
    """``sum_i rdot_i ln(rdot_i / R-_i + 1)`` pointwise."""
    rdot = np.asarray(rdot, dtype=float)
    r_minus = np.asarray(r_minus, dtype=float)
    if np.any(r_minus <= 0):
        raise ValueError("backward flux vanishes: reaction dissipation undefined")
    ratio = rdot / r_minus
    if np.any(ratio <= -1):
        raise ValueError("rate/backward-flux ratio <= -1: inconsistent inputs")
    return np.sum(rdot * np.log1p(ratio), axis=0)


def dissipations(net, state, eq, grid, diffusion=None):
    """``(D_d, D_r)`` for a strictly positive state.

    ``D_d = int sum_a d_a |grad c_a|^2 / c_a``;
    ``D_r = int sum_i (R+ - R-) ln(R+ / R-)``.
    """
    c = grid.check(state)
    _require_positive(c)
    d = net.diffusion if diffusion is None else np.asarray(diffusion, dtype=float)
    grads = grid_ops.gradient(c, grid)
    gsq = sum(g * g for g in grads)
    dens_d = np.tensordot(d, gsq / c, axes=(0, 0))
    fwd, bwd = mass_action_fluxes(net, c)
    _require_positive(fwd)
    _require_positive(bwd)
    dens_r = np.sum((fwd - bwd) * np.log(fwd / bwd), axis=0)
    return float(grid_ops.integrate(dens_d, grid)), float(grid_ops.integrate(dens_r, grid))


def total_mass(state, grid):
    return float(grid_ops.integrate(np.asarray(state).sum(axis=0), grid))


def audit(net, state, eq, grid, t=0.0, diffusion=None, rhs_inf=float("nan")):
    """Energy audit; logarithmic terms become NaN where the state is not positive."""
    c = grid.check(state)
    mass = total_mass(c, grid)
    nan = float("nan")
    F = Dd = Dr = nan
    affs = ()
    if eq is not None:
        try:
            F = free_energy(c, eq, grid)
        except ValueError:
            pass
        if np.all(c > 0):
            try:
                Dd, Dr = dissipations(net, c, eq, grid, diffusion)
                A = affinity(net, c, eq)
                affs = tuple(float(v) for v in grid_ops.integrate(A, grid) / grid.volume)
            except ValueError:
                pass
    return EnergyAudit(float(t), mass, F, Dd, Dr, float(np.min(c)), affs, float(rhs_inf))


def gradient_flow_rates(net, state, eq):
    """Reaction rates rebuilt from affinities: ``R- (exp(-A) - 1)``."""
    _, bwd = mass_action_fluxes(net, state)
    return bwd * np.expm1(-affinity(net, state, eq))


__all__ = [
    "EquilibriumState", "EnergyAudit", "equilibrium_conserved", "equilibrium_extinct",
    "detailed_balance_residuals", "free_energy", "affinity", "dissipations",
    "reaction_dissipation_density", "total_mass", "audit", "gradient_flow_rates"
]
