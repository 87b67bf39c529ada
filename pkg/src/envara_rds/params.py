"""Rate, diffusion and scale constants shared by every model."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class Params:
    """All constants of the closed network and its scaled descendants.

    ``eps1``..``eps4`` are the backward rates of the closed network,
    ``eps5``..``eps7`` the relaxation prefactors of the environment species
    in the rescaled open system, and ``eps`` the time-scale parameter of the
    fast-slow Holling II pair. The fast-slow models use the scaled constants
    ``p1_tilde = eps * p1`` and ``m_s_tilde = eps * m_s``; setting them
    explicitly keeps them fixed while ``eps`` is swept.
    """

    p1: float = 1.0
    p2: float = 1.0
    m_s: float = 1.0
    m_h: float = 1.0
    m_w: float = 1.0
    r: float = 1.0
    eps1: float = 1.0
    eps2: float = 1.0
    eps3: float = 1.0
    eps4: float = 1.0
    eps5: float = 1.0
    eps6: float = 1.0
    eps7: float = 1.0
    eps: float = 0.01
    zeta: float | None = None
    a0: float = 1.0
    d_vs: float = 1.0
    d_vh: float = 1.0
    d_w: float = 1.0
    d_bs: float = 1.0
    d_bh: float = 1.0
    d_a: float = 1.0
    d_v: float | None = None
    k: int = 2
    M0: float = 6.0
    m_v: float | None = None
    p1_tilde: float | None = None
    m_s_tilde: float | None = None

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None or f.name == "k":
                continue
            if v < 0:
                raise ValueError(f"parameter {f.name} must be nonnegative, got {v}")
        if self.zeta is not None and not self.zeta > 0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")
        if int(self.k) != self.k:
            raise ValueError(f"k must be an integer, got {self.k}")

    @property
    def p1t(self):
        return self.p1_tilde if self.p1_tilde is not None else self.eps * self.p1

    @property
    def mst(self):
        return self.m_s_tilde if self.m_s_tilde is not None else self.eps * self.m_s

    @property
    def zeta_value(self):
        """``zeta``, defaulting to ``10 * eps``."""
        return self.zeta if self.zeta is not None else 10.0 * self.eps

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def all_rates(cls, value, **extra):
        """Every reaction rate and backward rate set to ``value``."""
        names = ("p1", "p2", "m_s", "m_h", "m_w", "r", "eps1", "eps2", "eps3", "eps4")
        return cls(**{n: value for n in names}, **extra)

    def to_dict(self):
        return dataclasses.asdict(self)
