"""Ready-to-integrate right-hand sides for every system in the family.

Each model except the projected slow flow is generated from reaction-network
text, so variants differ only in their reactions and in how species are
treated during assembly (dynamic, frozen environment, fast, or eliminated
through the quasi-steady relation).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels, grid_ops
from .grid_ops import Grid, SpectralSplit
from .params import Params
from .reaction_net import ReactionNetwork, parse_network


class ModelKind(str, enum.Enum):
    ClosedSix = "ClosedSix"
    RescaledOpen = "RescaledOpen"
    ReducedThree = "ReducedThree"
    HollingI = "HollingI"
    Klausmeier = "Klausmeier"
    HollingIIFastSlow = "HollingIIFastSlow"
    HollingIIReduced = "HollingIIReduced"
    HollingIII = "HollingIII"
    SlowFlow = "SlowFlow"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    params: Params
    grid: Grid
    split: SpectralSplit | None = None
    approx_order: int = 0
    project_correction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))


@dataclass(frozen=True, eq=False)
class Model:
    """Semilinear system ``dc/dt = diffusion * Lap(c) + reaction(c)``.

    ``reaction`` maps a stacked state of shape ``(n_species, *grid.shape)``
    to the same shape.
    """

    kind: ModelKind
    species: tuple[str, ...]
    diffusion: np.ndarray
    grid: Grid
    reaction: Callable[[np.ndarray], np.ndarray]
    params: Params
    network: ReactionNetwork | None = None
    closed: bool = False

    def rhs(self, c):
        c = np.asarray(c, dtype=float)
        d = self.diffusion.reshape((-1,) + (1,) * self.grid.dim)
        return d * grid_ops.laplacian_neumann(c, self.grid) + self.reaction(c)

    def index(self, name):
        return self.species.index(name)


# --------------------------------------------------------------------------
# network texts
# --------------------------------------------------------------------------

def _v(x):
    return repr(float(x))


def closed_network_text(p: Params, backward=True):
    """The closed reversible network; ``backward=False`` zeroes eps1..eps4."""
    e = (p.eps1, p.eps2, p.eps3, p.eps4) if backward else (0.0, 0.0, 0.0, 0.0)
    return f"""\
species Vs diffusion={_v(p.d_vs)}
species Vh diffusion={_v(p.d_vh)}
species W diffusion={_v(p.d_w)}
species Bs diffusion={_v(p.d_bs)} environment
species Bh diffusion={_v(p.d_bh)} environment
species A diffusion={_v(p.d_a)} environment
W + Vs <-> 2 Vh @ p1={_v(p.p1)}, eps3={_v(e[2])}
Vh <-> Vs @ p2={_v(p.p2)}, eps4={_v(e[3])}
Vs <-> Bs @ m_s={_v(p.m_s)}, eps1={_v(e[0])}
Vh <-> Bh @ m_h={_v(p.m_h)}, eps2={_v(e[1])}
W <-> A @ m_w={_v(p.m_w)}, r={_v(p.r)}
"""


def merged_network_text(p: Params, klausmeier=False):
    """Lumped ``V = Vs + Vh`` network of the fast-switching limit."""
    d_v = p.d_vh if p.d_v is None else p.d_v
    m_v = p.m_s if p.m_v is None else p.m_v
    uptake = "W + 2 V -> 3 V" if klausmeier else "W + V -> 2 V"
    return f"""\
species V diffusion={_v(d_v)}
species W diffusion={_v(p.d_w)}
species Bv environment
species A environment
{uptake} @ p1={_v(p.p1)}
V -> Bv @ m_v={_v(m_v)}
W -> A @ m_w={_v(p.m_w)}
A -> W @ r={_v(p.r)}
"""


def fast_slow_network_text(p: Params, k=1):
    """Scaled open network with ``Vs`` standing for the rescaled fast species.

    ``k > 1`` gives the modified uptake ``Vs + k W -> (k+1) Vh``. The
    environment supplies water at the literal rate ``a0``.
    """
    m_h = p.m_h if p.m_v is None else p.m_v
    uptake = "W + Vs -> 2 Vh" if k == 1 else f"Vs + {k} W -> {k + 1} Vh"
    return f"""\
species Vs diffusion={_v(p.d_vs)}
species Vh diffusion={_v(p.d_vh)}
species W diffusion={_v(p.d_w)}
species Bs environment
species Bh environment
species A environment
{uptake} @ p1_tilde={_v(p.p1t)}
Vh -> Vs @ p2={_v(p.p2)}
Vs -> Bs @ m_s_tilde={_v(p.mst)}
Vh -> Bh @ m_h={_v(m_h)}
W -> A @ m_w={_v(p.m_w)}
A -> W @ unit=1.0
"""


def closed_network(p: Params):
    return parse_network(closed_network_text(p))


# --------------------------------------------------------------------------
# kinetics assembled from a network
# --------------------------------------------------------------------------

class NetworkKinetics:
    """Mass-action source restricted to the dynamic species.

    ``frozen`` fixes environment levels; ``prefactor`` multiplies individual
    equations (relaxation speeds, ``1/eps`` for fast species).
    """

    def __init__(self, net, dynamic, frozen=None, prefactor=None):
        self.net = net
        self.dynamic = tuple(dynamic)
        self.dyn_idx = np.array([net.index(n) for n in self.dynamic], dtype=np.int64)
        frozen = dict(frozen or {})
        rest = [n for n in net.names if n not in self.dynamic]
        for n in rest:
            frozen.setdefault(n, 0.0)
        self.frozen_idx = np.array([net.index(n) for n in rest], dtype=np.int64)
        self.frozen_val = np.array([frozen[n] for n in rest], dtype=float)
        pref = dict(prefactor or {})
        self.prefactor = np.array([pref.get(n, 1.0) for n in self.dynamic], dtype=float)
        self._args = (net.reactant_orders, net.product_orders, net.k_forward, net.k_backward)

    def full_state(self, flat):
        full = np.empty((self.net.n_species, flat.shape[1]))
        full[self.dyn_idx] = flat
        if self.frozen_idx.size:
            full[self.frozen_idx] = self.frozen_val[:, None]
        return full

    def source_full(self, full):
        return _kernels.mass_action_source(full, *self._args, self.net.sigma)

    def __call__(self, c):
        flat = c.reshape(len(self.dynamic), -1)
        src = self.source_full(self.full_state(flat))[self.dyn_idx]
        return (src * self.prefactor[:, None]).reshape(c.shape)


class QuasiSteadyKinetics(NetworkKinetics):
    """Eliminates a species whose own equation is affine in itself.

    With ``rhs_fast = P + Q * c_fast`` the critical value is ``-P / Q``; the
    remaining species are evaluated on that graph.
    """

    def __init__(self, net, fast, dynamic, frozen=None):
        super().__init__(net, tuple(dynamic) + (fast,), frozen)
        j = net.index(fast)
        orders = np.concatenate([net.reactant_orders[net.k_forward > 0, j],
                                 net.product_orders[net.k_backward > 0, j]])
        if np.any(orders > 1):
            raise ValueError(f"species {fast} enters a rate nonlinearly; cannot eliminate it")
        self.fast = fast
        self.n_slow = len(dynamic)

    def _source_with(self, flat, value):
        full = self.full_state(np.vstack([flat, np.broadcast_to(value, (1, flat.shape[1]))]))
        return self.source_full(full)

    def fast_value(self, c):
        flat = c.reshape(self.n_slow, -1)
        jf = self.dyn_idx[-1]
        P = self._source_with(flat, 0.0)[jf]
        Q = self._source_with(flat, 1.0)[jf] - P
        if np.any(Q >= 0):
            raise ValueError(f"quasi-steady value of {self.fast} undefined (nonnegative self-coupling)")
        return (-P / Q).reshape(c.shape[1:])

    def __call__(self, c):
        flat = c.reshape(self.n_slow, -1)
        h = self.fast_value(c).reshape(1, -1)
        src = self._source_with(flat, h)[self.dyn_idx[:-1]]
        return src.reshape(c.shape)


# --------------------------------------------------------------------------
# closed-form pieces
# --------------------------------------------------------------------------

def holling_response(kind, w, params: Params, k=None):
    """Per-capita uptake: I ``p1 w``; II/III saturating in ``w`` or ``w**k``."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("negative resource density")
    p = params
    kind = str(kind).upper()
    if kind == "I":
        return p.p1 * w
    if kind == "II":
        return p.p1t * p.p2 * w / (p.p1t * w + p.mst)
    if kind == "III":
        kk = p.k if k is None else k
        wk = w**kk
        return p.p1t * p.p2 * wk / (p.p1t * wk + p.mst)
    raise ValueError(f"unknown functional response {kind!r}")


def critical_manifold_h0(v_h, w, params: Params):
    """Quasi-steady fast species ``p2 v_h / (p1_tilde w + m_s_tilde)``."""
    v_h = np.asarray(v_h, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(v_h < 0) or np.any(w < 0):
        raise ValueError("critical manifold requires nonnegative v_h and w")
    denom = params.p1t * w + params.mst
    if np.any(denom == 0):
        raise ValueError("m_s_tilde = 0 with w = 0: critical manifold undefined")
    return params.p2 * v_h / denom


def fast_reaction(vs, v_h, w, params: Params):
    """Fast-equation reaction ``-p1_tilde w vs - m_s_tilde vs + p2 v_h``."""
    return -params.p1t * w * vs - params.mst * vs + params.p2 * v_h


def slow_reactions(vs, v_h, w, params: Params):
    """Reaction parts of the ``v_h`` and ``w`` equations of the fast-slow pair."""
    p = params
    m_h = p.m_h if p.m_v is None else p.m_v
    g1 = 2.0 * p.p1t * w * vs - m_h * v_h - p.p2 * v_h
    g2 = -p.p1t * w * vs - p.m_w * w + p.a0
    return g1, g2


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def build_rhs(spec: ModelSpec) -> Model:
    p, grid, kind = spec.params, spec.grid, spec.kind
    K = ModelKind

    if kind in (K.ClosedSix, K.RescaledOpen):
        net = closed_network(p)
        names = net.names
        if kind is K.ClosedSix:
            return Model(kind, names, net.diffusion, grid, NetworkKinetics(net, names), p, net, closed=True)
        diff = net.diffusion.copy()
        for n in net.environment:
            diff[net.index(n)] = 0.0
        kin = NetworkKinetics(net, names, prefactor={"Bs": p.eps5, "Bh": p.eps6, "A": p.eps7})
        return Model(kind, names, diff, grid, kin, p, net)

    if kind is K.ReducedThree:
        net = parse_network(closed_network_text(p, backward=False))
        dyn = ("Vs", "Vh", "W")
        kin = NetworkKinetics(net, dyn, frozen={"A": p.a0})
        return Model(kind, dyn, net.diffusion[:3].copy(), grid, kin, p, net)

    if kind in (K.HollingI, K.Klausmeier):
        net = parse_network(merged_network_text(p, klausmeier=kind is K.Klausmeier))
        dyn = ("V", "W")
        kin = NetworkKinetics(net, dyn, frozen={"A": p.a0})
        return Model(kind, dyn, net.diffusion[:2].copy(), grid, kin, p, net)

    if kind is K.HollingIIFastSlow:
        if not p.eps > 0:
            raise ValueError("HollingIIFastSlow requires eps > 0")
        net = parse_network(fast_slow_network_text(p))
        dyn = ("Vs", "Vh", "W")
        kin = NetworkKinetics(net, dyn, frozen={"A": p.a0}, prefactor={"Vs": 1.0 / p.eps})
        return Model(kind, dyn, net.diffusion[:3].copy(), grid, kin, p, net)

    if kind in (K.HollingIIReduced, K.HollingIII):
        k = 1
        if kind is K.HollingIII:
            k = int(p.k)
            if k < 2:
                raise ValueError(f"HollingIII requires k >= 2, got {k}")
        net = parse_network(fast_slow_network_text(p, k=k))
        dyn = ("Vh", "W")
        kin = QuasiSteadyKinetics(net, "Vs", dyn, frozen={"A": p.a0})
        diff = np.array([net.species[net.index(n)].diffusion for n in dyn])
        return Model(kind, dyn, diff, grid, kin, p, net)

    if kind is K.SlowFlow:
        from .multiscale import SlowManifoldApprox, slow_flow_reaction

        split = spec.split
        if split is None:
            split = grid_ops.build_split(p.zeta_value, p.mst, grid)
        approx = SlowManifoldApprox(spec.approx_order, split, p.eps, spec.project_correction)

        def reaction(c):
            return np.stack(slow_flow_reaction(c[0], c[1], p, split, approx))

        return Model(kind, ("Vh", "W"), np.array([p.d_vh, p.d_w]), grid, reaction, p)

    raise ValueError(f"unsupported model kind {kind}")  # pragma: no cover


def homogeneous_steady_state(model: Model, guess, fixed_zero=()):
    """Spatially constant root of the reaction part, holding ``fixed_zero`` species at 0."""
    from scipy.optimize import root

    guess = np.asarray(guess, dtype=float)
    free = np.array([n not in fixed_zero for n in model.species])

    def resid(x):
        c = np.zeros(len(model.species))
        c[free] = x
        full = np.repeat(c[:, None], 3, axis=1)
        return model.reaction(full)[free, 0]

    sol = root(resid, guess[free], method="hybr", options={"xtol": 1e-14})
    if not sol.success:
        raise RuntimeError(f"homogeneous steady state not found: {sol.message}")
    out = np.zeros(len(model.species))
    out[free] = sol.x
    return out
