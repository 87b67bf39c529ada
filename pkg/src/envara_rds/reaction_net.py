"""Mass-action reaction networks and their text format.

Grammar, one statement per line (``#`` starts a comment)::

    species NAME [diffusion=REAL] [environment]
    REACTANTS ('->' | '<->') PRODUCTS '@' name=value (',' name=value)*

A side is ``k Species ('+' k Species)*`` with ``k`` an optional positive
integer, or ``0`` for the empty side. Irreversible reactions take one rate,
reversible ones two (forward first).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import _kernels


class ParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f"line {line}, col {col}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Species:
    name: str
    diffusion: float = 0.0
    role: str = "dynamic"

    def __post_init__(self):
        if self.diffusion < 0:
            raise ValueError(f"species {self.name}: diffusion must be >= 0")
        if self.role not in ("dynamic", "environment"):
            raise ValueError(f"species {self.name}: unknown role {self.role!r}")


@dataclass(frozen=True)
class Reaction:
    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]
    k_forward: float
    k_backward: float = 0.0
    rate_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.reactants and not self.products:
            raise ValueError("reaction needs at least one reactant or product")
        for name, count in self.reactants + self.products:
            if int(count) != count or count < 1:
                raise ValueError(f"stoichiometric count for {name} must be a positive integer")
        if self.k_forward < 0 or self.k_backward < 0:
            raise ValueError("rate constants must be nonnegative")

    @property
    def reversible(self):
        return len(self.rate_names) == 2 or (not self.rate_names and self.k_backward > 0)


@dataclass(frozen=True)
class ReactionNetwork:
    """Species and reactions; ``sigma[i, a]`` is product minus reactant count."""

    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ValueError("species names must be unique")
        known = set(names)
        for rxn in self.reactions:
            for name, _ in rxn.reactants + rxn.products:
                if name not in known:
                    raise ValueError(f"reaction uses undeclared species {name!r}")

    @property
    def names(self):
        return tuple(s.name for s in self.species)

    def index(self, name):
        return self.names.index(name)

    @property
    def n_species(self):
        return len(self.species)

    @property
    def n_reactions(self):
        return len(self.reactions)

    def _orders(self, side):
        idx = {n: i for i, n in enumerate(self.names)}
        out = np.zeros((self.n_reactions, self.n_species), dtype=np.int64)
        for i, rxn in enumerate(self.reactions):
            for name, count in getattr(rxn, side):
                out[i, idx[name]] += count
        return out

    @cached_property
    def reactant_orders(self):
        return self._orders("reactants")

    @cached_property
    def product_orders(self):
        return self._orders("products")

    @cached_property
    def sigma(self):
        return self.product_orders - self.reactant_orders

    @cached_property
    def k_forward(self):
        return np.array([r.k_forward for r in self.reactions], dtype=float)

    @cached_property
    def k_backward(self):
        return np.array([r.k_backward for r in self.reactions], dtype=float)

    @property
    def diffusion(self):
        return np.array([s.diffusion for s in self.species], dtype=float)

    @property
    def environment(self):
        return tuple(s.name for s in self.species if s.role == "environment")


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<rev><->)
  | (?P<fwd>->)
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[+@=,∅])
    """,
    re.VERBOSE,
)


def _tokenize(text, lineno):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group()
            if kind == "op":
                kind = val
            tokens.append((kind, val, pos + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Line:
    def __init__(self, tokens, lineno):
        self.tokens = tokens
        self.i = 0
        self.lineno = lineno

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, what=None):
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            found = tok[1] or "end of line"
            raise ParseError(f"expected {what or kind}, found {found!r}", self.lineno, tok[2])
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, self.lineno, tok[2])


def _parse_number(line, tok, what):
    try:
        return float(tok[1])
    except ValueError:  # pragma: no cover - regex guarantees a float literal
        raise line.error(f"bad {what} {tok[1]!r}", tok)


def _parse_side(line):
    kind, val, _ = line.peek()
    if (kind == "num" and val == "0") or kind == "∅":
        nxt = line.tokens[line.i + 1][0]
        if nxt in ("fwd", "rev", "@", "end"):
            line.take()
            return []
    terms = []
    while True:
        tok = line.peek()
        count = 1
        if tok[0] == "num":
            if not re.fullmatch(r"\d+", tok[1]):
                raise line.error(f"stoichiometric coefficient must be a positive integer, got {tok[1]!r}", tok)
            count = int(tok[1])
            if count < 1:
                raise line.error("stoichiometric coefficient must be >= 1", tok)
            line.take()
        name = line.take("ident", "species name")[1]
        terms.append((name, count))
        if line.peek()[0] != "+":
            return terms
        line.take()


def _merge(terms):
    merged = {}
    for name, count in terms:
        merged[name] = merged.get(name, 0) + count
    return tuple(merged.items())


def _parse_rates(line):
    pairs = []
    while True:
        name_tok = line.take("ident", "rate name")
        line.take("=", "'='")
        tok = line.take("num", "rate value")
        value = _parse_number(line, tok, "rate")
        if value < 0:
            raise line.error(f"negative rate literal {tok[1]} for {name_tok[1]}", tok)
        pairs.append((name_tok[1], value))
        if line.peek()[0] != ",":
            break
        line.take()
    line.take("end", "end of line")
    return pairs


def _parse_declaration(line):
    line.take()  # 'species'
    name = line.take("ident", "species name")[1]
    diffusion = 0.0
    role = "dynamic"
    while line.peek()[0] != "end":
        tok = line.take("ident", "'diffusion=REAL' or 'environment'")
        if tok[1] == "diffusion":
            line.take("=", "'='")
            num = line.take("num", "diffusion value")
            diffusion = _parse_number(line, num, "diffusion")
            if diffusion < 0:
                raise line.error("diffusion coefficient must be nonnegative", num)
        elif tok[1] == "environment":
            role = "environment"
        else:
            raise line.error(f"unknown species attribute {tok[1]!r}", tok)
    return name, diffusion, role


def parse_network(text):
    """Parse DSL text into a :class:`ReactionNetwork`.

    Species are ordered by first appearance (declaration or use), reactions
    by source order.
    """
    order = []
    attrs = {}
    declared = set()
    reactions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        line = _Line(_tokenize(body, lineno), lineno)
        head = line.peek()
        if head[0] == "ident" and head[1] == "species" and line.tokens[1][0] == "ident":
            name, diffusion, role = _parse_declaration(line)
            if name in declared:
                raise ParseError(f"duplicate species declaration {name!r}", lineno, head[2])
            declared.add(name)
            if name not in attrs:
                order.append(name)
            attrs[name] = (diffusion, role)
            continue

        reactants = _parse_side(line)
        arrow = line.peek()
        if arrow[0] not in ("fwd", "rev"):
            raise line.error(f"expected '->' or '<->', found {arrow[1] or 'end of line'!r}")
        line.take()
        products = _parse_side(line)
        line.take("@", "'@' before rate constants")
        rates = _parse_rates(line)
        expected = 2 if arrow[0] == "rev" else 1
        if len(rates) != expected:
            raise ParseError(
                f"{'reversible' if expected == 2 else 'irreversible'} reaction needs "
                f"{expected} rate(s), got {len(rates)}", lineno, arrow[2])
        if not reactants and not products:
            raise ParseError("reaction has no species", lineno, head[2])
        for name, _ in reactants + products:
            if name not in attrs:
                order.append(name)
                attrs[name] = (0.0, "dynamic")
        reactions.append(Reaction(
            reactants=_merge(reactants),
            products=_merge(products),
            k_forward=rates[0][1],
            k_backward=rates[1][1] if expected == 2 else 0.0,
            rate_names=tuple(n for n, _ in rates),
        ))
    if not reactions:
        raise ParseError("no reactions")
    species = tuple(Species(n, *attrs[n]) for n in order)
    return ReactionNetwork(species, tuple(reactions))


def _format_side(terms):
    if not terms:
        return "0"
    return " + ".join(name if n == 1 else f"{n} {name}" for name, n in terms)


def format_network(net):
    """Inverse of :func:`parse_network` (declares every species explicitly)."""
    lines = []
    for s in net.species:
        decl = f"species {s.name} diffusion={s.diffusion!r}"
        if s.role == "environment":
            decl += " environment"
        lines.append(decl)
    for i, rxn in enumerate(net.reactions):
        names = rxn.rate_names or (("kf", "kb") if rxn.reversible else ("kf",))
        arrow = "<->" if len(names) == 2 else "->"
        values = (rxn.k_forward, rxn.k_backward)[: len(names)]
        rates = ", ".join(f"{n}={v!r}" for n, v in zip(names, values))
        lines.append(f"{_format_side(rxn.reactants)} {arrow} {_format_side(rxn.products)} @ {rates}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# kinetics
# --------------------------------------------------------------------------

def _as_points(net, c):
    c = np.asarray(c, dtype=float)
    if c.shape[0] != net.n_species:
        raise ValueError(f"concentration has {c.shape[0]} components, network has {net.n_species} species")
    return c.reshape(net.n_species, -1), c.shape[1:]


def mass_action_fluxes(net, c):
    """Forward and backward fluxes ``(R+, R-)``, each of shape ``(n_reactions, ...)``."""
    flat, tail = _as_points(net, c)
    if np.any(flat < 0):
        raise ValueError("negative concentration")
    fwd, bwd = _kernels.mass_action_fluxes(
        np.ascontiguousarray(flat), net.reactant_orders, net.product_orders,
        net.k_forward, net.k_backward)
    return fwd.reshape((-1,) + tail), bwd.reshape((-1,) + tail)


def mass_action_rates(net, c):
    """Net reaction rates ``k+ prod c^reactants - k- prod c^products``."""
    fwd, bwd = mass_action_fluxes(net, c)
    return fwd - bwd


def stoich_rhs(net, rates):
    """Species source ``sigma^T rates``."""
    rates = np.asarray(rates, dtype=float)
    if rates.shape[0] != net.n_reactions:
        raise ValueError(f"got {rates.shape[0]} rates for {net.n_reactions} reactions")
    return np.tensordot(net.sigma.T.astype(float), rates, axes=(1, 0))


def reaction_rhs(net, c):
    return stoich_rhs(net, mass_action_rates(net, c))


def conserved_moieties(net):
    """Rational basis ``y`` of ``{y : sigma @ y = 0}``.

    Each vector is scaled to coprime integers with a positive leading entry.
    """
    import sympy

    if net.n_reactions == 0:
        return [tuple(Fraction(int(i == j)) for j in range(net.n_species)) for i in range(net.n_species)]
    basis = sympy.Matrix(net.sigma.tolist()).nullspace()
    out = []
    for vec in basis:
        entries = [sympy.Rational(v) for v in vec]
        denom = sympy.ilcm(*[e.q for e in entries])
        ints = [int(e * denom) for e in entries]
        g = 0
        for v in ints:
            g = np.gcd(g, abs(v))
        ints = [v // g for v in ints]
        lead = next(v for v in ints if v != 0)
        if lead < 0:
            ints = [-v for v in ints]
        out.append(tuple(Fraction(v) for v in ints))
    return out
