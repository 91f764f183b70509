"""Mass-action chemical reaction networks.

Networks are immutable. Species are dense-indexed by declaration order and
complexes are stored as sorted ``(species_index, coefficient)`` pairs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .polynomial import PolynomialOdeSystem, format_terms
from .reports import Check, ValidationReport

_MAX_STOICH = 2**31 - 1
EMPTY = "∅"


class RealizabilityError(ValueError):
    """An ODE system has a negative term that a mass-action reaction cannot produce."""

    def __init__(self, report: "RealizabilityReport"):
        self.report = report
        super().__init__("system is not realizable by mass-action reactions:\n" + report.to_text())


@dataclass(frozen=True)
class SpeciesId:
    index: int
    name: str


def _check_stoich(name: str, k) -> int:
    if isinstance(k, bool) or int(k) != k:
        raise ValueError(f"stoichiometric coefficient of {name} must be an integer, got {k!r}")
    k = int(k)
    if k < 0:
        raise ValueError(f"negative stoichiometric coefficient {k} for {name}")
    if k > _MAX_STOICH:
        raise OverflowError(f"stoichiometric coefficient {k} for {name} exceeds {_MAX_STOICH}")
    return k


@dataclass(frozen=True)
class Complex:
    """Non-negative integer combination of species names; empty means the zero complex."""

    stoich: tuple[tuple[str, int], ...] = ()

    def __init__(self, stoich: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = stoich.items() if isinstance(stoich, Mapping) else stoich
        acc: dict[str, int] = {}
        for name, k in items:
            acc[name] = acc.get(name, 0) + _check_stoich(name, k)
            if acc[name] > _MAX_STOICH:
                raise OverflowError(f"stoichiometric coefficient for {name} overflows")
        object.__setattr__(self, "stoich", tuple(sorted((n, k) for n, k in acc.items() if k)))

    @classmethod
    def parse(cls, text: str) -> "Complex":
        """Parse ``"2X + Y"``; ``"0"``, ``""`` and the empty-set sign give the zero complex."""
        text = text.strip()
        if text in ("", "0", EMPTY):
            return cls()
        acc: dict[str, int] = {}
        for part in text.split("+"):
            part = part.strip()
            digits = len(part) - len(part.lstrip("0123456789"))
            k = int(part[:digits]) if digits else 1
            name = part[digits:].strip()
            if not name.isidentifier() and not name.replace("'", "").isidentifier():
                raise ValueError(f"bad species name {name!r} in complex {text!r}")
            acc[name] = acc.get(name, 0) + k
        return cls(acc)

    def as_dict(self) -> dict[str, int]:
        return dict(self.stoich)

    def get(self, name: str) -> int:
        return dict(self.stoich).get(name, 0)

    @property
    def species(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.stoich)

    def __add__(self, other: "Complex") -> "Complex":
        return Complex(list(self.stoich) + list(other.stoich))

    def __bool__(self) -> bool:
        return bool(self.stoich)

    def format(self, order: Sequence[str] | None = None) -> str:
        if not self.stoich:
            return EMPTY
        d = dict(self.stoich)
        names = [n for n in order if n in d] if order is not None else [n for n, _ in self.stoich]
        names += [n for n in d if n not in names]
        return " + ".join(n if d[n] == 1 else f"{d[n]}{n}" for n in names)


@dataclass(frozen=True)
class Reaction:
    reactants: Complex
    products: Complex
    rate_constant: float

    def __post_init__(self):
        if not isinstance(self.reactants, Complex):
            object.__setattr__(self, "reactants", Complex(self.reactants))
        if not isinstance(self.products, Complex):
            object.__setattr__(self, "products", Complex(self.products))
        rate = float(self.rate_constant)
        if not (rate > 0 and np.isfinite(rate)):
            raise ValueError(f"rate constant must be positive and finite, got {self.rate_constant!r}")
        object.__setattr__(self, "rate_constant", rate)
        if self.reactants == self.products:
            raise ValueError(f"null reaction {self.reactants.format()} -> {self.products.format()}")

    @classmethod
    def parse(cls, text: str, rate: float) -> "Reaction":
        lhs, rhs = text.split("->")
        return cls(Complex.parse(lhs), Complex.parse(rhs), rate)

    @property
    def species(self) -> set[str]:
        return set(self.reactants.species) | set(self.products.species)

    def net(self) -> dict[str, int]:
        out = {n: -k for n, k in self.reactants.stoich}
        for n, k in self.products.stoich:
            out[n] = out.get(n, 0) + k
        return {n: k for n, k in out.items() if k}

    def key(self, rate_digits: int | None = None) -> tuple:
        """Hashable identity used for multiset comparison of listings.

        ``rate_digits`` rounds the rate to that many significant digits so that
        products like ``0.01 * 10 / 1e-3`` compare equal to 100.
        """
        rate = self.rate_constant if rate_digits is None else float(f"{self.rate_constant:.{rate_digits}g}")
        return (self.reactants.stoich, self.products.stoich, rate)

    def format(self, order: Sequence[str] | None = None) -> str:
        return f"{self.reactants.format(order)} -> {self.products.format(order)}  [k={self.rate_constant:.12g}]"


@dataclass(frozen=True)
class ReactionNetwork:
    """Species list plus reactions.

    Species that appear in reactions but are not declared are appended in
    first-appearance order.
    """

    species: tuple[SpeciesId, ...]
    reactions: tuple[Reaction, ...] = field(default_factory=tuple)

    def __init__(self, species: Sequence[str | SpeciesId] = (), reactions: Iterable[Reaction] = ()):
        reactions = tuple(reactions)
        names = [s.name if isinstance(s, SpeciesId) else str(s) for s in species]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate species names in {names}")
        seen = set(names)
        for r in reactions:
            for cplx in (r.reactants, r.products):
                for n in cplx.species:
                    if n not in seen:
                        names.append(n)
                        seen.add(n)
        if not names:
            raise ValueError("a reaction network needs at least one species")
        object.__setattr__(self, "species", tuple(SpeciesId(i, n) for i, n in enumerate(names)))
        object.__setattr__(self, "reactions", reactions)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.species)

    def species_id(self, name: str) -> SpeciesId:
        for s in self.species:
            if s.name == name:
                return s
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.reactions)

    def merge(self, *others: "ReactionNetwork") -> "ReactionNetwork":
        names = list(self.names)
        reactions = list(self.reactions)
        for o in others:
            names += [n for n in o.names if n not in names]
            reactions += o.reactions
        return ReactionNetwork(names, reactions)

    def reaction_multiset(self, rate_digits: int | None = 12) -> dict[tuple, int]:
        out: dict[tuple, int] = {}
        for r in self.reactions:
            k = r.key(rate_digits)
            out[k] = out.get(k, 0) + 1
        return out

    def to_dict(self) -> dict:
        return {
            "species": list(self.names),
            "reactions": [
                {"reactants": r.reactants.as_dict(), "products": r.products.as_dict(), "rate": r.rate_constant}
                for r in self.reactions
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ReactionNetwork":
        try:
            reactions = [Reaction(Complex(r.get("reactants", {})), Complex(r.get("products", {})), r["rate"])
                         for r in doc.get("reactions", [])]
            return cls(doc.get("species", []), reactions)
        except (KeyError, TypeError, AttributeError) as err:
            raise ValueError(f"malformed network document: {err}") from None

    @classmethod
    def from_json(cls, text: str) -> "ReactionNetwork":
        return cls.from_dict(json.loads(text))

    def to_text(self) -> str:
        return "\n".join(r.format(self.names) for r in self.reactions)


# -- ODE derivation -----------------------------------------------------------

def stoichiometric_matrix(network: ReactionNetwork) -> np.ndarray:
    """Gamma with entry (i, j) = net production of species i by reaction j."""
    names = network.names
    pos = {n: i for i, n in enumerate(names)}
    gamma = np.zeros((len(names), len(network.reactions)), dtype=np.int64)
    for j, r in enumerate(network.reactions):
        for n, k in r.net().items():
            gamma[pos[n], j] = k
    return gamma


def rate_vector(network: ReactionNetwork, x) -> np.ndarray:
    """Mass-action rates v_j(x) = k_j * prod_i x_i**a_ij."""
    x = np.asarray(x, dtype=float)
    pos = {n: i for i, n in enumerate(network.names)}
    v = np.empty(len(network.reactions))
    for j, r in enumerate(network.reactions):
        val = r.rate_constant
        for n, k in r.reactants.stoich:
            val *= x[pos[n]] ** k
        v[j] = val
    return v


def derive_odes(network: ReactionNetwork) -> PolynomialOdeSystem:
    """Mass-action ODEs dx/dt = Gamma v(x) as a normalized polynomial system."""
    names = network.names
    pos = {n: i for i, n in enumerate(names)}
    eqs: list[list] = [[] for _ in names]
    for r in network.reactions:
        exps = [0] * len(names)
        for n, k in r.reactants.stoich:
            exps[pos[n]] = k
        exps_t = tuple(exps)
        for n, k in r.net().items():
            eqs[pos[n]].append((exps_t, k * r.rate_constant))
    return PolynomialOdeSystem(names, eqs)


def find_catalysts(network: ReactionNetwork) -> set[SpeciesId]:
    """Species whose mass-action derivative is identically zero."""
    odes = derive_odes(network)
    return {s for s, eq in zip(network.species, odes.equations) if not eq}


# -- ODE -> CRN -----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    variable: str
    exponents: tuple[int, ...]
    coefficient: float
    term: str


@dataclass(frozen=True)
class RealizabilityReport(ValidationReport):
    violations: tuple[Violation, ...] = ()

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["violations"] = [{"variable": v.variable, "term": v.term, "coefficient": v.coefficient}
                           for v in self.violations]
        return d


def validate_realizability(odes: PolynomialOdeSystem) -> RealizabilityReport:
    """Every negative term in variable i's equation must carry a factor x_i."""
    violations = []
    checks = []
    for i, (name, eq) in enumerate(zip(odes.variables, odes.equations)):
        bad = [(e, c) for e, c in eq if c < 0 and e[i] == 0]
        for e, c in bad:
            violations.append(Violation(name, e, c, format_terms([(e, c)], odes.variables)))
        detail = ", ".join(format_terms([b], odes.variables) for b in bad)
        checks.append(Check(f"negative terms of d{name}/dt contain {name}", not bad,
                            f"offending terms: {detail}" if bad else ""))
    return RealizabilityReport(tuple(checks), tuple(violations))


def crn_from_polynomial_odes(odes: PolynomialOdeSystem) -> ReactionNetwork:
    """One reaction per monomial term.

    A positive term ``c * x**a`` in the equation of ``x_i`` becomes
    ``a -> a + e_i`` at rate ``c``; a negative one becomes ``a -> a - e_i`` at
    rate ``|c|``.

    Raises:
        RealizabilityError: some negative term lacks its own variable.
    """
    report = validate_realizability(odes)
    if not report.ok:
        raise RealizabilityError(report)
    names = odes.variables
    reactions = []
    for i, eq in enumerate(odes.equations):
        for exps, coef in eq:
            reactants = dict(zip(names, exps))
            products = dict(reactants)
            products[names[i]] += 1 if coef > 0 else -1
            reactions.append(Reaction(Complex(reactants), Complex(products), abs(coef)))
    return ReactionNetwork(names, reactions)
