"""Exact nullifier algebra for the time-multiplexed cluster generator.

A nullifier is a finite linear combination of quadrature operators
``x[rail, k]`` and ``p[rail, k]`` with rational coefficients and an overall
factor ``sqrt(2) ** sqrt2_power``. The beamsplitter, delay and local-phase maps
act on these coefficient maps; nothing is ever rounded.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping

from .errors import BoundaryError, IncompleteDataError

RAILS = ("A", "B")
QUADS = ("x", "p")

# basis label: (rail, k, quadrature)
Label = tuple


def _label(rail, k, quad) -> Label:
    if rail not in RAILS or quad not in QUADS or int(k) < 0:
        raise ValueError(f"invalid basis label ({rail!r}, {k!r}, {quad!r})")
    return (rail, int(k), quad)


def _sort_key(label):
    rail, k, quad = label
    return (k, RAILS.index(rail), QUADS.index(quad))


@dataclass(frozen=True)
class NullifierVector:
    """Immutable sparse coefficient map times ``sqrt(2) ** sqrt2_power`` (power 0 or 1)."""

    coefficients: tuple  # sorted ((label, Fraction), ...), no zeros
    sqrt2_power: int = 0

    @classmethod
    def from_terms(cls, terms: Mapping | Iterable, sqrt2_power: int = 0, allow_zero: bool = False):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for label, c in items:
            label = _label(*label)
            acc[label] = acc.get(label, Fraction(0)) + Fraction(c)
        coeffs = tuple(sorted(((l, c) for l, c in acc.items() if c != 0), key=lambda t: _sort_key(t[0])))
        if not coeffs and not allow_zero:
            raise ValueError("the zero vector nullifies every state and is not a valid nullifier")
        # unique form: whole powers of 2 live in the coefficients, sqrt2_power is 0 or 1
        p = int(sqrt2_power)
        if p // 2:
            f = Fraction(2) ** (p // 2)
            coeffs = tuple((l, c * f) for l, c in coeffs)
        return cls(coeffs, p % 2 if coeffs else 0)

    @classmethod
    def basis(cls, rail, k, quad):
        return cls.from_terms({(rail, k, quad): 1})

    @cached_property
    def terms(self) -> dict:
        return dict(self.coefficients)

    def coefficient(self, rail, k, quad) -> Fraction:
        """Raw coefficient (without the ``sqrt2`` factor)."""
        return self.terms.get((rail, int(k), quad), Fraction(0))

    def is_zero(self) -> bool:
        return not self.coefficients

    def labels(self):
        return [l for l, _ in self.coefficients]

    def scaled(self, factor) -> "NullifierVector":
        return NullifierVector.from_terms(((l, c * Fraction(factor)) for l, c in self.coefficients),
                                          self.sqrt2_power, allow_zero=True)

    def _aligned(self, other):
        if (self.sqrt2_power - other.sqrt2_power) % 2:
            raise ValueError("cannot add vectors whose sqrt(2) factors differ by an odd power")
        p = min(self.sqrt2_power, other.sqrt2_power)
        a = Fraction(2) ** ((self.sqrt2_power - p) // 2)
        b = Fraction(2) ** ((other.sqrt2_power - p) // 2)
        return p, a, b

    def __add__(self, other):
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        p, a, b = self._aligned(other)
        terms = [(l, c * a) for l, c in self.coefficients] + [(l, c * b) for l, c in other.coefficients]
        return NullifierVector.from_terms(terms, p, allow_zero=True)

    def __neg__(self):
        return self.scaled(-1)

    def __sub__(self, other):
        return self + (-other)

    def __rmul__(self, factor):
        return self.scaled(factor)

    def canonical(self) -> dict:
        """Coefficients up to a positive scalar: divided by the smallest magnitude."""
        if self.is_zero():
            return {}
        m = min(abs(c) for _, c in self.coefficients)
        return {l: c / m for l, c in self.coefficients}

    def equals_up_to_scale(self, other) -> bool:
        return self.canonical() == other.canonical()

    def to_string(self, name: str | None = None, canonical: bool = True) -> str:
        coeffs = self.canonical() if canonical else self.terms
        parts = []
        for label in sorted(coeffs, key=_sort_key):
            c = coeffs[label]
            rail, k, quad = label
            sym = f"{quad}[{rail},{k}]"
            mag = abs(c)
            body = sym if mag == 1 else f"{mag}*{sym}"
            if not parts:
                parts.append(body if c > 0 else f"-{body}")
            else:
                parts.append(("+ " if c > 0 else "- ") + body)
        expr = " ".join(parts) if parts else "0"
        if not canonical and self.sqrt2_power:
            expr = f"sqrt2*({expr})"
        return f"{name} = {expr}" if name else expr

    def __str__(self):
        return self.to_string()


_TERM = re.compile(r"([+-])?\s*(?:(\d+(?:/\d+)?)\*)?([xp])\[([AB]),(\d+)\]")


def parse_nullifier(text: str) -> NullifierVector:
    """Inverse of :meth:`NullifierVector.to_string` (canonical form, optional ``NAME =`` prefix)."""
    expr = text.split("=", 1)[1] if "=" in text else text
    terms = []
    pos = 0
    expr = expr.strip()
    for m in _TERM.finditer(expr):
        if expr[pos: m.start()].strip():
            raise ValueError(f"cannot parse {expr[pos:m.start()]!r}")
        sign = -1 if m.group(1) == "-" else 1
        mag = Fraction(m.group(2)) if m.group(2) else Fraction(1)
        terms.append(((m.group(4), int(m.group(5)), m.group(3)), sign * mag))
        pos = m.end()
    if expr[pos:].strip():
        raise ValueError(f"cannot parse {expr[pos:]!r}")
    return NullifierVector.from_terms(terms)


def bs_transform(n: NullifierVector, k_range=None, direction: str = "forward") -> NullifierVector:
    """Conjugate by the balanced beamsplitter acting on ``(A, k), (B, k)``.

    forward: ``x_A -> (x_A - x_B)/sqrt2``, ``x_B -> (x_A + x_B)/sqrt2`` (same for p).
    inverse: ``x_A -> (x_A + x_B)/sqrt2``, ``x_B -> (x_B - x_A)/sqrt2``.
    ``k_range`` restricts the map to those temporal indices (default: all).
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    ks = None if k_range is None else set(int(k) for k in k_range)
    sign = -1 if direction == "forward" else 1
    out = []
    untouched = []
    for (rail, k, q), c in n.coefficients:
        if ks is not None and k not in ks:
            untouched.append(((rail, k, q), c))
            continue
        if rail == "A":
            out += [(("A", k, q), c), (("B", k, q), sign * c)]
        else:
            out += [(("A", k, q), -sign * c), (("B", k, q), c)]
    mapped = NullifierVector.from_terms(out, n.sqrt2_power - 1, allow_zero=True)
    if untouched:
        # raises: mixed sqrt(2) parity cannot be represented exactly
        mapped = mapped + NullifierVector.from_terms(untouched, n.sqrt2_power)
    return mapped


def delay_transform(n: NullifierVector, shift: int = 1) -> NullifierVector:
    """Move every rail-B coefficient from index ``k`` to ``k + shift``."""
    terms = [((rail, k + shift if rail == "B" else k, q), c) for (rail, k, q), c in n.coefficients]
    return NullifierVector.from_terms(terms, n.sqrt2_power, allow_zero=True)


def phase_redefinition(n: NullifierVector) -> NullifierVector:
    """On even ``k``: ``x -> p`` and ``p -> -x`` (coefficient substitution)."""
    terms = []
    for (rail, k, q), c in n.coefficients:
        if k % 2:
            terms.append(((rail, k, q), c))
        elif q == "x":
            terms.append(((rail, k, "p"), c))
        else:
            terms.append(((rail, k, "x"), -c))
    return NullifierVector.from_terms(terms, n.sqrt2_power, allow_zero=True)


def initial_nullifiers(k: int):
    """Squeezed-source nullifiers ``x[A,k]`` and ``p[B,k]``."""
    return NullifierVector.basis("A", k, "x"), NullifierVector.basis("B", k, "p")


def derivation_chain(k: int):
    """Every stage of the derivation for slot ``k``: list of ``(stage, (x_type, p_type))``."""
    stages = [("squeezers", initial_nullifiers(k))]
    pair = tuple(bs_transform(v, direction="forward") for v in stages[-1][1])
    stages.append(("beamsplitter", pair))
    pair = tuple(delay_transform(v) for v in pair)
    stages.append(("delay", pair))
    pair = tuple(bs_transform(v, direction="inverse") for v in pair)
    stages.append(("second beamsplitter", pair))
    return stages


def derive_exepr_nullifiers(k: int):
    """``(X_k, P_k)`` obtained by pushing the source nullifiers through the network."""
    return derivation_chain(k)[-1][1]


def exepr_nullifier_expected(k: int):
    """Reference patterns ``X_k`` and ``P_k`` written out directly."""
    X = NullifierVector.from_terms({("A", k, "x"): 1, ("B", k, "x"): 1, ("A", k + 1, "x"): 1, ("B", k + 1, "x"): -1})
    P = NullifierVector.from_terms({("A", k, "p"): 1, ("B", k, "p"): 1, ("A", k + 1, "p"): -1, ("B", k + 1, "p"): 1})
    return X, P


def combined_nullifiers(k: int):
    """Pre-phase-redefinition combinations ``(N_A,k, N_B,k)`` of neighbouring ExEPR nullifiers."""
    if k < 1:
        raise BoundaryError(f"cluster nullifiers need k >= 1 (k - 1 must exist), got {k}")
    if k % 2 == 0:
        prev, cur = derive_exepr_nullifiers(k - 1)[0], derive_exepr_nullifiers(k)[0]
        return prev + cur, cur - prev
    prev, cur = derive_exepr_nullifiers(k - 1)[1], derive_exepr_nullifiers(k)[1]
    return cur - prev, prev + cur


def derive_cluster_nullifiers(k: int):
    """``(H_A,k, H_B,k)`` of the weighted dual-rail cluster state."""
    a, b = combined_nullifiers(k)
    return phase_redefinition(a), phase_redefinition(b)


def cluster_nullifier_expected(k: int):
    HA = NullifierVector.from_terms({("A", k, "p"): 2, ("A", k - 1, "x"): 1, ("B", k - 1, "x"): 1,
                                     ("A", k + 1, "x"): 1, ("B", k + 1, "x"): -1})
    HB = NullifierVector.from_terms({("B", k, "p"): 2, ("A", k - 1, "x"): -1, ("B", k - 1, "x"): -1,
                                     ("A", k + 1, "x"): 1, ("B", k + 1, "x"): -1})
    return HA, HB


def commutator(n1: NullifierVector, n2: NullifierVector) -> Fraction:
    """``[n1, n2]`` in units of ``i hbar``: ``sum (c1x c2p - c1p c2x)`` over modes."""
    t2 = n2.terms
    total = Fraction(0)
    for (r, k, q), c in n1.coefficients:
        other = t2.get((r, k, "p" if q == "x" else "x"))
        if other is not None:
            total += c * other if q == "x" else -c * other
    power = n1.sqrt2_power + n2.sqrt2_power
    if total == 0:
        return Fraction(0)
    if power % 2:
        raise ValueError("commutator is an irrational multiple of i*hbar (odd sqrt(2) power)")
    return total * Fraction(2) ** (power // 2)


def evaluate(n: NullifierVector, records) -> float:
    """``sum coefficient * value`` over qumode records.

    ``records`` maps ``(rail, k, quadrature)`` to a number, or is an iterable of
    objects with ``rail``, ``k``, ``quadrature`` and ``value`` attributes.
    """
    if not isinstance(records, Mapping):
        records = {(r.rail, int(r.k), r.quadrature): r.value for r in records}
    total = 0.0
    for label, c in n.coefficients:
        if label not in records:
            raise IncompleteDataError(f"no record for {label[2]}[{label[0]},{label[1]}]")
        total += float(c) * float(records[label])
    return total * 2.0 ** (n.sqrt2_power / 2.0)


def cluster_edges(k_max: int):
    """Graph edges implied by ``H`` nullifiers: ``(node, neighbour, weight)`` for ``1 <= k <= k_max``.

    An edge ``(Lambda,k) -- (Lambda',k')`` with weight ``w`` means ``H_Lambda,k`` adds
    ``w * x[Lambda',k']`` to ``2 p[Lambda,k]`` (canonical scaling).
    """
    edges = []
    for k in range(1, k_max + 1):
        for rail, h in zip(RAILS, derive_cluster_nullifiers(k)):
            for (r2, k2, q), c in sorted(h.canonical().items(), key=lambda t: _sort_key(t[0])):
                if q == "x":
                    edges.append(((rail, k), (r2, k2), c))
    return edges


def derivation_text(k_max: int):
    """Human-readable derivation and the checks that back it.

    Returns ``(text, ok)``; ``ok`` is False if any exact check fails.
    """
    lines = []
    ok = True
    for k in range(k_max):
        stages = derivation_chain(k)
        lines.append(f"-- slot k={k}")
        for stage, (nx, np_) in stages:
            lines.append(f"  {stage:>20}: {nx.to_string(canonical=False)} ;  {np_.to_string(canonical=False)}")
    lines.append("")
    lines.append("ExEPR nullifiers:")
    for k in range(k_max):
        X, P = derive_exepr_nullifiers(k)
        ex, ep = exepr_nullifier_expected(k)
        good = X.equals_up_to_scale(ex) and P.equals_up_to_scale(ep)
        ok &= good
        lines.append(X.to_string(f"X_{k}") + ("" if good else "   <-- MISMATCH"))
        lines.append(P.to_string(f"P_{k}") + ("" if good else "   <-- MISMATCH"))
    lines.append("")
    lines.append("Cluster nullifiers (after local phase redefinition on even k):")
    for k in range(1, k_max + 1):
        HA, HB = derive_cluster_nullifiers(k)
        ea, eb = cluster_nullifier_expected(k)
        good = HA.equals_up_to_scale(ea) and HB.equals_up_to_scale(eb)
        ok &= good
        lines.append(HA.to_string(f"H_A,{k}") + ("" if good else "   <-- MISMATCH"))
        lines.append(HB.to_string(f"H_B,{k}") + ("" if good else "   <-- MISMATCH"))
    lines.append("")
    names, vecs = [], []
    for k in range(k_max):
        X, P = derive_exepr_nullifiers(k)
        names += [f"X_{k}", f"P_{k}"]
        vecs += [X, P]
    lines.append("Commutators [row, col] / (i hbar):")
    lines.append(" " * 6 + "".join(f"{n:>6}" for n in names))
    for n1, v1 in zip(names, vecs):
        row = [commutator(v1, v2) for v2 in vecs]
        ok &= all(c == 0 for c in row)
        lines.append(f"{n1:>6}" + "".join(f"{str(c):>6}" for c in row))
    lines.append("")
    lines.append("all checks passed" if ok else "CHECK FAILED")
    return "\n".join(lines), ok
