"""Exact multivariate polynomial arithmetic over the rationals.

Monomials are dense exponent tuples, one slot per variable.  All
coefficients are `fractions.Fraction`; nothing in this module touches
floats, so downstream layers can rely on exact identities.  Polynomials
with unknown coefficients (templates) are represented separately as
`ParamPolynomial`, whose coefficients are affine forms over `Parameter`
objects.  Products of two parametric polynomials are deliberately
unsupported: every identity we emit must stay affine in the unknowns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

Monomial = tuple[int, ...]

Rat = Fraction
RatLike = int | Fraction


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def mono_degree(a: Monomial) -> int:
    return sum(a)


def grlex_key(a: Monomial):
    """Sort key: total degree first, then lexicographic with x1 > x2 > ..."""
    return (sum(a), tuple(-e for e in a))


def monomials_up_to(n_vars: int, degree: int) -> list[Monomial]:
    """All exponent tuples in `n_vars` variables of total degree <= degree,
    in graded lexicographic order.  Count is C(n_vars + degree, degree)."""
    if n_vars < 0 or degree < 0:
        raise ValueError("n_vars and degree must be nonnegative")
    out: list[Monomial] = []
    for d in range(degree + 1):
        out.extend(_monomials_exact(n_vars, d))
    return out


def _monomials_exact(n_vars: int, degree: int) -> list[Monomial]:
    if n_vars == 0:
        return [()] if degree == 0 else []
    res: list[Monomial] = []
    for first in range(degree, -1, -1):
        for rest in _monomials_exact(n_vars - 1, degree - first):
            res.append((first,) + rest)
    return res


def count_monomials(n_vars: int, degree: int) -> int:
    return math.comb(n_vars + degree, degree)


class ParamKind(Enum):
    TEMPLATE = "template-coefficient"
    NONNEG = "nonneg-multiplier"
    FREE = "free-multiplier"
    GRAM = "gram-entry"


@dataclass(frozen=True)
class Parameter:
    """A named scalar unknown.  Identity is the (name, kind) pair."""

    name: str
    kind: ParamKind

    def __repr__(self) -> str:
        return self.name


class Polynomial:
    """Immutable polynomial with Fraction coefficients.

    `coeffs` maps exponent tuples to nonzero Fractions; the zero
    polynomial has an empty mapping.  All operands of a binary operation
    must agree on `n_vars`.
    """

    __slots__ = ("n_vars", "coeffs")

    def __init__(self, n_vars: int, coeffs: Mapping[Monomial, RatLike] | None = None):
        self.n_vars = n_vars
        clean: dict[Monomial, Fraction] = {}
        if coeffs:
            for m, c in coeffs.items():
                if len(m) != n_vars:
                    raise ValueError(f"monomial {m} has wrong arity for {n_vars} variables")
                c = Fraction(c)
                if c:
                    clean[m] = c
        self.coeffs = clean

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero(n_vars: int) -> "Polynomial":
        return Polynomial(n_vars)

    @staticmethod
    def constant(n_vars: int, c: RatLike) -> "Polynomial":
        return Polynomial(n_vars, {(0,) * n_vars: Fraction(c)})

    @staticmethod
    def variable(n_vars: int, index: int) -> "Polynomial":
        if not 0 <= index < n_vars:
            raise ValueError(f"variable index {index} out of range")
        m = tuple(1 if i == index else 0 for i in range(n_vars))
        return Polynomial(n_vars, {m: Fraction(1)})

    # -- queries ------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.coeffs

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1 by convention."""
        if not self.coeffs:
            return -1
        return max(mono_degree(m) for m in self.coeffs)

    def constant_part(self) -> Fraction:
        return self.coeffs.get((0,) * self.n_vars, Fraction(0))

    def coefficient(self, m: Monomial) -> Fraction:
        return self.coeffs.get(m, Fraction(0))

    def variables_used(self) -> set[int]:
        used: set[int] = set()
        for m in self.coeffs:
            for i, e in enumerate(m):
                if e:
                    used.add(i)
        return used

    # -- arithmetic ---------------------------------------------------

    def _check(self, other: "Polynomial") -> None:
        if self.n_vars != other.n_vars:
            raise ValueError("variable-count mismatch")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out.get(m, Fraction(0)) + c
        return Polynomial(self.n_vars, out)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.n_vars, {m: -c for m, c in self.coeffs.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.coeffs.items():
            for m2, c2 in other.coeffs.items():
                m = mono_mul(m1, m2)
                out[m] = out.get(m, Fraction(0)) + c1 * c2
        return Polynomial(self.n_vars, out)

    def scale(self, c: RatLike) -> "Polynomial":
        c = Fraction(c)
        return Polynomial(self.n_vars, {m: c * v for m, v in self.coeffs.items()})

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(self.n_vars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.n_vars == other.n_vars
            and self.coeffs == other.coeffs
        )

    def __hash__(self) -> int:
        return hash((self.n_vars, frozenset(self.coeffs.items())))

    # -- substitution and evaluation ----------------------------------

    def substitute(self, replacements: Mapping[int, "Polynomial"]) -> "Polynomial":
        """Simultaneously substitute variables by polynomials.

        Every replacement must have the same variable count as self;
        unmentioned variables map to themselves.
        """
        for idx, rep in replacements.items():
            if rep.n_vars != self.n_vars:
                raise ValueError("replacement variable-count mismatch")
            if not 0 <= idx < self.n_vars:
                raise ValueError(f"variable index {idx} out of range")
        cache: dict[tuple[int, int], Polynomial] = {}

        def var_power(i: int, e: int) -> Polynomial:
            key = (i, e)
            if key not in cache:
                base = replacements.get(i) or Polynomial.variable(self.n_vars, i)
                cache[key] = base ** e
            return cache[key]

        total = Polynomial.zero(self.n_vars)
        for m, c in self.coeffs.items():
            term = Polynomial.constant(self.n_vars, c)
            for i, e in enumerate(m):
                if e:
                    term = term * var_power(i, e)
            total = total + term
        return total

    def evaluate(self, point: Sequence[RatLike]) -> Fraction:
        if len(point) != self.n_vars:
            raise ValueError("point has wrong arity")
        pt = [Fraction(v) for v in point]
        total = Fraction(0)
        for m, c in self.coeffs.items():
            val = c
            for i, e in enumerate(m):
                if e:
                    val *= pt[i] ** e
            total += val
        return total

    def extend(self, extra: int) -> "Polynomial":
        """Append `extra` fresh variables (exponent 0 everywhere)."""
        if extra == 0:
            return self
        pad = (0,) * extra
        return Polynomial(self.n_vars + extra, {m + pad: c for m, c in self.coeffs.items()})

    def render(self, names: Sequence[str] | None = None) -> str:
        return render_terms(
            sorted(self.coeffs.items(), key=lambda kv: grlex_key(kv[0])),
            self.n_vars,
            names,
        )

    def __repr__(self) -> str:
        return f"Polynomial({self.render()})"


class AffineForm:
    """An expression  const + sum(coeff_p * p)  over parameters."""

    __slots__ = ("const", "linear")

    def __init__(self, const: RatLike = 0, linear: Mapping[Parameter, RatLike] | None = None):
        self.const = Fraction(const)
        self.linear: dict[Parameter, Fraction] = {}
        if linear:
            for p, c in linear.items():
                c = Fraction(c)
                if c:
                    self.linear[p] = c

    @staticmethod
    def of(p: Parameter) -> "AffineForm":
        return AffineForm(0, {p: Fraction(1)})

    def is_zero(self) -> bool:
        return not self.const and not self.linear

    def is_constant(self) -> bool:
        return not self.linear

    def __add__(self, other: "AffineForm") -> "AffineForm":
        lin = dict(self.linear)
        for p, c in other.linear.items():
            lin[p] = lin.get(p, Fraction(0)) + c
        return AffineForm(self.const + other.const, lin)

    def __neg__(self) -> "AffineForm":
        return AffineForm(-self.const, {p: -c for p, c in self.linear.items()})

    def __sub__(self, other: "AffineForm") -> "AffineForm":
        return self + (-other)

    def scale(self, c: RatLike) -> "AffineForm":
        c = Fraction(c)
        return AffineForm(self.const * c, {p: v * c for p, v in self.linear.items()})

    def instantiate(self, assignment: Mapping[Parameter, RatLike]) -> Fraction:
        total = self.const
        for p, c in self.linear.items():
            if p not in assignment:
                raise KeyError(f"no value for parameter {p.name}")
            total += c * Fraction(assignment[p])
        return total

    def parameters(self) -> set[Parameter]:
        return set(self.linear)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, AffineForm)
            and self.const == other.const
            and self.linear == other.linear
        )

    def __repr__(self) -> str:
        parts = []
        if self.const or not self.linear:
            parts.append(str(self.const))
        for p, c in sorted(self.linear.items(), key=lambda kv: kv[0].name):
            parts.append(f"{c}*{p.name}" if c != 1 else p.name)
        return " + ".join(parts)


class ParamPolynomial:
    """Polynomial whose coefficients are affine in a set of parameters.

    The parametric analogue of `Polynomial`; multiplication is only
    defined against parameter-free polynomials so coefficients stay
    affine.
    """

    __slots__ = ("n_vars", "coeffs")

    def __init__(self, n_vars: int, coeffs: Mapping[Monomial, AffineForm] | None = None):
        self.n_vars = n_vars
        clean: dict[Monomial, AffineForm] = {}
        if coeffs:
            for m, a in coeffs.items():
                if len(m) != n_vars:
                    raise ValueError("monomial arity mismatch")
                if not a.is_zero():
                    clean[m] = a
        self.coeffs = clean

    @staticmethod
    def zero(n_vars: int) -> "ParamPolynomial":
        return ParamPolynomial(n_vars)

    @staticmethod
    def lift(p: Polynomial) -> "ParamPolynomial":
        return ParamPolynomial(p.n_vars, {m: AffineForm(c) for m, c in p.coeffs.items()})

    @staticmethod
    def from_parameter(n_vars: int, m: Monomial, p: Parameter) -> "ParamPolynomial":
        return ParamPolynomial(n_vars, {m: AffineForm.of(p)})

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_concrete(self) -> bool:
        return all(a.is_constant() for a in self.coeffs.values())

    def degree(self) -> int:
        if not self.coeffs:
            return -1
        return max(mono_degree(m) for m in self.coeffs)

    def parameters(self) -> set[Parameter]:
        out: set[Parameter] = set()
        for a in self.coeffs.values():
            out |= a.parameters()
        return out

    def __add__(self, other: "ParamPolynomial") -> "ParamPolynomial":
        if self.n_vars != other.n_vars:
            raise ValueError("variable-count mismatch")
        out = dict(self.coeffs)
        for m, a in other.coeffs.items():
            out[m] = out[m] + a if m in out else a
        return ParamPolynomial(self.n_vars, out)

    def __neg__(self) -> "ParamPolynomial":
        return ParamPolynomial(self.n_vars, {m: -a for m, a in self.coeffs.items()})

    def __sub__(self, other: "ParamPolynomial") -> "ParamPolynomial":
        return self + (-other)

    def scale(self, c: RatLike) -> "ParamPolynomial":
        return ParamPolynomial(self.n_vars, {m: a.scale(c) for m, a in self.coeffs.items()})

    def mul_poly(self, other: Polynomial) -> "ParamPolynomial":
        """Multiply by a parameter-free polynomial."""
        if self.n_vars != other.n_vars:
            raise ValueError("variable-count mismatch")
        out: dict[Monomial, AffineForm] = {}
        for m1, a in self.coeffs.items():
            for m2, c in other.coeffs.items():
                m = mono_mul(m1, m2)
                piece = a.scale(c)
                out[m] = out[m] + piece if m in out else piece
        return ParamPolynomial(self.n_vars, out)

    def substitute(self, replacements: Mapping[int, Polynomial]) -> "ParamPolynomial":
        """Substitute variables by parameter-free polynomials."""
        for rep in replacements.values():
            if rep.n_vars != self.n_vars:
                raise ValueError("replacement variable-count mismatch")
        cache: dict[tuple[int, int], Polynomial] = {}

        def var_power(i: int, e: int) -> Polynomial:
            key = (i, e)
            if key not in cache:
                base = replacements.get(i) or Polynomial.variable(self.n_vars, i)
                cache[key] = base ** e
            return cache[key]

        total = ParamPolynomial.zero(self.n_vars)
        for m, a in self.coeffs.items():
            term = Polynomial.constant(self.n_vars, 1)
            for i, e in enumerate(m):
                if e:
                    term = term * var_power(i, e)
            total = total + ParamPolynomial(self.n_vars, {tm: a.scale(tc) for tm, tc in term.coeffs.items()})
        return total

    def instantiate(self, assignment: Mapping[Parameter, RatLike]) -> Polynomial:
        return Polynomial(
            self.n_vars, {m: a.instantiate(assignment) for m, a in self.coeffs.items()}
        )

    def to_polynomial(self) -> Polynomial:
        """Strict conversion; fails if any parameter remains."""
        if not self.is_concrete():
            missing = sorted(p.name for p in self.parameters())
            raise ValueError(f"unresolved parameters: {', '.join(missing)}")
        return Polynomial(self.n_vars, {m: a.const for m, a in self.coeffs.items()})

    def extend(self, extra: int) -> "ParamPolynomial":
        if extra == 0:
            return self
        pad = (0,) * extra
        return ParamPolynomial(self.n_vars + extra, {m + pad: a for m, a in self.coeffs.items()})

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, ParamPolynomial)
            and self.n_vars == other.n_vars
            and self.coeffs == other.coeffs
        )

    def render(self, names: Sequence[str] | None = None) -> str:
        items = sorted(self.coeffs.items(), key=lambda kv: grlex_key(kv[0]))
        parts = []
        for m, a in items:
            mono = render_monomial(m, self.n_vars, names)
            if a.is_constant():
                parts.append((a.const, mono))
            else:
                parts.append((a, mono))
        if not parts:
            return "0"
        chunks = []
        for coeff, mono in parts:
            if isinstance(coeff, AffineForm):
                text = f"({coeff!r})"
                if mono:
                    text += f"*{mono}"
                chunks.append(("+", text))
            else:
                sign = "-" if coeff < 0 else "+"
                mag = abs(coeff)
                if mono and mag == 1:
                    text = mono
                elif mono:
                    text = f"{mag}*{mono}"
                else:
                    text = str(mag)
                chunks.append((sign, text))
        first_sign, first_text = chunks[0]
        out = ("-" if first_sign == "-" else "") + first_text
        for sign, text in chunks[1:]:
            out += f" {sign} {text}"
        return out

    def __repr__(self) -> str:
        return f"ParamPolynomial({self.render()})"


def render_monomial(m: Monomial, n_vars: int, names: Sequence[str] | None = None) -> str:
    if names is None:
        names = [f"x{i+1}" for i in range(n_vars)]
    parts = []
    for i, e in enumerate(m):
        if e == 1:
            parts.append(names[i])
        elif e > 1:
            parts.append(f"{names[i]}^{e}")
    return "*".join(parts)


def render_terms(
    items: Iterable[tuple[Monomial, Fraction]], n_vars: int, names: Sequence[str] | None
) -> str:
    chunks: list[tuple[str, str]] = []
    for m, c in items:
        mono = render_monomial(m, n_vars, names)
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        if mono and mag == 1:
            text = mono
        elif mono:
            text = f"{mag}*{mono}"
        else:
            text = str(mag)
        chunks.append((sign, text))
    if not chunks:
        return "0"
    first_sign, first_text = chunks[0]
    out = ("-" if first_sign == "-" else "") + first_text
    for sign, text in chunks[1:]:
        out += f" {sign} {text}"
    return out


def template_param_name(m: Monomial) -> str:
    """Deterministic template-coefficient name for a monomial.

    Single-digit variable indices concatenate (c0, c1, c12, c233, ...);
    wider systems fall back to an unambiguous underscore form.
    """
    if mono_degree(m) == 0:
        return "c0"
    idx: list[int] = []
    for i, e in enumerate(m):
        idx.extend([i + 1] * e)
    if len(m) <= 9:
        return "c" + "".join(str(i) for i in idx)
    return "c_" + "_".join(str(i) for i in idx)


def make_template(n_vars: int, degree: int, prefix: str = "c") -> tuple[ParamPolynomial, list[Parameter]]:
    """Fully generic template of the given total degree.

    Returns the parametric polynomial and its parameters in graded-lex
    monomial order.
    """
    coeffs: dict[Monomial, AffineForm] = {}
    params: list[Parameter] = []
    for m in monomials_up_to(n_vars, degree):
        name = template_param_name(m)
        if prefix != "c":
            name = prefix + name[1:]
        p = Parameter(name, ParamKind.TEMPLATE)
        params.append(p)
        coeffs[m] = AffineForm.of(p)
    return ParamPolynomial(n_vars, coeffs), params
