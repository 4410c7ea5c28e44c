"""Sum-of-squares relaxation of implication constraints.

An implication  f_1 >= 0, ..., h_1 = 0, ... ==> q >= 0  (with q affine
in the template parameters) is certified by exhibiting multipliers and
writing the residual

    q  -  sum_i  u_i * f_i  -  sum_j  v_j * h_j  -  (cross terms ...)

as a sum of squares.  The multiplier inventory grows with the `level`:

  level 0   one scalar per atom: u_i >= 0 for inequalities, v_j free
            for equalities.
  level 1   adds one scalar per *pair* of distinct atoms, multiplying
            their product; the scalar is free as soon as an equality is
            involved, nonnegative otherwise.  (A square f_i^2 times a
            nonnegative scalar is already a sum of squares, so squares
            would only add redundant directions; they are omitted.)
  level 2   scalar atom multipliers become polynomials: a sum-of-
            squares multiplier (its own Gram matrix) per inequality and
            a free polynomial per equality, both of a configurable
            degree; the pair products of level 1 are kept.

The residual is matched against a Gram matrix over the monomial basis
of half its degree:  residual == b(x)^T G b(x)  with G >= 0, turned
into one linear equation per monomial.  Every unknown is either a free
scalar or an entry of some positive-semidefinite block, so the whole
relaxation is a block-diagonal semidefinite feasibility problem.

`encode_emptiness` builds the related certificate that a closed system
{f_i >= 0, h_l = 0, c > 0} has *no* solutions:

    sum over subsets A of {1..s}:  sigma_A * prod_{i in A} f_i
      +  sum_l  v_l * h_l  +  c^(2k)   ==  0

with sigma_A sums of squares (the strict polynomial c joins the f_i in
the products); for systems without a strict atom c defaults to the
constant 1.  Expanding a decoded certificate must give the zero
polynomial exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .poly import (
    AffineForm,
    Monomial,
    ParamKind,
    Parameter,
    ParamPolynomial,
    Polynomial,
    mono_mul,
    monomials_up_to,
)
from .vcgen import Atom, ImplicationConstraint


class SosError(Exception):
    pass


# ---------------------------------------------------------------------------
# SDP data model

Location = tuple  # ("free", j) or ("psd", block, r, c) with r <= c


@dataclass
class LinearRow:
    """sum coeff * X[block][r, c]  +  sum coeff * y[j]  ==  rhs."""

    psd: list[tuple[int, int, int, Fraction]] = field(default_factory=list)
    free: list[tuple[int, Fraction]] = field(default_factory=list)
    rhs: Fraction = Fraction(0)
    note: str = ""

    def is_vacuous(self) -> bool:
        return not self.psd and not self.free and self.rhs == 0

    def is_contradiction(self) -> bool:
        return not self.psd and not self.free and self.rhs != 0


@dataclass
class SDPProblem:
    block_sizes: list[int] = field(default_factory=list)
    block_labels: list[str] = field(default_factory=list)
    n_free: int = 0
    free_names: list[str] = field(default_factory=list)
    rows: list[LinearRow] = field(default_factory=list)

    def add_block(self, size: int, label: str) -> int:
        self.block_sizes.append(size)
        self.block_labels.append(label)
        return len(self.block_sizes) - 1

    def add_free(self, name: str) -> int:
        self.free_names.append(name)
        self.n_free += 1
        return self.n_free - 1

    def contradictions(self) -> list[LinearRow]:
        return [r for r in self.rows if r.is_contradiction()]


# ---------------------------------------------------------------------------
# multipliers


@dataclass
class Multiplier:
    """One multiplier term: `value` (affine in fresh parameters) times
    the product of `atoms`."""

    kind: str  # "scalar" | "cross" | "poly-sos" | "poly-free"
    nonneg: bool
    atoms: tuple[Atom, ...]
    value: ParamPolynomial
    parameters: tuple[Parameter, ...]
    gram_block: int | None = None
    gram_basis: tuple[Monomial, ...] = ()

    def product_poly(self) -> Polynomial:
        p = self.atoms[0].poly
        for a in self.atoms[1:]:
            p = p * a.poly
        return p


@dataclass
class RelaxedConstraint:
    source: ImplicationConstraint
    multipliers: list[Multiplier]
    residual: ParamPolynomial
    gram_basis: tuple[Monomial, ...]
    gram_block: int | None  # None when the residual is identically zero


@dataclass
class Relaxation:
    n_vars: int
    level: int
    template_params: tuple[Parameter, ...]
    constraints: list[RelaxedConstraint]
    problem: SDPProblem
    locations: dict[Parameter, Location]

    def parameter_value(self, param: Parameter, blocks, frees) -> float:
        where = self.locations[param]
        if where[0] == "free":
            return frees[where[1]]
        _, b, r, c = where
        return blocks[b][r][c]


def _even_up(d: int) -> int:
    return d if d % 2 == 0 else d + 1


def _pair_table(
    basis: Sequence[Monomial],
) -> dict[Monomial, list[tuple[int, int, Fraction]]]:
    table: dict[Monomial, list[tuple[int, int, Fraction]]] = {}
    for r in range(len(basis)):
        for c in range(r, len(basis)):
            m = mono_mul(basis[r], basis[c])
            table.setdefault(m, []).append((r, c, Fraction(1 if r == c else 2)))
    return table


def _pruned_basis(n_vars: int, half: int, residual: ParamPolynomial) -> tuple[Monomial, ...]:
    caps = [0] * n_vars
    total = 0
    for m in residual.coeffs:
        total = max(total, sum(m))
        for i, e in enumerate(m):
            caps[i] = max(caps[i], e)
    half_caps = [(c + 1) // 2 for c in caps]
    half_total = (total + 1) // 2
    return tuple(
        m
        for m in monomials_up_to(n_vars, min(half, half_total))
        if all(e <= hc for e, hc in zip(m, half_caps))
    )


class _Builder:
    def __init__(self, n_vars: int) -> None:
        self.n_vars = n_vars
        self.problem = SDPProblem()
        self.locations: dict[Parameter, Location] = {}

    def free_param(self, name: str, kind: ParamKind) -> Parameter:
        p = Parameter(name, kind)
        self.locations[p] = ("free", self.problem.add_free(name))
        return p

    def nonneg_param(self, name: str, label: str) -> Parameter:
        p = Parameter(name, ParamKind.NONNEG)
        b = self.problem.add_block(1, label)
        self.locations[p] = ("psd", b, 0, 0)
        return p

    def sos_poly(
        self, name: str, label: str, basis: Sequence[Monomial]
    ) -> tuple[ParamPolynomial, tuple[Parameter, ...], int]:
        """A fresh sum-of-squares polynomial b(x)^T Q b(x) with Q >= 0."""
        b = self.problem.add_block(len(basis), label)
        coeffs: dict[Monomial, AffineForm] = {}
        params = []
        for r in range(len(basis)):
            for c in range(r, len(basis)):
                q = Parameter(f"{name}_{r}_{c}", ParamKind.GRAM)
                self.locations[q] = ("psd", b, r, c)
                params.append(q)
                m = mono_mul(basis[r], basis[c])
                term = AffineForm(0, {q: Fraction(1 if r == c else 2)})
                coeffs[m] = coeffs[m] + term if m in coeffs else term
        return ParamPolynomial(self.n_vars, coeffs), tuple(params), b

    def free_poly(
        self, name: str, degree: int
    ) -> tuple[ParamPolynomial, tuple[Parameter, ...]]:
        coeffs: dict[Monomial, AffineForm] = {}
        params = []
        for i, m in enumerate(monomials_up_to(self.n_vars, degree)):
            p = self.free_param(f"{name}_{i}", ParamKind.FREE)
            params.append(p)
            coeffs[m] = AffineForm.of(p)
        return ParamPolynomial(self.n_vars, coeffs), tuple(params)

    def equate_to_gram(
        self,
        residual: ParamPolynomial,
        basis: Sequence[Monomial],
        gram_block: int | None,
        note: str,
    ) -> None:
        """Rows forcing residual == b^T G b, coefficient by coefficient."""
        table = _pair_table(basis) if basis else {}
        degree = max(
            [2 * max((sum(m) for m in basis), default=0)]
            + [sum(m) for m in residual.coeffs]
        )
        for gamma in monomials_up_to(self.n_vars, degree):
            row = LinearRow(note=f"{note}:{gamma}")
            if gram_block is not None:
                for r, c, mult in table.get(gamma, ()):
                    row.psd.append((gram_block, r, c, mult))
            a = residual.coeffs.get(gamma)
            if a is not None:
                for p, coeff in a.linear.items():
                    where = self.locations[p]
                    if where[0] == "free":
                        row.free.append((where[1], -coeff))
                    else:
                        _, b, r, c = where
                        row.psd.append((b, r, c, -coeff))
                row.rhs = a.const
            if not row.is_vacuous():
                self.problem.rows.append(row)


def relax(
    constraints: Iterable[ImplicationConstraint],
    n_vars: int,
    template_params: Sequence[Parameter],
    level: int,
    *,
    mult_degree: int = 2,
    prune_basis: bool = False,
) -> Relaxation:
    """Build the block-diagonal SDP feasibility problem for the enforced
    constraints at the given multiplier level."""
    if level not in (0, 1, 2):
        raise SosError(f"unsupported multiplier level {level}")
    enforced = [c for c in constraints if c.enforced]
    builder = _Builder(n_vars)
    for p in template_params:
        builder.locations[p] = ("free", builder.problem.add_free(p.name))

    relaxed: list[RelaxedConstraint] = []
    for k, cons in enumerate(enforced):
        mults: list[Multiplier] = []
        residual = cons.consequent
        atoms = cons.atoms

        if level <= 1:
            for i, a in enumerate(atoms):
                if a.is_eq:
                    p = builder.free_param(f"v{k}_{i}", ParamKind.FREE)
                else:
                    p = builder.nonneg_param(f"u{k}_{i}", f"{cons.label}:mult {i}")
                value = ParamPolynomial.from_parameter(n_vars, (0,) * n_vars, p)
                mults.append(Multiplier("scalar", not a.is_eq, (a,), value, (p,)))
        if level >= 1:
            for i, j in combinations(range(len(atoms)), 2):
                ai, aj = atoms[i], atoms[j]
                nonneg = not (ai.is_eq or aj.is_eq)
                if nonneg:
                    p = builder.nonneg_param(f"r{k}_{i}_{j}", f"{cons.label}:cross {i},{j}")
                else:
                    p = builder.free_param(f"r{k}_{i}_{j}", ParamKind.FREE)
                value = ParamPolynomial.from_parameter(n_vars, (0,) * n_vars, p)
                mults.append(Multiplier("cross", nonneg, (ai, aj), value, (p,)))
        if level >= 2:
            half = max(1, _even_up(mult_degree) // 2)
            sos_basis = tuple(monomials_up_to(n_vars, half))
            for i, a in enumerate(atoms):
                if a.is_eq:
                    value, params = builder.free_poly(f"w{k}_{i}", mult_degree)
                    mults.append(Multiplier("poly-free", False, (a,), value, params))
                else:
                    value, params, blk = builder.sos_poly(
                        f"s{k}_{i}", f"{cons.label}:poly mult {i}", sos_basis
                    )
                    mults.append(
                        Multiplier(
                            "poly-sos", True, (a,), value, params,
                            gram_block=blk, gram_basis=sos_basis,
                        )
                    )

        for m in mults:
            residual = residual - m.value.mul_poly(m.product_poly())

        if residual.is_zero():
            relaxed.append(RelaxedConstraint(cons, mults, residual, (), None))
            continue
        half = _even_up(residual.degree()) // 2
        if prune_basis:
            basis = _pruned_basis(n_vars, half, residual)
        else:
            basis = tuple(monomials_up_to(n_vars, half))
        blk = builder.problem.add_block(len(basis), f"{cons.label}:gram")
        builder.equate_to_gram(residual, basis, blk, cons.label)
        relaxed.append(RelaxedConstraint(cons, mults, residual, basis, blk))

    return Relaxation(
        n_vars=n_vars,
        level=level,
        template_params=tuple(template_params),
        constraints=relaxed,
        problem=builder.problem,
        locations=builder.locations,
    )


# ---------------------------------------------------------------------------
# emptiness certificates


@dataclass
class SigmaTerm:
    mask: tuple[int, ...]  # indices of the multiplied inequality atoms
    value: ParamPolynomial
    gram_block: int
    gram_basis: tuple[Monomial, ...]


@dataclass
class EmptinessEncoding:
    n_vars: int
    ge: tuple[Polynomial, ...]
    eq: tuple[Polynomial, ...]
    strict: Polynomial | None
    power_k: int
    sigma_degree: int
    sigmas: list[SigmaTerm]
    eq_mults: list[tuple[ParamPolynomial, tuple[Parameter, ...]]]
    problem: SDPProblem
    locations: dict[Parameter, Location]

    def constant_term(self) -> Polynomial:
        base = self.strict if self.strict is not None else Polynomial.constant(self.n_vars, 1)
        return base ** (2 * self.power_k)


@dataclass
class EmptinessCertificate:
    """Concrete (rational) witness that a system has no solutions."""

    n_vars: int
    ge: tuple[Polynomial, ...]
    eq: tuple[Polynomial, ...]
    sigmas: list[tuple[tuple[int, ...], Polynomial]]
    eq_mults: list[Polynomial]
    constant: Polynomial

    def expand(self) -> Polynomial:
        """The certificate identity, evaluated exactly; a valid
        certificate expands to the zero polynomial."""
        total = self.constant
        for mask, sigma in self.sigmas:
            term = sigma
            for i in mask:
                term = term * self.ge[i]
            total = total + term
        for h, v in zip(self.eq, self.eq_mults):
            total = total + v * h
        return total


def encode_emptiness(
    ge: Sequence[Polynomial],
    eq: Sequence[Polynomial] = (),
    strict: Polynomial | None = None,
    *,
    sigma_degree: int = 2,
    power_k: int = 1,
) -> EmptinessEncoding:
    """Encode unsatisfiability of {ge_i >= 0, eq_l = 0, strict > 0}.

    The number of sum-of-squares blocks is 2^s for s inequality atoms
    (the strict atom, when present, is folded into the products via its
    even power term and its own membership in the product family).
    """
    if not ge and strict is None and not eq:
        raise SosError("nothing to refute: the empty system is satisfiable")
    n_vars = (ge[0] if ge else (strict if strict is not None else eq[0])).n_vars
    for p in list(ge) + list(eq) + ([strict] if strict is not None else []):
        if p.n_vars != n_vars:
            raise SosError("all system polynomials must share one variable space")
    prods = list(ge)
    if strict is not None:
        prods.append(strict)
    builder = _Builder(n_vars)
    half = max(1, _even_up(sigma_degree) // 2)
    sos_basis = tuple(monomials_up_to(n_vars, half))

    total = ParamPolynomial.lift(
        (strict if strict is not None else Polynomial.constant(n_vars, 1)) ** (2 * power_k)
    )
    sigmas: list[SigmaTerm] = []
    for bits in range(1 << len(prods)):
        mask = tuple(i for i in range(len(prods)) if bits >> i & 1)
        value, _, blk = builder.sos_poly(f"s{bits}", f"sigma {mask}", sos_basis)
        sigmas.append(SigmaTerm(mask, value, blk, sos_basis))
        term = value
        for i in mask:
            term = term.mul_poly(prods[i])
        total = total + term
    eq_mults = []
    for l, h in enumerate(eq):
        v, params = builder.free_poly(f"v{l}", sigma_degree)
        eq_mults.append((v, params))
        total = total + v.mul_poly(h)

    builder.equate_to_gram(total, (), None, "emptiness")
    return EmptinessEncoding(
        n_vars=n_vars,
        ge=tuple(ge),
        eq=tuple(eq),
        strict=strict,
        power_k=power_k,
        sigma_degree=sigma_degree,
        sigmas=sigmas,
        eq_mults=eq_mults,
        problem=builder.problem,
        locations=builder.locations,
    )


def decode_emptiness(
    enc: EmptinessEncoding, values: Mapping[Parameter, Fraction]
) -> EmptinessCertificate:
    """Instantiate an encoding at rational parameter values."""
    prods = list(enc.ge) + ([enc.strict] if enc.strict is not None else [])
    sigmas = [(t.mask, t.value.instantiate(values)) for t in enc.sigmas]
    eq_mults = [v.instantiate(values) for v, _ in enc.eq_mults]
    cert = EmptinessCertificate(
        n_vars=enc.n_vars,
        ge=tuple(prods),
        eq=enc.eq,
        sigmas=sigmas,
        eq_mults=eq_mults,
        constant=enc.constant_term(),
    )
    return cert
