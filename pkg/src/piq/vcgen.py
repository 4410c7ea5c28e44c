"""Verification-condition generation for annotated loops.

For a loop  while (G) { body }  with pre-expectation `pre`, post-
expectation `post`, and a parametric invariant template I, the
inductive conditions are

    (pre)   on initial states:       pre  <= I
    (post)  outside the guard:       I    <= post
    (inv)   inside the guard:        I    <= wp(body, I)

Each condition compares two guarded polynomials, so it splits into one
polynomial implication per pair of case-split regions:

  * "matched" constraints compare the two values on the intersection of
    their regions; together they are exactly the comparison, because
    both case splits cover the state space.  These are enforced.
  * "one-sided" constraints assert that a bare expectation is
    nonnegative where the other side's indicator vanishes (post >= 0 on
    G, wp(body, I) >= 0 off G).  They restate that expectations are
    nonnegative-valued — a typing fact about the inputs, not a property
    of I — and are usually false as unrestricted polynomial
    inequalities.  They are emitted for reporting and random-sampling
    checks but excluded from certificate search.

Antecedents are conjunctions of polynomial atoms (p >= 0 or p = 0).
Guard regions arrive as disjuncts of the guard's DNF; strict literals
are replaced by their closure (sound: it enlarges the antecedent), or
by the exact unit-shifted bound when the polynomial is integer-valued.
Initial-state equalities from the init prefix join the (pre)
antecedent; '#assume' atoms join every antecedent.

A single directly-nested inner loop is summarized by a second template
J: entering runs of the inner loop must lower-bound I through J, J must
be inductive for the inner body, and on inner exit J must re-establish
I through the trailing statements.  Five matched groups result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .lang import AnnotatedLoop, Conj, Guard, Lt, Neg, guard_not
from .poly import ParamPolynomial, Polynomial
from .wp import Expectation, disjoint, wp


class VcError(Exception):
    pass


@dataclass(frozen=True)
class Atom:
    """A closed polynomial atom: poly >= 0, or poly = 0 when is_eq."""

    poly: Polynomial
    is_eq: bool
    origin: str  # "guard" | "init" | "assume"

    def render(self, names: Sequence[str]) -> str:
        op = "=" if self.is_eq else ">="
        return f"{self.poly.render(names)} {op} 0"

    def holds(self, point) -> bool:
        v = self.poly.evaluate(point)
        return v == 0 if self.is_eq else v >= 0


@dataclass(frozen=True)
class ImplicationConstraint:
    """atoms  ==>  consequent >= 0, with the consequent affine in the
    template parameters."""

    label: str
    atoms: tuple[Atom, ...]
    consequent: ParamPolynomial
    enforced: bool
    family: str  # "matched" | "one-sided"

    def render(self, names: Sequence[str], *, hide_assume: bool = False) -> str:
        shown = [a for a in self.atoms if not (hide_assume and a.origin == "assume")]
        antecedent = ", ".join(a.render(names) for a in shown) or "true"
        tag = self.label if self.enforced else f"{self.label} advisory"
        return f"[{tag}] {antecedent} ==> {self.consequent.render(names)} >= 0"


# ---------------------------------------------------------------------------
# guards -> DNF -> atom lists


def _dnf(g: Guard) -> list[list[Guard]]:
    """Disjunctive normal form over literals (Lt / Neg(Lt)).  Disjuncts
    may overlap; together they are equivalent to g."""
    if isinstance(g, Lt):
        return [[g]]
    if isinstance(g, Conj):
        return [a + b for a in _dnf(g.left) for b in _dnf(g.right)]
    assert isinstance(g, Neg)
    inner = g.inner
    if isinstance(inner, Lt):
        return [[g]]
    if isinstance(inner, Neg):
        return _dnf(inner.inner)
    assert isinstance(inner, Conj)
    return _dnf(guard_not(inner.left)) + _dnf(guard_not(inner.right))


_TRUE = "true"
_FALSE = "false"


def _literal_atom(lit: Guard, int_vars: frozenset[int]) -> Atom | str:
    """Close a strict literal into an atom; constants decide themselves."""
    if isinstance(lit, Neg):
        assert isinstance(lit.inner, Lt)
        p = lit.inner.poly  # p >= 0
        if p.degree() <= 0:
            return _TRUE if p.constant_part() >= 0 else _FALSE
        return Atom(p, False, "guard")
    assert isinstance(lit, Lt)
    p = lit.poly  # p < 0
    if p.degree() <= 0:
        return _TRUE if p.constant_part() < 0 else _FALSE
    if _integer_valued(p, int_vars):
        one = Polynomial.constant(p.n_vars, 1)
        return Atom(-p - one, False, "guard")  # p <= -1
    return Atom(-p, False, "guard")  # closure: p <= 0


def _integer_valued(p: Polynomial, int_vars: frozenset[int]) -> bool:
    return all(c.denominator == 1 for c in p.coeffs.values()) and all(
        i in int_vars for i in p.variables_used()
    )


def _canonical_sign(p: Polynomial) -> tuple[Polynomial, int]:
    """Orient p so its leading (highest-order) monomial is positive."""
    for m in sorted(p.coeffs, key=lambda mm: (sum(mm), tuple(-e for e in mm)), reverse=True):
        if p.coeffs[m] < 0:
            return -p, -1
        return p, 1
    return p, 1


def merge_atoms(atoms: Iterable[Atom]) -> tuple[Atom, ...] | None:
    """Dedupe atoms and fold same-origin pairs {p >= 0, -p >= 0} into
    p = 0; inequalities implied by an equality on the same polynomial
    are dropped.

    Opposite inequalities of *different* origins (say a guard's x <= 0
    meeting an assumption's x >= 0) are kept side by side: a pair of
    nonnegative multipliers has the same certifying power as one free
    multiplier, and keeping them preserves each origin's atom
    inventory, which downstream reporting counts per origin.

    Returns None when the conjunction is recognizably empty (constant
    contradictions only; deeper emptiness is left to the vacuity check
    in verification).
    """
    order: list[Polynomial] = []
    ges: dict[Polynomial, dict[int, Atom]] = {}  # canon -> sign -> first atom
    eqs: dict[Polynomial, Atom] = {}
    for a in atoms:
        if a.poly.degree() <= 0:
            c = a.poly.constant_part()
            if (a.is_eq and c != 0) or (not a.is_eq and c < 0):
                return None
            continue
        canon, sign = _canonical_sign(a.poly)
        if canon not in ges and canon not in eqs:
            order.append(canon)
        if a.is_eq:
            eqs.setdefault(canon, Atom(canon, True, a.origin))
        else:
            ges.setdefault(canon, {}).setdefault(sign, a)
    out: list[Atom] = []
    for canon in order:
        if canon in eqs:
            out.append(eqs[canon])
            continue
        bucket = ges[canon]
        if len(bucket) == 2 and bucket[1].origin == bucket[-1].origin:
            out.append(Atom(canon, True, bucket[1].origin))
            continue
        out.extend(bucket.values())
    return tuple(out)


def guard_atom_regions(
    g: Guard, int_vars: frozenset[int], origin: str = "guard"
) -> list[tuple[Atom, ...]]:
    """Nonempty DNF regions of g as merged atom conjunctions."""
    regions: list[tuple[Atom, ...]] = []
    for disjunct in _dnf(g):
        atoms: list[Atom] = []
        empty = False
        for lit in disjunct:
            res = _literal_atom(lit, int_vars)
            if res == _TRUE:
                continue
            if res == _FALSE:
                empty = True
                break
            assert isinstance(res, Atom)
            atoms.append(Atom(res.poly, res.is_eq, origin))
        if empty:
            continue
        merged = merge_atoms(atoms)
        if merged is None:
            continue
        if merged not in regions:
            regions.append(merged)
    return regions


def _expectation_regions(
    exp: Expectation, int_vars: frozenset[int]
) -> list[tuple[tuple[Atom, ...], ParamPolynomial]]:
    """Disjoint value regions of an expectation, as atom conjunctions."""
    out: list[tuple[tuple[Atom, ...], ParamPolynomial]] = []
    for piece in disjoint(exp):
        if not piece.cond:
            out.append(((), piece.value))
            continue
        cond: Guard = piece.cond[0]
        for extra in piece.cond[1:]:
            cond = Conj(cond, extra)
        for atoms in guard_atom_regions(cond, int_vars):
            out.append((atoms, piece.value))
    return out


# ---------------------------------------------------------------------------
# constraint assembly


def _assume_atoms(loop: AnnotatedLoop) -> list[Atom]:
    atoms: list[Atom] = []
    for lit in loop.assume_literals:
        res = _literal_atom(lit, loop.int_vars)
        if res == _TRUE:
            continue
        if res == _FALSE:
            raise VcError("an '#assume' atom is constantly false")
        assert isinstance(res, Atom)
        atoms.append(Atom(res.poly, res.is_eq, "assume"))
    return atoms


def _init_atoms(loop: AnnotatedLoop) -> list[Atom]:
    n = loop.n_vars
    out = []
    for var, value in loop.init:
        p = Polynomial.variable(n, var) - Polynomial.constant(n, value)
        out.append(Atom(p, True, "init"))
    return out


class _Emitter:
    def __init__(self) -> None:
        self.constraints: list[ImplicationConstraint] = []

    def emit(
        self,
        label: str,
        atoms: Iterable[Atom],
        consequent: ParamPolynomial,
        *,
        enforced: bool,
        family: str,
    ) -> None:
        merged = merge_atoms(atoms)
        if merged is None:
            return  # the region is empty: no states to constrain
        c = ImplicationConstraint(label, merged, consequent, enforced, family)
        if c not in self.constraints:
            self.constraints.append(c)


def _comparison_groups(
    em: _Emitter,
    *,
    lhs: ParamPolynomial,
    on_regions: list[tuple[Atom, ...]],
    off_regions: list[tuple[Atom, ...]],
    rhs_regions: list[tuple[tuple[Atom, ...], ParamPolynomial]],
    extra: Sequence[Atom],
    matched_label: str,
    typing_label: str,
) -> None:
    """Emit  lhs * [on] <= rhs  for a guarded rhs:

    matched:  on-region ^ rhs-region   ==>  rhs_value - lhs >= 0
    typing:   off-region ^ rhs-region  ==>  rhs_value >= 0      (advisory)
    """
    idx = 0
    for region in on_regions:
        for r_atoms, value in rhs_regions:
            idx += 1
            em.emit(
                f"{matched_label} {idx}" if len(on_regions) * len(rhs_regions) > 1 else matched_label,
                list(region) + list(r_atoms) + list(extra),
                value - lhs,
                enforced=True,
                family="matched",
            )
    idx = 0
    for region in off_regions:
        for r_atoms, value in rhs_regions:
            if value.is_zero():
                continue  # 0 >= 0 carries no information
            idx += 1
            em.emit(
                f"{typing_label} {idx}",
                list(region) + list(r_atoms) + list(extra),
                value,
                enforced=False,
                family="one-sided",
            )


def loop_constraints(
    loop: AnnotatedLoop,
    template: ParamPolynomial,
    *,
    mean_substitution: bool = False,
) -> list[ImplicationConstraint]:
    """The full constraint system for a single (non-nested) loop."""
    if loop.inner is not None:
        raise VcError("loop has an inner loop; use nested_constraints")
    iv = loop.int_vars
    assume = _assume_atoms(loop)
    em = _Emitter()

    g_regions = guard_atom_regions(loop.guard, iv)
    notg_regions = guard_atom_regions(guard_not(loop.guard), iv)

    em.emit(
        "pre",
        _init_atoms(loop) + assume,
        template - ParamPolynomial.lift(loop.pre),
        enforced=True,
        family="matched",
    )

    post_regions = [((), ParamPolynomial.lift(loop.post))]
    _comparison_groups(
        em,
        lhs=template,
        on_regions=notg_regions,
        off_regions=g_regions,
        rhs_regions=post_regions,
        extra=assume,
        matched_label="post",
        typing_label="post-nonneg",
    )

    body_wp = wp(loop.loop_body, Expectation.of(template), mean_substitution=mean_substitution)
    wp_regions = _expectation_regions(body_wp, iv)
    _comparison_groups(
        em,
        lhs=template,
        on_regions=g_regions,
        off_regions=notg_regions,
        rhs_regions=wp_regions,
        extra=assume,
        matched_label="inv",
        typing_label="inv-nonneg",
    )
    return em.constraints


def nested_constraints(
    loop: AnnotatedLoop,
    template: ParamPolynomial,
    inner_template: ParamPolynomial,
    *,
    mean_substitution: bool = False,
) -> list[ImplicationConstraint]:
    """Constraints for one directly-nested inner loop, summarized by a
    second template J (`inner_template`):

      pre         init states:            pre <= I
      post        off the outer guard:    I <= post
      enter       on the outer guard:     I <= wp(before, J)
      inner-step  on the inner guard:     J <= wp(inner body, J)
      inner-exit  off the inner guard:    J <= wp(after, I)
    """
    if loop.inner is None:
        raise VcError("loop has no inner loop; use loop_constraints")
    iv = loop.int_vars
    assume = _assume_atoms(loop)
    em = _Emitter()
    inner = loop.inner

    g_regions = guard_atom_regions(loop.guard, iv)
    notg_regions = guard_atom_regions(guard_not(loop.guard), iv)
    gi_regions = guard_atom_regions(inner.guard, iv)
    notgi_regions = guard_atom_regions(guard_not(inner.guard), iv)

    em.emit(
        "pre",
        _init_atoms(loop) + assume,
        template - ParamPolynomial.lift(loop.pre),
        enforced=True,
        family="matched",
    )
    _comparison_groups(
        em,
        lhs=template,
        on_regions=notg_regions,
        off_regions=g_regions,
        rhs_regions=[((), ParamPolynomial.lift(loop.post))],
        extra=assume,
        matched_label="post",
        typing_label="post-nonneg",
    )
    kw = {"mean_substitution": mean_substitution}
    enter_regions = _expectation_regions(wp(inner.before, Expectation.of(inner_template), **kw), iv)
    _comparison_groups(
        em,
        lhs=template,
        on_regions=g_regions,
        off_regions=notg_regions,
        rhs_regions=enter_regions,
        extra=assume,
        matched_label="enter",
        typing_label="enter-nonneg",
    )
    step_regions = _expectation_regions(wp(inner.body, Expectation.of(inner_template), **kw), iv)
    _comparison_groups(
        em,
        lhs=inner_template,
        on_regions=gi_regions,
        off_regions=notgi_regions,
        rhs_regions=step_regions,
        extra=assume,
        matched_label="inner-step",
        typing_label="inner-step-nonneg",
    )
    exit_regions = _expectation_regions(wp(inner.after, Expectation.of(template), **kw), iv)
    _comparison_groups(
        em,
        lhs=inner_template,
        on_regions=notgi_regions,
        off_regions=gi_regions,
        rhs_regions=exit_regions,
        extra=assume,
        matched_label="inner-exit",
        typing_label="inner-exit-nonneg",
    )
    return em.constraints


def constraints_for(
    loop: AnnotatedLoop,
    template: ParamPolynomial,
    inner_template: ParamPolynomial | None = None,
    *,
    mean_substitution: bool = False,
) -> list[ImplicationConstraint]:
    if loop.inner is not None:
        if inner_template is None:
            raise VcError("an inner template is required for a nested loop")
        return nested_constraints(
            loop, template, inner_template, mean_substitution=mean_substitution
        )
    return loop_constraints(loop, template, mean_substitution=mean_substitution)


def instantiate_constraints(
    constraints: Sequence[ImplicationConstraint],
    assignment,
) -> list[ImplicationConstraint]:
    """The same constraints with template parameters replaced by the
    rational values in `assignment` (a Parameter -> value mapping), so
    every consequent becomes concrete."""
    out = []
    for c in constraints:
        concrete = ParamPolynomial.lift(c.consequent.instantiate(assignment))
        out.append(
            ImplicationConstraint(c.label, c.atoms, concrete, c.enforced, c.family)
        )
    return out


def render_system(
    constraints: Sequence[ImplicationConstraint],
    names: Sequence[str],
    assume_atoms: Sequence[Atom] = (),
) -> str:
    lines = [f"vars: {' '.join(names)}"]
    if assume_atoms:
        lines.append("assume: " + ", ".join(a.render(names) for a in assume_atoms))
    for c in constraints:
        lines.append(c.render(names, hide_assume=bool(assume_atoms)))
    return "\n".join(lines) + "\n"


def loop_assume_atoms(loop: AnnotatedLoop) -> list[Atom]:
    """Public accessor for the loop's closed '#assume' atoms."""
    return _assume_atoms(loop)
