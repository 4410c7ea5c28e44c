"""Weakest pre-expectation transformer for loop-free statements.

An expectation is carried as a sum of guarded pieces  sum_j [c_j] * q_j
(Iverson-bracket semantics): pieces may overlap, and a state covered by
no piece contributes zero.  Pushing the sum backward through a statement
is linear, so probabilistic choice is just concatenation of the two
scaled piece lists.  Assignment substitutes into both guards and values;
a random right-hand side is eliminated on the spot by replacing each
draw-power with the distribution's raw moment (draws in one statement
are independent, so a mixed power factors into a product of moments).
The guard of a piece can never be randomized — that would leave the
expectation outside the guarded-polynomial class — so assigning a draw
to a variable mentioned in a downstream guard is an error.

`disjoint` refines the overlapping sum into a disjoint case split,
which is what the constraint generator consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .lang import (
    Abort,
    Assign,
    Conj,
    Discrete,
    Distribution,
    Guard,
    Ite,
    Lt,
    Neg,
    Normal,
    Prob,
    Seq,
    Skip,
    Stmt,
    Uniform,
    conjuncts,
    guard_holds,
    guard_not,
)
from .poly import Monomial, Parameter, ParamPolynomial, Polynomial, RatLike


class WpError(Exception):
    pass


# ---------------------------------------------------------------------------
# raw moments


def moment(dist: Distribution, k: int) -> Fraction:
    """k-th raw moment E[r^k], exact."""
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    if k == 0:
        return Fraction(1)
    if isinstance(dist, Uniform):
        a, b = dist.lo, dist.hi
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))
    if isinstance(dist, Normal):
        if k == 1:
            return dist.mean
        if isinstance(dist.std, str):
            raise WpError(
                f"distribution {dist.render()} has a symbolic standard deviation; "
                f"only moments of order <= 1 are available, but order {k} was "
                "required (lower the template degree or give sigma numerically)"
            )
        mu, var = dist.mean, dist.std * dist.std
        m_prev2, m_prev1 = Fraction(1), mu
        for j in range(2, k + 1):
            m_prev2, m_prev1 = m_prev1, mu * m_prev1 + (j - 1) * var * m_prev2
        return m_prev1
    if isinstance(dist, Discrete):
        return sum((p * v ** k for v, p in dist.items), Fraction(0))
    raise AssertionError(type(dist))


def mean(dist: Distribution) -> Fraction:
    return moment(dist, 1)


# ---------------------------------------------------------------------------
# guarded expectations


@dataclass(frozen=True)
class Piece:
    cond: tuple[Guard, ...]  # conjunction; empty = everywhere
    value: ParamPolynomial


@dataclass(frozen=True)
class Expectation:
    n_vars: int
    pieces: tuple[Piece, ...]

    @staticmethod
    def of(p: ParamPolynomial | Polynomial) -> "Expectation":
        if isinstance(p, Polynomial):
            p = ParamPolynomial.lift(p)
        return Expectation(p.n_vars, (Piece((), p),))

    def scale(self, c: Fraction) -> "Expectation":
        if c == 0:
            return Expectation(self.n_vars, ())
        return Expectation(
            self.n_vars, tuple(Piece(pc.cond, pc.value.scale(c)) for pc in self.pieces)
        )

    def __add__(self, other: "Expectation") -> "Expectation":
        assert self.n_vars == other.n_vars
        return Expectation(self.n_vars, self.pieces + other.pieces)

    def evaluate(
        self,
        point: Sequence[RatLike],
        assignment: Mapping[Parameter, RatLike] | None = None,
    ) -> Fraction:
        total = Fraction(0)
        for piece in self.pieces:
            if all(guard_holds(g, point) for g in piece.cond):
                value = piece.value.instantiate(assignment or {})
                total += value.evaluate(point)
        return total


# ---------------------------------------------------------------------------
# substitution helpers


def guard_substitute(g: Guard, replacements: Mapping[int, Polynomial]) -> Guard:
    if isinstance(g, Lt):
        return Lt(g.poly.substitute(replacements))
    if isinstance(g, Conj):
        return Conj(guard_substitute(g.left, replacements), guard_substitute(g.right, replacements))
    return Neg(guard_substitute(g.inner, replacements))


def _guard_mentions(g: Guard, var: int) -> bool:
    if isinstance(g, Lt):
        return var in g.poly.variables_used()
    if isinstance(g, Conj):
        return _guard_mentions(g.left, var) or _guard_mentions(g.right, var)
    return _guard_mentions(g.inner, var)


def _reduce_draws(
    value: ParamPolynomial, n_vars: int, dists: Sequence[Distribution]
) -> ParamPolynomial:
    """Integrate out trailing draw slots via independent raw moments."""
    out = ParamPolynomial.zero(n_vars)
    for m, a in value.coeffs.items():
        head: Monomial = m[:n_vars]
        factor = Fraction(1)
        for dist, e in zip(dists, m[n_vars:]):
            if e:
                factor *= moment(dist, e)
        out = out + ParamPolynomial(n_vars, {head: a.scale(factor)})
    return out


# ---------------------------------------------------------------------------
# the transformer


def wp(stmt: Stmt, exp: Expectation, *, mean_substitution: bool = False) -> Expectation:
    """Weakest pre-expectation of a loop-free statement."""
    if isinstance(stmt, Skip):
        return exp
    if isinstance(stmt, Abort):
        return Expectation(exp.n_vars, ())
    if isinstance(stmt, Seq):
        for item in reversed(stmt.items):
            exp = wp(item, exp, mean_substitution=mean_substitution)
        return exp
    if isinstance(stmt, Prob):
        left = wp(stmt.left, exp, mean_substitution=mean_substitution)
        right = wp(stmt.right, exp, mean_substitution=mean_substitution)
        return left.scale(stmt.prob) + right.scale(1 - stmt.prob)
    if isinstance(stmt, Ite):
        then_side = wp(stmt.then_branch, exp, mean_substitution=mean_substitution)
        else_side = wp(stmt.else_branch, exp, mean_substitution=mean_substitution)
        pieces = [Piece((stmt.guard,) + p.cond, p.value) for p in then_side.pieces]
        pieces += [Piece((guard_not(stmt.guard),) + p.cond, p.value) for p in else_side.pieces]
        return Expectation(exp.n_vars, tuple(pieces))
    if isinstance(stmt, Assign):
        return _wp_assign(stmt, exp, mean_substitution)
    raise WpError(f"statement {type(stmt).__name__} has no loop-free pre-expectation")


def _wp_assign(stmt: Assign, exp: Expectation, mean_substitution: bool) -> Expectation:
    n = exp.n_vars
    rhs = stmt.rhs
    if rhs.is_deterministic() or mean_substitution:
        replacement = rhs.base
        for coeff, dist in rhs.draws:
            replacement = replacement + Polynomial.constant(n, coeff * mean(dist))
        reps = {stmt.var: replacement}
        pieces = tuple(
            Piece(
                tuple(guard_substitute(g, reps) for g in p.cond),
                p.value.substitute(reps),
            )
            for p in exp.pieces
        )
        return Expectation(n, pieces)

    # Random assignment: substitute  x -> base + sum(c_i * r_i)  with the
    # draws living in fresh trailing slots, then integrate them out.
    d = len(rhs.draws)
    dists = [dist for _, dist in rhs.draws]
    replacement = rhs.base.extend(d)
    for i, (coeff, _) in enumerate(rhs.draws):
        replacement = replacement + Polynomial.variable(n + d, n + i).scale(coeff)
    reps = {stmt.var: replacement}
    pieces = []
    for p in exp.pieces:
        for g in p.cond:
            if _guard_mentions(g, stmt.var):
                raise WpError(
                    "the randomly assigned variable appears in the guard of a "
                    "later case split, so the pre-expectation leaves the guarded "
                    "polynomial class (split the program or make the guard "
                    "independent of the draw)"
                )
        value = p.value.extend(d).substitute(reps)
        pieces.append(Piece(p.cond, _reduce_draws(value, n, dists)))
    return Expectation(n, tuple(pieces))


# ---------------------------------------------------------------------------
# disjoint refinement


def _literal_truth(g: Guard) -> bool | None:
    """Decide constant guards; None when state-dependent."""
    if isinstance(g, Lt):
        if g.poly.degree() <= 0:
            return g.poly.constant_part() < 0
        return None
    if isinstance(g, Conj):
        lt = _literal_truth(g.left)
        rt = _literal_truth(g.right)
        if lt is False or rt is False:
            return False
        if lt is True and rt is True:
            return True
        return None
    t = _literal_truth(g.inner)
    return None if t is None else not t


def _prune(units: tuple[Guard, ...]) -> tuple[Guard, ...] | None:
    """Drop constant-true units, dedupe; None when the region is empty.

    Emptiness detection is deliberately cheap: structural complements,
    and per-polynomial interval clashes among the simple literals."""
    kept: list[Guard] = []
    seen: set[Guard] = set()
    # canonical non-constant part -> (lower, lower_strict, upper, upper_strict)
    intervals: dict[Polynomial, list] = {}

    def note_bound(q: Polynomial, is_ge: bool) -> bool:
        """Record 'q < 0' (is_ge=False) or 'q >= 0'; False when contradictory."""
        c = q.constant_part()
        q_nc = q - Polynomial.constant(q.n_vars, c)
        lead = min(q_nc.coeffs, key=lambda m: (sum(m), tuple(-e for e in m)))
        flip = q_nc.coeffs[lead] < 0
        p0 = -q_nc if flip else q_nc
        # q < 0:  p0 < -c   (or flipped:  p0 > c)
        # q >= 0: p0 >= -c  (or flipped:  p0 <= c)
        box = intervals.setdefault(p0, [None, False, None, False])
        if is_ge:
            if flip:
                bound, strict, side = c, False, "hi"
            else:
                bound, strict, side = -c, False, "lo"
        else:
            if flip:
                bound, strict, side = c, True, "lo"
            else:
                bound, strict, side = -c, True, "hi"
        if side == "lo":
            if box[0] is None or bound > box[0] or (bound == box[0] and strict):
                box[0], box[1] = bound, strict
        else:
            if box[2] is None or bound < box[2] or (bound == box[2] and strict):
                box[2], box[3] = bound, strict
        if box[0] is not None and box[2] is not None:
            if box[0] > box[2] or (box[0] == box[2] and (box[1] or box[3])):
                return False
        return True

    for u in units:
        t = _literal_truth(u)
        if t is True:
            continue
        if t is False:
            return None
        if u in seen:
            continue
        if guard_not(u) in seen:
            return None
        if isinstance(u, Lt):
            if not note_bound(u.poly, is_ge=False):
                return None
        elif isinstance(u, Neg) and isinstance(u.inner, Lt):
            if not note_bound(u.inner.poly, is_ge=True):
                return None
        seen.add(u)
        kept.append(u)
    return tuple(kept)


def disjoint(exp: Expectation) -> tuple[Piece, ...]:
    """Refine the piece sum into a disjoint cover of the whole state space.

    Every state satisfies exactly one returned condition, and the
    expectation's value there is the corresponding polynomial (zero-valued
    regions are kept: downstream constraints need them).
    """
    # Structural grouping first: identical conditions just add up.
    grouped: dict[tuple[Guard, ...], ParamPolynomial] = {}
    for piece in exp.pieces:
        cond = _prune(tuple(u for g in piece.cond for u in conjuncts(g)))
        if cond is None:
            continue
        if cond in grouped:
            grouped[cond] = grouped[cond] + piece.value
        else:
            grouped[cond] = piece.value

    regions: list[tuple[tuple[Guard, ...], ParamPolynomial]] = [
        ((), ParamPolynomial.zero(exp.n_vars))
    ]
    for cond, value in grouped.items():
        new_regions: list[tuple[tuple[Guard, ...], ParamPolynomial]] = []
        for lits, acc in regions:
            inside = _prune(lits + cond)
            if inside is not None:
                new_regions.append((inside, acc + value))
            # Complement of  u1 & ... & uk  as disjoint slabs:
            # !u1  |  u1 & !u2  |  u1 & u2 & !u3  |  ...
            for j, unit in enumerate(cond):
                slab = _prune(lits + cond[:j] + (guard_not(unit),))
                if slab is not None:
                    new_regions.append((slab, acc))
        regions = new_regions
    return tuple(Piece(cond, value) for cond, value in regions)
