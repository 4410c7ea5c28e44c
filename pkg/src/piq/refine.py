"""Invariant synthesis driver.

The search escalates a polynomial template through even degrees.  For
each degree the implication constraints are relaxed at increasing
multiplier strength (bare scalars, scalars on atom products, then
polynomial multipliers) until the semidefinite relaxation is feasible;
the solved template is rounded to rational coefficients and checked
independently.  A rejected candidate triggers refinement actions, one
per attempt and in this order:

  (a) margin strengthening — every inequality atom p >= 0 in an
      enforced antecedent becomes p >= delta, shaving a thin boundary
      layer off the antecedent region.  This only eases the synthesis
      problem; verification always runs against the original
      constraints, so it cannot admit an unsound result.
  (b) multiplier escalation — the next step of the relaxation
      schedule (a superset of multipliers, so feasibility is kept).
  (c) candidate blocking — a random linear cut through the rejected
      parameter point's neighborhood, excluding a small ball around it
      from the template parameter space.  Repeatable; each cut draws a
      fresh direction from the seeded generator.

Successful candidates are packaged with an exact rational certificate
when one can be constructed: all multipliers and Gram matrices from a
re-solve with the candidate pinned are rounded, the rounding defect is
absorbed back into the Gram diagonal band, and positive
semidefiniteness is decided exactly.  When that fails the numeric and
sampling layers of verification still apply.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from time import perf_counter
from typing import Iterable, Sequence

import numpy as np

from .lang import AnnotatedLoop
from .poly import Monomial, ParamKind, Parameter, Polynomial, make_template
from .sdp import SolverConfig, solve_feasibility
from .sos import LinearRow, Relaxation, relax
from .vcgen import (
    Atom,
    ImplicationConstraint,
    constraints_for,
    instantiate_constraints,
)
from .verify import (
    Certificate,
    ConstraintCertificate,
    MultiplierWitness,
    VerificationReport,
    VerifyConfig,
    check_invariant,
    gram_polynomial,
    multiplier_schedule,
)


logger = logging.getLogger(__name__)


class RefineError(Exception):
    pass


class BudgetExhausted(RefineError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SynthesisConfig:
    d_start: int = 2
    d_step: int = 2
    d_max: int = 8
    truncate_eps: float = 1e-6
    max_denominator: int = 10_000
    budget_per_degree: int = 4
    mult_degrees: tuple[int, ...] = (0, 2)
    verify_samples: int = 100_000
    box_bound: float = 10.0
    seed: int = 0
    margin_delta: Fraction = Fraction(1, 10)
    cut_radius: Fraction = Fraction(1, 1000)
    mean_substitution: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        for name in ("d_start", "d_step", "d_max"):
            v = getattr(self, name)
            if v <= 0 or v % 2:
                raise RefineError(f"{name} must be a positive even integer, got {v}")
        if self.d_start > self.d_max:
            raise RefineError("d_start exceeds d_max")
        if self.budget_per_degree < 1:
            raise RefineError("refinement budget must be at least 1")
        if not self.mult_degrees or any(d % 2 for d in self.mult_degrees):
            raise RefineError("multiplier degrees must be a nonempty even sequence")
        if self.max_denominator < 1:
            raise RefineError("max_denominator must be positive")

    def verify_config(self) -> VerifyConfig:
        return VerifyConfig(
            samples=self.verify_samples,
            box_bound=self.box_bound,
            seed=self.seed,
            mult_degrees=self.mult_degrees,
            solver=self.solver,
        )


# ---------------------------------------------------------------------------
# rounding


def round_coefficient(value: float, truncate_eps: float, max_denominator: int) -> Fraction:
    if not math.isfinite(value):
        raise RefineError(f"cannot round non-finite coefficient {value!r}")
    if abs(value) < truncate_eps:
        return Fraction(0)
    return Fraction(value).limit_denominator(max_denominator)


def round_coefficients(values: Iterable[float], cfg: SynthesisConfig) -> list[Fraction]:
    """Truncate tiny entries to zero, then take the best rational
    approximation with a bounded denominator.  Idempotent: rounding an
    already-rounded vector reproduces it."""
    return [
        round_coefficient(v, cfg.truncate_eps, cfg.max_denominator) for v in values
    ]


# ---------------------------------------------------------------------------
# exact positive semidefiniteness (synthesis-side)


def psd_check(mat: Sequence[Sequence[Fraction]]) -> bool:
    """Exact PSD decision by LDL^T with greatest-diagonal pivoting.
    When every remaining diagonal entry is zero, semidefiniteness
    requires the whole remaining submatrix to vanish."""
    n = len(mat)
    a = [[Fraction(mat[r][c]) for c in range(n)] for r in range(n)]
    active = list(range(n))
    while active:
        p = max(active, key=lambda i: a[i][i])
        d = a[p][p]
        if d < 0:
            return False
        if d == 0:
            return all(a[i][j] == 0 for i in active for j in active)
        active.remove(p)
        for i in active:
            f = a[i][p] / d
            if not f:
                continue
            for j in active:
                a[i][j] -= f * a[p][j]
    return True


# ---------------------------------------------------------------------------
# exact certificate construction


def _absorb_pair(
    gamma: Monomial, basis: Sequence[Monomial], index: dict[Monomial, int]
) -> tuple[int, int] | None:
    """A basis pair (r, c) with basis[r]*basis[c] == gamma, preferring
    the diagonal so defects land on it when possible."""
    if all(e % 2 == 0 for e in gamma):
        half = tuple(e // 2 for e in gamma)
        i = index.get(half)
        if i is not None:
            return i, i
    for r, br in enumerate(basis):
        rem = tuple(g - b for g, b in zip(gamma, br))
        if any(e < 0 for e in rem):
            continue
        c = index.get(rem)
        if c is not None and c >= r:
            return r, c
    return None


def _snapped_gram(
    g: "np.ndarray", size: int, cfg: SynthesisConfig
) -> list[list[Fraction]] | None:
    """Try to write the float Gram as an exact rational combination
    sum s_k w_k w_k^T where every w_k is a small-denominator rational
    vector close to a significant eigendirection.  Boundary
    certificates often require the Gram's kernel to contain specific
    rational directions exactly (for instance when the consequent
    vanishes on part of the region boundary); snapping reproduces that
    structure, which entrywise or factored rounding destroys.  Returns
    None when some eigendirection has no nearby small-rational ray."""
    eigvals, eigvecs = np.linalg.eigh(g)
    top = max(float(eigvals[-1]), 1.0) if size else 1.0
    keep_eps = math.sqrt(cfg.truncate_eps) * top
    pieces: list[tuple[Fraction, list[Fraction]]] = []
    for k in range(size):
        lam = float(eigvals[k])
        if lam <= keep_eps:
            continue
        v = eigvecs[:, k]
        direction = v / float(np.max(np.abs(v)))
        snapped = [
            Fraction(float(x)).limit_denominator(32) for x in direction
        ]
        if any(
            abs(float(s) - float(x)) > 1e-2 for s, x in zip(snapped, direction)
        ):
            return None
        w = np.array([float(s) for s in snapped])
        norm2 = float(w @ w)
        scale = round_coefficient(
            float(w @ g @ w) / (norm2 * norm2), cfg.truncate_eps, cfg.max_denominator
        )
        if scale < 0:
            return None
        pieces.append((scale, snapped))
    out = [[Fraction(0)] * size for _ in range(size)]
    for scale, w in pieces:
        for r in range(size):
            if not w[r]:
                continue
            for c in range(size):
                out[r][c] += scale * w[r] * w[c]
    dev = max(
        (abs(float(out[r][c]) - float(g[r][c])) for r in range(size) for c in range(size)),
        default=0.0,
    )
    if dev > keep_eps:
        return None
    return out


def _rounded_gram(
    block, size: int, cfg: SynthesisConfig, inflate: Fraction = Fraction(0)
) -> list[list[Fraction]]:
    """Round a float Gram block to an exactly PSD rational matrix.
    Entrywise rounding of a near-singular PSD matrix is generically
    indefinite, so the result is always assembled as an exact product:
    preferably from snapped rational eigendirections, otherwise from an
    entrywise-rounded factor F with block = F F^T.  Either way the
    outcome is a Gram matrix of rational vectors, PSD by construction.
    A small positive `inflate` scales the result by (1 + inflate)^2;
    when the Gram sits on a one-parameter family of decompositions this
    biases the matched multipliers upward, away from their sign
    constraints."""
    g = np.asarray(block, dtype=float)[:size, :size]
    g = (g + g.T) / 2.0
    scale = 1 + inflate
    snapped = _snapped_gram(g, size, cfg)
    if snapped is not None:
        return [[scale * scale * v for v in row] for row in snapped]
    eigvals, eigvecs = np.linalg.eigh(g)
    fac = eigvecs * np.sqrt(np.where(eigvals > 0.0, eigvals, 0.0))
    entry_eps = math.sqrt(cfg.truncate_eps)
    rows = [
        [
            scale
            * round_coefficient(float(fac[r, k]), entry_eps, cfg.max_denominator)
            for k in range(size)
        ]
        for r in range(size)
    ]
    return [
        [sum(rows[r][k] * rows[c][k] for k in range(size)) for c in range(size)]
        for r in range(size)
    ]


def _repair_multipliers(
    witnesses: list[MultiplierWitness],
    multipliers,
    defect: Polynomial,
    n_vars: int,
) -> Polynomial:
    """Cancel as much of the rounding defect as possible by exact
    corrections to the scalar, cross, and free polynomial multipliers
    (sum-of-squares multipliers stay tied to their Grams).  Zero-forced
    Gram entries cannot absorb odd-monomial defects, so pushing those
    defects back into the multipliers is what makes exact certificates
    reachable at all.  Returns the defect that remains."""
    cols: list[tuple[int, Monomial | None, Polynomial]] = []
    for mi, m in enumerate(multipliers):
        if m.kind == "poly-sos":
            continue
        prod = m.product_poly()
        if m.kind == "poly-free":
            for mono in m.value.coeffs:
                cols.append((mi, mono, Polynomial(n_vars, {mono: 1}) * prod))
        else:
            cols.append((mi, None, prod))
    if not cols:
        return defect

    def preference(col: tuple[int, Monomial | None, Polynomial]):
        # Corrections should land on sign-free multipliers, or failing
        # that on the largest nonnegative ones, so that no small
        # nonnegative multiplier gets pushed below zero.
        mi, mono, _ = col
        m = multipliers[mi]
        w = witnesses[mi]
        mag = abs(float(w.value.coefficient(mono))) if mono else abs(
            float(w.value.constant_part())
        )
        return (1 if m.nonneg else 0, -mag)

    cols.sort(key=preference)
    rows = sorted(
        {g for _, _, p in cols for g in p.coeffs} | set(defect.coeffs)
    )
    row_pos = {g: i for i, g in enumerate(rows)}

    def solve(active: list[int]) -> list[Fraction]:
        # Gaussian elimination; inactive and free columns keep a zero
        # correction.
        a = [[Fraction(0)] * len(active) for _ in rows]
        for jj, j in enumerate(active):
            for g, coeff in cols[j][2].coeffs.items():
                a[row_pos[g]][jj] = coeff
        b = [defect.coeffs.get(g, Fraction(0)) for g in rows]
        delta = [Fraction(0)] * len(cols)
        pivots: list[tuple[int, int]] = []
        used_rows: set[int] = set()
        for jj in range(len(active)):
            pr = next(
                (i for i in range(len(rows)) if i not in used_rows and a[i][jj] != 0),
                None,
            )
            if pr is None:
                continue
            used_rows.add(pr)
            pivots.append((pr, jj))
            inv = 1 / a[pr][jj]
            a[pr] = [v * inv for v in a[pr]]
            b[pr] *= inv
            for i in range(len(rows)):
                if i != pr and a[i][jj] != 0:
                    f = a[i][jj]
                    a[i] = [v - f * w for v, w in zip(a[i], a[pr])]
                    b[i] -= f * b[pr]
        for pr, jj in pivots:
            delta[active[jj]] = b[pr]
        return delta

    # If the unique correction would push a nonnegative multiplier below
    # zero, ban its column and re-solve; the leftover goes to the Gram.
    active = list(range(len(cols)))
    while True:
        delta = solve(active)
        banned = [
            j
            for j in active
            if delta[j]
            and multipliers[cols[j][0]].nonneg
            and cols[j][1] is None
            and witnesses[cols[j][0]].value.constant_part() + delta[j] < 0
        ]
        if not banned:
            break
        active = [j for j in active if j not in banned]
        if not active:
            return defect

    for j, (mi, mono, _) in enumerate(cols):
        if not delta[j]:
            continue
        w = witnesses[mi]
        shift = (
            Polynomial.constant(n_vars, delta[j])
            if mono is None
            else Polynomial(n_vars, {mono: delta[j]})
        )
        w.value = w.value + shift
    rest = defect
    for j, (_, _, p) in enumerate(cols):
        if delta[j]:
            rest = rest - p.scale(delta[j])
    return rest


def build_certificate(
    rel: Relaxation,
    blocks,
    frees,
    cfg: SynthesisConfig,
    inflate: Fraction = Fraction(0),
) -> Certificate | None:
    """Round every multiplier and Gram matrix of a solved relaxation
    into rationals, repair the rounding defect exactly (first through
    the multipliers, then through the residual Gram), and keep the
    result only if all sign and PSD conditions hold exactly.  Returns
    None when no exact certificate emerges."""
    n = rel.n_vars
    assignment: dict[Parameter, Fraction] = {}
    for p in rel.locations:
        v = float(rel.parameter_value(p, blocks, frees))
        r = round_coefficient(v, cfg.truncate_eps, cfg.max_denominator)
        if p.kind is ParamKind.NONNEG and r < 0:
            r = Fraction(0)
        assignment[p] = r

    out: list[ConstraintCertificate] = []
    for rc in rel.constraints:
        atom_index = {a: i for i, a in enumerate(rc.source.atoms)}
        witnesses: list[MultiplierWitness] = []
        for m in rc.multipliers:
            indices = tuple(atom_index[a] for a in m.atoms)
            value = m.value.instantiate(assignment)
            if m.kind == "poly-sos":
                gram = _rounded_gram(
                    blocks[m.gram_block], len(m.gram_basis), cfg, inflate
                )
                value = gram_polynomial(n, m.gram_basis, gram)
                witnesses.append(
                    MultiplierWitness(
                        m.kind,
                        indices,
                        value,
                        gram=tuple(tuple(row) for row in gram),
                        basis=m.gram_basis,
                    )
                )
            else:
                witnesses.append(MultiplierWitness(m.kind, indices, value))

        consequent = rc.source.consequent.instantiate(assignment)

        def residual_of(ws: list[MultiplierWitness]) -> Polynomial:
            res = consequent
            for w in ws:
                prod = Polynomial.constant(n, 1)
                for i in w.atom_indices:
                    prod = prod * rc.source.atoms[i].poly
                res = res - w.value * prod
            return res

        if rc.gram_block is None:
            gram = None
            basis: tuple[Monomial, ...] = ()
            defect = residual_of(witnesses)
            if not defect.is_zero():
                _repair_multipliers(witnesses, rc.multipliers, defect, n)
            if not residual_of(witnesses).is_zero():
                logger.debug("certificate [%s]: residual not closed", rc.source.label)
                return None
        else:
            basis = rc.gram_basis
            gram = _rounded_gram(blocks[rc.gram_block], len(basis), cfg, inflate)
            defect = residual_of(witnesses) - gram_polynomial(n, basis, gram)
            rest = _repair_multipliers(witnesses, rc.multipliers, defect, n)
            index = {b: i for i, b in enumerate(basis)}
            for gamma, delta in rest.coeffs.items():
                pair = _absorb_pair(gamma, basis, index)
                if pair is None:
                    logger.debug(
                        "certificate [%s]: monomial %s not absorbable",
                        rc.source.label,
                        gamma,
                    )
                    return None
                r, c = pair
                if r == c:
                    gram[r][c] += delta
                else:
                    gram[r][c] += delta / 2
                    gram[c][r] += delta / 2
            if residual_of(witnesses) != gram_polynomial(n, basis, gram):
                logger.debug("certificate [%s]: identity not closed", rc.source.label)
                return None  # repair failed to close the identity
            if not psd_check(gram):
                logger.debug("certificate [%s]: residual Gram not PSD", rc.source.label)
                return None

        for w, m in zip(witnesses, rc.multipliers):
            if m.nonneg and m.kind != "poly-sos":
                if w.value.degree() > 0 or w.value.constant_part() < 0:
                    logger.debug(
                        "certificate [%s]: multiplier on %s signed wrong: %s",
                        rc.source.label,
                        w.atom_indices,
                        w.value,
                    )
                    return None
        out.append(
            ConstraintCertificate(
                rc.source.label,
                consequent,
                witnesses,
                tuple(tuple(row) for row in gram) if gram is not None else None,
                basis,
            )
        )
    return Certificate(n, out)


# ---------------------------------------------------------------------------
# refinement actions


def strengthen_constraints(
    constraints: Sequence[ImplicationConstraint], delta: Fraction
) -> list[ImplicationConstraint]:
    """Action (a): replace every inequality atom p >= 0 of an enforced
    antecedent by p - delta >= 0 (synthesis only; never used for
    verification)."""
    out = []
    for c in constraints:
        if not c.enforced:
            out.append(c)
            continue
        atoms = tuple(
            a
            if a.is_eq
            else Atom(a.poly - Polynomial.constant(a.poly.n_vars, delta), False, a.origin)
            for a in c.atoms
        )
        out.append(ImplicationConstraint(c.label, atoms, c.consequent, c.enforced, c.family))
    return out


def _draw_cut(
    rng: np.random.Generator, point: Sequence[float], radius: Fraction
) -> tuple[list[Fraction], Fraction]:
    """Action (c): a random linear cut  g . c >= g . point + radius
    excluding a ball around the rejected parameter point."""
    raw = rng.standard_normal(len(point))
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        raw = np.ones(len(point))
        norm = math.sqrt(len(point))
    direction = [Fraction(v / norm).limit_denominator(1000) for v in raw]
    if all(d == 0 for d in direction):
        direction[0] = Fraction(1)
    offset = sum(
        d * Fraction(p).limit_denominator(10**6)
        for d, p in zip(direction, point)
    ) + radius
    return direction, offset


def _add_cut_rows(
    rel: Relaxation, cuts: Sequence[tuple[list[Fraction], Fraction]],
) -> None:
    for k, (direction, offset) in enumerate(cuts):
        blk = rel.problem.add_block(1, f"cut {k}")
        row = LinearRow(psd=[(blk, 0, 0, Fraction(-1))], rhs=offset, note=f"cut {k}")
        for p, d in zip(rel.template_params, direction):
            if d:
                where = rel.locations[p]
                row.free.append((where[1], d))
        rel.problem.rows.append(row)


@dataclass
class RefineState:
    """Mutable per-degree search state consumed by refine_constraints."""

    base: list[ImplicationConstraint]
    template_params: tuple[Parameter, ...]
    schedule: tuple[tuple[int, int], ...]
    cfg: SynthesisConfig
    rng: np.random.Generator
    level_idx: int = 0
    margin_applied: bool = False
    cuts: list[tuple[list[Fraction], Fraction]] = field(default_factory=list)
    rejected: tuple[float, ...] | None = None
    refinements: int = 0
    actions: list[str] = field(default_factory=list)

    @property
    def level(self) -> int:
        return self.schedule[self.level_idx][0]

    @property
    def mult_degree(self) -> int:
        return self.schedule[self.level_idx][1]

    def constraints(self) -> list[ImplicationConstraint]:
        if self.margin_applied:
            return strengthen_constraints(self.base, self.cfg.margin_delta)
        return list(self.base)


def refine_constraints(state: RefineState) -> list[ImplicationConstraint]:
    """Apply the first applicable refinement action — margin
    strengthening, then multiplier escalation, then candidate blocking —
    and return the constraint set for the next attempt."""
    cfg = state.cfg
    if state.refinements >= cfg.budget_per_degree:
        raise BudgetExhausted(
            f"refinement budget ({cfg.budget_per_degree}) exhausted"
        )
    if not state.margin_applied:
        state.margin_applied = True
        state.actions.append("margin")
    elif state.level_idx + 1 < len(state.schedule):
        state.level_idx += 1
        state.actions.append(f"escalate:{state.level}.{state.mult_degree}")
    elif state.rejected is not None:
        cut = _draw_cut(state.rng, state.rejected, cfg.cut_radius)
        state.cuts.append(cut)
        state.actions.append(f"cut#{len(state.cuts)}")
    else:
        raise BudgetExhausted("no applicable refinement action")
    state.refinements += 1
    return state.constraints()


# ---------------------------------------------------------------------------
# result packaging


@dataclass
class AttemptRecord:
    degree: int
    level: int
    mult_degree: int
    actions: tuple[str, ...]
    solver_status: str
    margin: float
    candidate: str | None = None
    verdict: str | None = None
    detail: str = ""


@dataclass
class InvariantResult:
    status: str  # "Verified" | "CandidateUnverified" | "Failed"
    invariant: Polynomial | None
    inner_invariant: Polynomial | None
    certificate: Certificate | None
    report: VerificationReport | None
    history: list[AttemptRecord]
    timings: dict[str, float]


# ---------------------------------------------------------------------------
# the driver


_TRACE_CAPS: tuple[int | None, ...] = (64, 4096, None)


def _cap_traces(problem, bound: int) -> None:
    """Append rows tr(X_b) + s_b = bound (s_b a fresh slack) for every
    existing block.  A pinned re-solve has forced-zero Gram blocks that
    hold the feasibility margin at zero, and on that boundary the
    multiplier blocks can drift along directions that cancel inside the
    constraint rows; capping the traces keeps the iterates bounded so
    the solution rounds cleanly."""
    for b, size in enumerate(list(problem.block_sizes)):
        slack = problem.add_block(1, f"trace cap {b}")
        problem.rows.append(
            LinearRow(
                psd=[(b, r, r, Fraction(1)) for r in range(size)]
                + [(slack, 0, 0, Fraction(1))],
                rhs=Fraction(bound),
                note=f"trace cap {b}",
            )
        )


def _pinned_certificate(
    base: Sequence[ImplicationConstraint],
    n_vars: int,
    assignment: dict[Parameter, Fraction],
    cfg: SynthesisConfig,
) -> tuple[Certificate | None, float]:
    """Re-solve the original constraints with the candidate fixed and
    round that solution into an exact certificate.  Solving afresh
    concentrates the margin in the multipliers, which is where rounding
    noise must be absorbed.  Solves with capped block traces first:
    bounded iterates land near small witnesses, which round best."""
    concrete = instantiate_constraints(base, assignment)
    elapsed = 0.0
    for level, md in multiplier_schedule(cfg.mult_degrees):
        for bound in _TRACE_CAPS:
            rel = relax(concrete, n_vars, [], level, mult_degree=md)
            if bound is not None:
                _cap_traces(rel.problem, bound)
            t0 = perf_counter()
            sol = solve_feasibility(rel.problem, cfg.solver)
            elapsed += perf_counter() - t0
            if sol.status != "feasible":
                continue
            for inflate in (Fraction(0), Fraction(1, 4096)):
                cert = build_certificate(rel, sol.blocks, sol.frees, cfg, inflate)
                if cert is not None:
                    return cert, elapsed
    return None, elapsed


def synthesize(loop: AnnotatedLoop, cfg: SynthesisConfig | None = None) -> InvariantResult:
    """Search for a verified polynomial invariant of the annotated loop
    (jointly with an inner invariant when the loop nests another).
    Deterministic for a fixed configuration and seed."""
    cfg = cfg or SynthesisConfig()
    t_start = perf_counter()
    solver_time = 0.0
    rng = np.random.default_rng(cfg.seed)
    schedule = tuple(multiplier_schedule(cfg.mult_degrees))
    vcfg = cfg.verify_config()
    n = loop.n_vars
    history: list[AttemptRecord] = []
    fallback: tuple[Polynomial, Polynomial | None, Certificate | None, VerificationReport] | None = None

    for degree in range(cfg.d_start, cfg.d_max + 1, cfg.d_step):
        template, params = make_template(n, degree, "c")
        inner_template = None
        all_params = list(params)
        if loop.inner is not None:
            inner_template, inner_params = make_template(n, degree, "d")
            all_params += inner_params
        base = constraints_for(
            loop, template, inner_template, mean_substitution=cfg.mean_substitution
        )
        state = RefineState(
            base=base,
            template_params=tuple(all_params),
            schedule=schedule,
            cfg=cfg,
            rng=rng,
        )
        active = state.constraints()
        feasible_seen = False
        while True:
            rel = relax(active, n, all_params, state.level, mult_degree=state.mult_degree)
            _add_cut_rows(rel, state.cuts)
            t0 = perf_counter()
            sol = solve_feasibility(rel.problem, cfg.solver)
            solver_time += perf_counter() - t0
            rec = AttemptRecord(
                degree,
                state.level,
                state.mult_degree,
                tuple(state.actions),
                sol.status,
                sol.margin,
                detail=sol.detail,
            )
            history.append(rec)

            if sol.status != "feasible":
                plain = not state.margin_applied and not state.cuts
                if plain and not feasible_seen and state.level_idx + 1 < len(schedule):
                    state.level_idx += 1  # relaxation schedule, not a refinement
                    continue
                try:
                    active = refine_constraints(state)
                except BudgetExhausted as stop:
                    rec.detail = f"{rec.detail}; {stop}".strip("; ")
                    break
                continue

            feasible_seen = True
            floats = [
                float(rel.parameter_value(p, sol.blocks, sol.frees))
                for p in all_params
            ]
            assignment = dict(zip(all_params, round_coefficients(floats, cfg)))
            invariant = template.instantiate(assignment)
            inner_inv = (
                inner_template.instantiate(assignment)
                if inner_template is not None
                else None
            )
            rec.candidate = invariant.render(loop.var_names)

            cert, dt = _pinned_certificate(base, n, assignment, cfg)
            solver_time += dt
            concrete = instantiate_constraints(base, assignment)
            report = check_invariant(
                invariant, concrete, vcfg, inner_invariant=inner_inv, certificate=cert
            )
            solver_time += report.solver_seconds
            rec.verdict = report.verdict

            if report.verdict == "Verified":
                return InvariantResult(
                    "Verified",
                    invariant,
                    inner_inv,
                    cert,
                    report,
                    history,
                    {"total": perf_counter() - t_start, "solver": solver_time},
                )
            if report.verdict == "Unverified":
                fallback = (invariant, inner_inv, cert, report)
            state.rejected = tuple(floats)
            try:
                active = refine_constraints(state)
            except BudgetExhausted as stop:
                rec.detail = f"{rec.detail}; {stop}".strip("; ")
                break

    timings = {"total": perf_counter() - t_start, "solver": solver_time}
    if fallback is not None:
        invariant, inner_inv, cert, report = fallback
        return InvariantResult(
            "CandidateUnverified", invariant, inner_inv, cert, report, history, timings
        )
    return InvariantResult("Failed", None, None, None, None, history, timings)
