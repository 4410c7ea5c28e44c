"""Independent checking of a concrete rational invariant.

Once a candidate invariant is instantiated, every implication
constraint is parameter-free:

    f_1 >= 0, ..., h_1 = 0, ...  ==>  q >= 0

and is examined through three layers, each reported per constraint:

  (1) exact certificate — when synthesis produced rational multiplier
      and Gram data, the identity  q - sum mult_k * prod(atoms_k)
      == b(x)^T G b(x)  is expanded symbolically over the rationals and
      must come out as the zero polynomial, with G (and every
      sum-of-squares multiplier's Gram) exactly positive semidefinite
      and every multiplier on pure inequality atoms nonnegative.  A
      pass here is a genuine proof of the implication.
  (2) numeric certificate — the per-constraint sum-of-squares
      feasibility problem is re-solved from scratch with the invariant
      fixed; the constraint passes when the solver reports feasibility
      and the solution is positive definite on its numerical support
      with relative margin at least `psd_margin`.  Rows whose diagonal is at the
      convergence floor are structurally absent (the identity rows pin
      them to zero, e.g. unused variables or parity-impossible
      monomials) and are excluded the way an exact LDL^T decomposition
      skips zero pivots; a null direction *inside* the support is a
      genuine boundary degeneracy and still fails this layer, leaving
      layer (1) as the only evidence.
  (3) sampling falsification — points are rejection-sampled from the
      box [-B, B]^n against the antecedent (linear equalities are
      projected exactly onto their solution set); the consequent must
      stay above -consequent_tol.  Candidate counterexamples are
      re-evaluated in exact rational arithmetic before being reported,
      so a reported counterexample is never a float artifact.

The verdict is Verified when every enforced constraint passes layer
(1) or (2) and layer (3) finds no counterexample on any enforced
constraint; Refuted when an exact counterexample exists; Unverified
otherwise.  One-sided (advisory) constraints restate that expectations
are nonnegative-valued; they are sampled and reported but do not gate
the verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from time import perf_counter
from typing import Sequence

import numpy as np

from .poly import Monomial, Polynomial
from .sdp import SolverConfig, solve_feasibility
from .sos import relax
from .vcgen import ImplicationConstraint


class VerifyError(Exception):
    pass


# ---------------------------------------------------------------------------
# certificate format
#
# Produced by synthesis, consumed here.  Everything is rational, so the
# checks below are decisions, not approximations.


@dataclass
class MultiplierWitness:
    """One certificate term: `value` times the product of the source
    constraint's atoms at `atom_indices`."""

    kind: str  # "scalar" | "cross" | "poly-sos" | "poly-free"
    atom_indices: tuple[int, ...]
    value: Polynomial
    gram: tuple[tuple[Fraction, ...], ...] | None = None
    basis: tuple[Monomial, ...] = ()


@dataclass
class ConstraintCertificate:
    label: str
    consequent: Polynomial
    multipliers: list[MultiplierWitness]
    gram: tuple[tuple[Fraction, ...], ...] | None
    basis: tuple[Monomial, ...]


@dataclass
class Certificate:
    n_vars: int
    constraints: list[ConstraintCertificate]

    def entry(self, label: str) -> ConstraintCertificate | None:
        for c in self.constraints:
            if c.label == label:
                return c
        return None


def gram_polynomial(
    n_vars: int,
    basis: Sequence[Monomial],
    gram: Sequence[Sequence[Fraction]],
) -> Polynomial:
    """Expand b(x)^T G b(x) exactly."""
    coeffs: dict[Monomial, Fraction] = {}
    for r, br in enumerate(basis):
        for c, bc in enumerate(basis):
            g = Fraction(gram[r][c])
            if not g:
                continue
            m = tuple(a + b for a, b in zip(br, bc))
            coeffs[m] = coeffs.get(m, Fraction(0)) + g
    return Polynomial(n_vars, coeffs)


def fraction_psd(mat: Sequence[Sequence[Fraction]]) -> bool:
    """Exact positive-semidefiniteness over the rationals.

    Pivot-free LDL^T: for a PSD matrix every leading diagonal entry of
    the running Schur complement is nonnegative, and a zero diagonal
    entry forces its whole row to vanish.  Either failure is a witness
    of indefiniteness, so the procedure decides PSD exactly.
    """
    n = len(mat)
    a = [[Fraction(mat[r][c]) for c in range(n)] for r in range(n)]
    for r in range(n):
        if any(a[r][c] != a[c][r] for c in range(r)):
            raise VerifyError("Gram matrix is not symmetric")
    for k in range(n):
        d = a[k][k]
        if d < 0:
            return False
        if d == 0:
            if any(a[k][j] != 0 for j in range(k + 1, n)):
                return False
            continue
        for i in range(k + 1, n):
            f = a[i][k] / d
            if not f:
                continue
            for j in range(i, n):
                a[i][j] -= f * a[k][j]
                a[j][i] = a[i][j]
    return True


# ---------------------------------------------------------------------------
# configuration and report


@dataclass
class VerifyConfig:
    samples: int = 100_000
    box_bound: float = 10.0
    seed: int = 0
    psd_margin: float = 1e-5  # relative support margin the numeric layer demands
    consequent_tol: float = 1e-9
    eq_tol: float = 1e-9
    mult_degrees: tuple[int, ...] = (0, 2)
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass
class ConstraintCheck:
    label: str
    enforced: bool
    family: str
    exact: str = "absent"  # "passed" | "failed" | "absent"
    numeric: str = "skipped"  # "passed" | "failed" | "skipped"
    numeric_margin: float | None = None
    accepted_samples: int = 0
    vacuous: bool = False
    counterexample: tuple[Fraction, ...] | None = None
    counterexample_value: Fraction | None = None
    detail: str = ""

    @property
    def proven(self) -> bool:
        return self.exact == "passed" or self.numeric == "passed"


@dataclass
class VerificationReport:
    verdict: str  # "Verified" | "Unverified" | "Refuted"
    invariant: Polynomial
    inner_invariant: Polynomial | None
    checks: list[ConstraintCheck]
    solver_seconds: float

    def check(self, label: str) -> ConstraintCheck:
        for c in self.checks:
            if c.label == label:
                return c
        raise KeyError(label)

    def counterexamples(self, *, enforced_only: bool = True):
        return [
            c
            for c in self.checks
            if c.counterexample is not None and (c.enforced or not enforced_only)
        ]


# ---------------------------------------------------------------------------
# layer 1: exact certificate expansion


def _product_of(cons: ImplicationConstraint, indices: Sequence[int], n_vars: int) -> Polynomial:
    p = Polynomial.constant(n_vars, 1)
    for i in indices:
        p = p * cons.atoms[i].poly
    return p


def check_certificate_entry(
    cons: ImplicationConstraint, entry: ConstraintCertificate, n_vars: int
) -> tuple[bool, str]:
    """Exact validity of one constraint's certificate.  True means the
    implication  atoms ==> consequent >= 0  is proven over the reals."""
    if entry.label != cons.label:
        return False, "certificate label mismatch"
    if not cons.consequent.is_concrete():
        return False, "constraint still has template parameters"
    if entry.consequent != cons.consequent.to_polynomial():
        return False, "certificate consequent differs from the constraint"
    residual = entry.consequent
    for w in entry.multipliers:
        if not w.atom_indices:
            return False, "multiplier with no atoms"
        if any(i < 0 or i >= len(cons.atoms) for i in w.atom_indices):
            return False, "multiplier references a missing atom"
        needs_nonneg = all(not cons.atoms[i].is_eq for i in w.atom_indices)
        if needs_nonneg:
            if w.gram is not None:
                if w.value != gram_polynomial(n_vars, w.basis, w.gram):
                    return False, "sum-of-squares multiplier does not match its Gram"
                if not fraction_psd(w.gram):
                    return False, "multiplier Gram is not positive semidefinite"
            elif w.value.degree() > 0 or w.value.constant_part() < 0:
                return False, "inequality multiplier is not a nonnegative constant"
        residual = residual - w.value * _product_of(cons, w.atom_indices, n_vars)
    if entry.gram is None:
        if residual.is_zero():
            return True, "residual vanishes"
        return False, "nonzero residual with no Gram matrix"
    if len(entry.gram) != len(entry.basis):
        return False, "Gram size does not match its basis"
    if residual != gram_polynomial(n_vars, entry.basis, entry.gram):
        return False, "residual does not match the Gram expansion"
    if not fraction_psd(entry.gram):
        return False, "residual Gram is not positive semidefinite"
    return True, "exact certificate verified"


# ---------------------------------------------------------------------------
# layer 2: numeric re-solve with the invariant fixed


def multiplier_schedule(mult_degrees: Sequence[int]) -> list[tuple[int, int]]:
    """Expand multiplier degrees into relaxation (level, degree) steps:
    degree 0 covers bare scalars and scalars on atom products; a
    positive degree d switches to polynomial multipliers of degree d."""
    steps: list[tuple[int, int]] = []
    for d in mult_degrees:
        if d == 0:
            steps += [(0, 2), (1, 2)]
        else:
            steps.append((2, d))
    return steps or [(0, 2)]


def support_margin(blocks: Sequence[Sequence[Sequence[float]]], psd_margin: float) -> float:
    """Smallest relative eigenvalue of any block restricted to its
    numerical support.  Diagonal entries below sqrt(psd_margin) of the
    block's scale mark rows the equality rows pin to zero; those rows
    are skipped the way exact LDL^T skips zero pivots (removing rows
    only raises the smallest eigenvalue, and the solver's own
    feasibility check already bounds the full matrix near-semidefinite,
    so skipped rows cannot hide indefiniteness).  Each surviving
    submatrix's smallest eigenvalue is measured relative to the block's
    scale; a kernel direction *inside* the support therefore stays near
    the solver's convergence floor and fails any gate above it.  A
    block whose rows are all pinned contributes nothing; with no
    supported row anywhere the margin is +inf, mirroring the trivially
    semidefinite zero Gram."""
    worst = float("inf")
    floor = psd_margin ** 0.5
    for block in blocks:
        a = np.asarray(block, dtype=float)
        if a.size == 0:
            continue
        a = (a + a.T) / 2.0
        diag = np.diag(a)
        scale = 1.0 + max(float(diag.max()), 0.0)
        keep = diag > floor * scale
        if not keep.any():
            continue
        sub = a[np.ix_(keep, keep)]
        worst = min(worst, float(np.linalg.eigvalsh(sub)[0]) / scale)
    return worst


def _numeric_resolve(
    cons: ImplicationConstraint, n_vars: int, cfg: VerifyConfig
) -> tuple[str, float | None, float]:
    elapsed = 0.0
    best: float | None = None
    for level, md in multiplier_schedule(cfg.mult_degrees):
        rel = relax([cons], n_vars, [], level, mult_degree=md)
        t0 = perf_counter()
        sol = solve_feasibility(rel.problem, cfg.solver)
        elapsed += perf_counter() - t0
        if sol.status == "feasible":
            margin = support_margin(sol.blocks, cfg.psd_margin)
            if best is None or margin > best:
                best = margin
            if margin >= cfg.psd_margin:
                return "passed", margin, elapsed
    return "failed", best, elapsed


# ---------------------------------------------------------------------------
# layer 3: sampling falsification


def _float_evaluator(poly: Polynomial):
    terms = [(float(c), m) for m, c in poly.coeffs.items()]

    def ev(x: np.ndarray) -> np.ndarray:
        out = np.zeros(len(x))
        for c, m in terms:
            t = np.full(len(x), c)
            for i, e in enumerate(m):
                if e:
                    t = t * x[:, i] ** e
            out += t
        return out

    return ev


def _linear_parts(poly: Polynomial) -> tuple[list[Fraction], Fraction] | None:
    """(coefficient vector, constant) when poly is affine, else None."""
    coeffs = [Fraction(0)] * poly.n_vars
    const = Fraction(0)
    for m, c in poly.coeffs.items():
        d = sum(m)
        if d == 0:
            const = c
        elif d == 1:
            coeffs[m.index(1)] = c
        else:
            return None
    return coeffs, const


class _Projection:
    """Exact projection of linear equality atoms: each one solves a
    pivot variable in terms of the others.  Pivots are distinct, chosen
    as the highest-index variable not already used."""

    def __init__(self, cons: ImplicationConstraint, n_vars: int) -> None:
        self.plan: list[tuple[int, list[Fraction], Fraction]] = []
        self.residual_eqs: list[Polynomial] = []
        used: set[int] = set()
        for a in cons.atoms:
            if not a.is_eq:
                continue
            parts = _linear_parts(a.poly)
            pivot = None
            if parts is not None:
                coeffs, const = parts
                for i in range(n_vars - 1, -1, -1):
                    if coeffs[i] and i not in used:
                        pivot = i
                        break
            if pivot is None:
                self.residual_eqs.append(a.poly)
                continue
            used.add(pivot)
            self.plan.append((pivot, coeffs, const))

    def apply_float(self, x: np.ndarray) -> None:
        for pivot, coeffs, const in self.plan:
            acc = np.full(len(x), float(const))
            for i, c in enumerate(coeffs):
                if c and i != pivot:
                    acc += float(c) * x[:, i]
            x[:, pivot] = -acc / float(coeffs[pivot])

    def apply_exact(self, pt: list[Fraction]) -> None:
        for pivot, coeffs, const in self.plan:
            acc = const
            for i, c in enumerate(coeffs):
                if c and i != pivot:
                    acc += c * pt[i]
            pt[pivot] = -acc / coeffs[pivot]


def _exact_violation(
    cons: ImplicationConstraint,
    proj: _Projection,
    raw: Sequence[float],
    n_vars: int,
) -> tuple[tuple[Fraction, ...], Fraction] | None:
    pt = [Fraction(v) for v in raw]
    proj.apply_exact(pt)
    for a in cons.atoms:
        v = a.poly.evaluate(pt)
        if (a.is_eq and v != 0) or (not a.is_eq and v < 0):
            return None
    value = cons.consequent.to_polynomial().evaluate(pt)
    if value >= 0:
        return None
    return tuple(pt), value


def _sample_constraint(
    cons: ImplicationConstraint,
    n_vars: int,
    cfg: VerifyConfig,
    rng: np.random.Generator,
) -> tuple[int, tuple[tuple[Fraction, ...], Fraction] | None]:
    if cfg.samples <= 0:
        return 0, None
    proj = _Projection(cons, n_vars)
    eq_evs = [
        _float_evaluator(a.poly) for a in cons.atoms if a.is_eq
    ]  # re-checked post-projection: a later pivot may disturb an earlier atom
    ge_evs = [_float_evaluator(a.poly) for a in cons.atoms if not a.is_eq]
    cons_ev = _float_evaluator(cons.consequent.to_polynomial())
    accepted = 0
    remaining = cfg.samples
    while remaining > 0:
        chunk = min(remaining, 20_000)
        remaining -= chunk
        x = rng.uniform(-cfg.box_bound, cfg.box_bound, size=(chunk, n_vars))
        proj.apply_float(x)
        mask = np.ones(chunk, dtype=bool)
        for ev in eq_evs:
            mask &= np.abs(ev(x)) <= cfg.eq_tol
        for ev in ge_evs:
            mask &= ev(x) >= 0.0
        pts = x[mask]
        accepted += len(pts)
        if not len(pts):
            continue
        values = cons_ev(pts)
        for idx in np.flatnonzero(values < -cfg.consequent_tol):
            hit = _exact_violation(cons, proj, pts[idx], n_vars)
            if hit is not None:
                return accepted, hit
    return accepted, None


# ---------------------------------------------------------------------------
# entry point


def check_invariant(
    invariant: Polynomial,
    constraints: Sequence[ImplicationConstraint],
    cfg: VerifyConfig | None = None,
    *,
    inner_invariant: Polynomial | None = None,
    certificate: Certificate | None = None,
) -> VerificationReport:
    """Check a concrete invariant against parameter-free constraints."""
    cfg = cfg or VerifyConfig()
    for cons in constraints:
        if not cons.consequent.is_concrete():
            raise VerifyError(
                f"constraint '{cons.label}' still has template parameters; "
                "instantiate the template before checking"
            )
    n_vars = invariant.n_vars
    rng = np.random.default_rng(cfg.seed)
    solver_seconds = 0.0
    checks: list[ConstraintCheck] = []
    for cons in constraints:
        chk = ConstraintCheck(cons.label, cons.enforced, cons.family)
        if cons.enforced:
            entry = certificate.entry(cons.label) if certificate else None
            if entry is not None:
                ok, why = check_certificate_entry(cons, entry, n_vars)
                chk.exact = "passed" if ok else "failed"
                chk.detail = why
            chk.numeric, chk.numeric_margin, dt = _numeric_resolve(cons, n_vars, cfg)
            solver_seconds += dt
        chk.accepted_samples, hit = _sample_constraint(cons, n_vars, cfg, rng)
        chk.vacuous = cfg.samples > 0 and chk.accepted_samples == 0
        if hit is not None:
            chk.counterexample, chk.counterexample_value = hit
        checks.append(chk)

    enforced = [c for c in checks if c.enforced]
    if any(c.counterexample is not None for c in enforced):
        verdict = "Refuted"
    elif all(c.proven for c in enforced):
        verdict = "Verified"
    else:
        verdict = "Unverified"
    return VerificationReport(
        verdict=verdict,
        invariant=invariant,
        inner_invariant=inner_invariant,
        checks=checks,
        solver_seconds=solver_seconds,
    )
