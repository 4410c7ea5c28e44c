"""Verification layers: exact certificate checking, numeric re-solve,
and sampling falsification, each cross-checked against independent
oracles (hand-expanded certificates, a separately-implemented rational
PSD test, and exact polynomial evaluation)."""

import random
from fractions import Fraction

import numpy as np
import pytest

import test_sdp
from piq.lang import parse_polynomial, parse_program, validate
from piq.poly import ParamPolynomial, Polynomial, make_template
from piq.vcgen import Atom, ImplicationConstraint, constraints_for, instantiate_constraints
from piq.verify import (
    Certificate,
    ConstraintCertificate,
    MultiplierWitness,
    VerifyConfig,
    VerifyError,
    _float_evaluator,
    _Projection,
    check_certificate_entry,
    check_invariant,
    fraction_psd,
    gram_polynomial,
    multiplier_schedule,
)

RUIN = test_sdp.RUIN
NAMES = ["x", "y", "z"]


def poly(text: str) -> Polynomial:
    return parse_polynomial(text, NAMES)


def lift(p: Polynomial) -> ParamPolynomial:
    return ParamPolynomial.lift(p)


def ge(text: str, origin: str = "assume") -> Atom:
    return Atom(poly(text), False, origin)


def eq(text: str, origin: str = "init") -> Atom:
    return Atom(poly(text), True, origin)


def implication(atoms, consequent: str, label: str = "c") -> ImplicationConstraint:
    return ImplicationConstraint(label, tuple(atoms), lift(poly(consequent)), True, "matched")


def by_label(constraints, label: str) -> ImplicationConstraint:
    return next(c for c in constraints if c.label == label)


def atom_index(cons: ImplicationConstraint, target: Polynomial, *, is_eq=None) -> int:
    for i, a in enumerate(cons.atoms):
        if a.poly == target and (is_eq is None or a.is_eq == is_eq):
            return i
    raise AssertionError(f"no atom {target.render(NAMES)} in {cons.label}")


# ---------------------------------------------------------------------------
# multiplier schedule


def test_multiplier_schedule_expansion():
    assert multiplier_schedule((0, 2)) == [(0, 2), (1, 2), (2, 2)]
    assert multiplier_schedule((0,)) == [(0, 2), (1, 2)]
    assert multiplier_schedule((2,)) == [(2, 2)]
    assert multiplier_schedule((4,)) == [(2, 4)]
    assert multiplier_schedule((0, 4)) == [(0, 2), (1, 2), (2, 4)]
    assert multiplier_schedule(()) == [(0, 2)]


# ---------------------------------------------------------------------------
# exact Gram expansion and rational PSD


def test_gram_polynomial_hand_expansion():
    # basis (1, x, y), G = [[1, 2, 0], [2, 3, -1], [0, -1, 5]]:
    # b^T G b = 1 + 4x + 3x^2 - 2xy + 5y^2  (worked by hand)
    basis = ((0, 0, 0), (1, 0, 0), (0, 1, 0))
    gram = [
        [Fraction(1), Fraction(2), Fraction(0)],
        [Fraction(2), Fraction(3), Fraction(-1)],
        [Fraction(0), Fraction(-1), Fraction(5)],
    ]
    assert gram_polynomial(3, basis, gram) == poly("1 + 4*x + 3*x^2 - 2*x*y + 5*y^2")


def test_gram_polynomial_matches_float_quadratic_form():
    rng = np.random.default_rng(7)
    basis = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))
    raw = rng.integers(-5, 6, size=(4, 4))
    gram = [[Fraction(int(raw[r][c] + raw[c][r])) for c in range(4)] for r in range(4)]
    p = gram_polynomial(3, basis, gram)
    for _ in range(25):
        pt = [Fraction(int(v)) for v in rng.integers(-4, 5, size=3)]
        b = [Fraction(1), pt[0], pt[1], pt[2]]
        direct = sum(b[r] * gram[r][c] * b[c] for r in range(4) for c in range(4))
        assert p.evaluate(pt) == direct


def test_fraction_psd_matches_independent_oracle_on_randoms():
    rng = random.Random(3)
    for trial in range(80):
        n = rng.randint(1, 5)
        if trial % 2:
            # Gram matrices of random rational vectors: always PSD.
            f = [
                [Fraction(rng.randint(-4, 4), rng.randint(1, 3)) for _ in range(n)]
                for _ in range(n)
            ]
            m = [
                [sum(f[r][k] * f[c][k] for k in range(n)) for c in range(n)]
                for r in range(n)
            ]
        else:
            m = [[Fraction(0)] * n for _ in range(n)]
            for r in range(n):
                for c in range(r, n):
                    m[r][c] = m[c][r] = Fraction(rng.randint(-4, 4))
        assert fraction_psd(m) == test_sdp.exact_psd(m), (trial, m)


def test_fraction_psd_zero_diagonal_with_offdiagonal_is_indefinite():
    m = [[Fraction(0), Fraction(1)], [Fraction(1), Fraction(0)]]
    assert not fraction_psd(m)
    assert not test_sdp.exact_psd(m)


def test_fraction_psd_rejects_asymmetric_input():
    with pytest.raises(VerifyError):
        fraction_psd([[Fraction(1), Fraction(2)], [Fraction(0), Fraction(1)]])


# ---------------------------------------------------------------------------
# certificate entries on hand-built constraints


def test_certificate_scalar_multiplier_closes_residual():
    cons = implication([ge("x")], "x")
    entry = ConstraintCertificate(
        "c", poly("x"), [MultiplierWitness("scalar", (0,), Polynomial.constant(3, 1))], None, ()
    )
    ok, why = check_certificate_entry(cons, entry, 3)
    assert ok, why


def test_certificate_pure_square_needs_no_multipliers():
    cons = implication([ge("x")], "x^2 - 2*x + 1")
    basis = ((0, 0, 0), (1, 0, 0))
    gram = ((Fraction(1), Fraction(-1)), (Fraction(-1), Fraction(1)))
    entry = ConstraintCertificate("c", poly("x^2 - 2*x + 1"), [], gram, basis)
    ok, why = check_certificate_entry(cons, entry, 3)
    assert ok, why


def test_certificate_polynomial_multiplier_allowed_on_equations_only():
    # x^2 - y^2 = (x + y)(x - y): sign-free polynomial multipliers are
    # sound on an equation atom but not on an inequality atom.
    witness = [MultiplierWitness("poly-free", (0,), poly("x + y"))]
    entry = ConstraintCertificate("c", poly("x^2 - y^2"), witness, None, ())
    on_eq = implication([eq("x - y")], "x^2 - y^2")
    ok, why = check_certificate_entry(on_eq, entry, 3)
    assert ok, why
    on_ge = implication([ge("x - y")], "x^2 - y^2")
    ok, why = check_certificate_entry(on_ge, entry, 3)
    assert not ok
    assert "nonnegative constant" in why


def test_certificate_sos_multiplier_carries_its_own_gram():
    # x^3 on x >= 0: multiplier x^2 with Gram [[1]] over basis (x,).
    cons = implication([ge("x")], "x^3")
    witness = MultiplierWitness(
        "poly-sos", (0,), poly("x^2"), gram=((Fraction(1),),), basis=((1, 0, 0),)
    )
    entry = ConstraintCertificate("c", poly("x^3"), [witness], None, ())
    ok, why = check_certificate_entry(cons, entry, 3)
    assert ok, why

    tampered = MultiplierWitness(
        "poly-sos", (0,), poly("y^2"), gram=((Fraction(1),),), basis=((1, 0, 0),)
    )
    entry = ConstraintCertificate("c", poly("x^3"), [tampered], None, ())
    ok, why = check_certificate_entry(cons, entry, 3)
    assert not ok
    assert "does not match its Gram" in why


def test_certificate_rejects_each_tampering():
    cons = implication([ge("-x", "guard"), ge("x"), ge("y")], "x^2 - x*y")
    mx = atom_index(cons, poly("-x"))
    good_gram = ((Fraction(1),),)
    basis = ((1, 0, 0),)

    def entry(**kw):
        fields = dict(
            label="c",
            consequent=poly("x^2 - x*y"),
            multipliers=[
                MultiplierWitness("cross", (mx, 2), Polynomial.constant(3, 1))
            ],
            gram=good_gram,
            basis=basis,
        )
        fields.update(kw)
        return ConstraintCertificate(**fields)

    ok, why = check_certificate_entry(cons, entry(), 3)
    assert ok, why

    ok, why = check_certificate_entry(cons, entry(label="other"), 3)
    assert not ok and "label" in why

    ok, why = check_certificate_entry(cons, entry(consequent=poly("x^2")), 3)
    assert not ok and "consequent" in why

    bad = [MultiplierWitness("cross", (mx, 9), Polynomial.constant(3, 1))]
    ok, why = check_certificate_entry(cons, entry(multipliers=bad), 3)
    assert not ok and "missing atom" in why

    bad = [MultiplierWitness("scalar", (), Polynomial.constant(3, 1))]
    ok, why = check_certificate_entry(cons, entry(multipliers=bad), 3)
    assert not ok and "no atoms" in why

    bad = [MultiplierWitness("cross", (mx, 2), Polynomial.constant(3, -1))]
    ok, why = check_certificate_entry(cons, entry(multipliers=bad), 3)
    assert not ok and "nonnegative constant" in why

    # An indefinite Gram that still expands to the right residual: the
    # basis (1, x, x^2) writes x^2 as a pure off-diagonal product, so
    # the identity holds but positive semidefiniteness cannot.
    zero, half = Fraction(0), Fraction(1, 2)
    sneaky_basis = ((0, 0, 0), (1, 0, 0), (2, 0, 0))
    sneaky = ((zero, zero, half), (zero, zero, zero), (half, zero, zero))
    ok, why = check_certificate_entry(cons, entry(gram=sneaky, basis=sneaky_basis), 3)
    assert not ok and "not positive semidefinite" in why

    ok, why = check_certificate_entry(cons, entry(gram=((Fraction(-1),),)), 3)
    assert not ok and "does not match the Gram" in why

    ok, why = check_certificate_entry(cons, entry(basis=((0, 1, 0),)), 3)
    assert not ok and "does not match the Gram" in why

    ok, why = check_certificate_entry(cons, entry(gram=None, basis=()), 3)
    assert not ok and "no Gram" in why


# ---------------------------------------------------------------------------
# float evaluation and equality projection


def test_float_evaluator_matches_exact_evaluation():
    rng = np.random.default_rng(11)
    p = poly("3 - 2*x + x*y^2 - 7*z^3 + x*y*z")
    ev = _float_evaluator(p)
    pts = rng.uniform(-3, 3, size=(40, 3))
    got = ev(pts)
    for i in range(len(pts)):
        exact = p.evaluate([Fraction(float(v)) for v in pts[i]])
        assert abs(got[i] - float(exact)) <= 1e-9 * (1 + abs(float(exact)))


def test_projection_solves_linear_equalities_exactly():
    cons = implication([eq("x + y - 2"), eq("y + z - 3")], "x")
    proj = _Projection(cons, 3)
    assert not proj.residual_eqs
    # float path drives both equations to rounding level
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5, 5, size=(200, 3))
    proj.apply_float(pts)
    assert np.max(np.abs(pts[:, 0] + pts[:, 1] - 2)) < 1e-12
    assert np.max(np.abs(pts[:, 1] + pts[:, 2] - 3)) < 1e-12
    # exact path lands on the variety exactly
    pt = [Fraction(17, 3), Fraction(1), Fraction(5)]
    proj.apply_exact(pt)
    assert pt[0] + pt[1] - 2 == 0
    assert pt[1] + pt[2] - 3 == 0


def test_projection_leaves_nonlinear_equalities_for_rejection():
    cons = implication([eq("x^2 - 1")], "x")
    proj = _Projection(cons, 3)
    assert not proj.plan
    assert proj.residual_eqs == [poly("x^2 - 1")]


# ---------------------------------------------------------------------------
# check_invariant verdicts


def ruin_setup(**values):
    loop = validate(parse_program(RUIN))
    template, params = make_template(loop.n_vars, 2)
    constraints = constraints_for(loop, template, None)
    by_name = {p.name: p for p in params}
    assignment = {p: Fraction(0) for p in params}
    for name, v in values.items():
        assignment[by_name[name]] = Fraction(v)
    return loop, instantiate_constraints(constraints, assignment)


def hand_ruin_certificate(constraints) -> Certificate:
    """The closed-form certificate for the random-walk system, worked
    by hand: an independent oracle for the exact layer."""
    one = Polynomial.constant(3, 1)
    entries = []

    pre = by_label(constraints, "pre")
    entries.append(
        ConstraintCertificate(
            "pre",
            pre.consequent.to_polynomial(),
            [MultiplierWitness("scalar", (atom_index(pre, poly("z"), is_eq=True),), one)],
            None,
            (),
        )
    )

    # post 1 (region x <= 0):  x^2 - xy - (-x)(y) = x^2
    p1 = by_label(constraints, "post 1")
    entries.append(
        ConstraintCertificate(
            "post 1",
            p1.consequent.to_polynomial(),
            [
                MultiplierWitness(
                    "cross",
                    (atom_index(p1, poly("-x")), atom_index(p1, poly("y"))),
                    one,
                )
            ],
            ((Fraction(1),),),
            ((1, 0, 0),),
        )
    )

    # post 2 (region y <= x):  x^2 - xy - (x - y)(x) = 0
    p2 = by_label(constraints, "post 2")
    entries.append(
        ConstraintCertificate(
            "post 2",
            p2.consequent.to_polynomial(),
            [
                MultiplierWitness(
                    "cross",
                    (atom_index(p2, poly("x - y")), atom_index(p2, poly("x"))),
                    one,
                )
            ],
            None,
            (),
        )
    )

    # inv: wp of the body reproduces the invariant exactly.
    inv = by_label(constraints, "inv")
    assert inv.consequent.to_polynomial().is_zero()
    entries.append(
        ConstraintCertificate("inv", inv.consequent.to_polynomial(), [], None, ())
    )
    return Certificate(3, entries)


def test_ruin_invariant_verified_by_hand_certificate():
    loop, constraints = ruin_setup(c3=1, c11=-1, c12=1)
    cert = hand_ruin_certificate(constraints)
    cfg = VerifyConfig(samples=20_000, seed=0)
    report = check_invariant(poly("z + x*y - x^2"), constraints, cfg, certificate=cert)
    assert report.verdict == "Verified"
    for label in ("pre", "post 1", "post 2", "inv"):
        assert report.check(label).exact == "passed"
    # no enforced counterexamples; advisory ones are allowed and reported
    assert not report.counterexamples()


def test_ruin_without_certificate_is_honestly_unverified():
    # One post region needs a Gram pinned to the single ray (x - y)^2,
    # a kernel direction inside the numerical support; its relative
    # margin stays at the solver's convergence floor, so the numeric
    # layer cannot pass and without the exact layer the verdict must
    # stay Unverified rather than quietly flipping green.  The other
    # constraints are only degenerate in structurally-absent rows and
    # pass the numeric layer on their support.
    _, constraints = ruin_setup(c3=1, c11=-1, c12=1)
    cfg = VerifyConfig(samples=5_000, seed=0)
    report = check_invariant(poly("z + x*y - x^2"), constraints, cfg)
    assert report.verdict == "Unverified"
    assert not report.counterexamples()
    numeric = {c.label: c.numeric for c in report.checks if c.enforced}
    assert numeric["pre"] == "passed"
    assert numeric["post 1"] == "passed"
    assert numeric["post 2"] == "failed"


def test_false_on_a_measure_zero_region_stays_unverified():
    # On the line x = 0 the consequent x - 1 is negative, but rejection
    # sampling essentially never lands on the line (vacuous) and no
    # sum-of-squares representation exists (the constant term of the
    # residual would have to be -1).  The honest verdict is Unverified:
    # neither proven nor refuted.
    cons = implication([ge("x"), ge("-x")], "x - 1", label="thin")
    cfg = VerifyConfig(samples=20_000, seed=3)
    report = check_invariant(poly("x - 1"), [cons], cfg)
    assert report.verdict == "Unverified"
    chk = report.check("thin")
    assert chk.numeric == "failed"
    assert chk.vacuous
    assert chk.counterexample is None


def test_wrong_invariant_is_refuted_with_exact_counterexample():
    _, constraints = ruin_setup(c3=1)  # I = z alone
    cfg = VerifyConfig(samples=20_000, seed=0)
    report = check_invariant(poly("z"), constraints, cfg)
    assert report.verdict == "Refuted"
    hits = report.counterexamples()
    assert hits, "expected an enforced counterexample"
    chk = report.check("pre")
    assert chk.counterexample is not None
    assert chk.counterexample_value < 0
    # the reported point satisfies every antecedent atom exactly
    pre = by_label(constraints, "pre")
    for a in pre.atoms:
        assert a.holds(chk.counterexample)
    # and the family it exposes contains the canonical witness (1, 3, 0)
    witness = [Fraction(1), Fraction(3), Fraction(0)]
    assert all(a.holds(witness) for a in pre.atoms)
    assert pre.consequent.to_polynomial().evaluate(witness) < 0


def test_sampling_reports_are_deterministic_for_a_seed():
    _, constraints = ruin_setup(c3=1)
    cfg = VerifyConfig(samples=10_000, seed=42)
    first = check_invariant(poly("z"), constraints, cfg)
    second = check_invariant(poly("z"), constraints, cfg)
    assert first.verdict == second.verdict
    for a, b in zip(first.checks, second.checks):
        assert a.accepted_samples == b.accepted_samples
        assert a.counterexample == b.counterexample


def test_interior_constraint_passes_the_numeric_layer_without_certificate():
    cons = implication([ge("x")], "x + 1")
    cfg = VerifyConfig(samples=2_000, seed=0)
    report = check_invariant(poly("x + 1"), [cons], cfg)
    assert report.verdict == "Verified"
    chk = report.check("c")
    assert chk.exact == "absent"
    assert chk.numeric == "passed"
    assert chk.numeric_margin is not None and chk.numeric_margin >= cfg.psd_margin


def test_empty_region_is_flagged_vacuous_but_still_proven():
    cons = implication([ge("x"), ge("-1 - x")], "x", label="void")
    cfg = VerifyConfig(samples=20_000, seed=1)
    report = check_invariant(poly("x"), [cons], cfg)
    chk = report.check("void")
    assert chk.accepted_samples == 0
    assert chk.vacuous
    assert report.verdict == "Verified"  # multipliers certify it outright


def test_no_constraints_verifies_trivially():
    report = check_invariant(poly("x"), [], VerifyConfig(samples=100))
    assert report.verdict == "Verified"
    assert report.checks == []


def test_template_constraints_are_rejected():
    loop = validate(parse_program(RUIN))
    template, _ = make_template(loop.n_vars, 2)
    constraints = constraints_for(loop, template, None)
    with pytest.raises(VerifyError):
        check_invariant(poly("z"), constraints, VerifyConfig(samples=10))


def test_report_check_raises_for_unknown_label():
    report = check_invariant(poly("x"), [], VerifyConfig(samples=10))
    with pytest.raises(KeyError):
        report.check("nope")
