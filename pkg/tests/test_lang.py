"""Front end: parsing, desugaring, validation, pretty round-trip."""

from fractions import Fraction

import pytest

from piq.lang import (
    Abort,
    Assign,
    Conj,
    Discrete,
    Ite,
    Lt,
    Neg,
    Normal,
    ParseError,
    Prob,
    Seq,
    Skip,
    Uniform,
    ValidationError,
    While,
    guard_holds,
    parse_polynomial,
    parse_program,
    pretty,
    validate,
)
from piq.poly import Polynomial

RUIN = """\
# Symmetric random walk: expected number of rounds until absorption.
#pre x*y - x^2
#post z
#assume x >= 0 && y >= 0
#terminates
z := 0;
while (0 < x && x < y) {
  { x := x + 1 } [1/2] { x := x - 1 };
  z := z + 1
}
"""


def poly(names, terms):
    return Polynomial(len(names), {m: Fraction(c) for m, c in terms.items()})


# ------------------------------------------------------------------ parsing


def test_variable_order_is_first_occurrence():
    prog = parse_program(RUIN)
    assert prog.var_names == ["x", "y", "z"]
    assert prog.pre == poly("xyz", {(1, 1, 0): 1, (2, 0, 0): -1})
    assert prog.post == poly("xyz", {(0, 0, 1): 1})
    assert prog.terminates


def test_int_pragma_can_introduce_variables_in_file_order():
    prog = parse_program("#int n\n#pre x\n#post x\nwhile (n > 0) { n := n - 1 }")
    assert prog.var_names == ["n", "x"]
    assert prog.int_vars == frozenset({0})


def test_guard_desugar_to_core():
    prog = parse_program(RUIN)
    loop = validate(prog)
    x = Polynomial.variable(3, 0)
    y = Polynomial.variable(3, 1)
    assert loop.guard == Conj(Lt(-x), Lt(x - y))
    # x >= 0 and y >= 0 become negated strict atoms.
    assert loop.assume_literals == (Neg(Lt(x)), Neg(Lt(y)))


def test_validate_extracts_constant_init():
    loop = validate(parse_program(RUIN))
    assert loop.init == ((2, Fraction(0)),)
    assert loop.inner is None
    body = loop.loop_body
    assert isinstance(body, Seq)
    assert isinstance(body.items[0], Prob)
    assert body.items[0].prob == Fraction(1, 2)


def test_equality_and_chain_desugar():
    prog = parse_program("#pre x\n#post x\nwhile (0 < x < y && y == 2) { skip }")
    loop = validate(prog)
    x = Polynomial.variable(2, 0)
    y = Polynomial.variable(2, 1)
    two = Polynomial.constant(2, 2)
    chain = Conj(Lt(-x), Lt(x - y))
    eq = Conj(Neg(Lt(y - two)), Neg(Lt(two - y)))
    assert loop.guard == Conj(chain, eq)


def test_comparison_directions():
    prog = parse_program("#pre x\n#post x\nwhile (x <= 3) { x := x + 1 }")
    g = validate(prog).guard
    for v, expect in [(0, True), (3, True), (4, False)]:
        assert guard_holds(g, [v]) is expect


def test_neq_integer_widening_is_exact():
    prog = parse_program("#pre x\n#post x\n#int x y\nwhile (x != y) { x := x + 1 }")
    g = validate(prog).guard
    assert guard_holds(g, [0, 1])
    assert guard_holds(g, [5, 2])
    assert not guard_holds(g, [3, 3])


def test_neq_real_is_rejected_with_remedies():
    prog = parse_program("#pre x\n#post x\nwhile (x != 0) { x := x - 1 }")
    assert prog.diagnostics
    with pytest.raises(ValidationError) as err:
        validate(prog)
    assert "#hint" in str(err.value)
    assert "#int" in str(err.value)


def test_hint_rewrites_matching_atom():
    prog = parse_program(
        "#pre x\n#post x\n#hint z != 0 => z >= 0.5\n"
        "z := 1;\nwhile (z != 0) { { z := 0 } [1/4] { x := x + 1 } }"
    )
    loop = validate(prog)
    z = Polynomial.variable(2, 1)
    half = Polynomial.constant(2, Fraction(1, 2))
    assert loop.guard == Neg(Lt(z - half))
    assert not prog.diagnostics


def test_hint_matches_either_orientation():
    prog = parse_program(
        "#pre x\n#post x\n#hint 0 != z => z >= 1\n"
        "z := 1;\nwhile (z != 0) { { z := 0 } [1/2] { x := x + 1 } }"
    )
    g = validate(prog).guard
    assert guard_holds(g, [0, 1])
    assert not guard_holds(g, [0, Fraction(1, 2)])


def test_pragma_comments_and_unknown():
    prog = parse_program("# just a note\n#pre x\n#post x\nwhile (x > 0) { skip }")
    assert prog.pre is not None
    with pytest.raises(ParseError):
        parse_program("#bogus 3\n#pre x\n#post x\nskip")
    with pytest.raises(ParseError):
        parse_program("#pre x\n#pre x\n#post x\nskip")


# ------------------------------------------------------------------ draws


def test_draw_affine_rhs():
    prog = parse_program("#pre x\n#post x\nx := 2*x + 3 + unif(0, 2) - norm(1, 2)/2")
    stmt = prog.body
    assert isinstance(stmt, Assign)
    assert stmt.rhs.base == poly("x", {(1,): 2, (0,): 3})
    assert stmt.rhs.draws == (
        (Fraction(1), Uniform(Fraction(0), Fraction(2))),
        (Fraction(-1, 2), Normal(Fraction(1), Fraction(2))),
    )


def test_discrete_draw():
    prog = parse_program("#pre x\n#post x\nx := discrete(0: 1/4, 2: 3/4)")
    stmt = prog.body
    assert isinstance(stmt, Assign)
    ((coeff, dist),) = stmt.rhs.draws
    assert coeff == 1
    assert dist == Discrete(((Fraction(0), Fraction(1, 4)), (Fraction(2), Fraction(3, 4))))


def test_symbolic_sigma_is_not_a_variable():
    prog = parse_program("#pre x\n#post x\nx := x + norm(21, s)")
    assert prog.var_names == ["x"]
    stmt = prog.body
    assert isinstance(stmt, Assign)
    assert stmt.rhs.draws[0][1] == Normal(Fraction(21), "s")


def test_symbolic_sigma_clash_with_variable():
    with pytest.raises(ParseError):
        parse_program("#pre s\n#post s\ns := 1; x := norm(0, s); while (x>0) { skip }")


@pytest.mark.parametrize(
    "text",
    [
        "x := unif(0, 1) * unif(0, 1)",        # draws multiplied together
        "x := unif(0, 1)^2",                    # draw under a power
        "x := x * unif(0, 1)",                  # draw scaled by a variable
        "x := unif(2, 1)",                      # empty support
        "x := discrete(0: 1/2, 1: 1/4)",        # probabilities do not sum to 1
        "x := 1/x",                             # non-constant divisor
        "x := 1/0",                             # zero divisor
        "while (unif(0,1) > 0) { skip }",       # draw in a guard
    ],
)
def test_ill_formed_expressions(text):
    with pytest.raises(ParseError):
        parse_program("#pre x\n#post x\n" + text)


def test_draw_in_pragma_rejected():
    with pytest.raises(ParseError):
        parse_program("#pre unif(0,1)\n#post x\nskip")


def test_probability_must_be_constant_in_range():
    with pytest.raises(ParseError):
        parse_program("#pre x\n#post x\n{ skip } [x] { skip }")
    with pytest.raises(ParseError):
        parse_program("#pre x\n#post x\n{ skip } [3/2] { skip }")


# ------------------------------------------------------------------ shape


def test_validate_requires_annotations():
    with pytest.raises(ValidationError):
        validate(parse_program("#post x\nwhile (x > 0) { skip }"))
    with pytest.raises(ValidationError):
        validate(parse_program("#pre x\nwhile (x > 0) { skip }"))


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("x := 1; skip", "while"),
        ("while (x > 0) { skip }; x := 1", "while"),
        ("x := y; while (x > 0) { skip }", "constant"),
        ("x := unif(0,1); while (x > 0) { skip }", "constant"),
        ("x := 1; x := 2; while (x > 0) { skip }", "twice"),
        ("if (x > 0) then { skip } else { skip }; while (x > 0) { skip }", "constant assignments"),
    ],
)
def test_validate_shape_errors(text, fragment):
    with pytest.raises(ValidationError) as err:
        validate(parse_program("#pre y\n#post y\n" + text))
    assert fragment in str(err.value)


def test_init_variable_may_not_appear_in_pre():
    with pytest.raises(ValidationError) as err:
        validate(parse_program("#pre z + x\n#post z\nz := 0; while (x > 0) { skip }"))
    assert "inputs" in str(err.value)


def test_inner_loop_is_decomposed():
    text = (
        "#pre m - x\n#post k\n"
        "k := 0;\n"
        "while (x < m) {\n"
        "  t := 1;\n"
        "  while (t > 0) { { t := 0 } [1/2] { x := x + 1 } };\n"
        "  k := k + 1\n"
        "}\n"
    )
    loop = validate(parse_program(text))
    assert loop.inner is not None
    assert isinstance(loop.inner.before, Assign)
    assert isinstance(loop.inner.after, Assign)
    assert isinstance(loop.inner.body, Prob)


@pytest.mark.parametrize(
    "body",
    [
        "while (y > 0) { while (z > 0) { while (y > 0) { skip } } }",
        "while (y > 0) { { while (z > 0) { skip } } [1/2] { skip } }",
        "while (y > 0) { while (z > 0) { skip }; while (y > 0) { skip } }",
    ],
)
def test_unsupported_nesting(body):
    with pytest.raises(ValidationError):
        validate(parse_program("#pre x\n#post x\n" + body))


# ------------------------------------------------------------------ pretty


def test_pretty_round_trip_fixpoint():
    for text in [
        RUIN,
        "#pre x\n#post x\n#int x y\nwhile (x != y) { { x := x + 1 } [1/2] { y := y + 1 } }",
        "#pre x\n#post x\nif (x >= 1 && !(x > 3)) then { x := x + unif(0, 2) } else { abort }",
        "#pre h\n#post h\nh := 0; while (h < 10) { h := h + 135/2 + norm(21, 5) }",
    ]:
        prog = parse_program(text)
        printed = pretty(prog)
        reparsed = parse_program(printed)
        assert pretty(reparsed) == printed
        assert reparsed.body == prog.body
        assert reparsed.var_names == prog.var_names
        assert reparsed.assume_literals == prog.assume_literals


def test_pretty_preserves_semantics_of_annotations():
    prog = parse_program(RUIN)
    reparsed = parse_program(pretty(prog))
    assert reparsed.pre == prog.pre
    assert reparsed.post == prog.post
    assert reparsed.int_vars == prog.int_vars
    assert reparsed.terminates == prog.terminates


# ------------------------------------------------------------------ helpers


def test_parse_polynomial_against_known_variables():
    p = parse_polynomial("z + x*y - x^2", ["x", "y", "z"])
    assert p == poly("xyz", {(0, 0, 1): 1, (1, 1, 0): 1, (2, 0, 0): -1})
    with pytest.raises(ParseError):
        parse_polynomial("w + 1", ["x", "y"])
    with pytest.raises(ParseError):
        parse_polynomial("x + unif(0,1)", ["x"])


def test_statement_positions_do_not_affect_equality():
    a = parse_program("#pre x\n#post x\nskip").body
    b = parse_program("#pre x\n#post x\n\n\n   skip").body
    assert a == b
    assert isinstance(a, Skip)


def test_abort_and_ite_parse():
    prog = parse_program(
        "#pre x\n#post x\nif (x = 0) then { abort } else { skip }"
    )
    assert isinstance(prog.body, Ite)
    assert isinstance(prog.body.then_branch, Abort)
