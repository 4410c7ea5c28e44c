"""Constraint generation: case splits, atom closure, and the exact
shape of the systems produced for known loops."""

from fractions import Fraction

import pytest

from piq.lang import parse_program, validate
from piq.poly import Polynomial, make_template
from piq.vcgen import (
    VcError,
    constraints_for,
    guard_atom_regions,
    loop_assume_atoms,
    loop_constraints,
    merge_atoms,
    nested_constraints,
    render_system,
)

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

NESTED = """\
# Rounds of geometric bursts until x reaches m.
#pre m - x
#post k
#int t
#assume t >= 0 && t <= 1
#terminates
k := 0;
while (x < m) {
  t := 1;
  while (t > 0) {
    { t := 0 } [1/2] { x := x + 1 }
  };
  k := k + 1
}
"""


def assign(params, **values):
    by_name = {p.name: p for p in params}
    out = {p: Fraction(0) for p in params}
    for name, v in values.items():
        out[by_name[name]] = Fraction(v)
    return out


def poly_of(text, names):
    from piq.lang import parse_polynomial

    return parse_polynomial(text, names)


@pytest.fixture(scope="module")
def ruin():
    loop = validate(parse_program(RUIN))
    template, params = make_template(loop.n_vars, 2)
    return loop, template, params, loop_constraints(loop, template)


RUIN_SOLUTION = {"c3": 1, "c11": -1, "c12": 1}  # z - x^2 + x*y


def test_ruin_constraint_inventory(ruin):
    _, _, _, cs = ruin
    assert [c.label for c in cs] == [
        "pre",
        "post 1",
        "post 2",
        "post-nonneg 1",
        "inv",
        "inv-nonneg 1",
        "inv-nonneg 2",
    ]
    assert [c.enforced for c in cs] == [True, True, True, False, True, False, False]
    for c in cs:
        assert c.family == ("matched" if c.enforced else "one-sided")


def test_ruin_pre_constraint(ruin):
    loop, _, params, cs = ruin
    pre = cs[0]
    names = loop.var_names
    assert [(a.poly.render(names), a.is_eq, a.origin) for a in pre.atoms] == [
        ("z", True, "init"),
        ("x", False, "assume"),
        ("y", False, "assume"),
    ]
    # At the known invariant z - x^2 + x*y the slack over the initial
    # states is exactly the (zeroed) counter z.
    got = pre.consequent.instantiate(assign(params, **RUIN_SOLUTION))
    assert got == poly_of("z", names)


def test_ruin_post_constraints(ruin):
    loop, _, params, cs = ruin
    names = loop.var_names
    post1, post2 = cs[1], cs[2]
    # Exit region x <= 0 meets the assumption x >= 0: the opposed pair
    # stays two inequalities (one per origin), not an equality.
    assert [(a.poly.render(names), a.is_eq, a.origin) for a in post1.atoms] == [
        ("-x", False, "guard"),
        ("x", False, "assume"),
        ("y", False, "assume"),
    ]
    assert [(a.poly.render(names), a.origin) for a in post2.atoms] == [
        ("x - y", "guard"),
        ("x", "assume"),
        ("y", "assume"),
    ]
    sol = assign(params, **RUIN_SOLUTION)
    want = poly_of("x^2 - x*y", names)
    assert post1.consequent.instantiate(sol) == want
    assert post2.consequent.instantiate(sol) == want


def test_ruin_invariant_step_is_fixed_point(ruin):
    loop, _, params, cs = ruin
    names = loop.var_names
    inv = next(c for c in cs if c.label == "inv")
    assert [(a.poly.render(names), a.origin) for a in inv.atoms] == [
        ("x", "guard"),
        ("-x + y", "guard"),
        ("y", "assume"),
    ]
    # wp(body, I) - I vanishes identically at the known invariant...
    assert inv.consequent.instantiate(assign(params, **RUIN_SOLUTION)).is_zero()
    # ...equals the one-step variance for I = x^2, and is unchanged for
    # the drift-free directions I = x and I = 1.
    assert inv.consequent.instantiate(assign(params, c11=1)) == poly_of("1", names)
    assert inv.consequent.instantiate(assign(params, c1=1)).is_zero()
    assert inv.consequent.instantiate(assign(params, c0=1)).is_zero()


def test_ruin_multiplier_inventory(ruin):
    # The certificate search sees, over the enforced constraints, one
    # equality atom (the initialized counter) and four inequality atoms
    # of guard origin -- the atom budget the per-constraint multipliers
    # are counted against.
    _, _, _, cs = ruin
    enforced = [c for c in cs if c.enforced]
    eq = [a for c in enforced for a in c.atoms if a.origin in ("guard", "init") and a.is_eq]
    ge = [a for c in enforced for a in c.atoms if a.origin == "guard" and not a.is_eq]
    assert len(eq) == 1
    assert len(ge) == 4


def test_ruin_advisory_is_pointwise_false(ruin):
    # The one-sided constraint wp(body, I) >= 0 on the exit region
    # x >= y fails at (2, 1, 0) even though the invariant is correct --
    # exactly why one-sided constraints are advisory.
    loop, _, params, cs = ruin
    adv = next(c for c in cs if c.label == "inv-nonneg 2")
    assert not adv.enforced
    point = [Fraction(2), Fraction(1), Fraction(0)]
    assert all(a.holds(point) for a in adv.atoms)
    assert adv.consequent.instantiate(assign(params, **RUIN_SOLUTION)).evaluate(point) < 0


def test_equality_guard_merges_to_eq_atom():
    loop = validate(
        parse_program(
            "#pre y\n#post y\n#terminates\nwhile (y == 2) { y := y - 1 }\n"
        )
    )
    regions = guard_atom_regions(loop.guard, loop.int_vars)
    assert len(regions) == 1
    (region,) = regions
    assert len(region) == 1
    assert region[0].is_eq
    assert region[0].poly == poly_of("y - 2", loop.var_names)


def test_strict_closure_real_versus_integer():
    real = validate(
        parse_program("#pre x\n#post x\n#terminates\nwhile (x < y) { x := x + 1 }\n")
    )
    (region,) = guard_atom_regions(real.guard, real.int_vars)
    assert region[0].poly == poly_of("y - x", real.var_names)

    integral = validate(
        parse_program(
            "#pre x\n#post x\n#int x y\n#terminates\nwhile (x < y) { x := x + 1 }\n"
        )
    )
    (region,) = guard_atom_regions(integral.guard, integral.int_vars)
    assert region[0].poly == poly_of("y - x - 1", integral.var_names)


def test_merge_atoms_same_origin_pair_folds():
    from piq.vcgen import Atom

    names = ["x"]
    p = poly_of("x - 2", names)
    merged = merge_atoms([Atom(p, False, "guard"), Atom(-p, False, "guard")])
    assert merged == (Atom(p, True, "guard"),)
    # ...but a cross-origin pair stays two inequalities.
    kept = merge_atoms([Atom(p, False, "guard"), Atom(-p, False, "assume")])
    assert kept is not None
    assert [a.is_eq for a in kept] == [False, False]
    # A constant contradiction empties the region.
    false = poly_of("0*x - 1", names)
    assert merge_atoms([Atom(false, False, "guard")]) is None


def test_disjunctive_guard_splits_step_constraints():
    loop = validate(
        parse_program(
            "#pre x\n#post x\n#terminates\nwhile (x < 0 || y < 0) { x := x + 1 }\n"
        )
    )
    template, _ = make_template(loop.n_vars, 2)
    cs = loop_constraints(loop, template)
    labels = [c.label for c in cs]
    # two guard disjuncts -> two step constraints; one exit region
    assert labels.count("inv 1") == 1 and labels.count("inv 2") == 1
    assert labels.count("post") == 1
    post = next(c for c in cs if c.label == "post")
    assert sorted(a.poly.render(loop.var_names) for a in post.atoms) == ["x", "y"]


def test_branching_body_splits_step_constraints():
    loop = validate(
        parse_program(
            "#pre x\n#post x\n#terminates\n"
            "while (x < 10) { if (y < 0) then { x := x + 1 } else { x := x + 2 } }\n"
        )
    )
    template, _ = make_template(loop.n_vars, 2)
    cs = loop_constraints(loop, template)
    inv = [c for c in cs if c.label.startswith("inv ")]
    assert len(inv) == 2
    regions = {tuple(a.poly.render(loop.var_names) for a in c.atoms if a.origin == "guard") for c in inv}
    assert regions == {("10 - x", "-y"), ("10 - x", "y")}


@pytest.fixture(scope="module")
def nested():
    loop = validate(parse_program(NESTED))
    outer, o_params = make_template(loop.n_vars, 2, prefix="c")
    inner, i_params = make_template(loop.n_vars, 2, prefix="d")
    cs = nested_constraints(loop, outer, inner)
    return loop, o_params + i_params, cs


# I = k + m - x, J = k + m - x - t + 1 over variables (m, x, k, t)
NESTED_SOLUTION = {"c1": 1, "c2": -1, "c3": 1, "d0": 1, "d1": 1, "d2": -1, "d3": 1, "d4": -1}


def test_nested_constraint_groups(nested):
    loop, _, cs = nested
    assert [c.label for c in cs] == [
        "pre",
        "post",
        "post-nonneg 1",
        "enter",
        "enter-nonneg 1",
        "inner-step",
        "inner-step-nonneg 1",
        "inner-exit",
        "inner-exit-nonneg 1",
    ]
    matched = [c for c in cs if c.enforced]
    assert [c.label for c in matched] == ["pre", "post", "enter", "inner-step", "inner-exit"]


def test_nested_consequents_at_known_solution(nested):
    loop, params, cs = nested
    names = loop.var_names
    assert names == ["m", "x", "k", "t"]
    sol = assign(params, **NESTED_SOLUTION)
    want = {
        "pre": "k",            # I - pre on k = 0
        "post": "x - m",       # post - I on x >= m
        "enter": "0*m",        # wp(t := 1, J) - I, identically zero
        "inner-step": "1/2*t - 1/2",  # wp(inner body, J) - J
        "inner-exit": "t",     # wp(k := k + 1, I) - J
    }
    for label, expected in want.items():
        c = next(c for c in cs if c.label == label)
        assert c.consequent.instantiate(sol) == poly_of(expected, names), label


def test_nested_inner_guard_atoms_are_exact(nested):
    loop, _, cs = nested
    names = loop.var_names
    step = next(c for c in cs if c.label == "inner-step")
    # '#int t' turns t > 0 into t - 1 >= 0; with the assumption t <= 1
    # the step region is the single point t = 1, kept as two
    # inequalities because the origins differ.
    rendered = [(a.poly.render(names), a.origin) for a in step.atoms]
    assert ("-1 + t", "guard") in rendered
    assert ("1 - t", "assume") in rendered
    exit_ = next(c for c in cs if c.label == "inner-exit")
    rendered = [(a.poly.render(names), a.origin) for a in exit_.atoms]
    assert ("-t", "guard") in rendered
    assert ("t", "assume") in rendered


def test_dispatch_between_plain_and_nested():
    plain = validate(parse_program(RUIN))
    deep = validate(parse_program(NESTED))
    t, _ = make_template(plain.n_vars, 2)
    t2, _ = make_template(deep.n_vars, 2)
    with pytest.raises(VcError):
        nested_constraints(plain, t, t)
    with pytest.raises(VcError):
        loop_constraints(deep, t2)
    with pytest.raises(VcError):
        constraints_for(deep, t2)
    assert constraints_for(plain, t) == loop_constraints(plain, t)


def test_render_system_layout(ruin):
    loop, _, _, cs = ruin
    text = render_system(cs, loop.var_names, loop_assume_atoms(loop))
    lines = text.splitlines()
    assert lines[0] == "vars: x y z"
    assert lines[1] == "assume: x >= 0, y >= 0"
    assert lines[2].startswith("[pre] z = 0 ==> ")
    assert lines[2].endswith(" >= 0")
    # assumption atoms are hoisted out of the per-constraint lists
    assert "y >= 0" not in lines[2].split("==>")[0][6:]
    assert any(line.startswith("[post-nonneg 1 advisory]") for line in lines)
