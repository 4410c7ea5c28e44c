"""Monte-Carlo interpreter used as an independent oracle for the
pre-expectation transformer, plus a random loop-free program generator.

This is test-support code: it re-implements program semantics forward
(sampling actual runs with numpy) so that the backward transformer in
the library is checked against something that shares none of its code.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from piq.lang import (
    Abort,
    Assign,
    Conj,
    Discrete,
    Guard,
    Ite,
    Lt,
    Neg,
    Normal,
    Prob,
    RandExpr,
    Seq,
    Skip,
    Stmt,
    Uniform,
)
from piq.poly import Polynomial

# ------------------------------------------------------------ forward runs


def eval_poly_rows(poly: Polynomial, state: np.ndarray) -> np.ndarray:
    out = np.zeros(state.shape[0])
    for m, c in poly.coeffs.items():
        term = np.full(state.shape[0], float(c))
        for i, e in enumerate(m):
            if e:
                term = term * state[:, i] ** e
        out += term
    return out


def eval_guard_rows(g: Guard, state: np.ndarray) -> np.ndarray:
    if isinstance(g, Lt):
        return eval_poly_rows(g.poly, state) < 0
    if isinstance(g, Conj):
        return eval_guard_rows(g.left, state) & eval_guard_rows(g.right, state)
    assert isinstance(g, Neg)
    return ~eval_guard_rows(g.inner, state)


def sample_dist(dist, size: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(dist, Uniform):
        return rng.uniform(float(dist.lo), float(dist.hi), size)
    if isinstance(dist, Normal):
        return rng.normal(float(dist.mean), float(dist.std), size)
    assert isinstance(dist, Discrete)
    values = np.array([float(v) for v, _ in dist.items])
    probs = np.array([float(p) for _, p in dist.items])
    return rng.choice(values, size=size, p=probs / probs.sum())


def run_rows(
    stmt: Stmt, state: np.ndarray, alive: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(stmt, Skip):
        return state, alive
    if isinstance(stmt, Abort):
        return state, np.zeros_like(alive)
    if isinstance(stmt, Assign):
        value = eval_poly_rows(stmt.rhs.base, state)
        for coeff, dist in stmt.rhs.draws:
            value = value + float(coeff) * sample_dist(dist, state.shape[0], rng)
        state = state.copy()
        state[:, stmt.var] = value
        return state, alive
    if isinstance(stmt, Seq):
        for item in stmt.items:
            state, alive = run_rows(item, state, alive, rng)
        return state, alive
    if isinstance(stmt, Prob):
        coin = rng.random(state.shape[0]) < float(stmt.prob)
        ls, la = run_rows(stmt.left, state, alive, rng)
        rs, ra = run_rows(stmt.right, state, alive, rng)
        return np.where(coin[:, None], ls, rs), np.where(coin, la, ra)
    if isinstance(stmt, Ite):
        mask = eval_guard_rows(stmt.guard, state)
        ts, ta = run_rows(stmt.then_branch, state, alive, rng)
        es, ea = run_rows(stmt.else_branch, state, alive, rng)
        return np.where(mask[:, None], ts, es), np.where(mask, ta, ea)
    raise AssertionError(f"forward oracle cannot run {type(stmt).__name__}")


def estimate_expectation(
    stmt: Stmt,
    init_point,
    post: Polynomial,
    n_runs: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Mean and standard error of post(final state), aborted runs count 0."""
    state = np.tile(np.array([float(v) for v in init_point]), (n_runs, 1))
    alive = np.ones(n_runs, dtype=bool)
    state, alive = run_rows(stmt, state, alive, rng)
    vals = eval_poly_rows(post, state)
    vals = np.where(alive, vals, 0.0)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_runs))


# ------------------------------------------------------ random programs


def rand_fraction(rng: np.random.Generator, lo=-2, hi=2, dens=(1, 2, 4)) -> Fraction:
    den = int(rng.choice(dens))
    num = int(rng.integers(lo * den, hi * den + 1))
    return Fraction(num, den)


def rand_poly(rng: np.random.Generator, n_vars: int, degree: int, n_terms: int) -> Polynomial:
    coeffs = {}
    for _ in range(n_terms):
        m = [0] * n_vars
        for _ in range(int(rng.integers(0, degree + 1))):
            m[int(rng.integers(0, n_vars))] += 1
        coeffs[tuple(m)] = rand_fraction(rng)
    return Polynomial(n_vars, coeffs)


def rand_dist(rng: np.random.Generator):
    kind = int(rng.integers(0, 3))
    if kind == 0:
        a = rand_fraction(rng)
        return Uniform(a, a + abs(rand_fraction(rng)) + 1)
    if kind == 1:
        return Normal(rand_fraction(rng), abs(rand_fraction(rng, 0, 2, (2, 4))) + Fraction(1, 4))
    values = sorted({rand_fraction(rng) for _ in range(2)} | {Fraction(0)})
    weights = [1 + int(rng.integers(0, 3)) for _ in values]
    total = sum(weights)
    return Discrete(tuple((v, Fraction(w, total)) for v, w in zip(values, weights)))


def rand_rhs(rng: np.random.Generator, n_vars: int) -> RandExpr:
    base = rand_poly(rng, n_vars, degree=1 if rng.random() < 0.7 else 2, n_terms=2)
    draws = []
    if rng.random() < 0.4:
        for _ in range(1 + (rng.random() < 0.2)):
            coeff = rand_fraction(rng)
            if coeff == 0:
                coeff = Fraction(1)
            draws.append((coeff, rand_dist(rng)))
    return RandExpr(base, tuple(draws))


def rand_guard(rng: np.random.Generator, n_vars: int) -> Guard:
    atom = Lt(rand_poly(rng, n_vars, degree=1, n_terms=2))
    if not atom.poly.coeffs:
        atom = Lt(Polynomial.variable(n_vars, 0) - Polynomial.constant(n_vars, 1))
    if rng.random() < 0.3:
        return Conj(atom, Lt(rand_poly(rng, n_vars, degree=1, n_terms=2)))
    if rng.random() < 0.3:
        return Neg(atom)
    return atom


def rand_stmt(rng: np.random.Generator, n_vars: int, depth: int) -> Stmt:
    roll = rng.random()
    if depth == 0 or roll < 0.45:
        return Assign(int(rng.integers(0, n_vars)), rand_rhs(rng, n_vars))
    if roll < 0.65:
        return Seq(tuple(rand_stmt(rng, n_vars, depth - 1) for _ in range(int(rng.integers(2, 4)))))
    if roll < 0.80:
        p = Fraction(int(rng.integers(1, 4)), 4)
        return Prob(p, rand_stmt(rng, n_vars, depth - 1), rand_stmt(rng, n_vars, depth - 1))
    if roll < 0.92:
        return Ite(
            rand_guard(rng, n_vars),
            rand_stmt(rng, n_vars, depth - 1),
            rand_stmt(rng, n_vars, depth - 1),
        )
    if roll < 0.97:
        return Skip()
    return Abort()
