"""Front end for annotated probabilistic while-programs.

Source syntax
-------------

    program   := pragma* stmt
    stmt      := 'skip' | 'abort' | ident ':=' expr | stmt ';' stmt
               | '{' stmt '}' '[' expr ']' '{' stmt '}'
               | 'if' '(' guard ')' 'then' '{' stmt '}' 'else' '{' stmt '}'
               | 'while' '(' guard ')' '{' stmt '}'
    expr      := polynomial arithmetic with ^ (nonnegative integer powers),
                 '/' restricted to constant divisors, and random draws
                 unif(a, b), norm(mu, sigma), discrete(v1: p1, v2: p2, ...)
    guard     := comparisons <, <=, >, >=, =, ==, != over expressions,
                 combined with &&, ||, !, parentheses, and chains (0 < x < y)
    pragma    := '#pre' expr | '#post' expr | '#hint' cmp '=>' guard
               | '#int' ident+ | '#terminates' | '#assume' conjunction

Lines whose '#' is followed by a space are comments.  Random draws may
appear only in assignment right-hand sides, and only affinely: a
right-hand side is a draw-free polynomial plus constant multiples of
draws.  (Higher draw powers still arise internally when expectations are
pushed through an assignment; that is handled by the moment reduction in
the expectation-transformer layer, not by source syntax.)

Guards are desugared to a three-connective core — strict less-than on a
polynomial, conjunction, negation — after applying '#hint' atom rewrites
and replacing '!=' over integer-valued operands by the exact half-unit
disjunction.  A '!=' that is neither hinted away nor integer-valued is
kept as a strict disjunction but flagged; validation rejects it with a
pointer at both remedies.

Variables are indexed by first occurrence (pragmas in file order, then
the program text); the symbolic sigma of norm(mu, sigma) is a named
constant, not a program variable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .poly import Polynomial, RatLike

# ---------------------------------------------------------------------------
# errors


class ParseError(Exception):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        loc = f" at line {line}" if line is not None else ""
        if line is not None and col is not None:
            loc = f" at line {line}, column {col}"
        super().__init__(msg + loc)
        self.line = line
        self.col = col


class ValidationError(Exception):
    pass


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Uniform:
    lo: Fraction
    hi: Fraction

    def render(self) -> str:
        return f"unif({self.lo}, {self.hi})"


@dataclass(frozen=True)
class Normal:
    mean: Fraction
    std: Fraction | str  # a string names a symbolic nonneg constant

    def render(self) -> str:
        return f"norm({self.mean}, {self.std})"


@dataclass(frozen=True)
class Discrete:
    items: tuple[tuple[Fraction, Fraction], ...]  # (value, probability)

    def render(self) -> str:
        inner = ", ".join(f"{v}: {p}" for v, p in self.items)
        return f"discrete({inner})"


Distribution = Uniform | Normal | Discrete


# ---------------------------------------------------------------------------
# core guards: poly < 0, conjunction, negation


@dataclass(frozen=True)
class Lt:
    poly: Polynomial  # poly < 0

    def render(self, names: Sequence[str]) -> str:
        return f"{self.poly.render(names)} < 0"


@dataclass(frozen=True)
class Conj:
    left: "Guard"
    right: "Guard"

    def render(self, names: Sequence[str]) -> str:
        return f"({self.left.render(names)}) && ({self.right.render(names)})"


@dataclass(frozen=True)
class Neg:
    inner: "Guard"

    def render(self, names: Sequence[str]) -> str:
        return f"!({self.inner.render(names)})"


Guard = Lt | Conj | Neg


def guard_not(g: Guard) -> Guard:
    if isinstance(g, Neg):
        return g.inner
    return Neg(g)


def guard_and(parts: Iterable[Guard]) -> Guard | None:
    out: Guard | None = None
    for g in parts:
        out = g if out is None else Conj(out, g)
    return out


def guard_or(a: Guard, b: Guard) -> Guard:
    return Neg(Conj(guard_not(a), guard_not(b)))


def guard_holds(g: Guard, point: Sequence[RatLike]) -> bool:
    if isinstance(g, Lt):
        return g.poly.evaluate(point) < 0
    if isinstance(g, Conj):
        return guard_holds(g.left, point) and guard_holds(g.right, point)
    return not guard_holds(g.inner, point)


def conjuncts(g: Guard) -> list[Guard]:
    """Flatten nested conjunctions into a literal list."""
    if isinstance(g, Conj):
        return conjuncts(g.left) + conjuncts(g.right)
    return [g]


# ---------------------------------------------------------------------------
# core statements


@dataclass(frozen=True)
class RandExpr:
    """A draw-affine right-hand side: base + sum(coeff_i * draw_i)."""

    base: Polynomial
    draws: tuple[tuple[Fraction, Distribution], ...] = ()

    def is_deterministic(self) -> bool:
        return not self.draws

    def render(self, names: Sequence[str]) -> str:
        text = self.base.render(names)
        for coeff, dist in self.draws:
            if coeff == 1:
                piece = dist.render()
            elif coeff == -1:
                piece = None  # handled below
            else:
                piece = f"{abs(coeff)}*{dist.render()}"
            if text == "0" and coeff > 0:
                text = piece if piece else dist.render()
                continue
            if coeff < 0:
                text += f" - {dist.render() if coeff == -1 else piece}"
            else:
                text += f" + {piece}"
        return text


@dataclass(frozen=True)
class Skip:
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Abort:
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Assign:
    var: int
    rhs: RandExpr
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Seq:
    items: tuple["Stmt", ...]
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Prob:
    prob: Fraction
    left: "Stmt"
    right: "Stmt"
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Ite:
    guard: Guard
    then_branch: "Stmt"
    else_branch: "Stmt"
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class While:
    guard: Guard
    body: "Stmt"
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


Stmt = Skip | Abort | Assign | Seq | Prob | Ite | While


# ---------------------------------------------------------------------------
# programs


@dataclass
class Program:
    var_names: list[str]
    int_vars: frozenset[int]
    pre: Polynomial | None
    post: Polynomial | None
    assume_literals: tuple[Guard, ...]
    terminates: bool
    hints: tuple[tuple[str, str], ...]
    body: Stmt
    diagnostics: list[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)


@dataclass
class InnerLoop:
    """One directly-nested loop, split out of the outer body:
    outer body = before ; while (guard) { body } ; after."""

    before: Stmt
    guard: Guard
    body: Stmt
    after: Stmt


@dataclass
class AnnotatedLoop:
    """A validated program of shape  init-prefix ; while (G) { body },
    where the body may itself contain one sequenced inner loop."""

    program: Program
    init: tuple[tuple[int, Fraction], ...]
    guard: Guard
    loop_body: Stmt
    inner: InnerLoop | None = None

    @property
    def var_names(self) -> list[str]:
        return self.program.var_names

    @property
    def n_vars(self) -> int:
        return self.program.n_vars

    @property
    def int_vars(self) -> frozenset[int]:
        return self.program.int_vars

    @property
    def pre(self) -> Polynomial:
        assert self.program.pre is not None
        return self.program.pre

    @property
    def post(self) -> Polynomial:
        assert self.program.post is not None
        return self.program.post

    @property
    def assume_literals(self) -> tuple[Guard, ...]:
        return self.program.assume_literals

    @property
    def terminates(self) -> bool:
        return self.program.terminates


# ---------------------------------------------------------------------------
# raw (pre-lowering) syntax trees


class _E:
    pass


@dataclass
class _ENum(_E):
    value: Fraction


@dataclass
class _EVar(_E):
    name: str
    line: int
    col: int


@dataclass
class _EBin(_E):
    op: str  # + - * /
    left: _E
    right: _E
    line: int = 0
    col: int = 0


@dataclass
class _ENeg(_E):
    inner: _E


@dataclass
class _EPow(_E):
    base: _E
    exp: int
    line: int = 0
    col: int = 0


@dataclass
class _EDraw(_E):
    kind: str  # unif | norm | discrete
    args: list[_E]
    sym_std: str | None  # symbolic sigma name for norm, else None
    line: int = 0
    col: int = 0


class _G:
    pass


@dataclass
class _GCmp(_G):
    op: str  # < <= > >= = == !=
    left: _E
    right: _E
    line: int = 0
    col: int = 0


@dataclass
class _GAnd(_G):
    left: _G
    right: _G


@dataclass
class _GOr(_G):
    left: _G
    right: _G


@dataclass
class _GNot(_G):
    inner: _G


class _S:
    pass


@dataclass
class _SSkip(_S):
    pos: tuple[int, int]


@dataclass
class _SAbort(_S):
    pos: tuple[int, int]


@dataclass
class _SAssign(_S):
    name: str
    rhs: _E
    pos: tuple[int, int]


@dataclass
class _SSeq(_S):
    items: list[_S]
    pos: tuple[int, int]


@dataclass
class _SProb(_S):
    prob: _E
    left: _S
    right: _S
    pos: tuple[int, int]


@dataclass
class _SIte(_S):
    guard: _G
    then_branch: _S
    else_branch: _S
    pos: tuple[int, int]


@dataclass
class _SWhile(_S):
    guard: _G
    body: _S
    pos: tuple[int, int]


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"(?P<num>\d+\.\d+|\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>:=|<=|>=|==|!=|&&|\|\||=>|[-+*/^<>=!;{}\[\]():,])"
    r"|(?P<ws>[ \t\r\n]+)"
)

_KEYWORDS = {"skip", "abort", "if", "then", "else", "while", "unif", "norm", "discrete"}

_PRAGMAS = {"pre", "post", "hint", "int", "terminates", "assume"}


@dataclass(frozen=True)
class _Token:
    kind: str  # num | ident | op | eof
    text: str
    line: int
    col: int


def _tokenize(text: str, first_line: int = 1) -> list[_Token]:
    tokens: list[_Token] = []
    line = first_line
    col = 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            tokens.append(_Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token plumbing ------------------------------------------------

    def peek(self) -> _Token:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        if self.tokens:
            last = self.tokens[-1]
            return _Token("eof", "", last.line, last.col + len(last.text))
        return _Token("eof", "", 1, 1)

    def next(self) -> _Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.text == text and tok.kind in ("op", "ident")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return self.next()

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def expect_end(self) -> None:
        if not self.done():
            tok = self.peek()
            raise ParseError(f"unexpected trailing {tok.text!r}", tok.line, tok.col)

    # -- expressions ----------------------------------------------------

    def expression(self) -> _E:
        node = self.term()
        while True:
            tok = self.peek()
            if tok.text in ("+", "-") and tok.kind == "op":
                self.next()
                rhs = self.term()
                node = _EBin(tok.text, node, rhs, tok.line, tok.col)
            else:
                return node

    def term(self) -> _E:
        node = self.factor()
        while True:
            tok = self.peek()
            if tok.text in ("*", "/") and tok.kind == "op":
                self.next()
                rhs = self.factor()
                node = _EBin(tok.text, node, rhs, tok.line, tok.col)
            else:
                return node

    def factor(self) -> _E:
        if self.accept("-"):
            return _ENeg(self.factor())
        if self.accept("+"):
            return self.factor()
        node = self.atom()
        tok = self.peek()
        if tok.text == "^" and tok.kind == "op":
            self.next()
            num = self.peek()
            if num.kind != "num" or "." in num.text:
                raise ParseError("exponent must be a nonnegative integer literal", num.line, num.col)
            self.next()
            return _EPow(node, int(num.text), tok.line, tok.col)
        return node

    def atom(self) -> _E:
        tok = self.peek()
        if tok.kind == "num":
            self.next()
            return _ENum(Fraction(tok.text))
        if tok.kind == "ident":
            if tok.text in ("unif", "norm", "discrete"):
                return self.draw()
            if tok.text in _KEYWORDS:
                raise ParseError(f"keyword {tok.text!r} cannot be used in an expression", tok.line, tok.col)
            self.next()
            return _EVar(tok.text, tok.line, tok.col)
        if self.accept("("):
            node = self.expression()
            self.expect(")")
            return node
        raise ParseError(f"expected an expression, found {tok.text or 'end of input'!r}", tok.line, tok.col)

    def draw(self) -> _E:
        head = self.next()
        self.expect("(")
        if head.text == "discrete":
            args: list[_E] = []
            while True:
                value = self.expression()
                self.expect(":")
                prob = self.expression()
                args.extend([value, prob])
                if not self.accept(","):
                    break
            self.expect(")")
            return _EDraw("discrete", args, None, head.line, head.col)
        first = self.expression()
        self.expect(",")
        sym: str | None = None
        tok = self.peek()
        if (
            head.text == "norm"
            and tok.kind == "ident"
            and tok.text not in _KEYWORDS
            and self.tokens[self.pos + 1 : self.pos + 2]
            and self.tokens[self.pos + 1].text == ")"
        ):
            sym = tok.text
            self.next()
            second: _E = _EVar(tok.text, tok.line, tok.col)
        else:
            second = self.expression()
        self.expect(")")
        return _EDraw(head.text, [first, second], sym, head.line, head.col)

    # -- guards -----------------------------------------------------------

    def guard(self) -> _G:
        node = self.guard_term()
        while self.accept("||"):
            node = _GOr(node, self.guard_term())
        return node

    def guard_term(self) -> _G:
        node = self.guard_factor()
        while self.accept("&&"):
            node = _GAnd(node, self.guard_factor())
        return node

    def guard_factor(self) -> _G:
        if self.accept("!"):
            return _GNot(self.guard_factor())
        if self.at("("):
            # Either a parenthesized guard or a parenthesized expression
            # opening a comparison; try the guard reading, back off on failure
            # or when a comparison operator follows the closing paren.
            snapshot = self.pos
            try:
                self.expect("(")
                inner = self.guard()
                self.expect(")")
                if self.peek().text in ("<", "<=", ">", ">=", "=", "==", "!="):
                    raise ParseError("comparison after guard", 0, 0)
                return inner
            except ParseError:
                self.pos = snapshot
        return self.comparison()

    def comparison(self) -> _G:
        first = self.expression()
        ops = ("<", "<=", ">", ">=", "=", "==", "!=")
        tok = self.peek()
        if tok.text not in ops:
            raise ParseError(f"expected a comparison operator, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        node: _G | None = None
        left = first
        while self.peek().text in ops:
            op = self.next()
            right = self.expression()
            cmp_node = _GCmp(op.text, left, right, op.line, op.col)
            node = cmp_node if node is None else _GAnd(node, cmp_node)
            left = right
        assert node is not None
        return node

    # -- statements ---------------------------------------------------------

    def statement(self) -> _S:
        first = self.statement_atom()
        items = [first]
        while self.accept(";"):
            if self.done() or self.peek().text in ("}",):
                break  # tolerate a trailing semicolon
            items.append(self.statement_atom())
        if len(items) == 1:
            return first
        return _SSeq(items, first.pos)

    def statement_atom(self) -> _S:
        tok = self.peek()
        pos = (tok.line, tok.col)
        if self.accept("skip"):
            return _SSkip(pos)
        if self.accept("abort"):
            return _SAbort(pos)
        if self.accept("if"):
            self.expect("(")
            g = self.guard()
            self.expect(")")
            self.expect("then")
            self.expect("{")
            then_branch = self.statement()
            self.expect("}")
            self.expect("else")
            self.expect("{")
            else_branch = self.statement()
            self.expect("}")
            return _SIte(g, then_branch, else_branch, pos)
        if self.accept("while"):
            self.expect("(")
            g = self.guard()
            self.expect(")")
            self.expect("{")
            body = self.statement()
            self.expect("}")
            return _SWhile(g, body, pos)
        if self.accept("{"):
            left = self.statement()
            self.expect("}")
            self.expect("[")
            prob = self.expression()
            self.expect("]")
            self.expect("{")
            right = self.statement()
            self.expect("}")
            return _SProb(prob, left, right, pos)
        if tok.kind == "ident" and tok.text not in _KEYWORDS:
            name = self.next().text
            self.expect(":=")
            rhs = self.expression()
            return _SAssign(name, rhs, pos)
        raise ParseError(f"expected a statement, found {tok.text or 'end of input'!r}", tok.line, tok.col)


# ---------------------------------------------------------------------------
# pragma extraction


@dataclass
class _RawPragmas:
    pre: _E | None = None
    post: _E | None = None
    hints: list[tuple[_GCmp, _G, str, str]] = field(default_factory=list)
    int_names: list[tuple[str, int, int]] = field(default_factory=list)
    terminates: bool = False
    assumes: list[_G] = field(default_factory=list)
    order: list[tuple[str, object]] = field(default_factory=list)


def _split_pragmas(text: str) -> tuple[_RawPragmas, list[_Token]]:
    raw = _RawPragmas()
    program_tokens: list[_Token] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.lstrip()
        if not stripped.startswith("#"):
            program_tokens.extend(_tokenize(line, lineno))
            continue
        rest = stripped[1:]
        if rest == "" or rest[0] in (" ", "\t", "#"):
            continue  # comment line
        word = re.match(r"[A-Za-z]+", rest)
        name = word.group() if word else ""
        if name not in _PRAGMAS:
            raise ParseError(f"unknown pragma '#{name}'", lineno, 1)
        body = rest[len(name):]
        parser = _Parser(_tokenize(body, lineno))
        if name == "pre":
            if raw.pre is not None:
                raise ParseError("duplicate #pre", lineno, 1)
            raw.pre = parser.expression()
            parser.expect_end()
            raw.order.append(("pre", raw.pre))
        elif name == "post":
            if raw.post is not None:
                raise ParseError("duplicate #post", lineno, 1)
            raw.post = parser.expression()
            parser.expect_end()
            raw.order.append(("post", raw.post))
        elif name == "hint":
            lhs = parser.comparison()
            if not isinstance(lhs, _GCmp):
                raise ParseError("#hint left-hand side must be a single comparison", lineno, 1)
            parser.expect("=>")
            rhs = parser.guard()
            parser.expect_end()
            toks = _tokenize(body, lineno)
            arrow = next(i for i, t in enumerate(toks) if t.text == "=>")
            lhs_text = " ".join(t.text for t in toks[:arrow])
            rhs_text = " ".join(t.text for t in toks[arrow + 1:])
            raw.hints.append((lhs, rhs, lhs_text, rhs_text))
            raw.order.append(("hint", (lhs, rhs)))
        elif name == "int":
            line_names: list[str] = []
            while not parser.done():
                tok = parser.next()
                if tok.kind != "ident" or tok.text in _KEYWORDS:
                    raise ParseError("#int expects variable names", tok.line, tok.col)
                raw.int_names.append((tok.text, tok.line, tok.col))
                line_names.append(tok.text)
            if not line_names:
                raise ParseError("#int expects at least one variable name", lineno, 1)
            raw.order.append(("int", line_names))
        elif name == "terminates":
            parser.expect_end()
            raw.terminates = True
        elif name == "assume":
            g = parser.guard()
            parser.expect_end()
            raw.assumes.append(g)
            raw.order.append(("assume", g))
    return raw, program_tokens


# ---------------------------------------------------------------------------
# variable collection (first occurrence: pragmas in file order, then program)


def _collect_expr(e: _E, visit: Callable[[str], None]) -> None:
    if isinstance(e, _EVar):
        visit(e.name)
    elif isinstance(e, _EBin):
        _collect_expr(e.left, visit)
        _collect_expr(e.right, visit)
    elif isinstance(e, _ENeg):
        _collect_expr(e.inner, visit)
    elif isinstance(e, _EPow):
        _collect_expr(e.base, visit)
    elif isinstance(e, _EDraw):
        for i, arg in enumerate(e.args):
            if e.sym_std is not None and i == 1:
                continue  # symbolic sigma is not a program variable
            _collect_expr(arg, visit)


def _collect_guard(g: _G, visit: Callable[[str], None]) -> None:
    if isinstance(g, _GCmp):
        _collect_expr(g.left, visit)
        _collect_expr(g.right, visit)
    elif isinstance(g, (_GAnd, _GOr)):
        _collect_guard(g.left, visit)
        _collect_guard(g.right, visit)
    elif isinstance(g, _GNot):
        _collect_guard(g.inner, visit)


def _collect_stmt(s: _S, visit: Callable[[str], None]) -> None:
    if isinstance(s, _SAssign):
        visit(s.name)
        _collect_expr(s.rhs, visit)
    elif isinstance(s, _SSeq):
        for item in s.items:
            _collect_stmt(item, visit)
    elif isinstance(s, _SProb):
        _collect_stmt(s.left, visit)
        _collect_expr(s.prob, visit)
        _collect_stmt(s.right, visit)
    elif isinstance(s, _SIte):
        _collect_guard(s.guard, visit)
        _collect_stmt(s.then_branch, visit)
        _collect_stmt(s.else_branch, visit)
    elif isinstance(s, _SWhile):
        _collect_guard(s.guard, visit)
        _collect_stmt(s.body, visit)


# ---------------------------------------------------------------------------
# lowering


class _Lowerer:
    def __init__(self, var_index: dict[str, int], symbols: set[str]):
        self.var_index = var_index
        self.symbols = symbols
        self.n_vars = len(var_index)

    def poly(self, e: _E, where: str) -> Polynomial:
        """Lower a draw-free expression."""
        rx = self.randexpr(e)
        if rx.draws:
            raise ParseError(f"random draw not allowed in {where}")
        return rx.base

    def constant(self, e: _E, where: str) -> Fraction:
        p = self.poly(e, where)
        if p.degree() > 0:
            raise ParseError(f"{where} must be a constant")
        return p.constant_part()

    def randexpr(self, e: _E) -> RandExpr:
        if isinstance(e, _ENum):
            return RandExpr(Polynomial.constant(self.n_vars, e.value))
        if isinstance(e, _EVar):
            if e.name in self.symbols:
                raise ParseError(
                    f"'{e.name}' is a symbolic distribution parameter and cannot "
                    "appear in program expressions",
                    e.line,
                    e.col,
                )
            return RandExpr(Polynomial.variable(self.n_vars, self.var_index[e.name]))
        if isinstance(e, _ENeg):
            inner = self.randexpr(e.inner)
            return RandExpr(-inner.base, tuple((-c, d) for c, d in inner.draws))
        if isinstance(e, _EBin):
            left = self.randexpr(e.left)
            right = self.randexpr(e.right)
            if e.op == "+":
                return RandExpr(left.base + right.base, left.draws + right.draws)
            if e.op == "-":
                return RandExpr(
                    left.base - right.base,
                    left.draws + tuple((-c, d) for c, d in right.draws),
                )
            if e.op == "*":
                if right.draws and left.draws:
                    raise ParseError("random draws cannot be multiplied together", e.line, e.col)
                if right.draws:
                    left, right = right, left
                # left may carry draws; right is draw-free
                if left.draws and right.base.degree() > 0:
                    raise ParseError(
                        "a random draw may only be scaled by a constant", e.line, e.col
                    )
                if left.draws:
                    c = right.base.constant_part()
                    return RandExpr(left.base.scale(c), tuple((k * c, d) for k, d in left.draws))
                return RandExpr(left.base * right.base)
            if e.op == "/":
                if right.draws or right.base.degree() > 0:
                    raise ParseError("division is only defined by a nonzero constant", e.line, e.col)
                c = right.base.constant_part()
                if c == 0:
                    raise ParseError("division by zero", e.line, e.col)
                return RandExpr(left.base.scale(Fraction(1, 1) / c), tuple((k / c, d) for k, d in left.draws))
            raise AssertionError(e.op)
        if isinstance(e, _EPow):
            inner = self.randexpr(e.base)
            if inner.draws and e.exp > 1:
                raise ParseError(
                    "random draws may appear only affinely in a right-hand side; "
                    "bind the draw to a variable before raising it to a power",
                    e.line,
                    e.col,
                )
            if e.exp == 0:
                return RandExpr(Polynomial.constant(self.n_vars, 1))
            if e.exp == 1:
                return inner
            return RandExpr(inner.base ** e.exp)
        if isinstance(e, _EDraw):
            return RandExpr(Polynomial.zero(self.n_vars), ((Fraction(1), self.distribution(e)),))
        raise AssertionError(type(e))

    def distribution(self, e: _EDraw) -> Distribution:
        if e.kind == "unif":
            lo = self.constant(e.args[0], "a distribution parameter")
            hi = self.constant(e.args[1], "a distribution parameter")
            if lo >= hi:
                raise ParseError("unif(a, b) requires a < b", e.line, e.col)
            return Uniform(lo, hi)
        if e.kind == "norm":
            mean = self.constant(e.args[0], "a distribution parameter")
            if e.sym_std is not None:
                return Normal(mean, e.sym_std)
            std = self.constant(e.args[1], "a distribution parameter")
            if std < 0:
                raise ParseError("norm(mu, sigma) requires sigma >= 0", e.line, e.col)
            return Normal(mean, std)
        if e.kind == "discrete":
            items = []
            total = Fraction(0)
            for i in range(0, len(e.args), 2):
                v = self.constant(e.args[i], "a discrete value")
                p = self.constant(e.args[i + 1], "a discrete probability")
                if p < 0:
                    raise ParseError("discrete probabilities must be nonnegative", e.line, e.col)
                items.append((v, p))
                total += p
            if total != 1:
                raise ParseError(f"discrete probabilities sum to {total}, expected 1", e.line, e.col)
            return Discrete(tuple(items))
        raise AssertionError(e.kind)


def _cmp_signature(op: str, diff: Polynomial) -> tuple[str, Polynomial]:
    """Canonical (kind, polynomial) pair for hint matching.

    Normalizes operator direction and, for symmetric operators, sign.
    """
    if op == ">":
        return ("lt", -diff)
    if op == ">=":
        return ("le", -diff)
    if op == "<":
        return ("lt", diff)
    if op == "<=":
        return ("le", diff)
    kind = "eq" if op in ("=", "==") else "ne"
    for m in sorted(diff.coeffs, key=lambda mm: (sum(mm), tuple(-e for e in mm))):
        if diff.coeffs[m] < 0:
            diff = -diff
        break
    return (kind, diff)


class _GuardLowerer:
    def __init__(
        self,
        lower: _Lowerer,
        hints: list[tuple[tuple[str, Polynomial], Guard]],
        int_vars: frozenset[int],
        diagnostics: list[str],
    ):
        self.lower = lower
        self.hints = hints
        self.int_vars = int_vars
        self.diagnostics = diagnostics

    def is_integer_valued(self, p: Polynomial) -> bool:
        return all(c.denominator == 1 for c in p.coeffs.values()) and all(
            i in self.int_vars for i in p.variables_used()
        )

    def core(self, g: _G) -> Guard:
        if isinstance(g, _GAnd):
            return Conj(self.core(g.left), self.core(g.right))
        if isinstance(g, _GOr):
            return guard_or(self.core(g.left), self.core(g.right))
        if isinstance(g, _GNot):
            return guard_not(self.core(g.inner))
        assert isinstance(g, _GCmp)
        return self.atom(g)

    def atom(self, g: _GCmp) -> Guard:
        diff = self.lower.poly(g.left, "a guard") - self.lower.poly(g.right, "a guard")
        sig = _cmp_signature(g.op, diff)
        for hint_sig, replacement in self.hints:
            if hint_sig == sig:
                return replacement
        if g.op == "<":
            return Lt(diff)
        if g.op == ">":
            return Lt(-diff)
        if g.op == "<=":
            return Neg(Lt(-diff))  # !(right < left)
        if g.op == ">=":
            return Neg(Lt(diff))
        if g.op in ("=", "=="):
            return Conj(Neg(Lt(diff)), Neg(Lt(-diff)))
        assert g.op == "!="
        if self.is_integer_valued(diff):
            half = Polynomial.constant(diff.n_vars, Fraction(1, 2))
            # exact over integers:  p <= -1/2  or  p >= 1/2
            return guard_or(Neg(Lt(-diff - half)), Neg(Lt(diff - half)))
        self.diagnostics.append(
            "a '!=' over real-valued operands only admits a strict disjunction, "
            "which the certificate layer cannot witness; add a '#hint' rewriting "
            "the atom, or mark all its variables with '#int'"
        )
        return guard_or(Lt(diff), Lt(-diff))


# ---------------------------------------------------------------------------
# public parsing entry points


def parse_program(text: str) -> Program:
    raw, program_tokens = _split_pragmas(text)
    parser = _Parser(program_tokens)
    if parser.done():
        raise ParseError("empty program")
    raw_body = parser.statement()
    parser.expect_end()

    # Variable ordering: pragmas in file order, then the program text.
    order: list[str] = []
    seen: set[str] = set()
    symbols: set[str] = set()

    def visit(name: str) -> None:
        if name not in seen:
            seen.add(name)
            order.append(name)

    def collect_symbols_expr(e: _E) -> None:
        if isinstance(e, _EDraw) and e.sym_std is not None:
            symbols.add(e.sym_std)
        if isinstance(e, (_EBin,)):
            collect_symbols_expr(e.left)
            collect_symbols_expr(e.right)
        elif isinstance(e, _ENeg):
            collect_symbols_expr(e.inner)
        elif isinstance(e, _EPow):
            collect_symbols_expr(e.base)
        elif isinstance(e, _EDraw):
            for a in e.args:
                collect_symbols_expr(a)

    def collect_symbols_stmt(s: _S) -> None:
        if isinstance(s, _SAssign):
            collect_symbols_expr(s.rhs)
        elif isinstance(s, _SSeq):
            for item in s.items:
                collect_symbols_stmt(item)
        elif isinstance(s, _SProb):
            collect_symbols_stmt(s.left)
            collect_symbols_stmt(s.right)
        elif isinstance(s, _SIte):
            collect_symbols_stmt(s.then_branch)
            collect_symbols_stmt(s.else_branch)
        elif isinstance(s, _SWhile):
            collect_symbols_stmt(s.body)

    collect_symbols_stmt(raw_body)

    for kind, payload in raw.order:
        if kind in ("pre", "post"):
            _collect_expr(payload, visit)  # type: ignore[arg-type]
        elif kind == "hint":
            lhs, rhs = payload  # type: ignore[misc]
            _collect_guard(lhs, visit)
            _collect_guard(rhs, visit)
        elif kind == "int":
            for name in payload:  # type: ignore[union-attr]
                visit(name)
        elif kind == "assume":
            _collect_guard(payload, visit)  # type: ignore[arg-type]
    _collect_stmt(raw_body, visit)

    clash = seen & symbols
    if clash:
        raise ParseError(
            f"name(s) {sorted(clash)} used both as program variables and as "
            "symbolic distribution parameters"
        )

    var_index = {name: i for i, name in enumerate(order)}
    lower = _Lowerer(var_index, symbols)
    diagnostics: list[str] = []

    int_vars = frozenset(var_index[name] for name, _, _ in raw.int_names)

    hint_rules: list[tuple[tuple[str, Polynomial], Guard]] = []
    plain_guard_lowerer = _GuardLowerer(lower, [], int_vars, diagnostics)
    for lhs, rhs, _, _ in raw.hints:
        diff = lower.poly(lhs.left, "a hint") - lower.poly(lhs.right, "a hint")
        sig = _cmp_signature(lhs.op, diff)
        hint_rules.append((sig, plain_guard_lowerer.core(rhs)))

    guards = _GuardLowerer(lower, hint_rules, int_vars, diagnostics)

    pre = lower.poly(raw.pre, "#pre") if raw.pre is not None else None
    post = lower.poly(raw.post, "#post") if raw.post is not None else None

    assume_literals: list[Guard] = []
    for g in raw.assumes:
        assume_literals.extend(_lower_assume(g, guards))

    def lower_stmt(s: _S) -> Stmt:
        if isinstance(s, _SSkip):
            return Skip(s.pos)
        if isinstance(s, _SAbort):
            return Abort(s.pos)
        if isinstance(s, _SAssign):
            return Assign(var_index[s.name], lower.randexpr(s.rhs), s.pos)
        if isinstance(s, _SSeq):
            return Seq(tuple(lower_stmt(i) for i in s.items), s.pos)
        if isinstance(s, _SProb):
            rx = lower.randexpr(s.prob)
            if rx.draws or rx.base.degree() > 0:
                raise ParseError("branch probability must be a constant", *s.pos)
            p = rx.base.constant_part()
            if not 0 <= p <= 1:
                raise ParseError(f"branch probability {p} outside [0, 1]", *s.pos)
            return Prob(p, lower_stmt(s.left), lower_stmt(s.right), s.pos)
        if isinstance(s, _SIte):
            return Ite(guards.core(s.guard), lower_stmt(s.then_branch), lower_stmt(s.else_branch), s.pos)
        if isinstance(s, _SWhile):
            return While(guards.core(s.guard), lower_stmt(s.body), s.pos)
        raise AssertionError(type(s))

    body = lower_stmt(raw_body)
    hints = tuple((lt, rt) for _, _, lt, rt in raw.hints)
    return Program(
        var_names=order,
        int_vars=int_vars,
        pre=pre,
        post=post,
        assume_literals=tuple(assume_literals),
        terminates=raw.terminates,
        hints=hints,
        body=body,
        diagnostics=diagnostics,
    )


def _lower_assume(g: _G, guards: _GuardLowerer) -> list[Guard]:
    """Lower an '#assume' tree, which must be a conjunction of comparisons."""
    if isinstance(g, _GAnd):
        return _lower_assume(g.left, guards) + _lower_assume(g.right, guards)
    if not isinstance(g, _GCmp):
        raise ParseError("#assume must be a conjunction of comparisons")
    if g.op == "!=":
        raise ParseError("#assume does not accept '!='")
    core = guards.atom(g)
    return conjuncts(core)


def parse_polynomial(text: str, var_names: Sequence[str]) -> Polynomial:
    """Parse a draw-free polynomial over an existing variable list."""
    parser = _Parser(_tokenize(text))
    raw = parser.expression()
    parser.expect_end()

    unknown: list[str] = []

    def visit(name: str) -> None:
        if name not in var_names and name not in unknown:
            unknown.append(name)

    _collect_expr(raw, visit)
    if unknown:
        raise ParseError(f"unknown variable(s): {', '.join(unknown)}")
    lower = _Lowerer({n: i for i, n in enumerate(var_names)}, set())
    return lower.poly(raw, "a polynomial")


# ---------------------------------------------------------------------------
# validation


def validate(program: Program) -> AnnotatedLoop:
    """Check the annotated-loop shape and the pragma contract."""
    if program.pre is None:
        raise ValidationError("missing #pre annotation")
    if program.post is None:
        raise ValidationError("missing #post annotation")
    if program.diagnostics:
        raise ValidationError("; ".join(program.diagnostics))

    items = list(program.body.items) if isinstance(program.body, Seq) else [program.body]
    if not isinstance(items[-1], While):
        raise ValidationError("the program must end in a single top-level while loop")
    loop = items[-1]
    init: list[tuple[int, Fraction]] = []
    seen_init: set[int] = set()
    for s in items[:-1]:
        if not isinstance(s, Assign):
            raise ValidationError(
                "only constant assignments may precede the loop "
                f"(found {type(s).__name__.lower()} at line {s.pos[0]})"
            )
        if not s.rhs.is_deterministic() or s.rhs.base.degree() > 0:
            raise ValidationError(
                f"initialization of '{program.var_names[s.var]}' must assign a constant"
            )
        if s.var in seen_init:
            raise ValidationError(
                f"variable '{program.var_names[s.var]}' initialized twice"
            )
        seen_init.add(s.var)
        init.append((s.var, s.rhs.base.constant_part()))

    if program.pre is not None:
        overlap = program.pre.variables_used() & seen_init
        if overlap:
            names = ", ".join(sorted(program.var_names[i] for i in overlap))
            raise ValidationError(
                f"#pre mentions initialized variable(s) {names}; the pre-expectation "
                "ranges over inputs only"
            )

    inner = _split_inner(loop.body)
    return AnnotatedLoop(
        program=program,
        init=tuple(init),
        guard=loop.guard,
        loop_body=loop.body,
        inner=inner,
    )


def _contains_while(s: Stmt) -> bool:
    if isinstance(s, While):
        return True
    if isinstance(s, Seq):
        return any(_contains_while(i) for i in s.items)
    if isinstance(s, Prob):
        return _contains_while(s.left) or _contains_while(s.right)
    if isinstance(s, Ite):
        return _contains_while(s.then_branch) or _contains_while(s.else_branch)
    return False


def _split_inner(body: Stmt) -> InnerLoop | None:
    """Allow at most one inner loop, sequenced directly in the outer body."""
    items = list(body.items) if isinstance(body, Seq) else [body]
    loop_positions = [i for i, s in enumerate(items) if isinstance(s, While)]
    for i, s in enumerate(items):
        if i in loop_positions:
            continue
        if _contains_while(s):
            raise ValidationError(
                "loops are only supported sequenced directly inside the outer body, "
                "not under branching"
            )
    if not loop_positions:
        return None
    if len(loop_positions) > 1:
        raise ValidationError("at most one inner loop is supported")
    k = loop_positions[0]
    inner_while = items[k]
    assert isinstance(inner_while, While)
    if _contains_while(inner_while.body):
        raise ValidationError("loops nested more than one level deep are not supported")

    def seq_of(parts: list[Stmt]) -> Stmt:
        if not parts:
            return Skip()
        if len(parts) == 1:
            return parts[0]
        return Seq(tuple(parts))

    return InnerLoop(
        before=seq_of(items[:k]),
        guard=inner_while.guard,
        body=inner_while.body,
        after=seq_of(items[k + 1:]),
    )


# ---------------------------------------------------------------------------
# pretty-printing (canonical core form; parse(pretty(p)) == p up to renaming)


def pretty(program: Program) -> str:
    names = program.var_names
    lines: list[str] = []
    if program.pre is not None:
        lines.append(f"#pre {program.pre.render(names)}")
    if program.post is not None:
        lines.append(f"#post {program.post.render(names)}")
    if program.int_vars:
        flagged = " ".join(names[i] for i in sorted(program.int_vars))
        lines.append(f"#int {flagged}")
    for lit in program.assume_literals:
        lines.append(f"#assume {_render_assume_literal(lit, names)}")
    if program.terminates:
        lines.append("#terminates")
    lines.extend(_pretty_stmt(program.body, names, 0))
    return "\n".join(lines) + "\n"


def _render_assume_literal(lit: Guard, names: Sequence[str]) -> str:
    if isinstance(lit, Neg) and isinstance(lit.inner, Lt):
        return f"{lit.inner.poly.render(names)} >= 0"
    return lit.render(names)


def _pretty_stmt(s: Stmt, names: Sequence[str], indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(s, Skip):
        return [pad + "skip"]
    if isinstance(s, Abort):
        return [pad + "abort"]
    if isinstance(s, Assign):
        return [pad + f"{names[s.var]} := {s.rhs.render(names)}"]
    if isinstance(s, Seq):
        out: list[str] = []
        for i, item in enumerate(s.items):
            chunk = _pretty_stmt(item, names, indent)
            if i < len(s.items) - 1:
                chunk[-1] += ";"
            out.extend(chunk)
        return out
    if isinstance(s, Prob):
        left = _pretty_stmt(s.left, names, indent + 1)
        right = _pretty_stmt(s.right, names, indent + 1)
        return [pad + "{"] + left + [pad + "} [" + str(s.prob) + "] {"] + right + [pad + "}"]
    if isinstance(s, Ite):
        out = [pad + f"if ({s.guard.render(names)}) then {{"]
        out += _pretty_stmt(s.then_branch, names, indent + 1)
        out += [pad + "} else {"]
        out += _pretty_stmt(s.else_branch, names, indent + 1)
        out += [pad + "}"]
        return out
    if isinstance(s, While):
        out = [pad + f"while ({s.guard.render(names)}) {{"]
        out += _pretty_stmt(s.body, names, indent + 1)
        out += [pad + "}"]
        return out
    raise AssertionError(type(s))
