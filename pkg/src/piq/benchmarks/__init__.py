"""Checked-in benchmark programs with their expected outcomes.

Each benchmark is one annotated program file.  Expected invariants are
recorded only where every run reproduces the same rational coefficients;
the remaining cases keep solver-dependent digits, so only their status
is pinned ("Verified" or "CandidateUnverified" with a candidate that
survives the numeric and sampling layers).

Suites:
  table1      every benchmark below
  appendixD   the case studies beyond the shared corpus (perceptron,
              the two airline schedules, and the nested walk)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..lang import AnnotatedLoop, parse_polynomial, parse_program, validate
from ..poly import Polynomial

_DIR = Path(__file__).resolve().parent


@dataclass(frozen=True)
class Benchmark:
    name: str  # display name
    slug: str  # file stem and lookup key
    suites: tuple[str, ...]
    expected_invariant: str | None = None  # None: coefficients are solver-dependent
    synth_options: tuple[tuple[str, object], ...] = ()  # SynthesisConfig overrides

    @property
    def path(self) -> Path:
        return _DIR / f"{self.slug}.pp"

    def source(self) -> str:
        return self.path.read_text()

    def load(self) -> AnnotatedLoop:
        return validate(parse_program(self.source()))

    def expected_polynomial(self, var_names) -> Polynomial | None:
        if self.expected_invariant is None:
            return None
        return parse_polynomial(self.expected_invariant, var_names)


BENCHMARKS: tuple[Benchmark, ...] = (
    Benchmark("ruin", "ruin", ("table1",), "z + x*y - x^2"),
    Benchmark("bin1", "bin1", ("table1",), "x + 1/4*n*y"),
    Benchmark("bin2", "bin2", ("table1",), "x + 1/8*n^2 - 1/8*n + 3/4*n*y"),
    Benchmark("bin3", "bin3", ("table1",), None),
    Benchmark("geo", "geo", ("table1",), "x + 3*z*y"),
    Benchmark("geo2", "geo2", ("table1",), None),
    Benchmark("sum", "sum", ("table1",), "x + 1/4*n^2 + 1/4*n"),
    Benchmark("prod", "prod", ("table1",), "x*y + 1/2*n*x + 1/2*n*y + 1/4*n^2 - 1/4*n"),
    Benchmark("fair coin1", "fair_coin1", ("table1",), None),
    Benchmark("fair coin2", "fair_coin2", ("table1",), None),
    Benchmark("fair coin3", "fair_coin3", ("table1",), None),
    Benchmark("simple perceptron", "perceptron", ("table1", "appendixD"), "n - 2*b"),
    Benchmark("airplane delay", "airplane", ("table1", "appendixD"), "106.548*x - 106.548*n + h"),
    Benchmark("airplane delay2", "airplane2", ("table1", "appendixD"), "282.507*x - 282.507*n + h"),
    Benchmark("nested loop", "nested", ("table1", "appendixD"), "k + 20*m - 20*x"),
)


def get(slug: str) -> Benchmark:
    for b in BENCHMARKS:
        if b.slug == slug or b.name == slug:
            return b
    raise KeyError(f"no benchmark named {slug!r}")


def suite(name: str) -> tuple[Benchmark, ...]:
    picked = tuple(b for b in BENCHMARKS if name in b.suites)
    if not picked:
        raise KeyError(f"no benchmark suite named {name!r}")
    return picked
