"""Self-contained interior-point solver for block-diagonal semidefinite
feasibility problems.

The input (`sos.SDPProblem`) asks for positive-semidefinite blocks X_b
and a free vector y with  sum <A_ib, X_b> + (N y)_i = b_i.  Clean
certificate problems sit exactly on the boundary of the cone (their
Gram matrices are often forced to zero), which no interior method can
approach gracefully, so the solver always works on the *margin
reformulation*

    maximize t   s.t.   Z_b := X_b - t I  >=  0,   t + s = 1,  s >= 0,

in variables (Z, y, t, s).  Its optimum t* is positive exactly when
the original problem has a strictly feasible point, zero when it is
feasible only on the boundary, and negative when it is infeasible; the
cap t <= 1 keeps the objective bounded.  The reformulation is solved by
a primal-dual path-following method (HKM direction, Schur complement
augmented with the free columns, Mehrotra-style adaptive centering).

No status is reported on the solver's word alone:

  * "feasible" requires the reconstructed (X, y) to pass an
    independent re-check of the equations and an eigenvalue bound;
  * "infeasible" requires an explicitly verified ray: a vector yhat
    over the rows with  sum_i yhat_i A_ib <= 0  (all blocks),
    N^T yhat = 0, and  b^T yhat > 0, which contradicts feasibility;
  * anything unverifiable is reported "unknown".

Presolve catches the cheap cases first: rows with no unknowns and a
nonzero right-hand side, duplicate rows with conflicting right-hand
sides, and general linear inconsistency (detected by least squares,
whose residual *is* the certificate ray).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .sos import LinearRow, SDPProblem


class SdpError(Exception):
    pass


def min_eig(mat: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix (0 for empty input)."""
    a = np.asarray(mat, dtype=float)
    if a.size == 0:
        return 0.0
    a = (a + a.T) / 2.0
    return float(np.linalg.eigvalsh(a)[0])


@dataclass
class SolverConfig:
    max_iterations: int = 150
    tolerance: float = 1e-9
    step_fraction: float = 0.98
    margin_epsilon: float = 1e-6  # |t*| below this counts as boundary-feasible
    psd_tolerance: float = 1e-8
    eq_tolerance: float = 1e-6
    farkas_gap: float = 1e-7


@dataclass
class SDPSolution:
    status: str  # "feasible" | "infeasible" | "unknown"
    blocks: list[np.ndarray] | None = None
    frees: np.ndarray | None = None
    margin: float = 0.0  # optimal t of the margin program
    min_eigenvalue: float = 0.0  # measured over the returned blocks
    equation_residual: float = 0.0
    farkas: np.ndarray | None = None
    iterations: int = 0
    converged: bool = False
    detail: str = ""


# ---------------------------------------------------------------------------
# independent contract checks (shared with tests and verification)


def equation_residuals(problem: SDPProblem, blocks, frees) -> np.ndarray:
    out = np.zeros(len(problem.rows))
    for i, row in enumerate(problem.rows):
        total = 0.0
        for b, r, c, coeff in row.psd:
            total += float(coeff) * float(blocks[b][r][c])
        for j, coeff in row.free:
            total += float(coeff) * float(frees[j])
        out[i] = total - float(row.rhs)
    return out


def check_solution(
    problem: SDPProblem, blocks, frees, config: SolverConfig
) -> tuple[bool, float, float]:
    """(passes, min eigenvalue over blocks, max |equation residual|)."""
    eig = min(
        (min_eig(np.asarray(x, dtype=float)) for x in blocks if np.asarray(x).size),
        default=0.0,
    )
    resid = equation_residuals(problem, blocks, frees)
    worst = float(np.max(np.abs(resid))) if resid.size else 0.0
    scale = 1.0 + max((abs(float(r.rhs)) for r in problem.rows), default=0.0)
    ok = eig >= -config.psd_tolerance and worst <= config.eq_tolerance * scale
    return ok, eig, worst


def check_farkas(problem: SDPProblem, y: np.ndarray, config: SolverConfig) -> bool:
    """Verify an infeasibility ray: sum y_i A_ib <= 0 per block,
    N^T y ~ 0, b^T y > 0 (after sup-norm normalization)."""
    y = np.asarray(y, dtype=float)
    if y.shape != (len(problem.rows),) or not np.all(np.isfinite(y)):
        return False
    top = float(np.max(np.abs(y))) if y.size else 0.0
    if top == 0.0:
        return False
    y = y / top
    combos = [np.zeros((n, n)) for n in problem.block_sizes]
    frees = np.zeros(problem.n_free)
    bdot = 0.0
    for i, row in enumerate(problem.rows):
        if y[i] == 0.0:
            continue
        for b, r, c, coeff in row.psd:
            half = y[i] * float(coeff) / (1.0 if r == c else 2.0)
            combos[b][r][c] += half
            if r != c:
                combos[b][c][r] += half
        for j, coeff in row.free:
            frees[j] += y[i] * float(coeff)
        bdot += y[i] * float(row.rhs)
    if frees.size and float(np.max(np.abs(frees))) > config.eq_tolerance:
        return False
    for s in combos:
        if s.size and -min_eig(-s) > config.psd_tolerance:
            return False
    scale = 1.0 + max((abs(float(r.rhs)) for r in problem.rows), default=0.0)
    return bdot > config.farkas_gap * scale


# ---------------------------------------------------------------------------
# presolve


@dataclass
class _Presolved:
    rows: list[LinearRow]
    origin: list[int]  # index into problem.rows


def _lift_certificate(problem: SDPProblem, kept: _Presolved, y_kept) -> np.ndarray:
    y = np.zeros(len(problem.rows))
    for value, k in zip(y_kept, kept.origin):
        y[k] = value
    return y


def _presolve(problem: SDPProblem):
    """Returns (_Presolved, certificate | None).  A certificate means
    the rows are already known inconsistent.

    Rows are normalized first — duplicate cells combined, zero net
    coefficients dropped — so `0 = 0` rows disappear instead of
    degrading the KKT system, and rows that are exact scalar multiples
    of an earlier row are dropped (or certify a conflict)."""
    kept = _Presolved([], [])
    seen: dict[tuple, tuple[int, Fraction, Fraction]] = {}
    for i, row in enumerate(problem.rows):
        psd: dict[tuple[int, int, int], Fraction] = {}
        fre: dict[int, Fraction] = {}
        for b, r, c, coeff in row.psd:
            psd[(b, r, c)] = psd.get((b, r, c), Fraction(0)) + coeff
        for j, coeff in row.free:
            fre[j] = fre.get(j, Fraction(0)) + coeff
        psd = {k: v for k, v in sorted(psd.items()) if v != 0}
        fre = {k: v for k, v in sorted(fre.items()) if v != 0}
        if not psd and not fre:
            if row.rhs == 0:
                continue
            y = np.zeros(len(problem.rows))
            y[i] = 1.0 if row.rhs > 0 else -1.0
            return kept, y
        lead = next(iter(psd.values())) if psd else next(iter(fre.values()))
        key = (
            tuple((k, v / lead) for k, v in psd.items()),
            tuple((k, v / lead) for k, v in fre.items()),
        )
        scaled_rhs = row.rhs / lead
        if key in seen:
            j, lead_j, rhs_j = seen[key]
            if scaled_rhs != rhs_j:
                y = np.zeros(len(problem.rows))
                sign = 1.0 if scaled_rhs > rhs_j else -1.0
                y[i] = sign / float(lead)
                y[j] = -sign / float(lead_j)
                return kept, y
            continue
        seen[key] = (i, lead, scaled_rhs)
        kept.rows.append(
            LinearRow(
                psd=[(b, r, c, v) for (b, r, c), v in psd.items()],
                free=list(fre.items()),
                rhs=row.rhs,
                note=row.note,
            )
        )
        kept.origin.append(i)
    return kept, None


def _triangle_offsets(sizes: list[int]) -> tuple[list[int], int]:
    offs, total = [], 0
    for n in sizes:
        offs.append(total)
        total += n * (n + 1) // 2
    return offs, total


def _row_matrix(problem: SDPProblem, kept: _Presolved):
    """Rows as a dense matrix over (upper-triangle block entries, frees)."""
    offs, width = _triangle_offsets(problem.block_sizes)
    m = len(kept.rows)
    L = np.zeros((m, width + problem.n_free))
    b = np.zeros(m)
    for i, row in enumerate(kept.rows):
        for blk, r, c, coeff in row.psd:
            n = problem.block_sizes[blk]
            col = offs[blk] + r * n - r * (r - 1) // 2 + (c - r)
            L[i, col] += float(coeff)
        for j, coeff in row.free:
            L[i, width + j] += float(coeff)
        b[i] = float(row.rhs)
    return L, b


def _linear_consistency(problem: SDPProblem, kept: _Presolved):
    """Least-squares check that the equations admit *any* solution,
    ignoring the cone.  The residual, when large, is a ray with
    L^T r = 0 and b^T r = |r|^2 > 0."""
    if not kept.rows:
        return None
    L, b = _row_matrix(problem, kept)
    sol, *_ = np.linalg.lstsq(L, b, rcond=None)
    resid = b - L @ sol
    scale = 1.0 + float(np.max(np.abs(b)))
    if float(np.max(np.abs(resid))) <= 1e-7 * scale:
        return None
    return _lift_certificate(problem, kept, resid)


def _independent_rows(problem: SDPProblem, kept: _Presolved) -> _Presolved:
    """A maximal linearly independent subset of the rows.

    Consistency is established beforehand, so dependent rows add
    nothing to the solution set — but they make the KKT matrix of the
    interior-point method exactly singular, which ruins its directions
    once the barrier weight is small."""
    L, _ = _row_matrix(problem, kept)
    out = _Presolved([], [])
    basis: list[np.ndarray] = []
    q_mat = np.zeros((0, L.shape[1]))
    for i, row in enumerate(kept.rows):
        v = L[i] / float(np.linalg.norm(L[i]))
        for _ in range(2):  # reorthogonalize for stability
            if basis:
                v = v - q_mat.T @ (q_mat @ v)
        nrm = float(np.linalg.norm(v))
        if nrm <= 1e-9:
            continue
        basis.append(v / nrm)
        q_mat = np.vstack([q_mat, v / nrm])
        out.rows.append(row)
        out.origin.append(kept.origin[i])
    return out


def _strip_untouched(problem: SDPProblem, kept: _Presolved):
    """Blocks and free columns referenced by no row would leave the dual
    without a strictly feasible point (or the KKT system singular), so
    the margin program is built over the touched ones only."""
    used_blocks = sorted({e[0] for row in kept.rows for e in row.psd})
    used_frees = sorted({j for row in kept.rows for j, _ in row.free})
    bmap = {b: i for i, b in enumerate(used_blocks)}
    fmap = {j: i for i, j in enumerate(used_frees)}
    rows = [
        LinearRow(
            psd=[(bmap[b], r, c, v) for b, r, c, v in row.psd],
            free=[(fmap[j], v) for j, v in row.free],
            rhs=row.rhs,
            note=row.note,
        )
        for row in kept.rows
    ]
    sizes = [problem.block_sizes[b] for b in used_blocks]
    return sizes, len(used_frees), rows, used_blocks, used_frees


# ---------------------------------------------------------------------------
# the margin program and its interior-point solution


class _Margin:
    """Dense arrays for: max t  s.t.  A(Z) + tau t + N y = b, t + s = 1."""

    def __init__(self, sizes: list[int], n_free: int, rows: list[LinearRow]):
        self.n_orig_free = n_free
        self.sizes = list(sizes) + [1]  # slack block last
        self.slack = len(self.sizes) - 1
        m = len(rows) + 1  # cap row last
        self.m = m
        self.n_free = n_free + 1  # t last
        self.t_col = n_free

        rows_by_block: dict[int, list[tuple[int, np.ndarray]]] = {}
        self.N = np.zeros((m, self.n_free))
        self.b = np.zeros(m)
        self.row_scale = np.ones(len(rows))  # dual rays must be unscaled by this
        for i, row in enumerate(rows):
            scale = max(
                [abs(float(c)) for *_, c in row.psd]
                + [abs(float(c)) for _, c in row.free]
                + [abs(float(row.rhs)), 1e-12]
            )
            self.row_scale[i] = scale
            per_block: dict[int, np.ndarray] = {}
            tau = 0.0
            for blk, r, c, coeff in row.psd:
                a = per_block.setdefault(
                    blk, np.zeros((self.sizes[blk], self.sizes[blk]))
                )
                v = float(coeff) / scale
                if r == c:
                    a[r, r] += v
                    tau += v
                else:
                    a[r, c] += v / 2.0
                    a[c, r] += v / 2.0
            for j, coeff in row.free:
                self.N[i, j] += float(coeff) / scale
            self.N[i, self.t_col] = tau
            self.b[i] = float(row.rhs) / scale
            for blk, a in per_block.items():
                rows_by_block.setdefault(blk, []).append((i, a))
        # cap row: t + s = 1
        cap = m - 1
        self.N[cap, self.t_col] = 1.0
        rows_by_block.setdefault(self.slack, []).append((cap, np.ones((1, 1))))
        self.b[cap] = 1.0

        self.block_rows: list[tuple[int, np.ndarray, np.ndarray]] = []
        for blk, pairs in sorted(rows_by_block.items()):
            idx = np.array([i for i, _ in pairs], dtype=int)
            stack = np.stack([a for _, a in pairs])
            self.block_rows.append((blk, idx, stack))

        # the KKT system below *minimizes* c_free . u, so max t needs -1
        self.c_free = np.zeros(self.n_free)
        self.c_free[self.t_col] = -1.0

    def apply(self, Z: list[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for blk, idx, P in self.block_rows:
            out[idx] += np.einsum("iab,ab->i", P, Z[blk])
        return out

    def adjoint(self, lam: np.ndarray) -> list[np.ndarray]:
        out = [np.zeros((n, n)) for n in self.sizes]
        for blk, idx, P in self.block_rows:
            out[blk] += np.einsum("i,iab->ab", lam[idx], P)
        return out


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha with X + alpha dX >= 0, given X > 0."""
    L = np.linalg.cholesky(X)
    Y = np.linalg.solve(L, dX)
    Y = np.linalg.solve(L, Y.T).T
    w = np.linalg.eigvalsh((Y + Y.T) / 2.0)
    lo = float(w[0])
    if lo >= -1e-14:
        return np.inf
    return 1.0 / (-lo)


def _ipm(mp: _Margin, config: SolverConfig):
    """Minimize c_free . u over A(Z) + N u = b, Z >= 0.

    KKT residuals: r_p = b - A(Z) - N u,  r_d = -adj(lam) - S,
    r_f = c_free - N^T lam, complementarity Z S -> mu I."""
    sizes, m = mp.sizes, mp.m
    nb = len(sizes)
    ndim = sum(sizes)
    Z = [np.eye(n) for n in sizes]
    S = [np.eye(n) for n in sizes]
    lam = np.zeros(m)
    u = np.zeros(mp.n_free)
    bscale = 1.0 + float(np.max(np.abs(mp.b)))
    converged = False
    it = 0

    for it in range(1, config.max_iterations + 1):
        r_p = mp.b - mp.apply(Z) - mp.N @ u
        At = mp.adjoint(lam)
        r_d = [-At[b] - S[b] for b in range(nb)]
        r_f = mp.c_free - mp.N.T @ lam
        mu = sum(float(np.sum(Z[b] * S[b])) for b in range(nb)) / ndim
        gap = abs(float(mp.c_free @ u) - float(mp.b @ lam)) / (
            1.0 + abs(float(mp.b @ lam))
        )
        err = max(
            float(np.max(np.abs(r_p))) / bscale,
            max(float(np.max(np.abs(r))) for r in r_d),
            float(np.max(np.abs(r_f))),
        )
        tol = config.tolerance * 10
        if err <= tol and (mu <= tol or gap <= tol):
            converged = True
            break

        try:
            Sinv = [np.linalg.inv((S[b] + S[b].T) / 2.0) for b in range(nb)]
            Sinv = [(w + w.T) / 2.0 for w in Sinv]
            M = np.zeros((m, m))
            for blk, idx, P in mp.block_rows:
                W = np.einsum("ab,ibc,cd->iad", Z[blk], P, Sinv[blk])
                M[np.ix_(idx, idx)] += np.einsum("iab,jba->ij", P, W)
            K = np.zeros((m + mp.n_free, m + mp.n_free))
            K[:m, :m] = M
            K[:m, m:] = mp.N
            K[m:, :m] = mp.N.T
            for i in range(m):
                K[i, i] += 1e-12
            for j in range(mp.n_free):
                K[m + j, m + j] -= 1e-12

            def direction(mu_target: float):
                G = [
                    mu_target * Sinv[b] - Z[b] - Z[b] @ r_d[b] @ Sinv[b]
                    for b in range(nb)
                ]
                rhs = np.concatenate([r_p - mp.apply(G), r_f])
                sol = np.linalg.solve(K, rhs)
                dlam, du = sol[:m], sol[m:]
                dAt = mp.adjoint(dlam)
                dS = [-dAt[b] + r_d[b] for b in range(nb)]
                dZ = [G[b] + Z[b] @ dAt[b] @ Sinv[b] for b in range(nb)]
                dZ = [(d + d.T) / 2.0 for d in dZ]
                return dlam, du, dS, dZ

            # predictor chooses the centering weight
            dlam, du, dS, dZ = direction(0.0)
            ap = min(
                1.0,
                config.step_fraction * min(_max_step(Z[b], dZ[b]) for b in range(nb)),
            )
            ad = min(
                1.0,
                config.step_fraction * min(_max_step(S[b], dS[b]) for b in range(nb)),
            )
            mu_aff = (
                sum(
                    float(np.sum((Z[b] + ap * dZ[b]) * (S[b] + ad * dS[b])))
                    for b in range(nb)
                )
                / ndim
            )
            sigma = min(0.8, max(1e-4, (max(mu_aff, 0.0) / mu) ** 3)) if mu > 0 else 0.1
            dlam, du, dS, dZ = direction(sigma * mu)
        except np.linalg.LinAlgError:
            break

        ap = min(
            1.0, config.step_fraction * min(_max_step(Z[b], dZ[b]) for b in range(nb))
        )
        ad = min(
            1.0, config.step_fraction * min(_max_step(S[b], dS[b]) for b in range(nb))
        )
        if not np.isfinite(ap) or not np.isfinite(ad) or ap <= 1e-13 or ad <= 1e-13:
            break
        for b in range(nb):
            Z[b] = Z[b] + ap * dZ[b]
            S[b] = S[b] + ad * dS[b]
        u = u + ap * du
        lam = lam + ad * dlam
        if not all(
            np.all(np.isfinite(Z[b])) and np.all(np.isfinite(S[b])) for b in range(nb)
        ):
            break

    return Z, S, lam, u, converged, it


def _ray_candidates(y: np.ndarray):
    """The raw ray plus polished variants.  Interior-point rays carry
    O(sqrt(mu)) fuzz in components whose exact value is zero, which the
    verification gate's squared terms can notice; truncating relatively
    tiny entries and snapping to a coarse rational grid recovers the
    exact ray when it is sparse or rational.  Every candidate is still
    re-verified — polishing never weakens the gate."""
    yield y
    top = float(np.max(np.abs(y)))
    if top == 0.0:
        return
    trunc = np.where(np.abs(y) >= 1e-3 * top, y, 0.0)
    yield trunc
    snapped = np.array(
        [float(Fraction(v / top).limit_denominator(1000)) for v in trunc]
    )
    yield snapped


def _ray_search(problem: SDPProblem, kept: _Presolved, config: SolverConfig):
    """Look for an infeasibility ray directly.

    The rays of  {A(X) + N y = b, X >= 0}  are the solutions of the
    companion system  T_b = -sum_k l_k A_kb >= 0,  N^T l = 0,
    b^T l = 1 — another problem in our own input format.  This finds
    certificates even when the margin program's optimum is unattained
    and the interior-point iterates diverge."""
    ray_prob = SDPProblem()
    for size, label in zip(problem.block_sizes, problem.block_labels):
        ray_prob.add_block(size, f"ray {label}")
    for k in range(len(kept.rows)):
        ray_prob.add_free(f"l{k}")
    entry_rows: dict[tuple[int, int, int], LinearRow] = {}
    for b, size in enumerate(problem.block_sizes):
        for r in range(size):
            for c in range(r, size):
                entry_rows[(b, r, c)] = LinearRow(
                    psd=[(b, r, c, Fraction(1))], note=f"ray entry {b} {r} {c}"
                )
    norm = LinearRow(rhs=Fraction(1), note="ray normalization")
    null_rows = [LinearRow(note=f"ray null {j}") for j in range(problem.n_free)]
    for k, row in enumerate(kept.rows):
        for b, r, c, coeff in row.psd:
            entry_rows[(b, r, c)].free.append((k, coeff if r == c else coeff / 2))
        for j, coeff in row.free:
            null_rows[j].free.append((k, coeff))
        if row.rhs:
            norm.free.append((k, row.rhs))
    ray_prob.rows = list(entry_rows.values()) + null_rows + [norm]
    sub = solve_feasibility(ray_prob, config, _search_ray=False)
    if sub.status != "feasible":
        return None
    return np.array([float(sub.frees[k]) for k in range(len(kept.rows))])


def _verified_ray(
    problem: SDPProblem, kept: _Presolved, ray: np.ndarray, config: SolverConfig
):
    """Lift the first polished variant of ``ray`` that passes the gate."""
    for cand in _ray_candidates(np.asarray(ray, dtype=float)):
        yhat = _lift_certificate(problem, kept, cand)
        if check_farkas(problem, yhat, config):
            return yhat
    return None


def solve_feasibility(
    problem: SDPProblem,
    config: SolverConfig | None = None,
    *,
    _search_ray: bool = True,
) -> SDPSolution:
    config = config or SolverConfig()
    kept, cert = _presolve(problem)
    if cert is not None:
        if check_farkas(problem, cert, config):
            return SDPSolution(
                status="infeasible", farkas=cert, detail="inconsistent rows"
            )
        return SDPSolution(
            status="unknown", detail="presolve certificate failed its check"
        )
    if not kept.rows:
        blocks = [np.zeros((n, n)) for n in problem.block_sizes]
        frees = np.zeros(problem.n_free)
        return SDPSolution(
            status="feasible",
            blocks=blocks,
            frees=frees,
            margin=1.0,
            converged=True,
            detail="no binding rows",
        )
    cert = _linear_consistency(problem, kept)
    if cert is not None and check_farkas(problem, cert, config):
        return SDPSolution(
            status="infeasible", farkas=cert, detail="linearly inconsistent rows"
        )

    kept = _independent_rows(problem, kept)
    sizes, n_free, rows, used_blocks, used_frees = _strip_untouched(problem, kept)
    mp = _Margin(sizes, n_free, rows)
    Z, S, lam, u, converged, iters = _ipm(mp, config)
    t = float(u[mp.t_col])

    # Z stays strictly inside the cone, so clamping a slightly negative
    # margin keeps the blocks positive semidefinite by construction; the
    # induced equation defect |t| * tr(A_i) is checked right below.
    t_pos = max(t, 0.0)
    blocks = [np.zeros((n, n)) for n in problem.block_sizes]
    for new_b, old_b in enumerate(used_blocks):
        blocks[old_b] = Z[new_b] + t_pos * np.eye(mp.sizes[new_b])
    frees = np.zeros(problem.n_free)
    for new_j, old_j in enumerate(used_frees):
        frees[old_j] = float(u[new_j])
    ok, eig, resid = check_solution(problem, blocks, frees, config)
    if t >= -config.margin_epsilon and ok:
        return SDPSolution(
            status="feasible",
            blocks=blocks,
            frees=frees,
            margin=t,
            min_eigenvalue=eig,
            equation_residual=resid,
            iterations=iters,
            converged=converged,
            detail="margin optimum"
            if converged
            else "unconverged iterate passed the re-check",
        )
    if t < 0:
        ray = lam[: len(kept.rows)] / mp.row_scale
        yhat = _verified_ray(problem, kept, ray, config)
        if yhat is not None:
            return SDPSolution(
                status="infeasible",
                margin=t,
                farkas=yhat,
                iterations=iters,
                converged=converged,
                detail="verified ray from the margin dual",
            )
    if _search_ray:
        ray = _ray_search(problem, kept, config)
        if ray is not None:
            yhat = _verified_ray(problem, kept, ray, config)
            if yhat is not None:
                return SDPSolution(
                    status="infeasible",
                    margin=t,
                    farkas=yhat,
                    iterations=iters,
                    converged=converged,
                    detail="verified ray from the direct search",
                )
    return SDPSolution(
        status="unknown",
        margin=t,
        min_eigenvalue=eig,
        equation_residual=resid,
        iterations=iters,
        converged=converged,
        detail="no verified certificate in either direction",
    )


# ---------------------------------------------------------------------------
# text serialization (exact, Fraction-valued)


def dump_problem(problem: SDPProblem) -> str:
    lines = [
        "blocks: " + " ".join(str(n) for n in problem.block_sizes),
        "frees: " + str(problem.n_free),
        "rows: " + str(len(problem.rows)),
    ]
    for i, row in enumerate(problem.rows):
        note = f"  # {row.note}" if row.note else ""
        lines.append(f"row {i}{note}")
        for b, r, c, coeff in row.psd:
            lines.append(f"  psd {b} {r} {c} {coeff}")
        for j, coeff in row.free:
            lines.append(f"  free {j} {coeff}")
        lines.append(f"  rhs {row.rhs}")
    return "\n".join(lines) + "\n"


def parse_problem(text: str) -> SDPProblem:
    problem = SDPProblem()
    row: LinearRow | None = None

    def current_row() -> LinearRow:
        if row is None:
            raise SdpError("entry line appears before any 'row' header")
        return row

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "blocks:":
            for n in parts[1:]:
                problem.add_block(int(n), f"block {len(problem.block_sizes)}")
        elif parts[0] == "frees:":
            for j in range(int(parts[1])):
                problem.add_free(f"y{j}")
        elif parts[0] == "rows:":
            continue
        elif parts[0] == "row":
            row = LinearRow(note=f"row {parts[1]}")
            problem.rows.append(row)
        elif parts[0] == "psd":
            b, r, c = int(parts[1]), int(parts[2]), int(parts[3])
            if not 0 <= b < len(problem.block_sizes):
                raise SdpError(f"psd entry names unknown block {b}")
            if not 0 <= r <= c < problem.block_sizes[b]:
                raise SdpError(f"psd entry ({r},{c}) outside block {b}")
            current_row().psd.append((b, r, c, Fraction(parts[4])))
        elif parts[0] == "free":
            j = int(parts[1])
            if not 0 <= j < problem.n_free:
                raise SdpError(f"free entry names unknown column {j}")
            current_row().free.append((j, Fraction(parts[2])))
        elif parts[0] == "rhs":
            current_row().rhs = Fraction(parts[1])
        else:
            raise SdpError(f"unrecognized line: {line!r}")
    return problem
