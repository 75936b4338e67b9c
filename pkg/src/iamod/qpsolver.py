"""Primal-dual interior-point solver for sparse convex QPs.

Problem form (see :class:`~iamod.qpmodel.QuadraticProgram`)::

    min ½x'Qx + c'x   s.t.  A_eq x = b_eq,  A_in x <= b_in,  x >= lower

with ``lower`` in {0, -inf}. Multipliers follow the stationarity convention

    Qx + c + A_eq' y + A_in' z - w = 0,   z >= 0,  w >= 0 (w = 0 on free columns).

Pipeline: presolve of closed rows (``a'x <= 0`` with a > 0 over
sign-constrained columns) -> Ruiz equilibration -> Mehrotra
predictor-corrector on the regularized quasi-definite augmented system ->
active-set polish -> unscale/postsolve. A phase-I problem provides a Farkas
certificate when the main iteration stalls.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NumericalBreakdown
from .qpmodel import QuadraticProgram

log = logging.getLogger(__name__)


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    seed: Optional[int] = None  # randomizes the starting point
    polish: bool = True
    ruiz_iter: int = 25
    reg_primal: float = 1e-9
    reg_dual: float = 1e-9
    refine_steps: int = 4


@dataclass(frozen=True)
class ResidualReport:
    primal_feas: float
    dual_feas: float
    comp_slack: float
    duality_gap: float
    primal_objective: float = 0.0

    def as_dict(self) -> dict:
        return {"primal_feas": self.primal_feas, "dual_feas": self.dual_feas,
                "comp_slack": self.comp_slack, "duality_gap": self.duality_gap}

    def worst(self, qp: QuadraticProgram) -> float:
        """Largest residual relative to its acceptance scale (<= tol means optimal)."""
        p, d = _scales(qp)
        o = max(1.0, abs(self.primal_objective))
        return max(self.primal_feas / p, self.dual_feas / d, self.comp_slack / o,
                   self.duality_gap)


@dataclass(frozen=True)
class InfeasibilityCertificate:
    """Farkas ray: ``v >= 0``, ``A_eq'u + A_in'v >= 0`` on sign-constrained
    columns (``= 0`` on free ones) and ``b_eq'u + b_in'v < 0``."""
    u: np.ndarray
    v: np.ndarray
    violated_eq: tuple[int, ...]
    violated_in: tuple[int, ...]
    phase1_value: float


@dataclass(frozen=True, eq=False)
class SolveResult:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    status: Status
    residuals: ResidualReport
    iterations: int
    polished: bool = False
    certificate: Optional[InfeasibilityCertificate] = None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


def _scales(qp: QuadraticProgram) -> tuple[float, float]:
    b = np.concatenate([qp.b_eq, qp.b_in])
    b = b[np.isfinite(b)]
    pscale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    dscale = max(1.0, float(np.max(np.abs(qp.c))) if qp.n else 1.0)
    return pscale, dscale


def kkt_residuals(qp: QuadraticProgram, x, y, z, w) -> ResidualReport:
    """Evaluate feasibility, stationarity, complementarity and the duality gap
    of a candidate primal-dual point (absolute values, original units)."""
    x, y, z, w = (np.asarray(v, dtype=float).ravel() for v in (x, y, z, w))
    if x.shape != (qp.n,) or w.shape != (qp.n,) or y.shape != (qp.m_eq,) or z.shape != (qp.m_in,):
        raise DimensionMismatch("candidate point does not match the QP dimensions")
    bounded = qp.bounded
    Ax_eq = qp.A_eq @ x
    Ax_in = qp.A_in @ x
    slack = qp.b_in - Ax_in
    primal = 0.0
    if qp.m_eq:
        primal = max(primal, float(np.max(np.abs(Ax_eq - qp.b_eq))))
    if qp.m_in:
        primal = max(primal, float(np.max(-slack, initial=0.0)))
    if bounded.any():
        primal = max(primal, float(np.max(-x[bounded], initial=0.0)))

    Qx = qp.Q @ x
    stat = Qx + qp.c + qp.A_eq.T @ y + qp.A_in.T @ z - w
    dual = float(np.max(np.abs(stat), initial=0.0))
    dual = max(dual, float(np.max(-z, initial=0.0)), float(np.max(-w[bounded], initial=0.0)),
               float(np.max(np.abs(w[~bounded]), initial=0.0)))

    comp = max(float(np.max(np.abs(z * slack), initial=0.0)),
               float(np.max(np.abs(w[bounded] * x[bounded]), initial=0.0)))

    pobj = float(0.5 * x @ Qx + qp.c @ x)
    dobj = float(-0.5 * x @ Qx - qp.b_eq @ y - qp.b_in @ z)
    gap = abs(pobj - dobj) / max(1.0, abs(pobj))
    return ResidualReport(primal, dual, comp, gap, pobj)


# ------------------------------------------------------------------ presolve

@dataclass
class _Presolve:
    keep_cols: np.ndarray
    keep_eq: np.ndarray
    keep_in: np.ndarray
    reduced: QuadraticProgram


def _presolve(qp: QuadraticProgram) -> _Presolve:
    """Fix columns of rows that force them to zero and drop those rows.

    A row ``a'x <= b`` with ``b == 0``, all ``a > 0`` and all its columns
    sign-constrained admits only ``x = 0`` on its support (a closed arc);
    leaving it in would remove every interior point.
    """
    n = qp.n
    fixed = np.zeros(n, dtype=bool)
    keep_in = np.ones(qp.m_in, dtype=bool)
    A = qp.A_in.tocsr()
    for i in range(qp.m_in):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        cols, vals = A.indices[lo:hi], A.data[lo:hi]
        if qp.b_in[i] == 0 and len(cols) and np.all(vals > 0) and np.all(qp.lower[cols] == 0):
            fixed[cols] = True
            keep_in[i] = False
    keep_cols = ~fixed
    A_eq = qp.A_eq[:, keep_cols]
    nnz_row = np.diff(A_eq.tocsr().indptr)
    keep_eq = (nnz_row > 0) | (qp.b_eq != 0)
    Q = qp.Q[keep_cols][:, keep_cols]
    reduced = QuadraticProgram(Q, qp.c[keep_cols], A_eq[keep_eq], qp.b_eq[keep_eq],
                               qp.A_in[keep_in][:, keep_cols], qp.b_in[keep_in],
                               qp.lower[keep_cols])
    return _Presolve(keep_cols, keep_eq, keep_in, reduced)


def _postsolve(qp: QuadraticProgram, pre: _Presolve, x_r, y_r, z_r, w_r):
    x = np.zeros(qp.n)
    x[pre.keep_cols] = x_r
    y = np.zeros(qp.m_eq)
    y[pre.keep_eq] = y_r
    z = np.zeros(qp.m_in)
    z[pre.keep_in] = z_r
    w = np.zeros(qp.n)
    w[pre.keep_cols] = w_r
    if pre.keep_cols.all():
        return x, y, z, w
    g = qp.Q @ x + qp.c + qp.A_eq.T @ y + qp.A_in.T @ z
    A = qp.A_in.tocsr()
    for i in np.flatnonzero(~pre.keep_in):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        cols, vals = A.indices[lo:hi], A.data[lo:hi]
        # Any multiplier above the smallest one keeping the closed columns'
        # bound duals >= 0 is optimal. Add a margin so closed arcs stay
        # strictly unattractive once priced, instead of tying with the
        # cheapest open alternative.
        margin = max(1.0, float(np.max(np.abs(qp.c[cols]))))
        zi = max(0.0, float(np.max(-g[cols] / vals))) + margin
        z[i] = zi
        g[cols] += vals * zi
    fixed = ~pre.keep_cols
    w[fixed] = g[fixed]
    return x, y, z, w


# ------------------------------------------------------------------- scaling

@dataclass
class _Scaling:
    d: np.ndarray  # column scaling, x = d * x_scaled
    e: np.ndarray  # row scaling of [A_eq; A_in]
    sigma: float  # objective scaling


def _ruiz(qp: QuadraticProgram, iters: int) -> _Scaling:
    n = qp.n
    A = sp.vstack([qp.A_eq, qp.A_in], format="csc")
    Q = qp.Q.tocsc()
    m = A.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    for _ in range(iters):
        Qs = sp.diags(d) @ Q @ sp.diags(d)
        As = sp.diags(e) @ A @ sp.diags(d)
        col = np.maximum(_colmax(Qs), _colmax(As))
        row = _colmax(As.T.tocsc()) if m else np.zeros(0)
        col[col == 0] = 1.0
        row[row == 0] = 1.0
        d /= np.sqrt(col)
        e /= np.sqrt(row)
        if np.all(np.abs(1 - col) < 1e-3) and np.all(np.abs(1 - row) < 1e-3):
            break
    Qs = sp.diags(d) @ Q @ sp.diags(d)
    qn = float(np.mean(_colmax(Qs))) if n else 0.0
    cn = float(np.max(np.abs(d * qp.c), initial=0.0))
    scale = max(qn, cn)
    sigma = 1.0 / scale if scale > 0 else 1.0
    sigma = float(np.clip(sigma, 1e-6, 1e6))
    return _Scaling(d, e, sigma)


def _colmax(M: sp.csc_matrix) -> np.ndarray:
    M = abs(M.tocsc())
    out = np.zeros(M.shape[1])
    if M.nnz:
        nz = np.diff(M.indptr) > 0
        out[nz] = np.maximum.reduceat(M.data, M.indptr[:-1][nz])
    return out


# ------------------------------------------------------------ standard form

@dataclass
class _StdForm:
    """Scaled problem with slacks: min ½v'Hv + g'v s.t. Kv = r, v_B >= 0."""
    H: sp.csc_matrix
    g: np.ndarray
    K: sp.csr_matrix
    r: np.ndarray
    B: np.ndarray  # bool mask of sign-constrained entries of v
    n: int
    m_eq: int
    m_in: int

    @classmethod
    def build(cls, qp: QuadraticProgram, sc: _Scaling) -> "_StdForm":
        n, me, mi = qp.n, qp.m_eq, qp.m_in
        D = sp.diags(sc.d)
        Qs = (sc.sigma * (D @ qp.Q @ D)).tocsc()
        E_eq = sp.diags(sc.e[:me])
        E_in = sp.diags(sc.e[me:])
        H = sp.block_diag([Qs, sp.csc_matrix((mi, mi))], format="csc")
        K = sp.bmat([[E_eq @ qp.A_eq @ D, sp.csr_matrix((me, mi))],
                     [E_in @ qp.A_in @ D, sp.identity(mi)]], format="csr")
        if K.shape[1] != n + mi:  # bmat drops empty blocks
            K = sp.csr_matrix((K.data, K.indices, K.indptr), shape=(me + mi, n + mi))
        g = np.concatenate([sc.sigma * sc.d * qp.c, np.zeros(mi)])
        r = np.concatenate([sc.e[:me] * qp.b_eq, sc.e[me:] * qp.b_in])
        B = np.concatenate([qp.lower == 0, np.ones(mi, dtype=bool)])
        return cls(H, g, K, r, B, n, me, mi)

    def unscale(self, sc: _Scaling, v, lam, om):
        n, me = self.n, self.m_eq
        x = sc.d * v[:n]
        lam_u = sc.e * lam / sc.sigma
        y = -lam_u[:me]
        z = -lam_u[me:]
        w = om[:n] / (sc.sigma * sc.d)
        return x, y, z, w


class _KKTSolver:
    """Factorization of the regularized quasi-definite augmented matrix
    ``[[-(H + D + rho I), K'], [K, delta I]]`` with iterative refinement
    against the unregularized matrix."""

    def __init__(self, std: _StdForm, rho: float, delta: float, refine: int):
        self.std = std
        self.rho, self.delta, self.refine = rho, delta, refine
        nv, m = std.H.shape[0], std.K.shape[0]
        self.nv, self.m = nv, m
        self.base = sp.bmat([[-std.H, std.K.T], [std.K, None]], format="csc")
        if self.base.shape != (nv + m, nv + m):
            self.base = sp.csc_matrix(self.base, shape=(nv + m, nv + m))

    def factor(self, Dvec: np.ndarray, fixed: Optional[np.ndarray] = None):
        rho, delta = self.rho, self.delta
        for attempt in range(4):
            diag_true = np.concatenate([-Dvec, np.zeros(self.m)])
            diag_reg = np.concatenate([-Dvec - rho, np.full(self.m, delta)])
            self.true = (self.base + sp.diags(diag_true)).tocsc()
            M = (self.base + sp.diags(diag_reg)).tocsc()
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", sp.SparseEfficiencyWarning)
                    self.lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A",
                                        diag_pivot_thresh=0.01,
                                        options={"SymmetricMode": True})
                return
            except (RuntimeError, sp.SparseEfficiencyWarning) as exc:
                log.debug("factorization failed (%s); raising regularization", exc)
                rho *= 100
                delta *= 100
        raise NumericalBreakdown("KKT factorization failed after regularization retries")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        sol = self.lu.solve(rhs)
        for _ in range(self.refine):
            res = rhs - self.true @ sol
            if not np.all(np.isfinite(res)):
                break
            sol = sol + self.lu.solve(res)
        if not np.all(np.isfinite(sol)):
            raise NumericalBreakdown("non-finite Newton direction")
        return sol


def _max_step(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


# ------------------------------------------------------------------ polish

def _polish(std: _StdForm, v, lam, om, opts: SolverOptions, max_rounds: int = 12,
            bulk_rounds: int = 6):
    """Refine an interior iterate by solving equality-constrained QPs with
    the active bounds fixed at zero.

    The active set starts from the interior iterate and is corrected
    primal-dual active-set style: fixed entries with a negative bound
    multiplier are released, free entries that went negative are fixed.
    After ``bulk_rounds`` full swaps only the worst violation is corrected
    per round, which breaks the cycling full swaps can fall into.
    Proximal iterations keep the multipliers of dependent rows close to the
    interior-point values.
    """
    B = std.B
    active = B & (v < om)
    for rnd in range(max_rounds):
        F = ~active
        out = _solve_reduced(std, F, v, lam)
        if out is None:
            return None
        vp, lp = out
        omp = std.H @ vp + std.g - std.K.T @ lp
        omp[~B] = 0.0
        omp[F] = 0.0
        # violations at round-off level are not worth another round
        tv = 1e-12 * max(1.0, float(np.max(np.abs(vp))))
        to = 1e-12 * max(1.0, float(np.max(np.abs(omp))))
        release = active & (omp < -to)
        fix = B & F & (vp < -tv)
        if not (release.any() or fix.any()):
            vp[B & (vp < 0)] = 0.0
            omp[B & (omp < 0)] = 0.0
            return vp, lp, omp
        if rnd >= bulk_rounds:
            score = np.where(release, -omp / to, 0.0) + np.where(fix, -vp / tv, 0.0)
            k = int(np.argmax(score))
            release = np.zeros_like(release)
            fix = np.zeros_like(fix)
            (release if active[k] else fix)[k] = True
        active = (active & ~release) | fix
        v, lam = vp, lp
    return None


def _solve_reduced(std: _StdForm, F: np.ndarray, v, lam):
    H_FF = std.H[F][:, F]
    K_F = std.K[:, F].tocsc()
    nF, m = H_FF.shape[0], std.K.shape[0]
    if nF + m == 0:
        return np.zeros_like(v), lam.copy()
    rho, delta = 1e-10, 1e-10
    M = sp.bmat([[H_FF + rho * sp.identity(nF), K_F.T],
                 [K_F, -delta * sp.identity(m)]], format="csc")
    T = sp.bmat([[H_FF, K_F.T], [K_F, sp.csc_matrix((m, m))]], format="csc")
    try:
        lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01,
                       options={"SymmetricMode": True})
    except RuntimeError:
        return None
    # unknowns (v_F, -lam) of the exact system T [v_F; -lam] = [-g_F; r]
    sol = np.concatenate([v[F], -lam])
    rhs = np.concatenate([-std.g[F], std.r])
    for _ in range(30):
        step = lu.solve(rhs - T @ sol)
        if not np.all(np.isfinite(step)):
            return None
        sol = sol + step
        if np.max(np.abs(step), initial=0.0) <= 1e-15 * max(1.0, np.max(np.abs(sol), initial=0.0)):
            break
    vp = np.zeros_like(v)
    vp[F] = sol[:nF]
    return vp, -sol[nF:]


# ---------------------------------------------------------------- IPM core

def _starting_point(std: _StdForm, kkt: _KKTSolver):
    """Mehrotra's heuristic: minimum-norm primal and dual estimates, shifted
    into the positive orthant and balanced."""
    nv, B = std.H.shape[0], std.B
    kkt.factor(np.ones(nv) - kkt.rho)  # -(H + I) block
    sol = kkt.solve(np.concatenate([np.zeros(nv), std.r]))
    v, lam = sol[:nv], sol[nv:]
    h = std.H @ v + std.g
    sol = kkt.solve(np.concatenate([h, np.zeros(std.K.shape[0])]))
    om = np.where(B, -sol[:nv], 0.0)
    lam = sol[nv:]
    if B.any():
        vb, ob = v[B], om[B]
        vb = vb + max(-1.5 * vb.min(), 0.0)
        ob = ob + max(-1.5 * ob.min(), 0.0)
        if vb.sum() <= 0:
            vb = vb + 1.0
        if ob.sum() <= 0:
            ob = ob + 1.0
        prod = float(vb @ ob)
        vb = vb + 0.5 * prod / ob.sum()
        ob = ob + 0.5 * prod / vb.sum()
        v[B], om[B] = vb, ob
    return v, lam, om


@dataclass
class _CoreResult:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    converged: bool
    stalled: bool
    iterations: int
    polished: bool
    report: ResidualReport = field(default=None)


def _ipm(qp: QuadraticProgram, opts: SolverOptions) -> _CoreResult:
    sc = _ruiz(qp, opts.ruiz_iter)
    std = _StdForm.build(qp, sc)
    nv, m = std.H.shape[0], std.K.shape[0]
    B = std.B
    nB = int(B.sum())
    rng = np.random.default_rng(opts.seed) if opts.seed is not None else None

    kkt = _KKTSolver(std, opts.reg_primal, opts.reg_dual, opts.refine_steps)
    v, lam, om = _starting_point(std, kkt)
    if rng is not None:
        v[B] *= np.exp(rng.uniform(-0.5, 0.5, nB))
        om[B] *= np.exp(rng.uniform(-0.5, 0.5, nB))
    Hdiag_free = None
    tol = opts.tol
    best = np.inf
    best_at = 0
    polish_from = 1e-5
    result = None

    def evaluate(vv, ll, oo):
        x, y, z, w = std.unscale(sc, vv, ll, oo)
        return (x, y, z, w), kkt_residuals(qp, x, y, z, w)

    # Once the residuals pass ``tol`` the iterate is already acceptable, but
    # on nearly linear problems only a polished vertex pins down the primal
    # accurately. Keep iterating a little longer while polishing fails; the
    # active-set guess sharpens as the barrier parameter shrinks.
    extra_iters = 20
    converged_at = None
    it = 0
    for it in range(opts.max_iter + 1):
        point, rep = evaluate(v, lam, om)
        worst = rep.worst(qp)
        if opts.polish and worst <= polish_from:
            pol = _polish(std, v, lam, om, opts)
            if pol is not None:
                ppoint, prep = evaluate(*pol)
                if prep.worst(qp) <= tol:
                    result = _CoreResult(*ppoint, True, False, it, True, prep)
                    break
        if worst <= tol:
            if result is None or worst <= result.report.worst(qp):
                result = _CoreResult(*point, True, False, it, False, rep)
            if converged_at is None:
                converged_at = it
            if not opts.polish or it - converged_at >= extra_iters:
                break
        if worst < 0.5 * best:
            best, best_at = worst, it
        if it - best_at > 30 or not np.isfinite(worst) or np.max(np.abs(v)) > 1e14:
            if result is not None:
                break
            return _CoreResult(*point, False, True, it, False, rep)
        if it == opts.max_iter:
            break

        rd = std.H @ v + std.g - std.K.T @ lam - om
        rp = std.r - std.K @ v
        mu = float(v[B] @ om[B]) / nB if nB else 0.0
        Dvec = np.zeros(nv)
        Dvec[B] = om[B] / v[B]
        kkt.factor(Dvec)

        def direction(rc):
            rhs1 = rd.copy()
            rhs1[B] -= rc / v[B]
            sol = kkt.solve(np.concatenate([rhs1, rp]))
            dv, dl = sol[:nv], sol[nv:]
            do = np.zeros(nv)
            do[B] = (rc - om[B] * dv[B]) / v[B]
            return dv, dl, do

        rc_aff = -v[B] * om[B]
        dv, dl, do = direction(rc_aff)
        if nB:
            a_aff = min(_max_step(v[B], dv[B]), _max_step(om[B], do[B]))
            mu_aff = float((v[B] + a_aff * dv[B]) @ (om[B] + a_aff * do[B])) / nB
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            rc = sigma * mu - v[B] * om[B] - dv[B] * do[B]
            dv, dl, do = direction(rc)
            alpha = min(_max_step(v[B], dv[B]), _max_step(om[B], do[B]))
            alpha = min(1.0, 0.995 * alpha)
        else:
            alpha = 1.0
        log.debug("it %3d worst %.3e mu %.3e alpha %.3f |v| %.3e |lam| %.3e",
                  it, worst, mu, alpha, np.max(np.abs(v)), np.max(np.abs(lam), initial=0.0))
        v = v + alpha * dv
        lam = lam + alpha * dl
        om = om + alpha * do
        if nB:
            v[B] = np.maximum(v[B], 1e-300)
            om[B] = np.maximum(om[B], 1e-300)

    if result is None:
        point, rep = evaluate(v, lam, om)
        return _CoreResult(*point, False, False, it, False, rep)
    return result


def _phase_one(qp: QuadraticProgram, opts: SolverOptions) -> Optional[InfeasibilityCertificate]:
    """Minimize total constraint violation; a positive optimum proves
    infeasibility and its multipliers form the certificate."""
    n, me, mi = qp.n, qp.m_eq, qp.m_in
    I_eq = sp.identity(me, format="csr")
    A_eq = sp.hstack([qp.A_eq, I_eq, -I_eq, sp.csr_matrix((me, mi))], format="csr")
    A_in = sp.hstack([qp.A_in, sp.csr_matrix((mi, 2 * me)), -sp.identity(mi)], format="csr")
    N = n + 2 * me + mi
    c = np.concatenate([np.zeros(n), np.ones(2 * me + mi)])
    lower = np.concatenate([qp.lower, np.zeros(2 * me + mi)])
    p1 = QuadraticProgram(sp.csr_matrix((N, N)), c, A_eq, qp.b_eq, A_in, qp.b_in, lower)
    core = _ipm(p1, SolverOptions(tol=opts.tol, max_iter=max(opts.max_iter, 200), polish=True))
    value = float(c @ core.x)
    pscale, _ = _scales(qp)
    if not core.converged or value <= 10 * opts.tol * pscale:
        return None
    viol = core.x[n:]
    thr = 1e-6 * max(value, 1e-12)
    eq_v = viol[:me] + viol[me:2 * me]
    in_v = viol[2 * me:]
    cert = InfeasibilityCertificate(core.y.copy(), np.maximum(core.z, 0.0),
                                    tuple(int(i) for i in np.flatnonzero(eq_v > thr)),
                                    tuple(int(i) for i in np.flatnonzero(in_v > thr)),
                                    value)
    return cert if check_certificate(qp, cert) else None


def check_certificate(qp: QuadraticProgram, cert: InfeasibilityCertificate,
                      tol: float = 1e-7) -> bool:
    g = qp.A_eq.T @ cert.u + qp.A_in.T @ cert.v
    scale = max(1.0, float(np.max(np.abs(np.concatenate([cert.u, cert.v])), initial=0.0)))
    bounded = qp.bounded
    ok_sign = np.all(cert.v >= -tol * scale)
    ok_cols = np.all(g[bounded] >= -tol * scale) and np.all(np.abs(g[~bounded]) <= tol * scale)
    return bool(ok_sign and ok_cols and qp.b_eq @ cert.u + qp.b_in @ cert.v < 0)


# ------------------------------------------------------------------ driver

def solve(qp: QuadraticProgram, opts: Optional[SolverOptions] = None) -> SolveResult:
    opts = opts or SolverOptions()
    if qp.Q.diagonal().min(initial=0.0) < 0:
        raise ValueError("Q must have a non-negative diagonal")
    pre = _presolve(qp)
    red = pre.reduced
    if red.n == 0:
        core = _CoreResult(np.zeros(0), np.zeros(red.m_eq), np.zeros(red.m_in), np.zeros(0),
                           not np.any(red.b_eq) and np.all(red.b_in >= 0), False, 0, False)
    else:
        core = _ipm(red, opts)
    x, y, z, w = _postsolve(qp, pre, core.x, core.y, core.z, core.w)
    rep = kkt_residuals(qp, x, y, z, w)
    if core.converged and rep.worst(qp) <= opts.tol:
        # round-off can leave multipliers like -1e-21 on sign-constrained rows
        z = np.maximum(z, 0.0)
        bounded = qp.bounded
        w[bounded] = np.maximum(w[bounded], 0.0)
        rep = kkt_residuals(qp, x, y, z, w)
        return SolveResult(x, y, z, w, Status.OPTIMAL, rep, core.iterations, core.polished)
    cert = _phase_one(qp, opts)
    if cert is not None:
        return SolveResult(x, y, z, w, Status.INFEASIBLE, rep, core.iterations, False, cert,
                           f"infeasible: phase-I violation {cert.phase1_value:.3g}")
    return SolveResult(x, y, z, w, Status.ITERATION_LIMIT, rep, core.iterations, core.polished,
                       message=f"no convergence; worst scaled residual {rep.worst(qp):.3g}")
