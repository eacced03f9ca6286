"""Mean-absolute-deviation LP frontier by parametric simplex.

The LP

    max  gamma mu^T w - (1/M) sum_t v_t
    s.t. -v <= A w <= v,  e^T w = 1,  w, v >= 0

(``A`` = demeaned returns, one row per day) is written in equality form with
slacks ``s1 = v - A w`` and ``s2 = v + A w``. For gamma -> infinity the basis
holding all wealth in the highest-mean asset is optimal and primal feasible,
so the whole family is traced by primal pivots alone: at each breakpoint the
nonbasic column whose reduced cost turns positive enters, and a lexicographic
ratio test picks the leaving row.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CyclingAbort, DimensionError, SolverError
from .market_data import AssetMask, ReturnMatrix

REFACTOR_EVERY = 50
PIVOT_TOL = 1e-9
DUAL_TOL = 1e-11


@dataclass(frozen=True)
class LpModel:
    deviation: np.ndarray
    mu: np.ndarray
    scale: float
    tickers: tuple = ()

    @property
    def n_days(self):
        return self.deviation.shape[0]

    @property
    def n_assets(self):
        return self.deviation.shape[1]

    def objective(self, gamma, w):
        """LP objective at the optimal ``v = |A w|`` for the given weights."""
        w = np.asarray(w, dtype=float)
        return gamma * float(self.mu @ w) - self.scale * float(np.abs(self.deviation @ w).sum())

    def l1_risk(self, w):
        return self.scale * float(np.abs(self.deviation @ np.asarray(w, dtype=float)).sum())


def build_lp(x_train: ReturnMatrix) -> LpModel:
    r = x_train.returns
    if r.shape[0] < 2:
        raise DimensionError("need at least two return rows")
    mu = r.mean(axis=0)
    return LpModel(r - mu, mu, 1.0 / r.shape[0], x_train.tickers)


@dataclass(frozen=True)
class GammaInterval:
    gamma_low: float
    gamma_high: float
    weights: np.ndarray
    basis: str


@dataclass(frozen=True)
class GammaFrontier:
    intervals: tuple
    tickers: tuple
    pivots: int

    def __len__(self):
        return len(self.intervals)

    def at(self, gamma):
        """Weights of an interval containing ``gamma``."""
        for iv in self.intervals:
            if iv.gamma_low <= gamma <= iv.gamma_high:
                return iv.weights
        raise ValueError(f"gamma {gamma} not covered")

    @property
    def breakpoints(self):
        return [iv.gamma_low for iv in self.intervals if iv.gamma_low > 0]

    def to_csv(self, dest):
        with Path(dest).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma_low", "gamma_high", *self.tickers])
            for iv in self.intervals:
                w.writerow([repr(iv.gamma_low), repr(iv.gamma_high), *(repr(float(x)) for x in iv.weights)])


class _Tableau:
    """Revised-simplex state over the scaled equality-form LP."""

    def __init__(self, A, mu, inv_m):
        self.A = A
        M, N = A.shape
        self.M, self.N = M, N
        self.m = 2 * M + 1
        self.nvar = N + 3 * M
        self.c1 = np.concatenate([mu, np.zeros(3 * M)])
        self.c0 = np.concatenate([np.zeros(N), np.full(M, -inv_m), np.zeros(2 * M)])

    def column(self, j):
        M, N = self.M, self.N
        col = np.zeros(self.m)
        if j < N:
            col[:M] = self.A[:, j]
            col[M:2 * M] = -self.A[:, j]
            col[2 * M] = 1.0
        elif j < N + M:
            t = j - N
            col[t] = -1.0
            col[M + t] = -1.0
        elif j < N + 2 * M:
            col[j - N - M] = 1.0
        else:
            col[j - N - M] = 1.0
        return col

    def columns(self, idx):
        return np.column_stack([self.column(j) for j in idx])

    def reduced(self, y):
        """``-A_con^T y`` for every variable (add the cost vector separately)."""
        M, N = self.M, self.N
        out = np.empty(self.nvar)
        out[:N] = -(self.A.T @ (y[:M] - y[M:2 * M]) + y[2 * M])
        out[N:N + M] = y[:M] + y[M:2 * M]
        out[N + M:N + 2 * M] = -y[:M]
        out[N + 2 * M:] = -y[M:2 * M]
        return out


def _lex_leave(alpha, xb, binv, B0, tol):
    rows = np.flatnonzero(alpha > tol)
    if rows.size == 0:
        return -1
    theta = np.maximum(xb[rows], 0.0) / alpha[rows]
    tmin = theta.min()
    tied = rows[theta <= tmin + 1e-12 * (1.0 + tmin)]
    if tied.size == 1:
        return int(tied[0])
    lex = (binv[tied] @ B0) / alpha[tied, None]
    cand = np.arange(tied.size)
    for k in range(lex.shape[1]):
        v = lex[cand, k]
        cand = cand[v <= v.min() + 1e-12]
        if cand.size == 1:
            break
    return int(tied[cand[0]])


def parametric_frontier(m: LpModel, max_pivots=None) -> GammaFrontier:
    """Optimal vertices of the LP for every gamma >= 0.

    Intervals are ordered by decreasing gamma, the first one reaching
    ``inf``. Consecutive bases with identical weights are merged.
    """
    A = np.asarray(m.deviation, dtype=float)
    mu = np.asarray(m.mu, dtype=float)
    M, N = A.shape
    a_scale = float(np.max(np.abs(A))) or 1.0
    m_scale = float(np.max(np.abs(mu))) or 1.0
    # gamma = gamma_s * a_scale / m_scale
    g_unscale = a_scale / m_scale
    T = _Tableau(A / a_scale, mu / m_scale, m.scale)
    if max_pivots is None:
        max_pivots = 50 * (N + M)

    k = int(np.argmax(mu))
    basis = [k] + [N + t for t in range(M)]
    for t in range(M):
        basis.append(N + 2 * M + t if A[t, k] >= 0 else N + M + t)
    basis = np.array(basis)
    B0 = T.columns(basis)
    binv = np.linalg.inv(B0)
    is_basic = np.zeros(T.nvar, dtype=bool)
    is_basic[basis] = True
    pivots = 0
    since_refactor = 0

    def pivot(j):
        nonlocal binv, pivots, since_refactor
        alpha = binv @ T.column(j)
        r = _lex_leave(alpha, binv[:, -1], binv, B0, PIVOT_TOL)
        if r < 0:
            raise SolverError("LP unbounded along entering column")
        row = binv[r] / alpha[r]
        binv -= np.outer(alpha, row)
        binv[r] = row
        is_basic[basis[r]] = False
        basis[r] = j
        is_basic[j] = True
        pivots += 1
        since_refactor += 1
        if since_refactor >= REFACTOR_EVERY:
            binv = np.linalg.inv(T.columns(basis))
            since_refactor = 0
        if pivots > max_pivots:
            raise CyclingAbort(f"more than {max_pivots} pivots")

    def costs():
        y1 = T.c1[basis] @ binv
        y0 = T.c0[basis] @ binv
        d1 = T.c1 + T.reduced(y1)
        d0 = T.c0 + T.reduced(y0)
        d1[is_basic] = 0.0
        d0[is_basic] = 0.0
        return d1, d0

    # lexicographic optimality at gamma = infinity (only needed for ties in mu)
    while True:
        d1, d0 = costs()
        bad = np.flatnonzero((d1 > DUAL_TOL) | ((np.abs(d1) <= DUAL_TOL) & (d0 > DUAL_TOL)))
        if bad.size == 0:
            break
        pivot(int(bad[0]))

    raw = []
    g_hi = np.inf
    while True:
        d1, d0 = costs()
        cand = np.flatnonzero(d1 < -DUAL_TOL)
        ratios = d0[cand] / -d1[cand]
        g_lo = max(0.0, float(ratios.max())) if cand.size else 0.0
        g_lo = min(g_lo, g_hi)
        w = np.maximum(_basic_weights(binv, basis, N), 0.0)
        raw.append((g_lo, g_hi, w, basis.copy()))
        if g_lo <= 0.0:
            break
        hit = cand[ratios >= g_lo - 1e-12 * (1.0 + g_lo)]
        pivot(int(hit.min()))
        g_hi = g_lo

    intervals = []
    for g_lo, g_hi, w, b in raw:
        lo, hi = g_lo * g_unscale, g_hi * g_unscale
        sig = hashlib.sha1(np.sort(b).tobytes()).hexdigest()[:12]
        if intervals and np.allclose(intervals[-1].weights, w, rtol=0, atol=1e-12):
            prev = intervals[-1]
            intervals[-1] = GammaInterval(lo, prev.gamma_high, prev.weights, sig)
        else:
            intervals.append(GammaInterval(lo, hi, w, sig))
    tickers = m.tickers or tuple(str(i) for i in range(N))
    return GammaFrontier(tuple(intervals), tickers, pivots)


def _basic_weights(binv, basis, N):
    w = np.zeros(N)
    xb = binv[:, -1]
    sel = basis < N
    w[basis[sel]] = xb[sel]
    return w


def predict_mask(g: GammaFrontier, tol=1e-9) -> AssetMask:
    if not len(g):
        raise ValueError("empty gamma frontier")
    W = np.vstack([iv.weights for iv in g.intervals])
    return AssetMask(np.any(W > tol, axis=0), g.tickers)
