"""Primal-dual interior-point method for the long-only Markowitz QP.

Solves

    max  mu^T w - lam * w^T Sigma w   s.t.  e^T w = 1,  w >= 0

as the minimization of ``0.5 w^T Q w + c^T w`` with ``Q = 2 lam Sigma`` and
``c = -mu``, using Mehrotra's predictor-corrector. The Newton system is the
quasidefinite KKT matrix ``[[Q + W^-1 Z + delta I, e], [e^T, 0]]``; it is
factored densely (Cholesky plus a Schur complement on the single budget row)
or, when Sigma is sparse, with the in-house sparse LDL^T whose symbolic
analysis is shared by every solve on the same risk matrix.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..errors import FactorizationFailure, IndefiniteRisk, NoConvergence
from .factor import analyze, factorize, fill_reducing_order

SPARSE_FRACTION = 0.25
PRIMAL_REG = 1e-9
WARM_SHIFT = 0.1
STEP_FRACTION = 0.99
GAP_FLOOR = 1e-3


@dataclass(frozen=True)
class QpProblem:
    mu: np.ndarray
    sigma: object
    lam: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size < 1:
            raise ValueError("mu must be a non-empty vector")
        if self.sigma.shape != (mu.size, mu.size):
            raise ValueError("sigma shape does not match mu")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class Duals:
    z: np.ndarray
    y: float


@dataclass(frozen=True)
class Portfolio:
    weights: np.ndarray
    lam: float
    objective: float
    risk: float
    expected_return: float
    duals: Duals | None = field(default=None, compare=False, repr=False)

    @property
    def n(self):
        return self.weights.size


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    cpu_time: float
    warmstarted: bool
    factor_nonzeros: int
    converged: bool = True

    def __add__(self, other):
        return SolveStats(
            self.iterations + other.iterations,
            self.cpu_time + other.cpu_time,
            self.warmstarted or other.warmstarted,
            max(self.factor_nonzeros, other.factor_nonzeros),
            self.converged and other.converged,
        )


class RiskModel:
    """A risk matrix prepared for repeated solves.

    Chooses dense or sparse kernels from the nonzero fraction and keeps the
    sparse symbolic factorization of the KKT pattern, which depends only on
    Sigma's sparsity pattern and not on lambda or the iterate.
    """

    def __init__(self, sigma, sparse=None):
        n = sigma.shape[0]
        if sp.issparse(sigma):
            S = sp.csc_matrix(sigma, dtype=float)
            nnz = S.count_nonzero()
        else:
            S = np.asarray(sigma, dtype=float)
            nnz = int(np.count_nonzero(S))
        if sigma.shape != (n, n):
            raise ValueError("sigma must be square")
        self.n = n
        self.nnz_fraction = nnz / float(n * n)
        self.sparse = self.nnz_fraction < SPARSE_FRACTION if sparse is None else bool(sparse)
        if self.sparse:
            self._setup_sparse(sp.csc_matrix(S))
            self.dense = None
        else:
            self.dense = S.toarray() if sp.issparse(S) else S
        diag = S.diagonal() if sp.issparse(S) else np.diag(S)
        self.max_diag = float(np.max(np.abs(diag))) if n else 0.0

    def _setup_sparse(self, S):
        n = self.n
        N = n + 1
        coo = S.tocoo()
        keep = coo.data != 0
        sr, sc, sv = coo.row[keep], coo.col[keep], coo.data[keep]
        idx = np.arange(n)
        rows = np.concatenate([sr, np.arange(N), idx, np.full(n, n)]).astype(np.int64)
        cols = np.concatenate([sc, np.arange(N), np.full(n, n), idx]).astype(np.int64)
        keys = np.unique(cols * N + rows)

        def locate(r, c):
            return np.searchsorted(keys, np.asarray(c, dtype=np.int64) * N + r)

        # K.data layout is column-major with sorted rows, i.e. sorted keys
        self._indices = (keys % N).astype(np.int32)
        self._indptr = np.searchsorted(keys // N, np.arange(N + 1)).astype(np.int32)
        self._sig_data = np.zeros(keys.size)
        np.add.at(self._sig_data, locate(sr, sc), sv)
        self._border_data = np.zeros(keys.size)
        self._border_data[locate(idx, np.full(n, n))] = 1.0
        self._border_data[locate(np.full(n, n), idx)] = 1.0
        self._diag_pos = locate(np.arange(N), np.arange(N))
        self.sigma_sparse = sp.csc_matrix((sv, (sr, sc)), shape=(n, n))
        pattern = self.sigma_sparse + sp.identity(n, format="csc")
        perm = np.concatenate([fill_reducing_order(pattern), [n]])
        K = sp.csc_matrix((np.ones(keys.size), self._indices, self._indptr), shape=(N, N))
        self.symbolic = analyze(K, perm=perm)

    def block(self, idx):
        """Dense principal submatrix of Sigma on ``idx``."""
        if self.sparse:
            return self.sigma_sparse[idx][:, idx].toarray()
        return self.dense[np.ix_(idx, idx)]

    def matvec(self, v):
        return self.sigma_sparse @ v if self.sparse else self.dense @ v

    def quad(self, w):
        return float(w @ self.matvec(w))


class _DenseKKT:
    def __init__(self, model, qscale, delta, d):
        H = model.dense * qscale
        H[np.diag_indices_from(H)] += d + delta
        try:
            self.cf = sla.cho_factor(H, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise IndefiniteRisk("risk matrix is not positive semidefinite") from None
        self.he = sla.cho_solve(self.cf, np.ones(model.n), check_finite=False)
        self.ehe = self.he.sum()
        self.nnz = model.n * (model.n + 1) // 2

    def solve(self, r1, rp):
        a = sla.cho_solve(self.cf, r1, check_finite=False)
        u = (a.sum() - rp) / self.ehe
        return a - self.he * u, u


class _SparseKKT:
    def __init__(self, model, qscale, delta, d):
        n = model.n
        data = model._sig_data * qscale + model._border_data
        data[model._diag_pos[:n]] += d + delta
        data[model._diag_pos[n]] = 0.0
        K = sp.csc_matrix((data, model._indices, model._indptr), shape=(n + 1, n + 1))
        self.f = factorize(K, model.symbolic)
        piv = self.f.d
        pos = model.symbolic.iperm[:n]
        if np.any(piv[pos] <= 0):
            raise IndefiniteRisk("risk matrix is not positive semidefinite")
        self.n = n
        self.nnz = self.f.nnz

    def solve(self, r1, rp):
        sol = self.f.solve(np.append(r1, rp), refine=1)
        return sol[: self.n], sol[self.n]


def _max_step(x, dx):
    neg = dx < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-x[neg] / dx[neg])))


def polish(model: RiskModel, q_mult, c, w, z):
    """Re-solve the face picked out by an interior-point solution exactly.

    The support ``{i : w_i > z_i}`` defines an equality-constrained QP whose
    KKT system is solved directly. The result is returned only if it is
    primal and dual feasible and no worse than ``w``; otherwise ``None``.
    """
    S = np.flatnonzero(w > z)
    k = S.size
    if k == 0:
        return None
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = q_mult * model.block(S)
    K[:k, k] = K[k, :k] = 1.0
    rhs = np.append(-c[S], 1.0)
    scale = max(float(np.max(np.abs(c))), q_mult * model.max_diag, 1e-300)

    def solved(x):
        return np.all(np.isfinite(x)) and np.max(np.abs(K @ x - rhs)) <= 1e-11 * (scale + 1.0)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            sol = sla.solve(K, rhs, assume_a="sym", check_finite=False)
    except np.linalg.LinAlgError:
        sol = None
    if sol is None or not solved(sol):
        # singular face (rank-deficient Sigma or lambda = 0): minimum-norm solution
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        if not solved(sol):
            return None
    wp = np.zeros_like(w)
    wp[S] = sol[:k]
    if wp.min() < 0:
        return None
    g = q_mult * model.matvec(wp) + c
    zp = g + sol[k]
    if zp.min() < -1e-10 * scale:
        return None
    obj = lambda v: 0.5 * q_mult * model.quad(v) + float(c @ v)
    if obj(wp) > obj(w) + 1e-9 * (scale + abs(obj(w))):
        return None
    return wp / wp.sum()


def solve_qp(model: RiskModel, q_mult, c, warm=None, tol=1e-8, max_iter=200, polish_result=True):
    """Minimize ``0.5 q_mult w^T Sigma w + c^T w`` over the unit simplex.

    Returns ``(w, z, y, iterations, factor_nnz)`` in the original scaling.
    With ``polish_result`` the weights are refined on the identified face
    (see ``polish``); the duals are always the interior ones, which keep a
    later warm start away from the boundary.
    """
    n = model.n
    c = np.asarray(c, dtype=float)
    kappa = max(float(np.max(np.abs(c))) if n else 0.0, q_mult * model.max_diag, 1e-300)
    qs = q_mult / kappa
    cs = c / kappa
    delta = PRIMAL_REG * qs * model.max_diag

    if warm is not None:
        w0, z0, y0 = warm
        w = (1 - WARM_SHIFT) * np.asarray(w0, dtype=float) + WARM_SHIFT / n
        z = np.asarray(z0, dtype=float) / kappa
        zc = max(float(np.mean(z)), 1e-3)
        z = (1 - WARM_SHIFT) * z + WARM_SHIFT * zc
        y = float(y0) / kappa
        if not (np.all(w > 0) and np.all(z > 0) and np.all(np.isfinite(z))):
            warm = None
    if warm is None:
        w = np.full(n, 1.0 / n)
        g = qs * model.matvec(w) + cs
        y = float(np.min(g)) - 1.0
        z = g - y

    cnorm = float(np.max(np.abs(cs))) if n else 0.0
    nnz = 0
    for it in range(max_iter + 1):
        Qw = qs * model.matvec(w)
        rd = Qw + cs - y - z
        rp = 1.0 - w.sum()
        comp = float(w @ z)
        fscale = 0.5 * abs(float(w @ Qw)) + abs(float(cs @ w))
        pinf = abs(rp)
        dinf = float(np.max(np.abs(rd))) / (1.0 + cnorm + float(np.max(np.abs(Qw))))
        # relative to the objective terms, which can sit far below the scaling
        # constant when a diversified portfolio has much less risk than max(diag)
        gap = comp / max(GAP_FLOOR, fscale)
        if pinf <= tol and dinf <= tol and gap <= tol:
            z, y = z * kappa, y * kappa
            if polish_result:
                wp = polish(model, q_mult, c, w, z)
                if wp is not None:
                    w = wp
            return w, z, y, it, nnz
        if it == max_iter:
            break
        if not np.isfinite(comp):
            break
        mu_c = comp / n
        d = z / w
        try:
            kkt = (_SparseKKT if model.sparse else _DenseKKT)(model, qs, delta, d)
        except FactorizationFailure:
            raise IndefiniteRisk("KKT factorization broke down; risk matrix is likely indefinite") from None
        nnz = kkt.nnz

        def direction(rc):
            dw, u = kkt.solve(-rd + rc / w, rp)
            dz = (rc - z * dw) / w
            return dw, -u, dz

        dw_a, dy_a, dz_a = direction(-w * z)
        a_aff = min(_max_step(w, dw_a), _max_step(z, dz_a))
        mu_aff = float((w + a_aff * dw_a) @ (z + a_aff * dz_a)) / n
        sigma = (mu_aff / mu_c) ** 3 if mu_c > 0 else 0.0
        dw, dy, dz = direction(sigma * mu_c - w * z - dw_a * dz_a)
        alpha = min(1.0, STEP_FRACTION * min(_max_step(w, dw), _max_step(z, dz)))
        w = w + alpha * dw
        y = y + alpha * dy
        z = z + alpha * dz
    raise NoConvergence(f"interior point did not converge in {max_iter} iterations")


def _portfolio(model, mu, lam, w, z, y, sigma_quad=None):
    risk = model.quad(w)
    ret = float(mu @ w)
    obj = ret - lam * risk if np.isfinite(lam) else -risk
    return Portfolio(w, lam, obj, risk, ret, Duals(z, y))


def solve_markowitz(p: QpProblem, warmstart: Portfolio | None = None, *, model=None,
                    tol=1e-8, max_iter=200):
    """Solve one point of the efficient frontier.

    ``model`` lets callers reuse a ``RiskModel`` (and its symbolic factor)
    across many lambdas; it must wrap ``p.sigma``.
    """
    model = model or RiskModel(p.sigma)
    t0 = time.perf_counter()
    warm = None
    if warmstart is not None and warmstart.duals is not None and warmstart.n == model.n:
        warm = (warmstart.weights, warmstart.duals.z, warmstart.duals.y)
    try:
        w, z, y, it, nnz = solve_qp(model, 2.0 * p.lam, -p.mu, warm, tol, max_iter)
    except NoConvergence as exc:
        raise NoConvergence(str(exc), p.lam) from None
    elapsed = time.perf_counter() - t0
    port = _portfolio(model, p.mu, p.lam, w, z, y)
    return port, SolveStats(it, elapsed, warm is not None, nnz)


def solve_min_risk(sigma, *, model=None, tol=1e-10, max_iter=200):
    """Minimum-variance long-only portfolio and its variance."""
    model = model or RiskModel(sigma)
    n = model.n
    w, z, y, it, nnz = solve_qp(model, 2.0, np.zeros(n), None, tol, max_iter)
    port = _portfolio(model, np.zeros(n), float("inf"), w, z, y)
    return port, port.risk
