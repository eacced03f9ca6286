"""Efficient-frontier tracing along a risk-aversion schedule."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, MaxLambdaUnbounded, NoConvergence, ScheduleDomain
from .market_data import AssetMask, MomentSet
from .qp import Portfolio, QpProblem, RiskModel, SolveStats, solve_markowitz, solve_min_risk

# (start, stop, points); stop=None means the computed maximum lambda
DEFAULT_SEGMENTS = (
    (0, 1, 121),
    (1, 2, 61),
    (2, 4, 51),
    (4, 7, 61),
    (7, 20, 61),
    (21, 60, 81),
    (60, 100, 51),
    (100, 200, 71),
    (200, None, 81),
)
FALLBACK_POINTS = 121
FAST_ITERATIONS = 15


@dataclass(frozen=True)
class LambdaSchedule:
    values: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if not v or v[0] != 0.0:
            raise ScheduleDomain("schedule must start at 0")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ScheduleDomain("schedule must be strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def lambda_schedule(max_lambda, segments=DEFAULT_SEGMENTS, fallback=False) -> LambdaSchedule:
    """Union of evenly spaced segments up to ``max_lambda``.

    The last segment starts at the largest finite stop in ``segments``; a
    ``max_lambda`` at or below it raises ``ScheduleDomain`` unless
    ``fallback`` is set, in which case a single 121-point segment on
    ``[0, max_lambda]`` is returned.
    """
    floor = max(s for _, s, _ in segments if s is not None)
    if not max_lambda > floor:
        if fallback and max_lambda > 0:
            return LambdaSchedule(tuple(np.linspace(0.0, max_lambda, FALLBACK_POINTS)))
        raise ScheduleDomain(f"max lambda {max_lambda:g} must exceed {floor:g}")
    parts = [np.linspace(a, max_lambda if b is None else b, k) for a, b, k in segments]
    return LambdaSchedule(tuple(np.unique(np.concatenate(parts))))


def _round_up_2sf(x):
    unit = 10.0 ** (math.floor(math.log10(x)) - 1)
    return math.ceil(x / unit - 1e-9) * unit, unit


def find_max_lambda(m: MomentSet, eps=1e-8, model=None, tol=1e-10, cap=2.0**60):
    """Smallest lambda (to two significant figures) whose risk is within ``eps`` of the minimum.

    Doubles from 1 until the risk is close enough, then bisects the last
    bracket. Returns 1 if lambda = 1 already attains the minimum risk.
    """
    model = model or RiskModel(m.sigma)
    _, min_risk = solve_min_risk(m.sigma, model=model)

    def ok(lam):
        port, _ = solve_markowitz(QpProblem(m.mu, m.sigma, lam), model=model, tol=tol)
        return port.risk <= min_risk + eps

    lo, hi = 0.5, 1.0
    if ok(hi):
        return 1.0
    while not ok(hi):
        lo, hi = hi, 2.0 * hi
        if hi > cap:
            raise MaxLambdaUnbounded(f"risk not within {eps:g} of its minimum below lambda={cap:g}")
    _, unit = _round_up_2sf(hi)
    while hi - lo > unit:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        _, unit = _round_up_2sf(hi)
    lam, unit = _round_up_2sf(hi)
    while not ok(lam):
        lam += unit
    return float(lam)


@dataclass(frozen=True)
class FrontierRecord:
    lam: float
    portfolio: Portfolio
    stats: SolveStats


@dataclass(frozen=True)
class FrontierResult:
    records: tuple
    tickers: tuple
    moments_fingerprint: str
    schedule: LambdaSchedule
    repeats: int = 1

    def __len__(self):
        return len(self.records)

    @property
    def lambdas(self):
        return np.array([r.lam for r in self.records])

    @property
    def weights(self):
        return np.vstack([r.portfolio.weights for r in self.records])

    def column(self, name):
        if name in ("iterations", "cpu_time"):
            return np.array([getattr(r.stats, name) for r in self.records])
        return np.array([getattr(r.portfolio, name) for r in self.records])

    def distinct_portfolios(self, tol=1e-6):
        return len({tuple(np.flatnonzero(w > tol)) for w in self.weights})

    def to_csv(self, dest, actual_mu=None, timing=True):
        """Per-lambda table; ``timing=False`` drops the (non-reproducible) time column."""
        actual = None if actual_mu is None else self.weights @ np.asarray(actual_mu, dtype=float)
        with Path(dest).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["lambda", "objective", "risk", "expected_return", "actual_return", "iterations"]
            w.writerow(head + ["time"] if timing else head)
            for k, r in enumerate(self.records):
                p = r.portfolio
                row = [
                    repr(r.lam), repr(p.objective), repr(p.risk), repr(p.expected_return),
                    "" if actual is None else repr(float(actual[k])),
                    r.stats.iterations,
                ]
                w.writerow(row + [repr(r.stats.cpu_time)] if timing else row)


def _trace_once(m: MomentSet, schedule, model, tol):
    records = []
    prev = None
    prev_lam = None
    for lam in schedule:
        problem = QpProblem(m.mu, m.sigma, lam)
        if prev is None:
            port, st = solve_markowitz(problem, model=model, tol=tol)
        else:
            try:
                port, st = solve_markowitz(problem, prev, model=model, tol=tol, max_iter=FAST_ITERATIONS)
            except NoConvergence:
                # too large a step in lambda: solve the midpoint first, then retry
                aborted = SolveStats(FAST_ITERATIONS, 0.0, True, 0, False)
                mid, st_mid = solve_markowitz(QpProblem(m.mu, m.sigma, 0.5 * (prev_lam + lam)), prev,
                                              model=model, tol=tol)
                port, st = solve_markowitz(problem, mid, model=model, tol=tol)
                st = aborted + st_mid + st
                st = SolveStats(st.iterations, st.cpu_time, True, st.factor_nonzeros, True)
        records.append((lam, port, st))
        prev, prev_lam = port, lam
    return records


def trace_frontier(m: MomentSet, s: LambdaSchedule, *, model=None, repeats=1, tol=1e-8) -> FrontierResult:
    """Solve every lambda in increasing order, warm-starting from the previous one.

    With ``repeats > 1`` the whole trace is repeated and per-record times are
    averaged; the solutions of every repeat must be bitwise identical.
    """
    model = model or RiskModel(m.sigma)
    first = _trace_once(m, s, model, tol)
    times = np.array([[st.cpu_time for _, _, st in first]])
    for _ in range(repeats - 1):
        again = _trace_once(m, s, model, tol)
        for (_, a, _), (_, b, _) in zip(first, again):
            if not np.array_equal(a.weights, b.weights):
                raise RuntimeError("frontier trace is not deterministic across repeats")
        times = np.vstack([times, [st.cpu_time for _, _, st in again]])
    mean_t = times.mean(axis=0)
    recs = tuple(
        FrontierRecord(lam, port, SolveStats(st.iterations, float(t), st.warmstarted, st.factor_nonzeros))
        for (lam, port, st), t in zip(first, mean_t)
    )
    return FrontierResult(recs, m.tickers, m.fingerprint(), s, repeats)


def asset_inclusion(f: FrontierResult, tol=1e-6) -> AssetMask:
    if not len(f):
        raise ValueError("empty frontier")
    return AssetMask(np.any(f.weights > tol, axis=0), f.tickers)


@dataclass(frozen=True)
class PerformanceReport:
    n_lambda: int
    total_iterations: int
    avg_iterations: float
    avg_time: float
    avg_tpi: float
    objective: float
    risk: float
    expected_return: float
    actual_return: float
    asset_count: int
    matrix_size: int
    label: str = ""
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)

    def to_json(self, dest):
        Path(dest).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def evaluate(f: FrontierResult, actual_mu, *, risk_sigma=None, tol=1e-6, label="") -> PerformanceReport:
    """Aggregate optimizer and portfolio statistics over the frontier.

    ``risk_sigma`` reports VAR[R] against a different covariance than the one
    the frontier was solved with, e.g. the dense matrix for a sparsified run.
    """
    W = f.weights
    actual_mu = np.asarray(actual_mu, dtype=float)
    if actual_mu.shape != (W.shape[1],):
        raise DimensionError(f"actual returns have shape {actual_mu.shape}, expected ({W.shape[1]},)")
    n = len(f)
    total = int(f.column("iterations").sum())
    avg_iter = total / n
    avg_time = float(f.column("cpu_time").sum()) / n
    avg_tpi = avg_time / avg_iter if avg_iter > 0 else 0.0
    if risk_sigma is None:
        risk = f.column("risk")
    else:
        risk = np.einsum("ij,jk,ik->i", W, np.asarray(risk_sigma), W)
    return PerformanceReport(
        n_lambda=n,
        total_iterations=total,
        avg_iterations=avg_iter,
        avg_time=avg_time,
        avg_tpi=avg_tpi,
        objective=float(f.column("objective").mean()),
        risk=float(np.mean(risk)),
        expected_return=float(f.column("expected_return").mean()),
        actual_return=float(np.mean(W @ actual_mu)),
        asset_count=asset_inclusion(f, tol).count,
        matrix_size=W.shape[1],
        label=label,
    )
