"""Price ingestion, returns, moments and universe reduction.

All containers are frozen dataclasses holding read-only numpy arrays, so a
``MomentSet`` can be shared between solvers without defensive copies.
"""
from __future__ import annotations

import csv
import datetime
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    DegenerateAsset,
    DimensionError,
    DuplicateDate,
    EmptyMask,
    InvalidPrice,
    MissingData,
    SplitTooSmall,
)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PriceMatrix:
    dates: tuple
    tickers: tuple
    prices: np.ndarray

    def __post_init__(self):
        p = _frozen(self.prices)
        if p.ndim != 2 or p.shape != (len(self.dates), len(self.tickers)):
            raise DimensionError("price matrix shape does not match dates x tickers")
        if p.shape[0] < 2:
            raise DimensionError("need at least two price rows")
        if not np.all(np.isfinite(p)):
            raise InvalidPrice("prices must be finite")
        if np.any(p <= 0):
            raise InvalidPrice("prices must be strictly positive")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise DuplicateDate("dates must be strictly increasing")
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))

    @property
    def shape(self):
        return self.prices.shape

    def fingerprint(self):
        h = hashlib.sha256()
        h.update("\x1f".join(self.tickers).encode())
        h.update("\x1f".join(map(str, self.dates)).encode())
        h.update(np.ascontiguousarray(self.prices).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class ReturnMatrix:
    tickers: tuple
    returns: np.ndarray

    def __post_init__(self):
        x = _frozen(self.returns)
        if x.ndim != 2 or x.shape[1] != len(self.tickers):
            raise DimensionError("return columns must match tickers")
        if np.any(x <= -1):
            raise InvalidPrice("returns must exceed -1")
        object.__setattr__(self, "returns", x)
        object.__setattr__(self, "tickers", tuple(self.tickers))

    @property
    def n_rows(self):
        return self.returns.shape[0]

    @property
    def n_assets(self):
        return self.returns.shape[1]

    def head(self, k):
        return ReturnMatrix(self.tickers, self.returns[:k])

    def tail(self, k):
        return ReturnMatrix(self.tickers, self.returns[-k:])


@dataclass(frozen=True)
class MomentSet:
    tickers: tuple
    mu: np.ndarray
    sigma: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tickers", tuple(self.tickers))
        for name in ("mu", "sigma", "theta"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.tickers)
        if self.mu.shape != (n,) or self.sigma.shape != (n, n) or self.theta.shape != (n, n):
            raise DimensionError("moment shapes do not match the ticker count")

    @property
    def n(self):
        return len(self.tickers)

    def fingerprint(self):
        h = hashlib.sha256()
        for a in (self.mu, self.sigma):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def with_sigma(self, sigma):
        """Same tickers and mean, different risk matrix (theta recomputed)."""
        return MomentSet(self.tickers, self.mu, sigma, correlation(sigma))


@dataclass(frozen=True)
class AssetMask:
    bits: np.ndarray
    tickers: tuple = field(default=())

    def __post_init__(self):
        b = _frozen(np.asarray(self.bits).astype(bool), dtype=bool)
        if b.ndim != 1:
            raise DimensionError("mask must be one-dimensional")
        tickers = tuple(self.tickers) or tuple(str(i) for i in range(b.size))
        if len(tickers) != b.size:
            raise DimensionError("mask length does not match tickers")
        object.__setattr__(self, "bits", b)
        object.__setattr__(self, "tickers", tickers)

    def __len__(self):
        return self.bits.size

    @property
    def count(self):
        return int(self.bits.sum())

    @property
    def selected(self):
        return [t for t, b in zip(self.tickers, self.bits) if b]

    @classmethod
    def ones(cls, tickers):
        return cls(np.ones(len(tickers), dtype=bool), tickers)

    def __or__(self, other):
        return AssetMask(self.bits | other.bits, self.tickers)


def load_prices(source) -> PriceMatrix:
    """Read a price CSV with a ``date,<ticker>...`` header.

    Rows are sorted by their date label. Blank cells raise ``MissingData``
    with 1-based data row and column numbers; non-numeric or non-positive
    cells raise ``InvalidPrice``.
    """
    path = Path(source)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MissingData(0, 0)
    header = [h.strip() for h in rows[0]]
    tickers = header[1:]
    if not tickers:
        raise DimensionError("price file has no ticker columns")
    dates, values = [], []
    for r, row in enumerate(rows[1:], start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise MissingData(r, len(row))
        dates.append(row[0].strip())
        vals = []
        for c, cell in enumerate(row[1:len(header)], start=1):
            cell = cell.strip()
            if not cell:
                raise MissingData(r, c)
            try:
                v = float(cell)
            except ValueError:
                raise InvalidPrice(f"cannot parse {cell!r} at row {r}, column {c}") from None
            if not np.isfinite(v) or v <= 0:
                raise InvalidPrice(f"non-positive price {cell!r} at row {r}, column {c}")
            vals.append(v)
        values.append(vals)
    if len(set(dates)) != len(dates):
        dup = next(d for d in dates if dates.count(d) > 1)
        raise DuplicateDate(f"duplicate date {dup}")
    order = sorted(range(len(dates)), key=dates.__getitem__)
    return PriceMatrix(
        dates=tuple(dates[i] for i in order),
        tickers=tickers,
        prices=np.array([values[i] for i in order], dtype=float).reshape(len(dates), len(tickers)),
    )


def write_prices(p: PriceMatrix, dest):
    with Path(dest).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *p.tickers])
        for d, row in zip(p.dates, p.prices):
            w.writerow([d, *(repr(float(v)) for v in row)])


def compute_returns(p: PriceMatrix) -> ReturnMatrix:
    prices = p.prices
    return ReturnMatrix(p.tickers, (prices[1:] - prices[:-1]) / prices[:-1])


def correlation(sigma):
    sd = np.sqrt(np.diag(sigma))
    theta = sigma / np.outer(sd, sd)
    theta = 0.5 * (theta + theta.T)
    np.fill_diagonal(theta, 1.0)
    return theta


def moments(x: ReturnMatrix) -> MomentSet:
    """Column means, sample covariance (denominator M-1) and correlation."""
    r = x.returns
    if r.shape[0] < 2:
        raise DimensionError("need at least two return rows")
    mu = r.mean(axis=0)
    dev = r - mu
    sigma = dev.T @ dev / (r.shape[0] - 1)
    sigma = 0.5 * (sigma + sigma.T)
    for j, t in enumerate(x.tickers):
        if not sigma[j, j] > 0:
            raise DegenerateAsset(t)
    return MomentSet(x.tickers, mu, sigma, correlation(sigma))


def split(x: ReturnMatrix, ratio=0.75):
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    k = int(np.floor(ratio * x.n_rows))
    if k < 2 or x.n_rows - k < 2:
        raise SplitTooSmall(f"split of {x.n_rows} rows at {ratio} leaves a part with < 2 rows")
    return ReturnMatrix(x.tickers, x.returns[:k]), ReturnMatrix(x.tickers, x.returns[k:])


def reduce_universe(m: MomentSet, mask: AssetMask) -> MomentSet:
    bits = mask.bits
    if bits.size != m.n:
        raise DimensionError(f"mask has {bits.size} entries for {m.n} assets")
    if not bits.any():
        raise EmptyMask("mask selects no assets")
    if bits.all():
        return m
    idx = np.flatnonzero(bits)
    return MomentSet(
        tuple(m.tickers[i] for i in idx),
        m.mu[idx],
        m.sigma[np.ix_(idx, idx)],
        m.theta[np.ix_(idx, idx)],
    )


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic market.

    Returns follow a one-factor market model with sector factors. A
    ``hedge_fraction`` of assets load negatively on the market, which
    produces the strong negative correlations that real index constituents
    rarely show. ``pairs`` overrides individual correlations before the
    target matrix is projected back onto the PSD cone.
    """

    daily_vol: tuple = (0.01, 0.03)
    drift: tuple = (-0.0005, 0.0015)
    market_loading: tuple = (0.3, 0.8)
    n_sectors: int = 8
    sector_loading: tuple = (0.1, 0.5)
    hedge_fraction: float = 0.0
    pairs: Mapping = field(default_factory=dict)
    start_price: tuple = (10.0, 200.0)


def synth_correlation(n_assets, rng, cfg: SynthConfig):
    beta = rng.uniform(*cfg.market_loading, n_assets)
    n_hedge = int(round(cfg.hedge_fraction * n_assets))
    if n_hedge:
        beta[rng.choice(n_assets, n_hedge, replace=False)] *= -1
    sector = rng.integers(0, max(cfg.n_sectors, 1), n_assets)
    gamma = rng.uniform(*cfg.sector_loading, n_assets)
    load = np.zeros((n_assets, 1 + cfg.n_sectors))
    load[:, 0] = beta
    load[np.arange(n_assets), 1 + sector] = gamma
    common = np.sum(load**2, axis=1)
    scale = np.where(common > 0.95, np.sqrt(0.95 / common), 1.0)
    load *= scale[:, None]
    corr = load @ load.T
    np.fill_diagonal(corr, 1.0)
    if cfg.pairs:
        for (i, j), rho in cfg.pairs.items():
            corr[i, j] = corr[j, i] = rho
        w, v = np.linalg.eigh(corr)
        corr = (v * np.maximum(w, 1e-6)) @ v.T
        d = np.sqrt(np.diag(corr))
        corr = corr / np.outer(d, d)
    return 0.5 * (corr + corr.T)


def synth_prices(n_assets, n_days, seed=0, config: SynthConfig | None = None) -> PriceMatrix:
    """Deterministic geometric random walk prices for ``n_assets`` tickers."""
    if n_assets < 1 or n_days < 3:
        raise ValueError("need n_assets >= 1 and n_days >= 3")
    cfg = config or SynthConfig()
    rng = np.random.default_rng(seed)
    corr = synth_correlation(n_assets, rng, cfg)
    w, v = np.linalg.eigh(corr)
    root = v * np.sqrt(np.maximum(w, 0.0))
    vol = rng.uniform(*cfg.daily_vol, n_assets)
    drift = rng.uniform(*cfg.drift, n_assets)
    z = rng.standard_normal((n_days - 1, n_assets)) @ root.T
    logret = drift + z * vol
    p0 = rng.uniform(*cfg.start_price, n_assets)
    logp = np.vstack([np.zeros(n_assets), np.cumsum(logret, axis=0)])
    prices = p0 * np.exp(logp)
    width = max(4, len(str(n_assets - 1)))
    tickers = [f"S{i:0{width}d}" for i in range(n_assets)]
    start = datetime.date(2012, 1, 23)
    dates = [(start + datetime.timedelta(days=i)).isoformat() for i in range(n_days)]
    return PriceMatrix(tuple(dates), tuple(tickers), prices)


def evaluation_window(x: ReturnMatrix):
    """Split returns into (history, realized) where realized is the final day."""
    if x.n_rows < 3:
        raise SplitTooSmall("need at least three return rows for an evaluation window")
    return ReturnMatrix(x.tickers, x.returns[:-1]), x.returns[-1].copy()


def subseed(seed, name: str) -> int:
    h = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return int.from_bytes(h[:8], "little")


__all__ = [
    "PriceMatrix",
    "ReturnMatrix",
    "MomentSet",
    "AssetMask",
    "SynthConfig",
    "load_prices",
    "write_prices",
    "compute_returns",
    "correlation",
    "moments",
    "split",
    "reduce_universe",
    "synth_prices",
    "evaluation_window",
    "subseed",
]
