"""Correlation thresholding of a covariance matrix with PSD-restoring completion.

Entries whose correlation magnitude is at most ``tau`` are zeroed. The raw
result can be indefinite; ``complete`` restores every covariance entry among
the assets that still have an off-diagonal partner, which leaves a matrix that
is (up to permutation) ``diag(C, D)`` with ``C`` diagonal and ``D`` a principal
submatrix of the original covariance, hence PSD.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import TargetUnreachable


@dataclass(frozen=True)
class SparseCovariance:
    matrix: np.ndarray
    tau: float
    sparsity: float
    completed: bool
    psd: bool

    @property
    def support(self):
        """Indices of assets with at least one off-diagonal nonzero."""
        off = self.matrix != 0
        np.fill_diagonal(off, False)
        return np.flatnonzero(off.any(axis=0))


@dataclass(frozen=True)
class SweepRow:
    tau: float
    sparsity_raw: float
    psd_raw: bool | None
    sparsity_completed: float


@dataclass(frozen=True)
class SparsitySweep:
    rows: tuple

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, dest):
        with Path(dest).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "sparsity_raw", "psd_raw", "sparsity_completed"])
            for r in self.rows:
                w.writerow([repr(r.tau), repr(r.sparsity_raw), "" if r.psd_raw is None else int(r.psd_raw), repr(r.sparsity_completed)])


def threshold_candidates(theta, decimals=12):
    """Sorted distinct correlation magnitudes, diagonal included.

    Values are deduplicated after rounding to ``decimals`` places so that the
    two mirrored copies of an entry never appear as separate thresholds; the
    returned values are the unrounded maxima of each group, so an inclusive
    comparison against them zeroes the whole group.
    """
    a = np.abs(np.asarray(theta, dtype=float))
    a = np.maximum(a, a.T).ravel()
    keys = np.round(a, decimals)
    uniq, inv = np.unique(keys, return_inverse=True)
    out = np.full(uniq.size, -np.inf)
    np.maximum.at(out, inv.ravel(), a)
    return out


def sparsity(matrix):
    m = np.asarray(matrix)
    return float(np.count_nonzero(m == 0)) / m.size


def is_psd(matrix, tol=1e-10):
    """True when the smallest eigenvalue is at least ``-tol * max|diag|``.

    A Cholesky factorization of the matrix shifted by that margin decides the
    clear cases; a failed factorization falls back to the eigenvalues so that
    borderline singular matrices are not rejected on round-off alone.
    """
    m = np.asarray(matrix, dtype=float)
    if m.size == 0:
        return True
    scale = float(np.max(np.abs(np.diag(m))))
    if scale == 0:
        return bool(np.all(m == 0))
    shift = tol * scale
    shifted = m + shift * np.eye(m.shape[0])
    _, info = lapack.dpotrf(shifted, lower=1, clean=0, overwrite_a=0)
    if info == 0:
        return True
    # Bunch-Kaufman inertia of the shifted matrix; only borderline cases need eigenvalues
    _, d, _ = sla.ldl(shifted, lower=True, check_finite=False)
    low = float(np.linalg.eigvalsh(d)[0])
    if low >= 0:
        return True
    if low < -10.0 * shift:
        return False
    return bool(np.linalg.eigvalsh(m)[0] >= -shift)


def sparsify(sigma, theta, tau) -> SparseCovariance:
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    sigma = np.asarray(sigma, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = np.where(np.abs(theta) <= tau, 0.0, sigma)
    np.fill_diagonal(out, np.diag(sigma))
    out = np.triu(out) + np.triu(out, 1).T
    return SparseCovariance(out, float(tau), sparsity(out), False, is_psd(out))


def complete(sigma, sc: SparseCovariance) -> SparseCovariance:
    sigma = np.asarray(sigma, dtype=float)
    s = sc.support
    out = sc.matrix.copy()
    if s.size:
        out[np.ix_(s, s)] = sigma[np.ix_(s, s)]
    return SparseCovariance(out, sc.tau, sparsity(out), True, is_psd(out))


def sweep(sigma, theta, check_psd=True) -> SparsitySweep:
    """Raw and completed sparsity for every threshold candidate below 1.

    Both sparsity columns are counted directly from the sorted correlation
    magnitudes, so only the raw PSD flag needs a factorization per row;
    ``check_psd=False`` skips it and records ``None``.
    """
    sigma = np.asarray(sigma, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = sigma.shape[0]
    # an entry survives threshold tau iff key > tau; exact zeros never survive
    key = np.where(sigma != 0, np.abs(np.triu(theta, 1)), -np.inf)
    key = np.triu(key, 1)
    key = key + key.T
    np.fill_diagonal(key, -np.inf)
    upper = np.sort(key[np.triu_indices(n, 1)])
    colmax = np.sort(key.max(axis=1)) if n > 1 else np.full(n, -np.inf)
    diag_nz = int(np.count_nonzero(np.diag(sigma)))
    sigma_exact = bool(np.all(sigma != 0))
    rows = []
    for tau in threshold_candidates(theta):
        if tau >= 1:
            continue
        kept = upper.size - int(np.searchsorted(upper, tau, side="right"))
        sp_raw = (sigma.size - diag_nz - 2 * kept) / sigma.size
        k = n - int(np.searchsorted(colmax, tau, side="right"))
        if sigma_exact:
            sp_done = (sigma.size - k * k - (n - k)) / sigma.size
            psd = is_psd(sparsify(sigma, theta, tau).matrix) if check_psd else None
        else:
            raw = sparsify(sigma, theta, tau)
            sp_done = complete(sigma, raw).sparsity
            psd = raw.psd if check_psd else None
        rows.append(SweepRow(float(tau), sp_raw, psd, sp_done))
    return SparsitySweep(tuple(rows))


def select_levels(sw: SparsitySweep, sigma, theta, targets, max_gap=0.2):
    """Completed matrices whose sparsity is closest to each target.

    Ties go to the sparser candidate. Target 0 returns the original matrix.
    """
    sigma = np.asarray(sigma, dtype=float)
    levels = []
    achieved = sw.column("sparsity_completed")
    taus = sw.column("tau")
    for target in targets:
        if not 0 <= target < 1:
            raise ValueError("targets must lie in [0, 1)")
        if target == 0:
            levels.append(SparseCovariance(sigma.copy(), 0.0, sparsity(sigma), False, is_psd(sigma)))
            continue
        if achieved.size == 0:
            raise TargetUnreachable(f"no thresholds available for target {target}")
        dist = np.abs(achieved - target)
        best = np.min(dist)
        if best > max_gap:
            raise TargetUnreachable(f"closest completed sparsity to {target} is {achieved[np.argmin(dist)]:.3f}")
        tied = np.flatnonzero(dist <= best + 1e-15)
        k = tied[np.argmax(achieved[tied])]
        levels.append(complete(sigma, sparsify(sigma, theta, taus[k])))
    return levels
