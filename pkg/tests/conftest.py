import numpy as np
import pytest

from pods.market_data import PriceMatrix, compute_returns, moments

# 5 x 4 toy price matrix used throughout the small worked examples
TOY_PRICES = np.array([
    [2, 3, 5, 2],
    [6, 7, 9, 3],
    [4, 8, 6, 5],
    [5, 2, 1, 2],
    [2, 5, 3, 6],
], dtype=float)

TOY_SIGMA = np.array([
    [1.37, 0.27, -0.08, -0.47],
    [0.27, 1.12, 1.25, 0.93],
    [-0.08, 1.25, 1.59, 1.21],
    [-0.47, 0.93, 1.21, 1.14],
])

TOY_THETA = np.array([
    [1, 0.21, -0.05, -0.38],
    [0.21, 1, 0.93, 0.82],
    [-0.05, 0.93, 1, 0.9],
    [-0.38, 0.82, 0.9, 1],
])


def toy_price_matrix():
    dates = tuple(f"2020-01-0{k + 1}" for k in range(5))
    return PriceMatrix(dates, ("A", "B", "C", "D"), TOY_PRICES)


@pytest.fixture
def toy_prices():
    return toy_price_matrix()


@pytest.fixture
def toy_moments():
    return moments(compute_returns(toy_price_matrix()))


def random_cov(rng, n, rank=None):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank)) * rng.uniform(0.5, 2.0, n)[:, None]
    return G @ G.T


def cov_to_corr(s):
    d = np.sqrt(np.diag(s))
    t = s / np.outer(d, d)
    np.fill_diagonal(t, 1.0)
    return t


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
