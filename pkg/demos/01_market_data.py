"""
Prices, returns and moments
===========================

A five-day, four-asset price table is turned into simple returns, and from
those into the mean vector, the sample covariance and the correlation
matrix. A larger synthetic market is then split into training and test
histories.
"""
import numpy as np

from pods.market_data import PriceMatrix, compute_returns, moments, split, synth_prices
from pods.sparsifier import complete, is_psd, sparsify, threshold_candidates

# %%
# A tiny price table. Rows are days, columns are tickers.
prices = np.array([
    [2.0, 3.0, 5.0, 2.0],
    [6.0, 7.0, 9.0, 3.0],
    [4.0, 8.0, 6.0, 5.0],
    [5.0, 2.0, 1.0, 2.0],
    [2.0, 5.0, 3.0, 6.0],
])
p = PriceMatrix(tuple(f"2024-01-0{i + 1}" for i in range(5)), ("A", "B", "C", "D"), prices)
x = compute_returns(p)
print("returns\n", np.round(x.returns, 4))

# %%
# Sample moments use the M - 1 denominator.
m = moments(x)
np.set_printoptions(precision=4, suppress=True)
print("mu   ", m.mu)
print("sigma\n", m.sigma)
print("theta\n", m.theta)

# %%
# Thresholding at the fourth-smallest correlation magnitude leaves an
# indefinite matrix; completion restores the (2,4) pair and nothing else.
tau = threshold_candidates(m.theta)[3]
raw = sparsify(m.sigma, m.theta, tau)
done = complete(m.sigma, raw)
print(f"tau={tau:.3f}  raw PSD {is_psd(raw.matrix)}  completed PSD {is_psd(done.matrix)}  "
      f"sparsity {done.sparsity}")
print(done.matrix)

# %%
# A synthetic market: a one-factor model with sectors, deterministic in the seed.
big = compute_returns(synth_prices(50, 400, seed=0))
train, test = split(big, 0.75)
print(f"{big.n_rows} return rows -> {train.n_rows} train, {test.n_rows} test")
mt = moments(train)
print("smallest covariance eigenvalue:", np.linalg.eigvalsh(mt.sigma)[0])
