"""
Tracing an efficient frontier
=============================

Each point solves  max mu'w - lambda w'Sigma w  over long-only, fully
invested portfolios with a primal-dual interior point method. Points are
solved in increasing lambda, each one warm-started from the last.
"""
import numpy as np

from pods.frontier import asset_inclusion, evaluate, find_max_lambda, lambda_schedule, trace_frontier
from pods.market_data import compute_returns, evaluation_window, moments, split, synth_prices
from pods.qp import QpProblem, solve_markowitz, solve_min_risk

x = compute_returns(synth_prices(40, 600, seed=1))
train, test = split(x)
m = moments(train)

# %%
# One point at lambda = 5.
port, stats = solve_markowitz(QpProblem(m.mu, m.sigma, 5.0))
print(f"lambda=5: return {port.expected_return:.5f}  variance {port.risk:.3e}  "
      f"{np.sum(port.weights > 1e-6)} assets  {stats.iterations} iterations")

# %%
# Past some lambda the optimum stops moving: it is the minimum-variance
# portfolio. That lambda bounds the schedule.
_, min_var = solve_min_risk(m.sigma)
lam_max = find_max_lambda(m)
print(f"minimum variance {min_var:.3e}, reached by lambda = {lam_max:g}")

sched = lambda_schedule(lam_max, fallback=True)
f = trace_frontier(m, sched)
print(f"{len(f)} lambdas, {f.distinct_portfolios()} distinct supports, "
      f"{int(f.column('iterations').sum())} iterations in total")

# %%
# Risk falls and expected return falls as lambda grows.
for k in range(0, len(f), max(1, len(f) // 8)):
    r = f.records[k]
    print(f"  lambda {r.lam:10.3f}  E[R] {r.portfolio.expected_return: .5f}  "
          f"VAR {r.portfolio.risk:.3e}  iters {r.stats.iterations}")

# %%
# Out-of-sample scoring against the last test day.
_, realized = evaluation_window(test)
rep = evaluate(f, realized)
print(f"mean realized return {rep.actual_return:.5f}, assets ever held {rep.asset_count} "
      f"of {len(m.tickers)}")
print("included:", asset_inclusion(f).bits.astype(int))
