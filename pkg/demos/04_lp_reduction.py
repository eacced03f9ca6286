"""
Universe reduction with a mean-absolute-deviation LP
====================================================

The L1 risk version of the frontier is a linear program in a single
parameter gamma. A parametric simplex walks every optimal vertex from
gamma = infinity down to 0, and the union of assets held along the way is a
cheap guess at which assets the quadratic frontier will need.
"""
import numpy as np

from pods.frontier import asset_inclusion, find_max_lambda, lambda_schedule, trace_frontier
from pods.lp_reduction import build_lp, parametric_frontier, predict_mask
from pods.market_data import compute_returns, moments, reduce_universe, split, synth_prices

x = compute_returns(synth_prices(80, 400, seed=3))
train, _ = split(x)

lp = build_lp(train)
g = parametric_frontier(lp)
print(f"{len(g)} gamma intervals from {g.pivots} pivots")
for iv in g.intervals[:5]:
    held = np.flatnonzero(iv.weights > 1e-9)
    print(f"  gamma in [{iv.gamma_low:.4g}, {iv.gamma_high:.4g}]  holds {held.tolist()}")

# %%
mask = predict_mask(g)
m = moments(train)
f = trace_frontier(m, lambda_schedule(find_max_lambda(m), fallback=True))
truth = asset_inclusion(f)
both = int(np.sum(mask.bits & truth.bits))
print(f"LP keeps {int(mask.bits.sum())} assets, QP frontier uses {int(truth.bits.sum())}, overlap {both}")

# %%
# The reduced problem is the principal submatrix on the kept assets.
small = reduce_universe(m, mask)
print("reduced covariance shape:", small.sigma.shape)
