"""
Predicting frontier membership with an LSTM
===========================================

Each asset's return history is one sequence. A single-layer LSTM with a
softmax head learns whether the asset shows up anywhere on the training
frontier. The classes are unbalanced, so the loss weights them by inverse
frequency.
"""
import numpy as np

from pods.classifier import TrainConfig, confusion, predict_mask, train
from pods.frontier import asset_inclusion, find_max_lambda, lambda_schedule, trace_frontier
from pods.market_data import compute_returns, moments, split, synth_prices

x = compute_returns(synth_prices(60, 300, seed=4))
tr, te = split(x)
m = moments(tr)
labels = asset_inclusion(trace_frontier(m, lambda_schedule(find_max_lambda(m), fallback=True)))
print(f"{int(labels.bits.sum())} of {labels.bits.size} assets are on the training frontier")

# %%
# A small network keeps this demo quick; the defaults are 150 hidden units and 60 epochs.
cfg = TrainConfig(hidden=16, max_epochs=40, batch_size=32, learning_rate=1e-2)
res = train(tr, labels, cfg)
print("loss by epoch:", np.round(res.epoch_loss[::8], 4))
print("class weights:", res.class_weights.vector)

# %%
pred = predict_mask(res.params, tr)
cm = confusion(pred, labels)
print("in-sample confusion [actual, predicted]\n", cm.counts)
print(f"accuracy {cm.accuracy:.3f}")
