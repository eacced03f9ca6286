import warnings

import numpy as np
import pytest

from pods.classifier import (
    ClassWeights,
    ConfusionMatrix,
    LstmParams,
    TrainConfig,
    confusion,
    forward,
    forward_batch,
    init_lstm,
    load_params,
    loss,
    n_minibatches,
    objective_and_grad,
    predict_mask,
    save_params,
    sigmoid,
    softmax,
    train,
)
from pods.errors import DimensionError, NumericalOverflow
from pods.market_data import AssetMask, ReturnMatrix


def zero_params(hidden=3):
    p = init_lstm(hidden, seed=0)
    return LstmParams(*(np.zeros_like(a) for a in p.arrays()))


def toy_separable(r=0.01, length=20):
    x = np.array([[r] * length if k < 4 else [-r] * length for k in range(8)]).T
    return ReturnMatrix(tuple(f"s{k}" for k in range(8)), x), AssetMask(np.arange(8) < 4)


def grad_check(p, X, y, beta, l2, h=1e-6):
    _, g = objective_and_grad(p, X, y, beta, l2)
    v = p.flat()
    num = np.empty_like(v)
    for k in range(v.size):
        e = np.zeros_like(v)
        e[k] = h
        fp = objective_and_grad(p.with_flat(v + e), X, y, beta, l2)[0]
        fm = objective_and_grad(p.with_flat(v - e), X, y, beta, l2)[0]
        num[k] = (fp - fm) / (2 * h)
    a = g.flat()
    return np.linalg.norm(a - num) / max(np.linalg.norm(a), np.linalg.norm(num))


class TestInit:
    def test_deterministic(self):
        assert init_lstm(10, seed=3).equals(init_lstm(10, seed=3))
        assert not init_lstm(10, seed=3).equals(init_lstm(10, seed=4))

    def test_orthogonal(self):
        R = init_lstm(40, seed=1).Wh
        assert np.max(np.abs(R.T @ R - np.eye(40))) <= 1e-6

    def test_shapes_and_biases(self):
        p = init_lstm(150, seed=0)
        assert p.Wfc.shape == (2, 150) and p.bfc.shape == (2,)
        assert p.Wx.shape == (600, 1) and p.Wh.shape == (600, 150)
        np.testing.assert_array_equal(p.b[150:300], 1.0)
        assert not p.b[:150].any() and not p.b[300:].any()
        assert np.max(np.abs(p.Wx)) <= np.sqrt(6 / 601)

    def test_invalid(self):
        with pytest.raises(ValueError):
            init_lstm(0)


class TestActivations:
    def test_identities(self):
        x = np.linspace(-30, 30, 1001)
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.tanh(x), 2 * sigmoid(2 * x) - 1, atol=1e-12)
        s = np.random.default_rng(0).normal(size=(5, 2))
        np.testing.assert_allclose(softmax(s), softmax(s + 123.4), atol=1e-12)

    def test_extreme_sigmoid(self):
        assert sigmoid(np.array([-1000.0]))[0] == 0.0
        assert sigmoid(np.array([1000.0]))[0] == 1.0


class TestForward:
    def test_zero_weights(self):
        np.testing.assert_allclose(forward(zero_params(), [0.3, -0.2]), [0.5, 0.5])

    def test_fc_bias(self):
        p = zero_params()
        p.bfc[:] = [1.0, 0.0]
        e = np.e
        np.testing.assert_allclose(forward(p, [0.0]), [e / (e + 1), 1 / (e + 1)], rtol=1e-15)

    def test_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            p = init_lstm(int(rng.integers(1, 10)), seed=int(rng.integers(1000)))
            pr = forward(p, rng.normal(0, 1, int(rng.integers(1, 30))))
            assert np.all(pr > 0)
            assert abs(pr.sum() - 1) <= 1e-12

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        p = init_lstm(5, seed=2)
        X = rng.normal(size=(4, 9))
        np.testing.assert_allclose(forward_batch(p, X), np.vstack([forward(p, r) for r in X]), rtol=1e-14)

    def test_non_finite(self):
        with pytest.raises(NumericalOverflow):
            forward(init_lstm(3), [0.1, np.nan])

    def test_empty(self):
        with pytest.raises(DimensionError):
            forward(init_lstm(3), [])


class TestLoss:
    def test_perfect(self):
        assert loss(ClassWeights(), [1], [[0.0, 1.0]]) == 0.0

    def test_weighted_half(self):
        assert loss(ClassWeights(1.0, 2.0), [1], [[0.5, 0.5]]) == pytest.approx(2 * np.log(2))

    def test_linear_in_beta(self):
        probs = np.array([[0.3, 0.7], [0.6, 0.4]])
        a = loss(ClassWeights(0.5, 1.5), [0, 1], probs)
        b = loss(ClassWeights(1.0, 3.0), [0, 1], probs)
        assert b == pytest.approx(2 * a)

    def test_unweighted_cross_entropy(self):
        probs = np.array([[0.3, 0.7], [0.6, 0.4]])
        assert loss(ClassWeights(), [0, 1], probs) == pytest.approx(-(np.log(0.3) + np.log(0.4)) / 2)

    def test_zero_probability_clamped(self):
        with pytest.warns(RuntimeWarning):
            v = loss(ClassWeights(), [0], [[0.0, 1.0]])
        assert v == pytest.approx(-np.log(1e-15))

    def test_class_weights_from_priors(self):
        b = ClassWeights.from_labels([0] * 8 + [1] * 2)
        assert b.beta0 + b.beta1 == pytest.approx(2.0)
        assert b.beta1 / b.beta0 == pytest.approx(4.0)


class TestGradient:
    @pytest.mark.parametrize("hidden,length", [(1, 1), (3, 5), (8, 12)])
    def test_central_differences(self, hidden, length):
        rng = np.random.default_rng(hidden)
        p = init_lstm(hidden, seed=hidden)
        p = p.with_flat(p.flat() + rng.normal(0, 0.3, p.flat().size))
        X = rng.normal(0, 1, (5, length))
        y = np.array([0, 1, 1, 0, 1])
        assert grad_check(p, X, y, ClassWeights(0.7, 1.3), l2=0.01) <= 1e-5

    def test_checkpointing_long_sequence(self):
        rng = np.random.default_rng(9)
        p = init_lstm(2, seed=1)
        X = rng.normal(0, 1, (3, 30))
        assert grad_check(p, X, np.array([0, 1, 0]), ClassWeights(), l2=0.0) <= 1e-5


class TestTrain:
    def test_minibatch_count(self):
        assert n_minibatches(374, 187) == 2
        assert n_minibatches(375, 187) == 3

    def test_overfit_separable(self):
        x, y = toy_separable()
        cfg = TrainConfig(learning_rate=0.01, max_epochs=200, batch_size=8, hidden=8)
        res = train(x, y, cfg)
        assert np.array_equal(predict_mask(res.params, x).bits, y.bits)
        assert res.epoch_loss[-1] <= res.epoch_loss[0]

    def test_zero_learning_rate(self):
        x, y = toy_separable()
        init = init_lstm(4, seed=5)
        res = train(x, y, TrainConfig(learning_rate=0.0, max_epochs=3, batch_size=3, hidden=4), init=init)
        assert res.params.equals(init)

    def test_deterministic(self):
        x, y = toy_separable()
        cfg = TrainConfig(learning_rate=0.005, max_epochs=5, batch_size=3, hidden=4, seed=11)
        assert train(x, y, cfg).params.equals(train(x, y, cfg).params)

    def test_class_weight_effect(self):
        rng = np.random.default_rng(3)
        n = 40
        labels = np.zeros(n, dtype=bool)
        labels[:8] = True
        x = rng.normal(0, 0.01, (15, n)) + np.where(labels, 0.004, 0.0)
        xm = ReturnMatrix(tuple(map(str, range(n))), x)
        ym = AssetMask(labels)
        base = dict(learning_rate=0.01, max_epochs=30, batch_size=20, hidden=4, seed=2)
        plain = train(xm, ym, TrainConfig(class_weights=ClassWeights(1.0, 1.0), **base))
        heavy = train(xm, ym, TrainConfig(class_weights=ClassWeights(0.1, 1.9), **base))
        assert predict_mask(heavy.params, xm).count >= predict_mask(plain.params, xm).count

    def test_label_mismatch(self):
        x, _ = toy_separable()
        with pytest.raises(DimensionError):
            train(x, AssetMask(np.ones(3)), TrainConfig(max_epochs=1))

    def test_loss_curve_csv(self, tmp_path):
        x, y = toy_separable()
        res = train(x, y, TrainConfig(max_epochs=3, batch_size=4, hidden=2))
        res.loss_curve_csv(tmp_path / "l.csv")
        lines = (tmp_path / "l.csv").read_text().splitlines()
        assert lines[0] == "epoch,loss" and len(lines) == 4

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(grad_decay=1.0)


class TestPredict:
    def test_tie_goes_to_zero(self):
        p = init_lstm(4, seed=0)
        p.Wfc[1] = p.Wfc[0]
        p.bfc[:] = 0.0
        x = ReturnMatrix(("a", "b"), np.random.default_rng(0).normal(0, 0.1, size=(6, 2)))
        assert predict_mask(p, x).count == 0


class TestConfusion:
    def test_paper_counts(self):
        assert ConfusionMatrix.from_counts(246, 46, 63, 19).accuracy == pytest.approx(0.709, abs=5e-4)
        assert ConfusionMatrix.from_counts(205, 41, 104, 24).accuracy == pytest.approx(0.612, abs=5e-4)

    def test_perfect(self):
        m = AssetMask(np.array([1, 0, 1, 1]))
        c = confusion(m, m)
        assert c.counts[0, 1] == c.counts[1, 0] == 0
        assert c.accuracy == 1.0
        assert c.total == 4

    def test_orientation(self):
        pred = AssetMask(np.array([1, 1, 0, 0]))
        act = AssetMask(np.array([1, 0, 1, 0]))
        c = confusion(pred, act)
        np.testing.assert_array_equal(c.counts, [[1, 1], [1, 1]])
        assert c.as_dict()["actual0_pred1"] == 1

    def test_length(self):
        with pytest.raises(DimensionError):
            confusion(AssetMask(np.ones(2)), AssetMask(np.ones(3)))


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        p = init_lstm(7, seed=3)
        save_params(p, tmp_path / "p.bin")
        q = load_params(tmp_path / "p.bin")
        assert p.equals(q)
        raw = (tmp_path / "p.bin").read_bytes()
        assert raw[:8] == b"PODSLSTM"

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"NOTPARAMS" * 4)
        with pytest.raises(ValueError):
            load_params(tmp_path / "x.bin")
