import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freq_opf_lab.neural import (MlpParams, MlpSpec, Normalizer, ScenarioDataset, TrainConfig,
                                 TrainedModel, TrainingDiverged, activation_pattern,
                                 fold_normalization, forward, grad, init_params, loss, r2_score,
                                 train)
from oracles import forward_loop


def random_net(spec, seed):
    """He-initialised weights with random biases (keeps samples off ReLU kinks)."""
    p = init_params(spec, seed)
    rng = np.random.default_rng(seed + 1000)
    return MlpParams(p.weights, [rng.normal(scale=0.5, size=b.shape) for b in p.biases])


def rel_fd_error(params, X, Y, h=1e-5):
    g = grad(params, X, Y).flat()
    th = params.flat()
    fd = np.empty_like(th)
    for i in range(th.size):
        e = np.zeros_like(th)
        e[i] = h
        fd[i] = (loss(params.unflat(th + e), X, Y) - loss(params.unflat(th - e), X, Y)) / (2 * h)
    return np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-12)


def test_zero_network_outputs_last_bias():
    p = MlpParams([np.zeros((3, 4)), np.zeros((4, 2))], [np.full(4, -1.0), np.array([0.3, 59.9])])
    assert np.allclose(forward(p, [1.0, 2.0, 3.0]), [0.3, 59.9])


def test_relu_clips():
    p = MlpParams([np.ones((1, 1)), np.ones((1, 2))], [np.zeros(1), np.zeros(2)])
    assert np.allclose(forward(p, [-2.0]), [0.0, 0.0])


def test_forward_matches_scalar_oracle():
    rng = np.random.default_rng(4)
    p = init_params(MlpSpec(7, (9, 5)), 11)
    for _ in range(20):
        x = rng.normal(size=7)
        np.testing.assert_allclose(forward(p, x), forward_loop(p.weights, p.biases, x), atol=1e-12)


def test_dimension_mismatch():
    p = init_params(MlpSpec(3), 0)
    with pytest.raises(ValueError):
        forward(p, np.zeros(4))
    with pytest.raises(ValueError):
        MlpParams([np.zeros((3, 4)), np.zeros((5, 2))], [np.zeros(4), np.zeros(2)])
    with pytest.raises(ValueError):
        MlpSpec(3, (16,), output_dim=3)


def test_loss_examples():
    p = MlpParams([np.zeros((1, 2))], [np.zeros(2)])
    assert loss(p, [[0.0]], [[1.0, 1.0]]) == pytest.approx(2.0)
    assert loss(p, [[0.0]], [[0.0, 0.0]]) == 0.0
    X = np.array([[1.0], [2.0]])
    Y = np.array([[1.0, 0.0], [0.0, 3.0]])
    assert loss(p, np.vstack([X, X]), np.vstack([Y, Y])) == pytest.approx(loss(p, X, Y))
    with pytest.raises(ValueError):
        loss(p, np.zeros((0, 1)), np.zeros((0, 2)))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = random_net(MlpSpec(5, (8, 6)), seed)
    X = rng.normal(size=(30, 5))
    Y = rng.normal(size=(30, 2))
    assert rel_fd_error(p, X, Y) <= 1e-5


def test_zero_error_zero_gradient():
    p = init_params(MlpSpec(4, (6,)), 1)
    X = np.random.default_rng(0).normal(size=(10, 4))
    g = grad(p, X, forward(p, X))
    assert np.all(g.flat() == 0.0)


def test_gradient_scales_with_error_for_linear_net():
    p = init_params(MlpSpec(3, ()), 2)
    X = np.random.default_rng(1).normal(size=(8, 3))
    E = np.random.default_rng(2).normal(size=(8, 2))
    base = forward(p, X)
    g1 = grad(p, X, base - E).flat()
    g3 = grad(p, X, base - 3 * E).flat()
    np.testing.assert_allclose(g3, 3 * g1, rtol=1e-12)


def test_piecewise_linear_within_region():
    rng = np.random.default_rng(3)
    p = init_params(MlpSpec(4, (10, 10)), 5)
    for _ in range(20):
        x = rng.normal(size=4)
        d = rng.normal(size=4)
        h = 1e-6
        pat = activation_pattern(p, x)
        if any((a != b).any() for a, b in zip(pat, activation_pattern(p, x + 2 * h * d))):
            continue
        s1 = (forward(p, x + h * d) - forward(p, x)) / h
        s2 = (forward(p, x + 2 * h * d) - forward(p, x + h * d)) / h
        np.testing.assert_allclose(s1, s2, atol=1e-6)


def test_hidden_permutation_invariance():
    rng = np.random.default_rng(8)
    p = init_params(MlpSpec(4, (6, 5)), 9)
    perm = rng.permutation(6)
    w = [p.weights[0][:, perm], p.weights[1][perm, :], p.weights[2]]
    b = [p.biases[0][perm], p.biases[1], p.biases[2]]
    q = MlpParams(w, b)
    X = rng.normal(size=(20, 4))
    np.testing.assert_allclose(forward(p, X), forward(q, X), atol=1e-12)


def _random_normalizer(rng, n):
    return Normalizer(rng.normal(size=n), rng.uniform(0.2, 5, n), rng.normal(size=2), rng.uniform(0.2, 5, 2))


def test_fold_normalization_equivalence():
    rng = np.random.default_rng(0)
    p = init_params(MlpSpec(6, (12, 12)), 3)
    n = _random_normalizer(rng, 6)
    f = fold_normalization(p, n)
    X = rng.normal(size=(100, 6)) * 10
    np.testing.assert_allclose(forward(f, X), n.y_inverse(forward(p, n.x(X))), atol=1e-9)
    for x in X[:20]:
        for a, b in zip(activation_pattern(f, x), activation_pattern(p, n.x(x))):
            assert (a == b).all()


def test_fold_identity_and_shift_only():
    p = init_params(MlpSpec(3, (4,)), 0)
    f = fold_normalization(p, Normalizer.identity(3))
    for a, b in zip(f.flat(), p.flat()):
        assert a == b
    n = Normalizer(np.array([1.0, 2.0, 3.0]), np.ones(3), np.array([0.5, -1.0]), np.ones(2))
    f = fold_normalization(p, n)
    np.testing.assert_array_equal(f.weights[0], p.weights[0])
    np.testing.assert_array_equal(f.weights[1], p.weights[1])
    assert not np.allclose(f.biases[0], p.biases[0])
    assert not np.allclose(f.biases[1], p.biases[1])
    with pytest.raises(ValueError):
        Normalizer(np.zeros(3), np.array([1.0, 0.0, 1.0]), np.zeros(2), np.ones(2))


def _planted(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 100, size=(n, 5))
    A = rng.normal(size=(5, 2))
    Y = X @ A * 0.01 + np.array([-0.3, 59.7])
    return X, Y


def test_train_recovers_planted_linear_map():
    X, Y = _planted(2000)
    params, norm, hist = train(MlpSpec(5, (16, 16)), X[:1400], Y[:1400], X[1400:], Y[1400:],
                               TrainConfig(max_epochs=300, seed=1))
    pred = norm.y_inverse(forward(params, norm.x(X[1400:])))
    assert r2_score(Y[1400:, 0], pred[:, 0]) >= 0.999
    assert r2_score(Y[1400:, 1], pred[:, 1]) >= 0.999
    # the returned parameters are the best recorded epoch
    assert loss(params, norm.x(X[1400:]), norm.y(Y[1400:])) == pytest.approx(hist.best_val, rel=1e-12)
    assert hist.best_val == min(hist.val_loss)


def test_training_is_deterministic():
    X, Y = _planted(200)
    cfg = TrainConfig(max_epochs=30, seed=4)
    a = train(MlpSpec(5, (8,)), X[:150], Y[:150], X[150:], Y[150:], cfg)
    b = train(MlpSpec(5, (8,)), X[:150], Y[:150], X[150:], Y[150:], cfg)
    assert a[2].val_loss == b[2].val_loss
    np.testing.assert_array_equal(a[0].flat(), b[0].flat())


def test_divergence_aborts():
    X, Y = _planted(200)
    with pytest.raises(TrainingDiverged):
        train(MlpSpec(5, (8,)), X[:150], Y[:150], X[150:], Y[150:],
              TrainConfig(lr=1e3, max_epochs=50, seed=0))


def test_model_roundtrip(tmp_path):
    p = init_params(MlpSpec(3, (4,)), 0)
    m = TrainedModel(p, Normalizer.identity(3), ["a", "b", "c"], {"seed": 0})
    m.save(tmp_path / "m.json")
    m2 = TrainedModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(m2.params.flat(), p.flat())
    assert m2.feature_names == ["a", "b", "c"]
    d = json.loads((tmp_path / "m.json").read_text())
    assert set(d) >= {"spec", "weights", "biases", "normalizer", "metadata"}


def test_dataset_csv_roundtrip(tmp_path):
    ds = ScenarioDataset(["gen_A", "load_1", "ctg_A"], [[1.0, 2.0, 1.0], [3.0, 4.0, 1.0]],
                         [[-0.1, 59.9], [-0.2, 59.8]], ["train", "test"])
    ds.write_csv(tmp_path / "d.csv")
    back = ScenarioDataset.read_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.Y, ds.Y)
    assert list(back.split) == ["train", "test"]
    ds.validate_labels(60.0)
    bad = ScenarioDataset(["x"], [[0.0]], [[0.1, 60.1]], ["train"])
    with pytest.raises(ValueError):
        bad.validate_labels(60.0)
    with pytest.raises(ValueError):
        ScenarioDataset(["x"], [[np.nan]], [[0.0, 60.0]], ["train"])


@given(st.integers(0, 10_000))
def test_fold_preserves_output_property(seed):
    rng = np.random.default_rng(seed)
    p = init_params(MlpSpec(3, (5,)), seed)
    n = _random_normalizer(rng, 3)
    x = rng.normal(size=3) * 5
    np.testing.assert_allclose(forward(fold_normalization(p, n), x), n.y_inverse(forward(p, n.x(x))),
                               atol=1e-9)


@given(st.integers(0, 10_000))
def test_fold_preserves_activation_pattern(seed):
    rng = np.random.default_rng(seed)
    p = random_net(MlpSpec(4, (6, 5)), seed)
    n = _random_normalizer(rng, 4)
    folded = fold_normalization(p, n)
    for x in rng.normal(size=(20, 4)) * 3:
        raw = activation_pattern(p, n.x(x))
        for a, b in zip(raw, activation_pattern(folded, x)):
            np.testing.assert_array_equal(a, b)
