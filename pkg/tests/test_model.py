import math

import numpy as np
import pytest

from joinopt.model import (
    ModelError,
    ModelParams,
    TrainBatch,
    batch_grad,
    batch_loss,
    init_params,
    label_to_latency,
    latency_to_label,
    load_params,
    predict,
    predict_batch,
    save_params,
    sgd_step,
)


# --- independent oracles ------------------------------------------------------

def forward_oracle(params, x):
    """Second forward-pass implementation: plain Python loops, no matmul."""
    activ = list(x)
    n_layers = len(params.weights)
    for layer in range(n_layers):
        w, b = params.weights[layer], params.biases[layer]
        out = []
        for j in range(w.shape[1]):
            z = b[j]
            for i in range(w.shape[0]):
                z += activ[i] * w[i][j]
            if layer < n_layers - 1:
                z = max(z, 0.0)
            out.append(z)
        activ = out
    return activ[0]


def finite_difference_grad(params, batch, h=1e-4):
    """Central differences on every coordinate of every parameter array."""
    grads_w = []
    grads_b = []
    for layer in range(len(params.weights)):
        for which, grads in (("weights", grads_w), ("biases", grads_b)):
            arr = getattr(params, which)[layer]
            grad = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                for sign in (+1, -1):
                    bumped = arr.copy()
                    bumped[idx] += sign * h
                    arrays = list(getattr(params, which))
                    arrays[layer] = bumped
                    kwargs = {
                        "layer_sizes": params.layer_sizes,
                        "weights": params.weights,
                        "biases": params.biases,
                        which: tuple(arrays),
                    }
                    loss = batch_loss(ModelParams(**kwargs), batch)
                    grad[idx] += sign * loss
                grad[idx] /= 2 * h
            grads.append(grad)
    return grads_w, grads_b


def make_linear_model(weight, bias=0.0):
    return ModelParams(
        (1, 1), (np.array([[float(weight)]]),), (np.array([float(bias)]),)
    )


# --- init ---------------------------------------------------------------------

def test_init_deterministic():
    a = init_params((4, 8, 1), 7)
    b = init_params((4, 8, 1), 7)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_init_biases_zero_and_bounds():
    params = init_params((9, 16, 1), 3)
    for b in params.biases:
        assert np.all(b == 0.0)
    for size, w in zip(params.layer_sizes, params.weights):
        assert np.abs(w).max() <= 1.0 / math.sqrt(size)


def test_init_rejects_bad_output():
    with pytest.raises(ModelError, match="output dimension"):
        init_params((4, 2), 0)


# --- predict ------------------------------------------------------------------

def test_predict_zero_params():
    params = ModelParams(
        (3, 2, 1),
        (np.zeros((3, 2)), np.zeros((2, 1))),
        (np.zeros(2), np.zeros(1)),
    )
    for x in (np.zeros(3), np.ones(3), np.array([5.0, -2.0, 0.1])):
        assert predict(params, x) == 0.0


def test_predict_single_linear_layer():
    params = make_linear_model(2.5)
    assert predict(params, np.array([3.0])) == pytest.approx(7.5)


def test_predict_matches_independent_oracle(rng):
    for _ in range(10):
        sizes = (int(rng.integers(2, 6)), int(rng.integers(2, 8)), 1)
        params = init_params(sizes, int(rng.integers(1000)))
        x = rng.normal(size=sizes[0])
        assert predict(params, x) == pytest.approx(forward_oracle(params, x), rel=1e-12)


def test_predict_dimension_mismatch():
    params = init_params((4, 1), 0)
    with pytest.raises(ModelError, match="dimension 4"):
        predict(params, np.zeros(3))


def test_predict_batch_matches_predict(rng):
    params = init_params((5, 7, 1), 11)
    X = rng.normal(size=(6, 5))
    batched = predict_batch(params, X)
    assert batched == pytest.approx([predict(params, row) for row in X])


# --- loss ---------------------------------------------------------------------

def test_loss_zero_when_predictions_match():
    params = make_linear_model(1.0)
    batch = TrainBatch(np.array([[2.0], [5.0]]), np.array([2.0, 5.0]))
    assert batch_loss(params, batch) == 0.0


def test_loss_single_sample():
    params = make_linear_model(0.0, bias=3.0)
    batch = TrainBatch(np.array([[1.0]]), np.array([1.0]))
    assert batch_loss(params, batch) == pytest.approx(4.0)


def test_loss_permutation_invariant(rng):
    params = init_params((3, 4, 1), 5)
    X = rng.normal(size=(8, 3))
    y = rng.normal(size=8) ** 2
    order = rng.permutation(8)
    assert batch_loss(params, TrainBatch(X, y)) == pytest.approx(
        batch_loss(params, TrainBatch(X[order], y[order]))
    )


# --- gradient -----------------------------------------------------------------

def test_zero_loss_zero_gradient():
    params = make_linear_model(1.0)
    batch = TrainBatch(np.array([[2.0]]), np.array([2.0]))
    grad = batch_grad(params, batch)
    assert all(np.all(g == 0) for g in grad.weights)
    assert all(np.all(g == 0) for g in grad.biases)


def test_gradient_matches_finite_differences(rng):
    for trial in range(5):
        d = int(rng.integers(2, 6))
        hidden = int(rng.integers(2, 8))
        params = init_params((d, hidden, 1), int(rng.integers(10_000)))
        batch = TrainBatch(rng.normal(size=(4, d)), rng.normal(size=4) ** 2)
        grad = batch_grad(params, batch)
        fd_w, fd_b = finite_difference_grad(params, batch)
        for g, f in zip(grad.weights, fd_w):
            np.testing.assert_allclose(g, f, rtol=1e-4, atol=1e-6)
        for g, f in zip(grad.biases, fd_b):
            np.testing.assert_allclose(g, f, rtol=1e-4, atol=1e-6)


def test_gradient_mean_semantics(rng):
    params = init_params((3, 5, 1), 2)
    X = rng.normal(size=(4, 3))
    y = rng.normal(size=4) ** 2
    single = batch_grad(params, TrainBatch(X, y))
    doubled = batch_grad(params, TrainBatch(np.vstack([X, X]), np.hstack([y, y])))
    for a, b in zip(single.weights, doubled.weights):
        np.testing.assert_allclose(a, b, rtol=1e-12)


def test_sgd_never_increases_loss_at_tiny_lr(rng):
    for trial in range(10):
        d = int(rng.integers(2, 8))
        params = init_params((d, int(rng.integers(2, 16)), 1), int(rng.integers(10_000)))
        batch = TrainBatch(rng.normal(size=(6, d)), rng.normal(size=6) ** 2)
        before = batch_loss(params, batch)
        stepped = sgd_step(params, batch_grad(params, batch), lr=1e-5)
        assert batch_loss(stepped, batch) <= before + 1e-12


# --- sgd ----------------------------------------------------------------------

def test_sgd_identity_cases():
    params = init_params((3, 4, 1), 9)
    grad = batch_grad(
        params, TrainBatch(np.ones((2, 3)), np.array([1.0, 2.0]))
    )
    unchanged = sgd_step(params, grad, lr=0.0)
    for a, b in zip(params.weights, unchanged.weights):
        assert np.array_equal(a, b)
    zero_grad = ModelParams(
        params.layer_sizes,
        tuple(np.zeros_like(w) for w in params.weights),
        tuple(np.zeros_like(b) for b in params.biases),
    )
    same = sgd_step(params, zero_grad, lr=0.5)
    for a, b in zip(params.weights, same.weights):
        assert np.array_equal(a, b)


def test_sgd_scalar_hand_value():
    # theta = 0, L = (theta - 1)^2, lr = 0.1 -> theta' = 0.2
    params = make_linear_model(0.0, bias=0.0)
    batch = TrainBatch(np.array([[0.0]]), np.array([1.0]))
    grad = batch_grad(params, batch)
    stepped = sgd_step(params, grad, lr=0.1)
    assert stepped.biases[0][0] == pytest.approx(0.2)


def test_sgd_value_semantics():
    params = init_params((2, 3, 1), 1)
    snapshot = [w.copy() for w in params.weights]
    grad = batch_grad(params, TrainBatch(np.ones((1, 2)), np.array([3.0])))
    sgd_step(params, grad, lr=0.5)
    for w, snap in zip(params.weights, snapshot):
        assert np.array_equal(w, snap)


def test_sgd_shape_mismatch():
    params = init_params((3, 4, 1), 0)
    other = batch_grad(
        init_params((2, 4, 1), 0), TrainBatch(np.ones((1, 2)), np.array([1.0]))
    )
    with pytest.raises(ModelError, match="does not match"):
        sgd_step(params, other, lr=0.1)


# --- checkpoint / labels --------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    params = init_params((6, 8, 1), 123)
    path = tmp_path / "model.npz"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.layer_sizes == params.layer_sizes
    for a, b in zip(params.weights, loaded.weights):
        assert np.array_equal(a, b)
    for a, b in zip(params.biases, loaded.biases):
        assert np.array_equal(a, b)


def test_load_missing_checkpoint(tmp_path):
    with pytest.raises(ModelError, match="not found"):
        load_params(tmp_path / "missing.npz")


def test_label_transform_round_trip():
    for latency in (0.0, 0.5, 10.0, 1e6):
        assert label_to_latency(latency_to_label(latency)) == pytest.approx(latency)
    assert latency_to_label(0.0) == 0.0
    assert math.isfinite(label_to_latency(1e9))
