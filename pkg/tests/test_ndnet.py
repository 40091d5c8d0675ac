"""Network init, forward/backward contracts, regularizers and checkpoints."""

import numpy as np
import pytest

from ondkit import ndnet
from ondkit.ndnet import (NDModel, RegularizerConfig, apply_mixup, backward,
                          forward, init_model, load_checkpoint,
                          save_checkpoint, snap_to_f32)

from conftest import random_model


def toy_model():
    """Four 1x1 identity layers and w=[1]: input 2 -> z=2 -> nu=sigmoid(2)."""
    ones = [np.ones((1, 1)) for _ in range(4)]
    zeros = [np.zeros(1) for _ in range(4)]
    return NDModel(ones, zeros, np.ones(1))


# --- init -------------------------------------------------------------------


def test_xavier_bounds():
    model = init_model(128, widths=[128, 64, 32, 16], seed=0)
    bound = np.sqrt(6.0 / 256.0)
    assert np.abs(model.weights[0]).max() <= bound
    assert np.abs(model.weights[0]).max() > 0.9 * bound  # actually fills the range
    for b in model.biases:
        assert np.all(b == 0.0)


def test_init_deterministic():
    m1 = init_model(16, widths=[8, 8, 8, 4], seed=5)
    m2 = init_model(16, widths=[8, 8, 8, 4], seed=5)
    assert m1.param_distance(m2) == 0.0


def test_init_rejects_bad_widths():
    with pytest.raises(ValueError):
        init_model(8, widths=[4, 4, 4])
    with pytest.raises(ValueError):
        init_model(8, widths=[4, 4, 0, 4])


# --- forward ----------------------------------------------------------------


def test_toy_forward():
    fwd, _ = forward(toy_model(), np.array([[2.0]]))
    assert fwd.z[0, 0] == 2.0
    assert fwd.nu[0] == pytest.approx(0.8807970779778823, abs=1e-12)


def test_zero_w_gives_half(rng):
    model = random_model(rng)
    model.w[:] = 0.0
    fwd, _ = forward(model, rng.normal(size=(5, 16)))
    assert np.all(fwd.nu == 0.5)


def test_eval_deterministic_and_ignores_reg(rng):
    model = random_model(rng)
    X = rng.normal(size=(6, 16))
    reg = RegularizerConfig(dropout_p=0.7, mixup="manifold")
    a, _ = forward(model, X, mode="eval", reg=reg)
    b, _ = forward(model, X, mode="eval")
    assert np.array_equal(a.z, b.z) and np.array_equal(a.nu, b.nu)


def test_forward_nu_in_open_interval(rng):
    model = random_model(rng)
    model.w *= 100.0  # saturate the sigmoid
    fwd, _ = forward(model, rng.normal(size=(8, 16)) * 10)
    assert np.all(fwd.nu > 0.0) and np.all(fwd.nu < 1.0)


def test_forward_dim_mismatch(rng):
    model = random_model(rng)
    with pytest.raises(ValueError, match="dim"):
        forward(model, rng.normal(size=(3, 7)))


def test_standardizer_applied(rng):
    model = random_model(rng)
    X = rng.normal(loc=5.0, scale=3.0, size=(64, 16))
    plain, _ = forward(model, X)
    ndnet.fit_standardizer(model, X)
    std, _ = forward(model, X)
    assert not np.allclose(plain.z, std.z)
    manual, _ = forward(random_model(np.random.default_rng(1234)),
                        (X - X.mean(axis=0)) / (X.std(axis=0) + 1e-8))
    assert np.allclose(std.z, manual.z)


# --- backward / stop gradient -----------------------------------------------


def test_stop_gradient_bce_path(rng):
    model = random_model(rng)
    X = rng.normal(size=(7, 16))
    fwd, _ = forward(model, X)
    dnu = rng.normal(size=7)
    gW, gb, gw = backward(model, fwd, dnu=dnu)
    for g in gW + gb:
        assert np.all(g == 0.0)          # bit-exact zero, not approximately
    assert np.any(gw != 0.0)


def test_supcon_path_never_touches_w(rng):
    model = random_model(rng)
    X = rng.normal(size=(7, 16))
    fwd, _ = forward(model, X)
    gW, gb, gw = backward(model, fwd, dZ=rng.normal(size=fwd.z.shape))
    assert np.all(gw == 0.0)
    assert any(np.any(g != 0.0) for g in gW)


def _fd_loss_grads(model, X, loss_fn, eps=1e-5):
    """Central finite differences of loss_fn(model) w.r.t. every parameter."""
    grads = []
    for p in model.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            old = p[ix]
            p[ix] = old + eps
            hi = loss_fn(model, X)
            p[ix] = old - eps
            lo = loss_fn(model, X)
            p[ix] = old
            g[ix] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def _max_rel_err(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def test_embedding_path_matches_finite_differences(rng):
    # linear-in-z probe loss: dL/dZ = R, so gradients exercise the full chain
    for _ in range(5):
        model = random_model(rng)
        X = rng.normal(size=(5, 16))
        R = rng.normal(size=(5, 4))

        def loss(m, X):
            fwd, _ = forward(m, X)
            return float((fwd.z * R).sum())

        fwd, _ = forward(model, X)
        gW, gb, gw = backward(model, fwd, dZ=R)
        numeric = _fd_loss_grads(model, X, loss)
        assert _max_rel_err(gW + gb, numeric[:8]) < 1e-4
        assert np.all(gw == 0.0)


def test_full_backprop_matches_finite_differences(rng):
    # BCE through the whole net (the no-stop-gradient baseline path)
    for _ in range(5):
        model = random_model(rng)
        X = rng.normal(size=(6, 16))
        y = rng.integers(0, 2, size=6).astype(float)

        def loss(m, X):
            fwd, _ = forward(m, X)
            return float(-np.mean(y * np.log(fwd.nu) + (1 - y) * np.log(1 - fwd.nu)))

        fwd, _ = forward(model, X)
        dpre = (fwd.nu - y) / len(y)
        gW, gb, gw = backward(model, fwd, dpre=dpre, full_backprop=True)
        numeric = _fd_loss_grads(model, X, loss)
        assert _max_rel_err(gW + gb + [gw], numeric) < 1e-4


def test_backward_requires_cache(rng):
    model = random_model(rng)
    with pytest.raises(ValueError, match="cache"):
        backward(model, ndnet.ForwardResult(z=np.zeros((1, 4)), nu=np.zeros(1)))


# --- regularizers -----------------------------------------------------------


def test_mixup_endpoints(rng):
    X = rng.normal(size=(4, 3))
    y = np.array([1.0, 0.0, 1.0, 0.0])
    reg = RegularizerConfig(mixup="input")
    perm = np.array([1, 2, 3, 0])
    mx, my = apply_mixup(X, y, reg, lam=0.0, perm=perm)
    assert np.array_equal(mx, X) and np.array_equal(my, y)
    mx, my = apply_mixup(X, y, reg, lam=1.0, perm=perm)
    assert np.array_equal(mx, X[perm]) and np.array_equal(my, y[perm])


def test_mixup_midpoint():
    X = np.array([[2.0, 0.0], [0.0, 2.0]])
    y = np.array([1.0, 0.0])
    mx, my = apply_mixup(X, y, RegularizerConfig(), lam=0.5, perm=np.array([1, 0]))
    assert np.allclose(mx, [[1.0, 1.0], [1.0, 1.0]])
    assert np.allclose(my, [0.5, 0.5])


def test_mixup_rejects_singleton():
    with pytest.raises(ValueError):
        apply_mixup(np.zeros((1, 2)), np.zeros(1), RegularizerConfig())


def test_mixup_lambda_clamped(rng):
    reg = RegularizerConfig(mixup_mu=0.5, mixup_sigma=5.0)
    lams = [ndnet.sample_mixup_lambda(rng, reg) for _ in range(200)]
    assert all(0.0 <= l <= 1.0 for l in lams)


def test_dropout_inverted_scaling(rng):
    model = random_model(rng)
    X = rng.normal(size=(4, 16))
    reg = RegularizerConfig(dropout_p=0.5)
    fwd, _ = forward(model, X, mode="train", reg=reg, rng=np.random.default_rng(0))
    for mask in fwd.masks:
        assert set(np.unique(mask)) <= {0.0, 2.0}  # kept units scaled by 1/(1-p)


def test_regularizer_validation():
    with pytest.raises(ValueError):
        RegularizerConfig(dropout_p=1.0).validate()
    with pytest.raises(ValueError):
        RegularizerConfig(mixup="bogus").validate()


# --- checkpoints ------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, rng):
    model = snap_to_f32(random_model(rng))
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.param_distance(model) == 0.0
    assert loaded.input_mean is None


def test_checkpoint_round_trip_with_standardizer(tmp_path, rng):
    model = random_model(rng)
    ndnet.fit_standardizer(model, rng.normal(size=(32, 16)))
    model = snap_to_f32(model)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.param_distance(model) == 0.0
    assert np.array_equal(loaded.input_mean, model.input_mean)
    assert np.array_equal(loaded.input_std, model.input_std)
    a, _ = forward(model, rng.normal(size=(3, 16)))
    # same inputs through the reloaded model must score identically
    b, _ = forward(loaded, np.asarray(a.inputs[0]) * model.input_std + model.input_mean)
    assert np.allclose(a.nu, b.nu)


def test_checkpoint_bad_magic(tmp_path, rng):
    path = tmp_path / "model.ckpt"
    save_checkpoint(snap_to_f32(random_model(rng)), path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)
