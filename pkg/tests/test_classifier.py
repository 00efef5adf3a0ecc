import json
import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from chirpsense.classifier import (
    ChirpClassifier,
    ModelFormatError,
    MlpModel,
    TrainConfig,
    TrainingError,
    classify,
    cross_entropy_loss,
    decode_model,
    dropout_mask,
    encode_model,
    forward,
    init_model,
    load_model,
    loss_and_grads,
    mean_cross_entropy,
    predict_proba,
    save_model,
    softmax,
    train,
)
from chirpsense.channel import make_rng


def numeric_gradients(model, x, y, mode, seed, h=1e-4):
    grads = []
    for w, b in model.layers:
        pair = []
        for param in (w, b):
            g = np.zeros_like(param)
            flat, gflat = param.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_and_grads(model, x, y, mode, 0.5, seed)[0]
                flat[i] = orig - h
                down = loss_and_grads(model, x, y, mode, 0.5, seed)[0]
                flat[i] = orig
                gflat[i] = (up - down) / (2 * h)
            pair.append(g)
        grads.append(pair)
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            scale = np.maximum(np.abs(a), np.abs(n))
            err = np.where(scale == 0, 0.0, np.abs(a - n) / np.where(scale == 0, 1, scale))
            worst = max(worst, float(err.max()))
    return worst


def test_softmax_examples():
    assert np.allclose(softmax(np.zeros(18)), 1 / 18)
    assert np.allclose(softmax([1000.0, 0.0, -1000.0]), [1, 0, 0])
    p = softmax([1.0, 2.0, 3.0])
    e = np.exp([1.0, 2.0, 3.0])
    assert np.allclose(p, e / e.sum())
    z = np.r_[1.0, 2.0, 3.0, np.zeros(15)]
    direct = np.r_[np.e, np.e ** 2, np.e ** 3, np.ones(15)]
    assert np.allclose(softmax(z), direct / direct.sum(), rtol=1e-14)
    assert softmax(z).sum() == pytest.approx(1.0, abs=1e-12)


def test_softmax_dominance_limit():
    p = softmax(np.r_[50.0, np.zeros(17)])
    # 1 - 1e-20 is not representable, so bound the mass left for the other entries
    assert p[1:].sum() < 1e-20
    assert p[0] == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-700, 700), min_size=2, max_size=30))
def test_softmax_is_a_distribution(z):
    p = softmax(z)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)


def test_cross_entropy_examples():
    assert cross_entropy_loss(np.full(18, 1 / 18), 3) == pytest.approx(np.log(18))
    assert cross_entropy_loss(np.eye(18)[4], 4) == pytest.approx(0.0, abs=1e-11)
    assert cross_entropy_loss(np.eye(18)[4], 5) == pytest.approx(-np.log(1e-12))
    with pytest.raises(ValueError):
        cross_entropy_loss(np.full(18, 1 / 18), 18)
    z = np.r_[1.0, 2.0, 3.0, np.zeros(15)]
    direct = -np.log(np.e ** 3 / (np.e + np.e ** 2 + np.e ** 3 + 15) + 1e-12)
    assert cross_entropy_loss(softmax(z), 2) == pytest.approx(direct, rel=1e-14)


def test_train_mode_dropout_zeroes_and_doubles():
    model = init_model(make_rng(1))
    x = make_rng(2).normal(size=(5, 1024))
    _, infer = forward(model, x)
    _, trained = forward(model, x, "train", 0.5, 21)
    h2 = infer["activations"][-1]
    dropped = trained["dropped"]
    kept = trained["mask"] > 0
    assert np.array_equal(dropped[~kept], np.zeros((~kept).sum()))
    assert np.array_equal(dropped[kept], 2 * h2[kept])
    assert 0 < kept.mean() < 1


def test_dropout_mask_values():
    mask = dropout_mask(make_rng(0), (10_000,), 0.5)
    assert set(np.unique(mask)) == {0.0, 2.0}
    assert np.mean(mask) == pytest.approx(1.0, abs=0.05)


def test_zero_model_is_uniform():
    probs = predict_proba(MlpModel.zeros(), np.ones((3, 1024)))
    assert np.allclose(probs, 1 / 18)
    assert classify(MlpModel.zeros(), np.ones(1024))[0] == 0


def test_infer_mode_is_deterministic_train_mode_is_not():
    model = init_model(make_rng(1))
    x = make_rng(2).normal(size=(4, 1024))
    a, _ = forward(model, x)
    assert np.array_equal(a, forward(model, x)[0])
    t1, _ = forward(model, x, "train", 0.5, 11)
    t2, _ = forward(model, x, "train", 0.5, 12)
    assert not np.allclose(t1, t2)
    assert np.array_equal(t1, forward(model, x, "train", 0.5, 11)[0])


def test_glorot_limits():
    model = init_model(make_rng(3))
    for w, b in model.layers:
        limit = np.sqrt(6 / sum(w.shape))
        assert np.all(np.abs(w) <= limit) and np.all(b == 0)
    assert [w.shape for w, _ in model.layers] == [(1024, 16), (16, 16), (16, 18)]


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["infer", "train"])
def test_gradients_match_finite_differences(mode):
    model = init_model(make_rng(5))
    for w, b in model.layers:
        b += make_rng(6).normal(scale=0.1, size=b.shape)
    x = make_rng(7).normal(size=(3, 1024))
    y = np.array([0, 11, 17])
    _, analytic = loss_and_grads(model, x, y, mode, 0.5, 99)
    numeric = numeric_gradients(model, x, y, mode, 99)
    assert max_relative_error(analytic, numeric) < 1e-3


def _memorize(epochs):
    x = np.tile(make_rng(8).uniform(-4e5, 4e5, 1024), (32, 1))
    model, history = train(x, np.full(32, 9), TrainConfig(epochs=epochs, seed=3))
    return x, model, history


def test_memorizes_single_example():
    x, model, history = _memorize(200)
    assert history["accuracy"][-1] == 1.0
    assert classify(model, x[0])[0] == 9
    assert history["loss"][-1] < history["loss"][0] / 50


@pytest.mark.xfail(strict=True, reason="200 single-batch Adam steps at lr 1e-3 bound the logit margin "
                                       "below the ~7.4 needed; see decisions ledger")
def test_memorization_loss_below_hundredth():
    assert _memorize(200)[2]["loss"][-1] < 0.01


def test_memorization_loss_with_doubled_step_budget():
    assert _memorize(400)[2]["loss"][-1] < 0.01


def test_training_is_deterministic():
    r = make_rng(9)
    x = r.uniform(-5e5, 5e5, (40, 64))
    y = r.integers(0, 18, 40)
    cfg = TrainConfig(epochs=5, seed=4)
    m1, h1 = train(x, y, cfg)
    m2, h2 = train(x, y, cfg)
    assert encode_model(m1) == encode_model(m2)
    assert h1 == h2
    m3, _ = train(x, y, TrainConfig(epochs=5, seed=5))
    assert encode_model(m3) != encode_model(m1)
    assert m1.metadata["n_examples"] == 40 and m1.metadata["train_config"]["seed"] == 4


def test_training_rejects_bad_input():
    with pytest.raises(ValueError):
        train(np.ones((3, 8)), [0, 1], TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train(np.ones((2, 8)), [0, 18], TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        TrainConfig(dropout_rate=1.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverging_training_raises():
    with pytest.raises(TrainingError):
        train(np.full((4, 8), 1e300), [0, 1, 2, 3], TrainConfig(epochs=1), norm_constant=1e-300)


def test_batch_classification_in_order():
    model = init_model(make_rng(14), 32)
    x = make_rng(15).normal(size=(6, 32)) * 4e5
    classes, probs = classify(model, x)
    assert np.array_equal(classes, np.argmax(probs, axis=1))
    for i in range(6):
        c, p = classify(model, x[i])
        assert c == classes[i] and np.allclose(p, probs[i])
    assert np.allclose(probs.sum(axis=1), 1, atol=1e-6)
    with pytest.raises(ValueError):
        classify(model, np.ones(31))


def test_mean_cross_entropy_matches_single():
    p = softmax(make_rng(10).normal(size=(5, 18)))
    y = np.array([0, 1, 2, 3, 4])
    assert mean_cross_entropy(p, y) == pytest.approx(np.mean([cross_entropy_loss(p[i], y[i]) for i in range(5)]))


# --- model file ---------------------------------------------------------------

def small_model():
    model = init_model(make_rng(11), 32, (16, 16), 18, norm_constant=2e6)
    model.metadata = {"note": "unit"}
    return model


def test_save_load_round_trip(tmp_path):
    model = small_model()
    save_model(model, tmp_path / "m.mlp")
    back = load_model(tmp_path / "m.mlp")
    assert back.norm_constant == 2e6 and back.metadata == {"note": "unit"}
    for (w1, b1), (w2, b2) in zip(model.layers, back.layers):
        assert np.array_equal(w1, w2) and np.array_equal(b1, b2)
    x = make_rng(12).normal(size=(3, 32)) * 1e5
    assert np.array_equal(predict_proba(model, x), predict_proba(back, x))


def test_corrupt_magic():
    data = bytearray(encode_model(small_model()))
    data[:4] = b"MLP2"
    with pytest.raises(ModelFormatError, match="magic"):
        decode_model(bytes(data))


def test_crc_detects_flipped_bit():
    data = bytearray(encode_model(small_model()))
    data[200] ^= 1
    with pytest.raises(ModelFormatError, match="CRC32"):
        decode_model(bytes(data))


def _reseal(body):
    return body + struct.pack("<I", zlib.crc32(body))


def test_mismatched_layer_dims_named():
    body = encode_model(small_model())[:-4]
    # layer 2 header sits after magic, count, layer 1 shape, weights and biases
    pos = 4 + 4 + 8 + 8 * 32 * 16 + 8 * 16
    assert struct.unpack_from("<II", body, pos) == (16, 16)
    bad = body[:pos] + struct.pack("<II", 15, 16) + body[pos + 8:]
    with pytest.raises(ModelFormatError, match="layer 2 declares 15 inputs but layer 1 has 16 outputs"):
        decode_model(_reseal(bad))


def test_truncated_and_trailing():
    body = encode_model(small_model())[:-4]
    with pytest.raises(ModelFormatError, match="truncated"):
        decode_model(_reseal(body[:100]))
    with pytest.raises(ModelFormatError, match="trailing"):
        decode_model(_reseal(body + b"\0"))


def test_non_finite_parameters_rejected():
    model = small_model()
    model.layers[1][0][0, 0] = np.nan
    with pytest.raises(ModelFormatError, match="layer 2"):
        decode_model(encode_model(model))


def test_metadata_is_json():
    model = small_model()
    data = encode_model(model)
    assert json.dumps({"note": "unit"}).encode() in data


# --- estimator API ------------------------------------------------------------

def test_estimator_params_and_clone():
    est = ChirpClassifier(epochs=3, seed=2)
    params = est.get_params()
    assert params["epochs"] == 3 and params["learning_rate"] == 1e-3
    assert clone(est).get_params() == params


def test_estimator_fit_predict():
    r = make_rng(13)
    x = r.uniform(-5e5, 5e5, (36, 16))
    y = np.arange(36) % 18
    est = ChirpClassifier(epochs=3).fit(x, y)
    assert est.classes_.tolist() == list(range(18))
    assert est.predict_proba(x).shape == (36, 18)
    assert np.array_equal(est.predict(x), classify(est.model_, x)[0])
    wrapped = ChirpClassifier.from_model(est.model_)
    assert wrapped.get_params()["epochs"] == 3
    assert np.array_equal(wrapped.predict(x), est.predict(x))
    assert 0 <= est.score(x, y) <= 1


def test_pipeline_from_raw_blocks():
    from sklearn.pipeline import make_pipeline

    from chirpsense.features import IFTransformer

    r = make_rng(16)
    X = r.normal(size=(36, 512)) + 1j * r.normal(size=(36, 512))
    y = np.arange(36) % 18
    pipe = make_pipeline(IFTransformer(), ChirpClassifier(epochs=2)).fit(X, y)
    direct = ChirpClassifier(epochs=2).fit(IFTransformer().transform(X), y)
    assert np.array_equal(pipe.predict(X), direct.predict(IFTransformer().transform(X)))
