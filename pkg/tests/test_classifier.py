import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavesel.classifier import (
    ArchConfig,
    ClassifierModel,
    TrainConfig,
    baseline_logistic,
    evaluate_accuracy,
    forward,
    gradient_check,
    handcrafted_features,
    init_model,
    load_model,
    loss_and_grads,
    predict,
    predict_proba,
    save_model,
    softmax,
    train,
)
from wavesel.dataset import Sample
from wavesel.errors import ChecksumError, TrainingDivergedError

SMALL = ArchConfig(height=5, width=12, conv1=4, conv2=6)


def make_samples(images, labels):
    return [Sample(np.asarray(im, dtype=np.float32), 0.0, 4, int(y), 0.0, 0.0, "EPA", i)
            for i, (im, y) in enumerate(zip(images, labels))]


def separable_set(n=64, seed=0):
    rng = np.random.default_rng(seed)
    level = rng.uniform(0, 1, n)
    images = level[:, None, None] + 0.05 * rng.standard_normal((n, SMALL.height, SMALL.width))
    labels = (images.mean(axis=(1, 2)) > 0.5).astype(int)
    return make_samples(images, labels)


class TestModel:
    def test_init_deterministic(self):
        assert init_model(SMALL, seed=3) == init_model(SMALL, seed=3)
        assert init_model(SMALL, seed=3) != init_model(SMALL, seed=4)

    def test_stock_output_shape(self):
        model = init_model(ArchConfig())
        p = predict_proba(model, np.zeros((3, 10, 135), dtype=np.float32))
        assert p.shape == (3, 2) and p.dtype == np.float32

    def test_zero_init_uniform(self):
        model = init_model(SMALL, zero=True)
        p = predict_proba(model, np.random.default_rng(0).random((2, 5, 12)))
        np.testing.assert_allclose(p, 0.5)

    def test_predict(self):
        model = init_model(SMALL, seed=1)
        img = np.random.default_rng(1).random((5, 12))
        label, prob = predict(model, img)
        p = predict_proba(model, img[None])[0]
        assert label == int(np.argmax(p)) and prob == pytest.approx(p.max())
        assert predict(model, img) == (label, prob)
        with pytest.raises(ValueError):
            predict(model, np.zeros((5, 11)))

    def test_without_residual(self):
        arch = ArchConfig(height=5, width=12, conv1=4, conv2=6, residual=False)
        model = init_model(arch)
        assert "res1.w" not in model.params
        assert predict_proba(model, np.zeros((1, 5, 12))).shape == (1, 2)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_softmax_properties(seed, scale):
    z = np.random.default_rng(seed).standard_normal((4, 2)) * 50
    p = softmax(z)
    assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-6)
    assert np.array_equal(np.argmax(softmax(z * scale), axis=1), np.argmax(p, axis=1))


class TestGradients:
    def test_fresh_model_passes(self):
        model = init_model(SMALL, seed=2)
        img = np.random.default_rng(2).random((5, 12))
        rep = gradient_check(model, img, 1, n_weights=60)
        assert rep.checked >= 50
        assert rep.passed, rep

    def test_no_residual_passes(self):
        model = init_model(ArchConfig(height=4, width=6, conv1=3, conv2=4, residual=False), seed=5)
        assert gradient_check(model, np.random.default_rng(5).random((4, 6)), 0).passed

    def test_every_weight_with_kinks_skipped(self):
        arch = ArchConfig(height=6, width=12, conv1=4, conv2=6, residual=False)
        model = init_model(arch, seed=2)
        rep = gradient_check(model, np.random.default_rng(2).random((6, 12)), 1, n_weights=model.num_weights())
        assert rep.passed and rep.skipped_kinks > 0
        assert rep.checked + rep.skipped_kinks == model.num_weights()
        assert rep.max_rel_error < 1e-6

    def test_sign_flip_fails(self):
        model = init_model(SMALL, seed=2)
        img = np.random.default_rng(2).random((5, 12))
        x, y = img[None], np.array([1])

        def flipped(m):
            return {k: -g for k, g in loss_and_grads(m, x, y)[1].items()}

        assert not gradient_check(model, img, 1, grad_fn=flipped).passed

    def test_zero_image_finite(self):
        model = init_model(SMALL, seed=0)
        loss, grads = loss_and_grads(model, np.zeros((1, 5, 12), dtype=np.float32), np.array([0]))
        assert np.isfinite(loss)
        assert all(np.all(np.isfinite(g)) for g in grads.values())

    def test_forward_cache_consistent(self):
        model = init_model(SMALL, seed=0)
        x = np.random.default_rng(0).random((2, 5, 12)).astype(np.float32)
        logits, _ = forward(model, x, keep_cache=True)
        np.testing.assert_allclose(softmax(logits), predict_proba(model, x), rtol=1e-6)


class TestTraining:
    def test_memorize_single_sample(self):
        img = np.random.default_rng(0).random((5, 12))
        samples = make_samples([img] * 8, [1] * 8)
        _, hist = train(init_model(SMALL, seed=0), samples, TrainConfig(epochs=50, batch_size=8, lr=1e-2))
        assert min(hist.loss) < 0.01

    def test_separable_set(self):
        samples = separable_set()
        model, hist = train(init_model(SMALL, seed=0), samples, TrainConfig(epochs=60, batch_size=16, lr=1e-2))
        acc, conf = evaluate_accuracy(model, samples)
        assert acc == 1.0
        assert conf.sum() == len(samples)

    def test_deterministic(self):
        samples = separable_set(24)
        cfg = TrainConfig(epochs=2, batch_size=8, seed=4)
        a, ha = train(init_model(SMALL, seed=1), samples, cfg)
        b, hb = train(init_model(SMALL, seed=1), samples, cfg)
        assert a == b and ha.loss == hb.loss

    def test_does_not_mutate_input(self):
        m0 = init_model(SMALL, seed=1)
        before = m0.copy()
        train(m0, separable_set(8), TrainConfig(epochs=1))
        assert m0 == before

    def test_validation_split(self):
        _, hist = train(init_model(SMALL), separable_set(20), TrainConfig(epochs=2, validation_fraction=0.25))
        assert len(hist.val_accuracy) == 2

    def test_diverged(self):
        model = init_model(SMALL, seed=0)
        model.params["fc.w"][:] = np.nan
        with pytest.raises(TrainingDivergedError):
            train(model, separable_set(8), TrainConfig(epochs=1))

    def test_empty(self):
        with pytest.raises(ValueError):
            train(init_model(SMALL), [])


class TestEvaluation:
    def test_oracle_and_constant(self):
        samples = separable_set(40)
        labels = np.array([s.label for s in samples])
        acc, _ = evaluate_accuracy(lambda x: labels, samples)
        assert acc == 1.0
        acc0, conf = evaluate_accuracy(lambda x: np.zeros(len(x), dtype=int), samples)
        assert acc0 == pytest.approx(np.mean(labels == 0))
        assert conf[:, 1].sum() == 0


class TestBaseline:
    def test_features_finite(self):
        imgs = np.random.default_rng(0).random((5, 5, 12))
        imgs[0] = 0
        f = handcrafted_features(imgs)
        assert f.shape == (5, 4) and np.all(np.isfinite(f))

    def test_learns_separable(self):
        samples = separable_set(60)
        # make the label depend on the SNR pixel so the handcrafted features can see it
        for s in samples:
            s.image[-1, 0] = 0.9 if s.label else 0.1
        clf = baseline_logistic(samples)
        assert evaluate_accuracy(clf, samples)[0] == 1.0

    def test_deterministic(self):
        samples = separable_set(30)
        a, b = baseline_logistic(samples, seed=2), baseline_logistic(samples, seed=2)
        assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


class TestModelFile:
    def test_round_trip(self, tmp_path):
        model = init_model(SMALL, seed=9)
        save_model(model, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        assert isinstance(back, ClassifierModel) and back == model and back.arch == SMALL

    def test_corrupt(self, tmp_path):
        save_model(init_model(SMALL), tmp_path / "m.bin")
        buf = bytearray((tmp_path / "m.bin").read_bytes())
        buf[-10] ^= 0xFF
        (tmp_path / "m.bin").write_bytes(bytes(buf))
        with pytest.raises(ChecksumError):
            load_model(tmp_path / "m.bin")
