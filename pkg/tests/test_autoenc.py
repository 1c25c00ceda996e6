import numpy as np
import pytest

from conftest import rel_err
from pse.autoenc import (
    ClassifierHead,
    MLPAutoencoder,
    TrainConfig,
    ae_forward,
    ae_init,
    ae_train,
    eval_accuracy,
    finetune_classify,
    head_init,
    load_autoencoder,
    load_classifier,
    reconstruction_loss_and_grads,
    save_autoencoder,
    save_classifier,
    softmax,
)


def toy_stack(n=20, side=4, seed=0):
    return np.random.default_rng(seed).random((n, side, side))


def params_of(m):
    return [m.w1, m.b1, m.w2, m.b2]


class TestInit:
    def test_same_seed_identical(self):
        a, b = ae_init(9, 3, seed=5), ae_init(9, 3, seed=5)
        for pa, pb in zip(params_of(a), params_of(b)):
            assert np.array_equal(pa, pb)

    def test_different_seed_differs(self):
        a, b = ae_init(9, 3, seed=5), ae_init(9, 3, seed=6)
        assert not np.array_equal(a.w1, b.w1)

    def test_biases_zero(self):
        m = ae_init(16, 4, seed=0)
        assert np.array_equal(m.b1, np.zeros(4))
        assert np.array_equal(m.b2, np.zeros(16))

    def test_fan_balanced_bound(self):
        m = ae_init(9, 2, seed=1)
        bound = np.sqrt(6.0 / (9 + 2))
        assert np.max(np.abs(m.w1)) <= bound
        assert np.max(np.abs(m.w2)) <= bound
        # the draw actually uses the range
        assert np.max(np.abs(m.w1)) > 0.5 * bound

    def test_shapes(self):
        m = ae_init(12, 5, seed=0)
        assert m.w1.shape == (12, 5)
        assert m.w2.shape == (5, 12)
        assert m.d == 12 and m.h == 5

    def test_invalid_dims(self):
        with pytest.raises(ValueError):
            ae_init(0, 3, seed=0)


class TestForward:
    def test_zero_parameters_give_half(self):
        m = MLPAutoencoder(
            w1=np.zeros((4, 2)), b1=np.zeros(2), w2=np.zeros((2, 4)), b2=np.zeros(4)
        )
        batch = np.random.default_rng(0).random((3, 2, 2))
        _, x_hat = ae_forward(m, batch)
        assert np.array_equal(x_hat, np.full((3, 2, 2), 0.5))

    def test_relu_kills_negative_preactivation(self):
        m = MLPAutoencoder(
            w1=-np.ones((4, 2)), b1=np.zeros(2), w2=np.zeros((2, 4)), b2=np.zeros(4)
        )
        z, _ = ae_forward(m, np.ones((1, 2, 2)))
        assert np.array_equal(z, np.zeros((1, 2)))

    def test_hand_computed_tiny_net(self):
        w1 = np.array([[0.5, -0.25], [0.1, 0.3], [-0.2, 0.4], [0.6, 0.2]])
        b1 = np.array([0.1, -0.05])
        w2 = np.array([[0.3, -0.1, 0.2, 0.5], [-0.4, 0.6, 0.1, -0.2]])
        b2 = np.array([0.05, -0.1, 0.0, 0.2])
        m = MLPAutoencoder(w1=w1, b1=b1, w2=w2, b2=b2)
        x = np.array([0.2, 0.8, 0.5, 0.1])
        z_ref = np.maximum(x @ w1 + b1, 0.0)
        xhat_ref = 1.0 / (1.0 + np.exp(-(z_ref @ w2 + b2)))
        z, x_hat = ae_forward(m, x.reshape(1, 2, 2))
        assert np.max(np.abs(z[0] - z_ref)) < 1e-12
        assert np.max(np.abs(x_hat[0].ravel() - xhat_ref)) < 1e-12

    def test_reconstruction_keeps_image_shape(self):
        m = ae_init(12, 3, seed=0)
        batch = np.random.default_rng(1).random((5, 3, 4))
        _, x_hat = ae_forward(m, batch)
        assert x_hat.shape == (5, 3, 4)
        assert np.all((x_hat > 0) & (x_hat < 1))

    def test_dimension_mismatch(self):
        m = ae_init(9, 2, seed=0)
        with pytest.raises(ValueError):
            ae_forward(m, np.zeros((2, 2, 2)))


class TestLossGradients:
    @pytest.mark.parametrize("loss_kind,sigma", [
        ("mse", 0.0), ("pse", 0.0), ("pse", 0.5), ("pse", 1.0),
    ])
    def test_finite_differences_all_parameters(self, loss_kind, sigma):
        rng = np.random.default_rng(42)
        m = ae_init(9, 2, seed=7)
        batch = rng.random((4, 3, 3))
        _, grads = reconstruction_loss_and_grads(m, batch, loss_kind, sigma)
        eps = 1e-5
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(m, name)
            flat = arr.ravel()
            g = grads[name].ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                up, _ = reconstruction_loss_and_grads(m, batch, loss_kind, sigma)
                flat[idx] = orig - eps
                dn, _ = reconstruction_loss_and_grads(m, batch, loss_kind, sigma)
                flat[idx] = orig
                fd = (up - dn) / (2 * eps)
                assert rel_err(g[idx], fd, floor=1e-6) < 1e-4, (name, idx)

    def test_mse_is_sigma_zero_pse_bitwise(self):
        m = ae_init(16, 4, seed=1)
        batch = toy_stack(n=6, side=4, seed=2)
        loss_a, grads_a = reconstruction_loss_and_grads(m, batch, "mse", 0.7)
        loss_b, grads_b = reconstruction_loss_and_grads(m, batch, "pse", 0.0)
        assert loss_a == loss_b
        for key in grads_a:
            assert np.array_equal(grads_a[key], grads_b[key])

    def test_loss_matches_metric_mean(self):
        from pse.metrics import pse

        m = ae_init(16, 4, seed=3)
        batch = toy_stack(n=5, side=4, seed=4)
        loss, _ = reconstruction_loss_and_grads(m, batch, "pse", 1.0)
        _, x_hat = ae_forward(m, batch)
        per_image = [pse(x_hat[i], batch[i], 1.0) for i in range(5)]
        assert rel_err(loss, float(np.mean(per_image))) < 1e-14


class TestTraining:
    def test_zero_epochs_unchanged(self):
        m = ae_init(16, 4, seed=0)
        trained, history = ae_train(m, toy_stack(), TrainConfig(epochs=0))
        assert history == []
        for pa, pb in zip(params_of(m), params_of(trained)):
            assert np.array_equal(pa, pb)

    def test_input_model_untouched(self):
        m = ae_init(16, 4, seed=0)
        before = [p.copy() for p in params_of(m)]
        ae_train(m, toy_stack(), TrainConfig(epochs=3))
        for pa, pb in zip(params_of(m), before):
            assert np.array_equal(pa, pb)

    @pytest.mark.parametrize("loss_kind", ["mse", "pse"])
    def test_loss_decreases(self, loss_kind):
        m = ae_init(16, 4, seed=1)
        cfg = TrainConfig(loss_kind=loss_kind, sigma=0.5, epochs=200,
                          batch_size=8, learning_rate=0.5, seed=3)
        _, history = ae_train(m, toy_stack(n=20), cfg)
        assert history[-1] < history[0]
        assert np.all(np.isfinite(history))

    def test_deterministic(self):
        m = ae_init(16, 4, seed=2)
        cfg = TrainConfig(epochs=5, seed=9)
        a, hist_a = ae_train(m, toy_stack(seed=5), cfg)
        b, hist_b = ae_train(m, toy_stack(seed=5), cfg)
        assert hist_a == hist_b
        for pa, pb in zip(params_of(a), params_of(b)):
            assert np.array_equal(pa, pb)

    def test_sigma_zero_trajectory_bitwise_equals_mse(self):
        m = ae_init(16, 4, seed=3)
        stack = toy_stack(seed=6)
        mse_model, mse_hist = ae_train(
            m, stack, TrainConfig(loss_kind="mse", epochs=8, seed=4)
        )
        pse_model, pse_hist = ae_train(
            m, stack, TrainConfig(loss_kind="pse", sigma=0.0, epochs=8, seed=4)
        )
        assert mse_hist == pse_hist
        for pa, pb in zip(params_of(mse_model), params_of(pse_model)):
            assert np.array_equal(pa, pb)

    def test_invalid_config(self):
        m = ae_init(16, 4, seed=0)
        with pytest.raises(ValueError):
            ae_train(m, toy_stack(), TrainConfig(learning_rate=0.0))
        with pytest.raises(ValueError):
            ae_train(m, toy_stack(), TrainConfig(loss_kind="l1"))

    def test_empty_data(self):
        m = ae_init(16, 4, seed=0)
        with pytest.raises(ValueError):
            ae_train(m, np.zeros((0, 4, 4)), TrainConfig())


def labeled_toy(n=30, seed=0):
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for i in range(n):
        label = i % 2
        img = np.full((3, 3), 0.1) + rng.uniform(0, 0.05, (3, 3))
        if label:
            img[1, 1] = 0.9
        images.append(img)
        labels.append(label)
    return list(zip(images, labels))


class TestFinetune:
    def test_zero_epochs_unchanged(self):
        m = ae_init(9, 3, seed=0)
        head = head_init(3, 2, seed=1)
        tm, th, history = finetune_classify(m, head, labeled_toy(), 0, 0.1, seed=2)
        assert history == []
        assert np.array_equal(tm.w1, m.w1)
        assert np.array_equal(th.wc, head.wc)

    def test_single_sample_overfit(self):
        m = ae_init(9, 3, seed=1)
        head = head_init(3, 2, seed=2)
        one = labeled_toy(n=1)
        _, _, history = finetune_classify(m, head, one, 500, 0.5, seed=3)
        assert history[-1][0] < 0.01

    def test_decoder_untouched(self):
        m = ae_init(9, 3, seed=2)
        head = head_init(3, 2, seed=3)
        tm, _, _ = finetune_classify(m, head, labeled_toy(), 20, 0.2, seed=4)
        assert np.array_equal(tm.w2, m.w2)
        assert np.array_equal(tm.b2, m.b2)
        assert not np.array_equal(tm.w1, m.w1)

    def test_freeze_encoder(self):
        m = ae_init(9, 3, seed=3)
        head = head_init(3, 2, seed=4)
        tm, th, _ = finetune_classify(
            m, head, labeled_toy(), 20, 0.2, seed=5, freeze_encoder=True
        )
        assert np.array_equal(tm.w1, m.w1)
        assert np.array_equal(tm.b1, m.b1)
        assert not np.array_equal(th.wc, head.wc)

    def test_train_accuracy_reaches_one_on_separable_task(self):
        m = ae_init(9, 3, seed=4)
        head = head_init(3, 2, seed=5)
        _, _, history = finetune_classify(m, head, labeled_toy(), 100, 0.5, seed=6)
        assert history[-1][1] == 1.0

    def test_bad_labels(self):
        m = ae_init(9, 3, seed=5)
        head = head_init(3, 2, seed=6)
        bad = [(np.zeros((3, 3)), 7)]
        with pytest.raises(ValueError, match="labels"):
            finetune_classify(m, head, bad, 1, 0.1, seed=0)

    def test_softmax_normalized(self):
        logits = np.random.default_rng(0).standard_normal((5, 10)) * 30
        probs = softmax(logits)
        assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-9
        assert np.all(probs >= 0)


class TestEvalAccuracy:
    def test_perfect_predictions(self):
        m = ae_init(9, 3, seed=6)
        head = head_init(3, 2, seed=7)
        data = labeled_toy(n=40, seed=1)
        tm, th, _ = finetune_classify(m, head, data, 100, 0.5, seed=8)
        assert eval_accuracy(tm, th, data) == 1.0

    def test_random_head_near_chance(self):
        # balanced 10-class set, untrained heads: accuracy hovers at 0.1
        rng = np.random.default_rng(9)
        data = [(rng.random((4, 4)), i % 10) for i in range(200)]
        accs = []
        for seed in range(5):
            m = ae_init(16, 8, seed=seed)
            head = head_init(8, 10, seed=100 + seed)
            accs.append(eval_accuracy(m, head, data))
        assert abs(float(np.mean(accs)) - 0.1) < 0.08

    def test_deterministic(self):
        m = ae_init(9, 3, seed=7)
        head = head_init(3, 2, seed=8)
        data = labeled_toy(n=10)
        assert eval_accuracy(m, head, data) == eval_accuracy(m, head, data)

    def test_argmax_tie_goes_to_lowest_index(self):
        m = MLPAutoencoder(
            w1=np.zeros((4, 2)), b1=np.zeros(2), w2=np.zeros((2, 4)), b2=np.zeros(4)
        )
        head = ClassifierHead(wc=np.zeros((2, 3)), bc=np.zeros(3))
        # all logits equal; predictions are class 0 everywhere
        data = [(np.ones((2, 2)), 0), (np.ones((2, 2)), 1)]
        assert eval_accuracy(m, head, data) == 0.5

    def test_empty_test_set(self):
        m = ae_init(9, 3, seed=8)
        head = head_init(3, 2, seed=9)
        with pytest.raises(ValueError):
            eval_accuracy(m, head, [])


class TestCheckpoints:
    def test_autoencoder_round_trip(self, tmp_path):
        m = ae_init(12, 4, seed=10)
        path = tmp_path / "ae.bin"
        save_autoencoder(path, m)
        back = load_autoencoder(path)
        for pa, pb in zip(params_of(m), params_of(back)):
            assert np.array_equal(pa, pb)

    def test_save_is_byte_stable(self, tmp_path):
        m = ae_init(12, 4, seed=11)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_autoencoder(a, m)
        save_autoencoder(b, m)
        assert a.read_bytes() == b.read_bytes()

    def test_classifier_round_trip(self, tmp_path):
        m = ae_init(12, 4, seed=12)
        head = head_init(4, 3, seed=13)
        path = tmp_path / "clf.bin"
        save_classifier(path, m, head)
        enc, back_head = load_classifier(path)
        assert np.array_equal(enc.w1, m.w1)
        assert np.array_equal(enc.b1, m.b1)
        assert np.array_equal(back_head.wc, head.wc)
        assert np.array_equal(back_head.bc, head.bc)

    def test_kind_mismatch(self, tmp_path):
        m = ae_init(12, 4, seed=14)
        ae_path = tmp_path / "ae.bin"
        save_autoencoder(ae_path, m)
        with pytest.raises(ValueError, match="classifier"):
            load_classifier(ae_path)
        clf_path = tmp_path / "clf.bin"
        save_classifier(clf_path, m, head_init(4, 2, seed=15))
        with pytest.raises(ValueError, match="autoencoder"):
            load_autoencoder(clf_path)

    def test_foreign_file_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(ValueError, match="checkpoint"):
            load_autoencoder(path)

    def test_truncated_rejected(self, tmp_path):
        m = ae_init(12, 4, seed=16)
        path = tmp_path / "ae.bin"
        save_autoencoder(path, m)
        clipped = tmp_path / "clipped.bin"
        clipped.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_autoencoder(clipped)
