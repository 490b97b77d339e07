import math

import numpy as np
import pytest

from streamladder import cnn
from streamladder.errors import ChannelMismatch, EmptyDataset, ShapeMismatch, SingleClassDataset
from streamladder.window import Normalization

IDENTITY_NORM = Normalization(np.zeros(7), np.ones(7))


def mini_bundle(rng, channels=(3, 4, 2), kernel=3, slope=0.01, scale=0.5):
    """Small random bundle for oracle checks; input has channels[0] channels."""
    layers = []
    chain = list(channels) + [1]
    for cin, cout in zip(chain, chain[1:]):
        layers.append(
            cnn.ConvLayer(rng.normal(size=(cout, cin, kernel)) * scale, rng.normal(size=cout) * 0.1)
        )
    return cnn.WeightBundle(layers, slope, cnn.LAYOUT_FRAMES, IDENTITY_NORM, zone_id=0)


def naive_forward(bundle, x):
    """Independent plain-loop forward trace: pad, cross-correlate, pool, sigmoid."""
    a = np.asarray(x, dtype=np.float64)
    for li, layer in enumerate(bundle.layers):
        k = layer.kernel_size
        pad = (k - 1) // 2
        padded = np.zeros((a.shape[0], a.shape[1] + 2 * pad))
        padded[:, pad : pad + a.shape[1]] = a
        out = np.zeros((layer.out_channels, a.shape[1]))
        for o in range(layer.out_channels):
            for i in range(a.shape[1]):
                acc = layer.bias[o]
                for c in range(layer.in_channels):
                    for j in range(k):
                        acc += layer.weights[o, c, j] * padded[c, i + j]
                out[o, i] = acc
        if li < len(bundle.layers) - 1:
            out = np.where(out >= 0, out, bundle.leaky_slope * out)
        a = out
    m = a.mean()
    return 1.0 / (1.0 + math.exp(-m))


class TestConv1d:
    def test_hand_computed_edge_kernel(self):
        layer = cnn.ConvLayer(np.array([[[1.0, 0.0, -1.0]]]), np.array([0.0]))
        out = cnn.conv1d_forward(np.array([[1.0, 2.0, 3.0]]), layer)
        assert np.array_equal(out, [[-2.0, -2.0, 2.0]])

    def test_unit_impulse_identity(self, rng):
        layer = cnn.ConvLayer(np.array([[[0.0, 1.0, 0.0]]]), np.array([0.0]))
        x = rng.normal(size=(1, 23))
        assert np.allclose(cnn.conv1d_forward(x, layer), x)

    def test_zero_weights_give_bias(self, rng):
        layer = cnn.ConvLayer(np.zeros((2, 3, 3)), np.array([1.5, -0.5]))
        out = cnn.conv1d_forward(rng.normal(size=(3, 9)), layer)
        assert np.allclose(out[0], 1.5) and np.allclose(out[1], -0.5)

    def test_channel_mismatch(self, rng):
        layer = cnn.ConvLayer(np.zeros((2, 3, 3)), np.zeros(2))
        with pytest.raises(ChannelMismatch):
            cnn.conv1d_forward(rng.normal(size=(4, 9)), layer)

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeMismatch, match="odd"):
            cnn.ConvLayer(np.zeros((1, 1, 4)), np.zeros(1))

    def test_length_preserved_on_random_shapes(self, rng):
        for _ in range(10):
            cin, cout = rng.integers(1, 6, 2)
            k = int(rng.choice([1, 3, 5]))
            length = int(rng.integers(k, 30))
            layer = cnn.ConvLayer(rng.normal(size=(cout, cin, k)), rng.normal(size=cout))
            out = cnn.conv1d_forward(rng.normal(size=(cin, length)), layer)
            assert out.shape == (cout, length)


class TestLeakyRelu:
    @pytest.mark.parametrize("x,slope,expected", [(2.0, 0.01, 2.0), (-1.0, 0.01, -0.01), (0.0, 0.3, 0.0)])
    def test_scalar_cases(self, x, slope, expected):
        assert cnn.leaky_relu(np.array([x]), slope)[0] == pytest.approx(expected)


class TestFlatten:
    def _tensor(self):
        return np.arange(60 * 7 * 17, dtype=float).reshape(60, 7, 17)

    def test_frames_as_channels_index_map(self):
        t = np.zeros((60, 7, 17))
        t[3, 2, 5] = 42.0
        flat = cnn.flatten_input(t, cnn.LAYOUT_FRAMES)
        assert flat.shape == (60, 119)
        assert flat[3, 2 * 17 + 5] == 42.0

    def test_zero_tensor(self):
        assert not cnn.flatten_input(np.zeros((60, 7, 17))).any()

    def test_layouts_are_transposes(self):
        t = self._tensor()
        a = cnn.flatten_input(t, cnn.LAYOUT_FRAMES)
        b = cnn.flatten_input(t, cnn.LAYOUT_FEATURES)
        assert np.array_equal(a.T, b)

    def test_bad_shape(self):
        with pytest.raises(ShapeMismatch):
            cnn.flatten_input(np.zeros((59, 7, 17)))


class TestForward:
    def test_all_zero_weights_gives_half(self):
        layers = [cnn.ConvLayer(np.zeros((4, 60, 3)), np.zeros(4)), cnn.ConvLayer(np.zeros((1, 4, 3)), np.zeros(1))]
        bundle = cnn.WeightBundle(layers, 0.01, cnn.LAYOUT_FRAMES, IDENTITY_NORM, 0)
        assert cnn.forward(bundle, np.random.default_rng(0).normal(size=(60, 7, 17))) == 0.5

    def test_output_in_open_interval(self, rng):
        for seed in range(5):
            bundle = mini_bundle(np.random.default_rng(seed))
            p = cnn.forward_flat(bundle, rng.normal(size=(3, 11)))
            assert 0.0 < p < 1.0

    def test_matches_naive_trace_on_miniatures(self, rng):
        for seed in range(8):
            r = np.random.default_rng(seed)
            bundle = mini_bundle(r, channels=(2, 3), kernel=3)
            x = r.normal(size=(2, 4))
            assert cnn.forward_flat(bundle, x) == pytest.approx(naive_forward(bundle, x), abs=1e-12)

    def test_full_geometry_matches_naive(self, rng):
        bundle = cnn.init_bundle(rng, 0, IDENTITY_NORM, cnn.TrainConfig(hidden_channels=(8,)))
        tensor = rng.normal(size=(60, 7, 17))
        flat = cnn.flatten_input(tensor, bundle.layout)
        assert cnn.forward(bundle, tensor) == pytest.approx(naive_forward(bundle, flat), abs=1e-10)


class TestPredict:
    def _const_bundle(self, logit):
        # zero conv weights, final bias fixes the pooled logit exactly
        layers = [cnn.ConvLayer(np.zeros((2, 60, 3)), np.zeros(2)), cnn.ConvLayer(np.zeros((1, 2, 3)), np.array([logit]))]
        return cnn.WeightBundle(layers, 0.01, cnn.LAYOUT_FRAMES, IDENTITY_NORM, 0)

    def test_threshold_rule(self, rng):
        t = rng.normal(size=(60, 7, 17))
        assert cnn.predict(self._const_bundle(np.log(0.7 / 0.3)), t) == 1  # forward = 0.7
        assert cnn.predict(self._const_bundle(np.log(0.3 / 0.7)), t) == 0  # forward = 0.3
        assert cnn.predict(self._const_bundle(0.0), t) == 1  # forward = 0.5 exactly: tie -> 1

    def test_flip_exactly_at_threshold(self, rng):
        t = rng.normal(size=(60, 7, 17))
        bundle = self._const_bundle(np.log(0.6 / 0.4))
        p = cnn.forward(bundle, t)
        bundle.threshold = p + 1e-9
        assert cnn.predict(bundle, t) == 0
        bundle.threshold = p - 1e-9
        assert cnn.predict(bundle, t) == 1


class TestBCE:
    def test_analytic_values(self):
        assert cnn.bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-12)
        assert cnn.bce_loss(0.5, 0) == pytest.approx(math.log(2), abs=1e-12)
        assert cnn.bce_loss(1.0, 1) == pytest.approx(1e-7, rel=1e-3)


class TestBackward:
    def test_final_bias_gradient_sums_to_p_minus_y(self, rng):
        bundle = mini_bundle(rng)
        x = rng.normal(size=(1, 3, 9))
        p = cnn.forward_flat(bundle, x[0])
        grads = cnn.backward(bundle, x, np.array([1.0]))
        assert grads.biases[-1].sum() == pytest.approx(p - 1.0, abs=1e-12)

    def test_zero_input_batch(self, rng):
        bundle = mini_bundle(rng)
        grads = cnn.backward(bundle, np.zeros((2, 3, 9)), np.array([1.0, 0.0]))
        for gw in grads.weights:
            assert np.allclose(gw, 0.0)
        assert any(np.abs(gb).sum() > 0 for gb in grads.biases)

    def test_duplicate_example_mean_invariance(self, rng):
        bundle = mini_bundle(rng)
        x = rng.normal(size=(1, 3, 9))
        once = cnn.backward(bundle, x, np.array([1.0]))
        twice = cnn.backward(bundle, np.repeat(x, 2, axis=0), np.array([1.0, 1.0]))
        for a, b in zip(once.weights, twice.weights):
            assert np.allclose(a, b, atol=1e-14)
        assert once.mean_loss == pytest.approx(twice.mean_loss)

    def test_empty_batch_rejected(self, rng):
        with pytest.raises(EmptyDataset):
            cnn.backward(mini_bundle(rng), np.zeros((0, 3, 9)), np.zeros(0))


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        hyper = cnn.AdamHyper(learning_rate=1e-3)
        params = [np.array([1.0, 1.0])]
        grads = [np.array([0.7, -0.2])]
        state = cnn.AdamState.for_params(params)
        cnn.adam_step(params, grads, state, hyper)
        expected = 1.0 - 1e-3 * np.sign(grads[0])
        assert np.allclose(params[0], expected, atol=1e-6)

    def test_zero_gradient_keeps_weights(self):
        params = [np.array([3.0])]
        state = cnn.AdamState.for_params(params)
        for _ in range(5):
            cnn.adam_step(params, [np.zeros(1)], state, cnn.AdamHyper())
        assert params[0][0] == 3.0

    def test_scale_invariance_at_first_step(self):
        hyper = cnn.AdamHyper(learning_rate=1e-3)
        p1, p2 = [np.array([0.0])], [np.array([0.0])]
        cnn.adam_step(p1, [np.array([0.3])], cnn.AdamState.for_params(p1), hyper)
        cnn.adam_step(p2, [np.array([0.6])], cnn.AdamState.for_params(p2), hyper)
        assert abs(p1[0][0]) == pytest.approx(abs(p2[0][0]), rel=1e-4)


class TestGradCheck:
    def test_ten_random_miniatures_below_tolerance(self):
        for seed in range(10):
            r = np.random.default_rng(seed)
            channels = tuple(int(c) for c in r.integers(2, 9, size=int(r.integers(1, 3))))
            bundle = mini_bundle(r, channels=channels)
            x = r.normal(size=(channels[0], int(r.integers(4, 12))))
            label = int(r.integers(0, 2))
            assert cnn.grad_check(bundle, x, label) < 1e-4

    def test_linear_network_is_machine_precision(self, rng):
        bundle = mini_bundle(rng, channels=(3, 4), slope=1.0)
        x = rng.normal(size=(3, 8))
        assert cnn.grad_check(bundle, x, 0) < 1e-7


class TestTrain:
    def _dataset(self, rng, n=30):
        windows = rng.normal(size=(n, 60, 7, 17))
        labels = (windows.mean(axis=(1, 2, 3)) > 0).astype(float)
        if labels.min() == labels.max():  # force both classes
            labels[0] = 1 - labels[0]
        return windows, labels

    def test_zero_iterations_returns_initial(self, rng):
        windows, labels = self._dataset(rng)
        cfg = cnn.TrainConfig(iterations=0, hidden_channels=(4,))
        bundle, history = cnn.train(windows, labels, zone_id=1, normalization=IDENTITY_NORM, config=cfg, seed=9)
        assert history == []
        fresh = cnn.init_bundle(np.random.default_rng(np.random.SeedSequence(9)), 1, IDENTITY_NORM, cfg)
        for a, b in zip(bundle.layers, fresh.layers):
            assert np.array_equal(a.weights, b.weights)

    def test_same_seed_identical_bundles(self, rng):
        windows, labels = self._dataset(rng)
        cfg = cnn.TrainConfig(iterations=12, hidden_channels=(4,), batch_size=8)
        runs = [
            cnn.train(windows, labels, zone_id=0, normalization=IDENTITY_NORM, config=cfg, seed=5)
            for _ in range(2)
        ]
        for a, b in zip(runs[0][0].layers, runs[1][0].layers):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)
        assert runs[0][1] == runs[1][1]

    def test_single_class_rejected(self, rng):
        windows = rng.normal(size=(6, 60, 7, 17))
        with pytest.raises(SingleClassDataset):
            cnn.train(windows, np.ones(6), zone_id=0, normalization=IDENTITY_NORM)

    def test_empty_rejected(self):
        with pytest.raises(EmptyDataset):
            cnn.train(np.zeros((0, 60, 7, 17)), np.zeros(0), zone_id=0, normalization=IDENTITY_NORM)

    def test_learns_separable_toy_problem(self, rng):
        # mean-shift in one feature channel separates the classes
        n = 60
        labels = (np.arange(n) % 2).astype(float)
        windows = rng.normal(size=(n, 60, 7, 17)) * 0.1
        windows[labels == 1, :, 3, :] += 1.0
        cfg = cnn.TrainConfig(iterations=150, hidden_channels=(4,), batch_size=16, val_fraction=0.2)
        bundle, history = cnn.train(windows, labels, zone_id=0, normalization=IDENTITY_NORM, config=cfg, seed=3)
        preds = [cnn.predict(bundle, w) for w in windows]
        assert np.mean(np.array(preds) == labels) >= 0.95
        # smoothed early loss is non-increasing-ish (sanity, windows of 10)
        smooth = [np.mean(history[i : i + 10]) for i in range(0, 100, 10)]
        assert smooth[-1] <= smooth[0]
