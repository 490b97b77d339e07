"""Per-zone binary resolution classifier.

A small stack of 1-D convolutions with LeakyReLU activations, a single-channel
final convolution, global average pooling and a sigmoid. Forward, analytic
backprop, Adam and a finite-difference gradient check are all implemented here
on plain float64 numpy arrays; inference must stay cheap enough for a
per-scene decision on one CPU core.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ChannelMismatch, EmptyDataset, ShapeMismatch, SingleClassDataset
from .window import N_FEATURES, TARGET_POSITIONS, WINDOW_FRAMES, Normalization, standardize

#: Orientation of the flattened model input.
LAYOUT_FRAMES = "frames-as-channels"  # (60, 119): channels are frames
LAYOUT_FEATURES = "features-as-channels"  # (119, 60): channels are feature*position

BCE_EPS = 1e-7
FLAT_POSITIONS = N_FEATURES * TARGET_POSITIONS  # 119


@dataclass
class ConvLayer:
    """One 1-D convolution: weights (out, in, kernel), bias (out,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 3:
            raise ShapeMismatch(f"conv weights must be 3-D, got shape {self.weights.shape}")
        if self.kernel_size % 2 != 1:
            raise ShapeMismatch(f"kernel size must be odd, got {self.kernel_size}")
        if self.bias.shape != (self.out_channels,):
            raise ShapeMismatch(f"bias shape {self.bias.shape} != ({self.out_channels},)")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


@dataclass
class WeightBundle:
    """Everything one zone's classifier needs at inference time."""

    layers: list[ConvLayer]
    leaky_slope: float
    layout: str
    normalization: Normalization
    zone_id: int
    threshold: float = 0.5

    def validate(self, *, geometry: bool = True) -> None:
        if not self.layers:
            raise ShapeMismatch("bundle has no layers")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur.in_channels != prev.out_channels:
                raise ShapeMismatch(
                    f"layer chain mismatch: {prev.out_channels} out vs {cur.in_channels} in"
                )
        if self.layers[-1].out_channels != 1:
            raise ShapeMismatch(f"final layer must have 1 output channel, got {self.layers[-1].out_channels}")
        if self.layout not in (LAYOUT_FRAMES, LAYOUT_FEATURES):
            raise ShapeMismatch(f"unknown layout {self.layout!r}")
        if geometry:
            expected = WINDOW_FRAMES if self.layout == LAYOUT_FRAMES else FLAT_POSITIONS
            if self.layers[0].in_channels != expected:
                raise ShapeMismatch(
                    f"first layer expects {self.layers[0].in_channels} channels, "
                    f"layout {self.layout} requires {expected}"
                )
        if not 0 < self.threshold < 1:
            raise ShapeMismatch(f"threshold must lie in (0, 1), got {self.threshold}")

    def clone(self) -> "WeightBundle":
        return replace(self, layers=[ConvLayer(l.weights.copy(), l.bias.copy()) for l in self.layers])


def flatten_input(tensor: np.ndarray, layout: str = LAYOUT_FRAMES) -> np.ndarray:
    """Flatten a (60, 7, 17) tensor into the conv input matrix for `layout`."""
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.shape != (WINDOW_FRAMES, N_FEATURES, TARGET_POSITIONS):
        raise ShapeMismatch(
            f"expected ({WINDOW_FRAMES}, {N_FEATURES}, {TARGET_POSITIONS}) tensor, got {tensor.shape}"
        )
    flat = tensor.reshape(WINDOW_FRAMES, FLAT_POSITIONS)
    if layout == LAYOUT_FRAMES:
        return flat
    if layout == LAYOUT_FEATURES:
        return flat.T.copy()
    raise ShapeMismatch(f"unknown layout {layout!r}")


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, slope * x)


def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    """(C, B, L) -> (C*kernel, B*L) with per-sample symmetric zero padding.

    Row (c*kernel + j), column (b*L + i) holds padded_x[c, b, i + j], so one
    GEMM against weights reshaped to (out, in*kernel) computes the whole
    batch's cross-correlation.
    """
    pad = (kernel - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    c, b, length = x.shape
    cols = np.stack([xp[:, :, j : j + length] for j in range(kernel)], axis=1)  # (C, k, B, L)
    return cols.reshape(c * kernel, b * length)


def conv1d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Cross-correlation with stride 1 and same-length zero padding.

    out[o][i] = bias[o] + sum_c sum_j w[o][c][j] * padded_in[c][i + j]
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"conv input must be 2-D (channels, length), got shape {x.shape}")
    if x.shape[0] != layer.in_channels:
        raise ChannelMismatch(f"input has {x.shape[0]} channels, layer expects {layer.in_channels}")
    out, _ = _conv_cbl(x[:, None, :], layer)
    return out[:, 0, :]


def _conv_cbl(x: np.ndarray, layer: ConvLayer) -> tuple[np.ndarray, np.ndarray]:
    """Batched conv in (channels, batch, length) layout; returns (out, cols)."""
    if x.shape[0] != layer.in_channels:
        raise ChannelMismatch(f"input has {x.shape[0]} channels, layer expects {layer.in_channels}")
    _, b, length = x.shape
    cols = _im2col(x, layer.kernel_size)
    w2 = layer.weights.reshape(layer.out_channels, -1)
    out = w2 @ cols + layer.bias[:, None]
    return out.reshape(layer.out_channels, b, length), cols


def _sigmoid(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _forward_batch(bundle: WeightBundle, flats: np.ndarray, keep_caches: bool = False):
    """Probabilities for a batch of flattened inputs (B, C, L)."""
    flats = np.asarray(flats, dtype=np.float64)
    a = np.ascontiguousarray(flats.transpose(1, 0, 2))  # (C, B, L)
    caches = []
    last = len(bundle.layers) - 1
    for i, layer in enumerate(bundle.layers):
        z, cols = _conv_cbl(a, layer)
        if keep_caches:
            caches.append((cols, z))
        a = leaky_relu(z, bundle.leaky_slope) if i < last else z
    m = a.mean(axis=2)[0]  # global average pool over the single output channel
    p = _sigmoid(m)
    return (p, caches) if keep_caches else p


def forward(bundle: WeightBundle, tensor: np.ndarray) -> float:
    """Probability that the zone's higher candidate resolution is optimal."""
    return forward_flat(bundle, flatten_input(tensor, bundle.layout))


def forward_flat(bundle: WeightBundle, flat: np.ndarray) -> float:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.ndim != 2:
        raise ShapeMismatch(f"flattened input must be 2-D, got shape {flat.shape}")
    return float(_forward_batch(bundle, flat[None]))


def predict(bundle: WeightBundle, tensor: np.ndarray) -> int:
    """1 for the higher candidate, 0 for the lower (ties go to 1)."""
    return int(forward(bundle, tensor) >= bundle.threshold)


def bce_loss(prediction: float, label: int) -> float:
    """Binary cross-entropy with predictions clamped to [eps, 1 - eps]."""
    p = min(max(float(prediction), BCE_EPS), 1.0 - BCE_EPS)
    y = float(label)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


@dataclass
class Gradients:
    """Per-layer gradients, shapes matching the bundle's weights and biases."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    mean_loss: float


def backward(bundle: WeightBundle, flats: np.ndarray, labels: np.ndarray) -> Gradients:
    """Analytic gradients of mean BCE over the batch.

    `flats` is (B, C, L) of flattened inputs, `labels` a (B,) 0/1 vector.
    """
    flats = np.asarray(flats, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if flats.ndim != 3 or labels.ndim != 1 or flats.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"batch shapes {flats.shape} / {labels.shape} inconsistent")
    if flats.shape[0] == 0:
        raise EmptyDataset("empty training batch")

    batch = flats.shape[0]
    p, caches = _forward_batch(bundle, flats, keep_caches=True)
    losses = -(labels * np.log(np.clip(p, BCE_EPS, None)) + (1 - labels) * np.log(np.clip(1 - p, BCE_EPS, None)))
    mean_loss = float(losses.mean())

    length = flats.shape[2]
    # d(mean loss)/d(pool output m) = (p - y)/B; spread uniformly over positions.
    g = np.broadcast_to(((p - labels) / (batch * length))[None, :, None], (1, batch, length)).copy()

    grads_w: list[np.ndarray] = [None] * len(bundle.layers)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(bundle.layers)  # type: ignore[list-item]
    last = len(bundle.layers) - 1
    for i in range(last, -1, -1):
        layer = bundle.layers[i]
        cols, z = caches[i]
        if i < last:
            g = g * np.where(z >= 0, 1.0, bundle.leaky_slope)
        g2 = g.reshape(layer.out_channels, batch * length)
        grads_w[i] = (g2 @ cols.T).reshape(layer.weights.shape)
        grads_b[i] = g2.sum(axis=1)
        if i > 0:
            w2 = layer.weights.reshape(layer.out_channels, -1)
            dcols = (w2.T @ g2).reshape(layer.in_channels, layer.kernel_size, batch, length)
            pad = (layer.kernel_size - 1) // 2
            dxp = np.zeros((layer.in_channels, batch, length + 2 * pad))
            for j in range(layer.kernel_size):
                dxp[:, :, j : j + length] += dcols[:, j]
            g = dxp[:, :, pad : pad + length]
    return Gradients(weights=grads_w, biases=grads_b, mean_loss=mean_loss)


@dataclass
class AdamHyper:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter array."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, hyper: AdamHyper
) -> AdamState:
    """One bias-corrected Adam update, applied to `params` in place."""
    state.t += 1
    b1t = 1.0 - hyper.beta1**state.t
    b2t = 1.0 - hyper.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        p -= hyper.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + hyper.eps)
    return state


def bundle_params(bundle: WeightBundle) -> list[np.ndarray]:
    params: list[np.ndarray] = []
    for layer in bundle.layers:
        params.append(layer.weights)
        params.append(layer.bias)
    return params


def grad_check(bundle: WeightBundle, flat: np.ndarray, label: int, eps: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients."""
    flat = np.asarray(flat, dtype=np.float64)
    grads = backward(bundle, flat[None], np.array([label]))
    analytic = []
    for gw, gb in zip(grads.weights, grads.biases):
        analytic.append(gw)
        analytic.append(gb)
    worst = 0.0
    for param, grad in zip(bundle_params(bundle), analytic):
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + eps
            up = bce_loss(forward_flat(bundle, flat), label)
            param[idx] = orig - eps
            down = bce_loss(forward_flat(bundle, flat), label)
            param[idx] = orig
            numeric = (up - down) / (2 * eps)
            a = float(grad[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults are the pinned desk-scale choices."""

    iterations: int = 800
    batch_size: int = 64
    adam: AdamHyper = field(default_factory=AdamHyper)
    val_fraction: float = 0.1
    eval_interval: int = 50
    hidden_channels: tuple[int, ...] = (32, 32, 32)
    kernel_size: int = 3
    leaky_slope: float = 0.01
    layout: str = LAYOUT_FRAMES
    threshold: float = 0.5


def init_bundle(
    rng: np.random.Generator,
    zone_id: int,
    normalization: Normalization,
    config: TrainConfig,
) -> WeightBundle:
    """Fresh bundle with uniform fan-in-scaled weights and zero biases."""
    in_ch = WINDOW_FRAMES if config.layout == LAYOUT_FRAMES else FLAT_POSITIONS
    sizes = list(config.hidden_channels) + [1]
    layers = []
    for out_ch in sizes:
        bound = np.sqrt(1.0 / (in_ch * config.kernel_size))
        weights = rng.uniform(-bound, bound, size=(out_ch, in_ch, config.kernel_size))
        layers.append(ConvLayer(weights, np.zeros(out_ch)))
        in_ch = out_ch
    bundle = WeightBundle(
        layers=layers,
        leaky_slope=config.leaky_slope,
        layout=config.layout,
        normalization=normalization,
        zone_id=zone_id,
        threshold=config.threshold,
    )
    bundle.validate()
    return bundle


def _flatten_windows(windows: np.ndarray, normalization: Normalization, layout: str) -> np.ndarray:
    flats = np.empty(
        (windows.shape[0], WINDOW_FRAMES, FLAT_POSITIONS)
        if layout == LAYOUT_FRAMES
        else (windows.shape[0], FLAT_POSITIONS, WINDOW_FRAMES)
    )
    for i, w in enumerate(windows):
        flats[i] = flatten_input(standardize(w, normalization), layout)
    return flats


def train(
    windows: np.ndarray,
    labels: np.ndarray,
    *,
    zone_id: int,
    normalization: Normalization,
    config: TrainConfig | None = None,
    seed: int = 0,
) -> tuple[WeightBundle, list[float]]:
    """Train one zone classifier on raw (N, 60, 7, 17) windows and 0/1 labels.

    Deterministic in `seed`. A validation split is carved from the dataset and
    the best-validation-loss snapshot is returned alongside the per-iteration
    training loss history.
    """
    windows = np.asarray(windows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if windows.shape[0] == 0:
        raise EmptyDataset("no training examples")
    if windows.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"{windows.shape[0]} windows but {labels.shape[0]} labels")
    classes = np.unique(labels)
    if classes.size < 2:
        raise SingleClassDataset(f"dataset contains only class {classes[0]:g}")

    config = config or TrainConfig()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    bundle = init_bundle(rng, zone_id, normalization, config)
    if config.iterations <= 0:
        return bundle, []
    with threadpool_limits(limits=1):  # small GEMMs: BLAS threading only adds overhead
        return _train_loop(bundle, windows, labels, config, rng)


def _train_loop(
    bundle: WeightBundle,
    windows: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
) -> tuple[WeightBundle, list[float]]:
    normalization = bundle.normalization

    flats = _flatten_windows(windows, normalization, config.layout)
    n = flats.shape[0]
    n_val = int(round(config.val_fraction * n))
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        train_idx, val_idx = perm, perm[:0]

    params = bundle_params(bundle)
    state = AdamState.for_params(params)
    history: list[float] = []
    best = (np.inf, None)
    pool: np.ndarray = train_idx[rng.permutation(train_idx.size)]
    cursor = 0

    def val_loss() -> float:
        p = _forward_batch(bundle, flats[val_idx])
        y = labels[val_idx]
        return float(
            np.mean(-(y * np.log(np.clip(p, BCE_EPS, None)) + (1 - y) * np.log(np.clip(1 - p, BCE_EPS, None))))
        )

    for it in range(config.iterations):
        take = min(config.batch_size, train_idx.size)
        if cursor + take > pool.size:
            pool = train_idx[rng.permutation(train_idx.size)]
            cursor = 0
        batch_idx = pool[cursor : cursor + take]
        cursor += take
        grads = backward(bundle, flats[batch_idx], labels[batch_idx])
        flat_grads = []
        for gw, gb in zip(grads.weights, grads.biases):
            flat_grads.append(gw)
            flat_grads.append(gb)
        adam_step(params, flat_grads, state, config.adam)
        history.append(grads.mean_loss)
        if val_idx.size and ((it + 1) % config.eval_interval == 0 or it + 1 == config.iterations):
            loss = val_loss()
            if loss < best[0]:
                best = (loss, bundle.clone())

    if best[1] is not None:
        return best[1], history
    return bundle, history
