"""Versioned weight-bundle container.

JSON payload with layer descriptors, flat row-major weight/bias arrays, the
activation slope, input layout tag, per-feature normalization pairs, zone id
and decision threshold, protected by a SHA-256 checksum. Floats are written
via repr so a round-trip reproduces the bundle bit for bit.
"""

from __future__ import annotations

import hashlib
import json

from .cnn import ConvLayer, WeightBundle
from .errors import CorruptPayload, ShapeMismatch, UnsupportedVersion
from .window import N_FEATURES, Normalization

FORMAT_VERSION = 1


def _payload(bundle: WeightBundle) -> dict:
    return {
        "zone_id": bundle.zone_id,
        "layout": bundle.layout,
        "leaky_slope": bundle.leaky_slope,
        "threshold": bundle.threshold,
        "normalization": {
            "mean": bundle.normalization.mean.tolist(),
            "std": bundle.normalization.std.tolist(),
        },
        "layers": [
            {
                "in_channels": layer.in_channels,
                "out_channels": layer.out_channels,
                "kernel_size": layer.kernel_size,
                "weights": layer.weights.reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in bundle.layers
        ],
    }


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_weights(bundle: WeightBundle) -> bytes:
    bundle.validate()
    payload = _payload(bundle)
    doc = {"format": "streamladder-weights", "version": FORMAT_VERSION, "checksum": _checksum(payload), "payload": payload}
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def load_weights(data: bytes | str) -> WeightBundle:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CorruptPayload(f"bundle is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != "streamladder-weights":
        raise CorruptPayload("not a weight bundle document")
    if doc.get("version") != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported bundle version {doc.get('version')!r}")
    payload = doc.get("payload")
    if not isinstance(payload, dict):
        raise CorruptPayload("missing payload")
    if doc.get("checksum") != _checksum(payload):
        raise CorruptPayload("checksum mismatch")

    import numpy as np

    norm = payload.get("normalization", {})
    mean, std = norm.get("mean"), norm.get("std")
    if not (isinstance(mean, list) and isinstance(std, list) and len(mean) == len(std) == N_FEATURES):
        raise ShapeMismatch(f"normalization must carry {N_FEATURES} (mean, std) pairs")
    layers = []
    for i, spec in enumerate(payload.get("layers", [])):
        shape = (spec["out_channels"], spec["in_channels"], spec["kernel_size"])
        flat = np.asarray(spec["weights"], dtype=np.float64)
        if flat.size != shape[0] * shape[1] * shape[2]:
            raise ShapeMismatch(f"layer {i}: {flat.size} weights for declared shape {shape}")
        bias = np.asarray(spec["bias"], dtype=np.float64)
        if bias.size != shape[0]:
            raise ShapeMismatch(f"layer {i}: {bias.size} biases for {shape[0]} output channels")
        layers.append(ConvLayer(flat.reshape(shape), bias))
    if not layers:
        raise ShapeMismatch("bundle payload has no layers")
    bundle = WeightBundle(
        layers=layers,
        leaky_slope=float(payload["leaky_slope"]),
        layout=str(payload["layout"]),
        normalization=Normalization(np.asarray(mean), np.asarray(std)),
        zone_id=int(payload["zone_id"]),
        threshold=float(payload["threshold"]),
    )
    bundle.validate()
    return bundle


def write_weights(path, bundle: WeightBundle) -> None:
    from .fileio import atomic_write

    atomic_write(path, save_weights(bundle))


def read_weights(path) -> WeightBundle:
    with open(path, "rb") as fh:
        return load_weights(fh.read())
