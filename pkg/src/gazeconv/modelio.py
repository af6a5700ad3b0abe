"""Versioned JSON model container shared by all three networks.

Layout (keys sorted, compact separators, floats in shortest round-trip form)::

    {
      "format": "gazeconv-model",
      "format_version": 1,
      "kind": "segment" | "reconstruct" | "generate",
      "model_version": 1,
      "trained": true,
      "groups": {"<group>": [{"in_depth": .., "out_depth": .., "kernel_height": ..,
                              "weight": [[[..]]], "bias": [..]}, ...]},
      "extra": {...}
    }

Groups are ``layers`` for segment/reconstruct and ``encoder``, ``head``,
``decoder`` for generate. ``extra.class_weights`` holds the segmentation loss
weights. Optimizer state is not stored.
"""

from __future__ import annotations

import json
import os

import numpy as np

from gazeconv.errors import ConfigurationError, DataFormatError
from gazeconv.genvae import VaeModel
from gazeconv.reconnet import ReconModel
from gazeconv.segnet import SegModel
from gazeconv.tensor import ConvLayer

FORMAT = "gazeconv-model"
FORMAT_VERSION = 1


def _layer_to_dict(layer: ConvLayer) -> dict:
    return {
        "in_depth": layer.in_depth,
        "out_depth": layer.out_depth,
        "kernel_height": layer.kernel_height,
        "weight": layer.weight.tolist(),
        "bias": layer.bias.tolist(),
    }


def _layer_from_dict(d: dict) -> ConvLayer:
    return ConvLayer(int(d["in_depth"]), int(d["out_depth"]), int(d["kernel_height"]),
                     weight=np.array(d["weight"], dtype=np.float64), bias=np.array(d["bias"], dtype=np.float64))


def model_to_dict(model) -> dict:
    extra = {}
    if isinstance(model, SegModel):
        groups = {"layers": model.layers}
        extra["class_weights"] = model.class_weights.tolist()
    elif isinstance(model, ReconModel):
        groups = {"layers": model.layers}
    elif isinstance(model, VaeModel):
        groups = {"encoder": model.encoder_layers, "head": [model.head], "decoder": model.decoder_layers}
    else:
        raise ConfigurationError(f"cannot serialise {type(model).__name__}")
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "model_version": model.version,
        "trained": bool(model.trained),
        "groups": {name: [_layer_to_dict(l) for l in layers] for name, layers in groups.items()},
        "extra": extra,
    }


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise DataFormatError("not a gazeconv model file")
    if d.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"unsupported model format version {d.get('format_version')}")
    groups = {name: [_layer_from_dict(l) for l in layers] for name, layers in d["groups"].items()}
    kind = d["kind"]
    common = {"version": d.get("model_version", 1), "trained": bool(d.get("trained", False))}
    if kind == "segment":
        return SegModel(groups["layers"], class_weights=np.array(d["extra"]["class_weights"]), **common)
    if kind == "reconstruct":
        return ReconModel(groups["layers"], **common)
    if kind == "generate":
        return VaeModel(groups["encoder"], groups["head"][0], groups["decoder"], **common)
    raise DataFormatError(f"unknown model kind {kind!r}")


def dumps(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model, path):
    with open(os.fspath(path), "w") as handle:
        handle.write(dumps(model))


def load_model(path, expected_kind: str | None = None):
    with open(os.fspath(path)) as handle:
        try:
            d = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"model file is not valid JSON: {exc}") from None
    model = model_from_dict(d)
    if expected_kind is not None and model.kind != expected_kind:
        raise ConfigurationError(f"model file holds a {model.kind!r} model, expected {expected_kind!r}")
    return model
