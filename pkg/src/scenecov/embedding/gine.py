"""GINE encoder: edge-aware message passing with analytic gradients.

Per layer, node states update as

    h_v <- MLP((1 + eps) * h_v + sum_{u->v} relu(h_u + W_e * e_uv))

with a per-layer epsilon, edge projection, and two-layer MLP. Graph-level
readout concatenates mean, max, and sum pooling; an embedding MLP plus L2
normalization yields the scene embedding, and a projection head feeds the
contrastive loss. Forward passes record a tape that encode_backward replays
for exact gradients (max pooling routes its subgradient to the first
argmax row).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from ..errors import SceneCovError
from .features import EDGE_FEATURE_DIM, NODE_FEATURE_DIM, FeaturizedGraph

_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture and training hyperparameters with their paper defaults."""

    layers: int = 5
    hidden: int = 384
    embed_dim: int = 192
    projection_dim: int = 96
    temperature: float = 0.07
    noise_sigma: float = 0.08
    edge_drop_p: float = 0.1
    batch: int = 384
    lr0: float = 0.0015
    lr_decay: float = 0.85
    stages: int = 15
    epochs_per_stage: int = 1
    warmup_epochs: int = 3
    weight_decay: float = 5e-6
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("layers", "hidden", "embed_dim", "projection_dim", "batch",
                     "stages", "epochs_per_stage", "warmup_epochs"):
            if getattr(self, name) < (0 if name == "warmup_epochs" else 1):
                raise ValueError(f"{name} out of range")
        if self.temperature <= 0 or self.lr0 <= 0 or self.lr_decay <= 0:
            raise ValueError("temperature, lr0 and lr_decay must be positive")
        if not 0.0 <= self.edge_drop_p <= 1.0 or not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("edge_drop_p and val_fraction must be probabilities")
        if self.noise_sigma < 0 or self.weight_decay < 0:
            raise ValueError("noise_sigma and weight_decay must be non-negative")

    @classmethod
    def desk_profile(cls, **overrides) -> "EncoderConfig":
        """Small profile for laptop-scale runs and the acceptance suite."""
        base = dict(hidden=64, batch=32, embed_dim=32, projection_dim=16)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {
            "layers": self.layers, "hidden": self.hidden, "embed_dim": self.embed_dim,
            "projection_dim": self.projection_dim, "temperature": self.temperature,
            "noise_sigma": self.noise_sigma, "edge_drop_p": self.edge_drop_p,
            "batch": self.batch, "lr0": self.lr0, "lr_decay": self.lr_decay,
            "stages": self.stages, "epochs_per_stage": self.epochs_per_stage,
            "warmup_epochs": self.warmup_epochs, "weight_decay": self.weight_decay,
            "val_fraction": self.val_fraction, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        known = set(cls().to_dict())
        unknown = set(data) - known
        if unknown:
            raise SceneCovError(f"unknown encoder parameters: {sorted(unknown)}")
        return cls(**data)

    def with_updates(self, **kwargs) -> "EncoderConfig":
        return replace(self, **kwargs)


Params = dict[str, np.ndarray]


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_out, fan_in))


def layer_dims(config: EncoderConfig) -> list[tuple[int, int]]:
    dims = []
    for layer in range(config.layers):
        in_dim = NODE_FEATURE_DIM if layer == 0 else config.hidden
        dims.append((in_dim, config.hidden))
    return dims


def init_params(config: EncoderConfig, rng: np.random.Generator) -> Params:
    params: Params = {}
    for layer, (in_dim, out_dim) in enumerate(layer_dims(config)):
        params[f"layer{layer}.edge_w"] = _glorot(rng, in_dim, EDGE_FEATURE_DIM)
        params[f"layer{layer}.edge_b"] = np.zeros(in_dim)
        params[f"layer{layer}.eps"] = np.zeros(())
        params[f"layer{layer}.w1"] = _glorot(rng, config.hidden, in_dim)
        params[f"layer{layer}.b1"] = np.zeros(config.hidden)
        params[f"layer{layer}.w2"] = _glorot(rng, out_dim, config.hidden)
        params[f"layer{layer}.b2"] = np.zeros(out_dim)
    params["embed.w1"] = _glorot(rng, config.hidden, 3 * config.hidden)
    params["embed.b1"] = np.zeros(config.hidden)
    params["embed.w2"] = _glorot(rng, config.embed_dim, config.hidden)
    params["embed.b2"] = np.zeros(config.embed_dim)
    params["proj.w1"] = _glorot(rng, config.embed_dim, config.embed_dim)
    params["proj.b1"] = np.zeros(config.embed_dim)
    params["proj.w2"] = _glorot(rng, config.projection_dim, config.embed_dim)
    params["proj.b2"] = np.zeros(config.projection_dim)
    return params


def zero_grads(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def safe_normalize(vec: np.ndarray) -> tuple[np.ndarray, float]:
    """L2-normalize; a (near-)zero vector maps to the first basis vector
    with zero backward flow, so all-zero parameters still emit a unit
    embedding."""
    norm = float(np.linalg.norm(vec))
    if norm < _NORM_FLOOR:
        out = np.zeros_like(vec)
        out[0] = 1.0
        return out, 0.0
    return vec / norm, norm


@dataclass
class ForwardTape:
    fg: FeaturizedGraph
    layer_inputs: list[np.ndarray]
    layer_messages: list[np.ndarray]  # pre-relu message terms
    layer_z: list[np.ndarray]
    layer_pre1: list[np.ndarray]
    layer_h1: list[np.ndarray]
    final_nodes: np.ndarray
    argmax_rows: np.ndarray
    readout: np.ndarray
    embed_pre1: np.ndarray
    embed_h1: np.ndarray
    embed_raw: np.ndarray
    embed_norm: float
    embedding: np.ndarray
    proj_pre1: np.ndarray
    proj_h1: np.ndarray
    projection: np.ndarray


def encode(params: Params, config: EncoderConfig,
           fg: FeaturizedGraph) -> tuple[np.ndarray, np.ndarray, ForwardTape]:
    """Forward pass for one graph; returns (embedding, projection, tape)."""
    n = fg.n_nodes
    if n == 0:
        raise SceneCovError("cannot encode an empty graph (scene needs >= 1 actor)")
    x = fg.node_features
    src = fg.edge_index[:, 0]
    dst = fg.edge_index[:, 1]
    layer_inputs, layer_messages, layer_z, layer_pre1, layer_h1 = [], [], [], [], []
    for layer in range(config.layers):
        edge_w = params[f"layer{layer}.edge_w"]
        edge_b = params[f"layer{layer}.edge_b"]
        eps = float(params[f"layer{layer}.eps"])
        if fg.n_edges:
            s = x[src] + fg.edge_features @ edge_w.T + edge_b
            m = np.maximum(s, 0.0)
            agg = np.zeros_like(x)
            np.add.at(agg, dst, m)
        else:
            s = np.zeros((0, x.shape[1]))
            agg = np.zeros_like(x)
        z = (1.0 + eps) * x + agg
        pre1 = z @ params[f"layer{layer}.w1"].T + params[f"layer{layer}.b1"]
        h1 = np.maximum(pre1, 0.0)
        out = h1 @ params[f"layer{layer}.w2"].T + params[f"layer{layer}.b2"]
        layer_inputs.append(x)
        layer_messages.append(s)
        layer_z.append(z)
        layer_pre1.append(pre1)
        layer_h1.append(h1)
        x = out
    argmax_rows = np.argmax(x, axis=0)
    readout = np.concatenate([x.mean(axis=0), x[argmax_rows, np.arange(x.shape[1])],
                              x.sum(axis=0)])
    embed_pre1 = params["embed.w1"] @ readout + params["embed.b1"]
    embed_h1 = np.maximum(embed_pre1, 0.0)
    embed_raw = params["embed.w2"] @ embed_h1 + params["embed.b2"]
    embedding, embed_norm = safe_normalize(embed_raw)
    proj_pre1 = params["proj.w1"] @ embedding + params["proj.b1"]
    proj_h1 = np.maximum(proj_pre1, 0.0)
    projection = params["proj.w2"] @ proj_h1 + params["proj.b2"]
    tape = ForwardTape(fg, layer_inputs, layer_messages, layer_z, layer_pre1, layer_h1,
                       x, argmax_rows, readout, embed_pre1, embed_h1, embed_raw,
                       embed_norm, embedding, proj_pre1, proj_h1, projection)
    return embedding, projection, tape


def encode_backward(params: Params, config: EncoderConfig, tape: ForwardTape,
                    d_projection: np.ndarray, grads: Params,
                    d_embedding: np.ndarray | None = None) -> None:
    """Accumulate parameter gradients for one recorded forward pass.

    d_projection is the loss gradient w.r.t. the projection output;
    d_embedding optionally adds a gradient applied directly to the
    normalized embedding.
    """
    fg = tape.fg
    n = fg.n_nodes
    # projection head
    grads["proj.w2"] += np.outer(d_projection, tape.proj_h1)
    grads["proj.b2"] += d_projection
    d_h = params["proj.w2"].T @ d_projection
    d_pre = d_h * (tape.proj_pre1 > 0)
    grads["proj.w1"] += np.outer(d_pre, tape.embedding)
    grads["proj.b1"] += d_pre
    d_embed = params["proj.w1"].T @ d_pre
    if d_embedding is not None:
        d_embed = d_embed + d_embedding
    # normalization: d_raw = (d_e - e (e . d_e)) / norm, zero at the floor
    if tape.embed_norm > 0.0:
        d_raw = (d_embed - tape.embedding * float(tape.embedding @ d_embed)) / tape.embed_norm
    else:
        d_raw = np.zeros_like(d_embed)
    # embedding MLP
    grads["embed.w2"] += np.outer(d_raw, tape.embed_h1)
    grads["embed.b2"] += d_raw
    d_h = params["embed.w2"].T @ d_raw
    d_pre = d_h * (tape.embed_pre1 > 0)
    grads["embed.w1"] += np.outer(d_pre, tape.readout)
    grads["embed.b1"] += d_pre
    d_readout = params["embed.w1"].T @ d_pre
    # pooling: mean | max | sum segments
    hidden = tape.final_nodes.shape[1]
    d_mean = d_readout[:hidden]
    d_max = d_readout[hidden:2 * hidden]
    d_sum = d_readout[2 * hidden:]
    d_nodes = np.tile(d_mean / n + d_sum, (n, 1))
    d_nodes[tape.argmax_rows, np.arange(hidden)] += d_max
    # message passing layers, in reverse
    src = fg.edge_index[:, 0]
    dst = fg.edge_index[:, 1]
    for layer in reversed(range(config.layers)):
        eps = float(params[f"layer{layer}.eps"])
        x_in = tape.layer_inputs[layer]
        grads[f"layer{layer}.w2"] += d_nodes.T @ tape.layer_h1[layer]
        grads[f"layer{layer}.b2"] += d_nodes.sum(axis=0)
        d_h1 = d_nodes @ params[f"layer{layer}.w2"]
        d_pre1 = d_h1 * (tape.layer_pre1[layer] > 0)
        grads[f"layer{layer}.w1"] += d_pre1.T @ tape.layer_z[layer]
        grads[f"layer{layer}.b1"] += d_pre1.sum(axis=0)
        d_z = d_pre1 @ params[f"layer{layer}.w1"]
        grads[f"layer{layer}.eps"] += np.sum(d_z * x_in)
        d_x = (1.0 + eps) * d_z
        if fg.n_edges:
            d_msg = d_z[dst]
            d_s = d_msg * (tape.layer_messages[layer] > 0)
            np.add.at(d_x, src, d_s)
            grads[f"layer{layer}.edge_w"] += d_s.T @ fg.edge_features
            grads[f"layer{layer}.edge_b"] += d_s.sum(axis=0)
        d_nodes = d_x
