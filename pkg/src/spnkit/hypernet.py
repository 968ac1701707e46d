"""Soft weight-sharing: per-sector embeddings decoded into mixture weights.

Every tree sector of every replica gets an h-dimensional embedding. One
shared multi-layer perceptron maps an embedding to a flat logit vector of
width k*max(k, l); the first rows*cols entries are reshaped to the sector
and normalized row-wise by softmax. The top-level replica mixture keeps
its own directly trained logits. Indicator leaves have no parameters, so
the decoder never generates leaf-distribution parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .structure import TOP, CircuitStructure
from .weights import WeightStore, log_softmax, softmax


@dataclass(frozen=True)
class DecoderConfig:
    width: int = 20
    depth: int = 2
    activation: str = "tanh"

    def __post_init__(self):
        if self.width < 1 or self.depth < 1:
            raise ValueError(f"decoder width/depth must be >= 1, got {self}")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")


def decoder_output_width(struct: CircuitStructure) -> int:
    """Largest tree-sector size; decoder outputs are prefix-sliced per sector."""
    return struct.k * max(struct.k, struct.l)


@dataclass(eq=False)
class Decoder:
    """Fully connected tanh MLP: h -> width (x depth) -> out_width (linear)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, h: int, out_width: int, config: DecoderConfig, rng: np.random.Generator) -> "Decoder":
        sizes = [h] + [config.width] * config.depth + [out_width]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """x: (batch, h). Returns (output logits, activation cache)."""
        cache = [x]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.tanh(x @ w + b)
            cache.append(x)
        return x @ self.weights[-1] + self.biases[-1], cache

    def backward(
        self, cache: list[np.ndarray], d_out: np.ndarray
    ) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        """Returns (d_input, d_weights, d_biases) for the cached forward pass."""
        d_w = [np.empty(0)] * len(self.weights)
        d_b = [np.empty(0)] * len(self.biases)
        g = d_out
        for i in range(len(self.weights) - 1, -1, -1):
            d_w[i] = cache[i].T @ g
            d_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (1.0 - cache[i] ** 2)  # tanh'
        return g, d_w, d_b

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass(eq=False)
class HyperParams:
    """Trainable state: sector embedding table, decoder, replica-mixture logits."""

    embeddings: np.ndarray   # (r * (2n - 1), h), row index = sector id
    decoder: Decoder
    top_logits: np.ndarray   # (r,)
    config: DecoderConfig = field(default_factory=DecoderConfig)

    @property
    def h(self) -> int:
        return self.embeddings.shape[1]


def init_hyper(
    struct: CircuitStructure,
    h: int,
    config: DecoderConfig = DecoderConfig(),
    seed: int = 0,
) -> HyperParams:
    """Seeded initialization: zero-mean Gaussians scaled by 1/sqrt(fan-in)."""
    if h < 1:
        raise ValueError(f"embedding dimension must be >= 1, got {h}")
    rng = np.random.default_rng(seed)
    num_tree_sectors = struct.num_sectors - 1
    embeddings = rng.normal(0.0, 1.0 / np.sqrt(h), size=(num_tree_sectors, h))
    decoder = Decoder.init(h, decoder_output_width(struct), config, rng)
    return HyperParams(embeddings, decoder, np.zeros(struct.r), config)


def materialize_sector(hyper: HyperParams, struct: CircuitStructure, sector_id: int) -> np.ndarray:
    """Decode one sector's embedding into its normalized weight matrix."""
    sec = struct.sectors[sector_id]
    if sec.kind == TOP:
        return softmax(hyper.top_logits)[None, :]
    out, _ = hyper.decoder.forward(hyper.embeddings[sector_id][None, :])
    logits = out[0, : sec.size].reshape(sec.rows, sec.cols)
    return softmax(logits)


def materialize_all(hyper: HyperParams, struct: CircuitStructure) -> WeightStore:
    """Materialize every sector; sector-at-a-time so the result matches what
    a streaming provider would hand out, bit for bit."""
    return WeightStore(
        struct,
        [materialize_sector(hyper, struct, sec.id) for sec in struct.sectors],
    )


def hyper_param_count(
    struct: CircuitStructure, h: int, config: DecoderConfig = DecoderConfig()
) -> int:
    """Trainable parameters: r(2n-1) embeddings of size h, the shared decoder,
    and the r top-level mixture logits."""
    sizes = [h] + [config.width] * config.depth + [decoder_output_width(struct)]
    decoder = sum(fi * fo + fo for fi, fo in zip(sizes[:-1], sizes[1:]))
    return struct.r * (2 * struct.n - 1) * h + decoder + struct.r
