"""Negative log-likelihood training: exact gradients, Adam, early stopping.

Two trainable families share the training loop. A plain model trains raw
per-sector logits directly (normalization happens inside the forward pass,
so Adam runs unconstrained; weight decay applies here). A hyper model
trains sector embeddings, the shared decoder, and the top-level mixture
logits; no weight decay is used for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluate
from .errors import NumericError
from .evaluate import GroupLogWeights, as_evidence, log_normalize_rows
from .hypernet import Decoder, DecoderConfig, HyperParams, decoder_output_width, init_hyper
from .structure import CircuitStructure
from .weights import WeightStore, log_softmax

PLAIN_LR = 2e-2
HYPER_LR = 5e-3
WEIGHT_DECAY_GRID = (1e-3, 1e-4, 1e-5)
EMBED_DIM_GRID = (5, 10, 20)

_EVAL_CHUNK = 2048


@dataclass(frozen=True)
class TrainConfig:
    lr: float = PLAIN_LR
    weight_decay: float = 0.0
    batch_size: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int = 80_000
    max_epochs: int | None = None
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.patience < 1:
            raise ValueError(f"invalid training config: {self}")


def default_config(variant: str, **overrides) -> TrainConfig:
    lr = {"plain": PLAIN_LR, "hyper": HYPER_LR}[variant]
    return replace(TrainConfig(lr=lr), **overrides)


def _softmax_jacobian(d_logp: np.ndarray, logp: np.ndarray) -> np.ndarray:
    """Map grad w.r.t. log-softmax output to grad w.r.t. the raw logits."""
    return d_logp - np.exp(logp) * d_logp.sum(axis=-1, keepdims=True)


class PlainModel:
    """Raw logits for every sector, flattened in evaluation-schedule order."""

    variant = "plain"

    def __init__(self, structure: CircuitStructure, params: np.ndarray | None = None, seed: int = 0):
        self.structure = structure
        st = structure
        self._shapes = (
            [(len(st.leaf_nodes), st.k, st.l)]
            + [(len(ids), st.k, st.k) for ids, _, _ in st.levels]
            + [(st.r, st.k), (st.r,)]
        )
        self._sizes = [int(np.prod(s)) for s in self._shapes]
        if params is None:
            params = np.random.default_rng(seed).normal(0.0, 0.1, sum(self._sizes))
        if params.shape != (sum(self._sizes),):
            raise ValueError(f"expected {sum(self._sizes)} trainables, got {params.shape}")
        self.params = np.asarray(params, dtype=np.float64)

    @property
    def num_params(self) -> int:
        return self.params.size

    def _logit_groups(self) -> list[np.ndarray]:
        out, off = [], 0
        for shape, size in zip(self._shapes, self._sizes):
            out.append(self.params[off : off + size].reshape(shape))
            off += size
        return out

    def group_log_weights(self) -> GroupLogWeights:
        groups = [log_normalize_rows(log_softmax(g)) for g in self._logit_groups()]
        *levels, root, top = groups[1:]
        return GroupLogWeights(groups[0], levels, root, top)

    def weight_store(self) -> WeightStore:
        return _store_from_groups(self.structure, self.group_log_weights())

    def log_density(self, evidence) -> np.ndarray:
        return _log_density(self.structure, self.group_log_weights(), evidence)

    def loss_and_grad(self, batch) -> tuple[float, np.ndarray]:
        ev = as_evidence(batch, self.structure.n)
        lw = self.group_log_weights()
        fwd = evaluate.forward(self.structure, lw, ev)
        loss = float(np.mean(-fwd.log_density))
        grad_out = np.full(ev.shape[0], -1.0 / ev.shape[0])
        d = evaluate.backward(self.structure, lw, fwd, grad_out)
        parts = [
            _softmax_jacobian(dg, g).ravel()
            for dg, g in zip(
                [d.leaf, *d.levels, d.root, d.top[None, :]],
                [lw.leaf, *lw.levels, lw.root, lw.top[None, :]],
            )
        ]
        return loss, np.concatenate(parts)


class HyperModel:
    """Embeddings + shared decoder + top logits, flattened in that order."""

    variant = "hyper"

    def __init__(self, structure: CircuitStructure, hyper: HyperParams):
        self.structure = structure
        self.hyper = hyper
        st = structure
        sector_of = lambda nid: st.nodes[nid].sector
        self._leaf_secs = np.array([sector_of(n) for n in st.leaf_nodes])
        self._level_secs = [np.array([sector_of(n) for n in ids]) for ids, _, _ in st.levels]
        self._root_secs = np.array([sector_of(n) for n in st.root_nodes])

    @classmethod
    def create(
        cls,
        structure: CircuitStructure,
        h: int,
        config: DecoderConfig = DecoderConfig(),
        seed: int = 0,
    ) -> "HyperModel":
        return cls(structure, init_hyper(structure, h, config, seed))

    @property
    def params(self) -> np.ndarray:
        hp = self.hyper
        parts = [hp.embeddings.ravel()]
        for w, b in zip(hp.decoder.weights, hp.decoder.biases):
            parts += [w.ravel(), b]
        parts.append(hp.top_logits)
        return np.concatenate(parts)

    @params.setter
    def params(self, vec: np.ndarray) -> None:
        hp = self.hyper
        off = 0

        def take(arr: np.ndarray) -> np.ndarray:
            nonlocal off
            out = vec[off : off + arr.size].reshape(arr.shape)
            off += arr.size
            return out

        hp.embeddings = take(hp.embeddings)
        new_w, new_b = [], []
        for w, b in zip(hp.decoder.weights, hp.decoder.biases):
            new_w.append(take(w))
            new_b.append(take(b))
        hp.decoder.weights, hp.decoder.biases = new_w, new_b
        hp.top_logits = take(hp.top_logits)
        if off != vec.size:
            raise ValueError(f"expected {off} trainables, got {vec.size}")

    @property
    def num_params(self) -> int:
        hp = self.hyper
        return hp.embeddings.size + hp.decoder.param_count() + hp.top_logits.size

    def _decode(self) -> tuple[GroupLogWeights, np.ndarray, list[np.ndarray]]:
        """Batched decode of all sector embeddings into grouped log weights."""
        st = self.structure
        out, cache = self.hyper.decoder.forward(self.hyper.embeddings)
        k, l = st.k, st.l
        leaf = log_normalize_rows(log_softmax(out[self._leaf_secs, : k * l].reshape(-1, k, l)))
        levels = [
            log_normalize_rows(log_softmax(out[secs, : k * k].reshape(-1, k, k)))
            for secs in self._level_secs
        ]
        root = log_normalize_rows(log_softmax(out[self._root_secs, :k]))
        top = log_normalize_rows(log_softmax(self.hyper.top_logits))
        return GroupLogWeights(leaf, levels, root, top), out, cache

    def group_log_weights(self) -> GroupLogWeights:
        return self._decode()[0]

    def weight_store(self) -> WeightStore:
        return _store_from_groups(self.structure, self.group_log_weights())

    def log_density(self, evidence) -> np.ndarray:
        return _log_density(self.structure, self.group_log_weights(), evidence)

    def loss_and_grad(self, batch) -> tuple[float, np.ndarray]:
        st = self.structure
        ev = as_evidence(batch, st.n)
        lw, out, cache = self._decode()
        fwd = evaluate.forward(st, lw, ev)
        loss = float(np.mean(-fwd.log_density))
        grad_out = np.full(ev.shape[0], -1.0 / ev.shape[0])
        d = evaluate.backward(st, lw, fwd, grad_out)

        k, l = st.k, st.l
        d_out = np.zeros_like(out)
        d_out[self._leaf_secs, : k * l] = _softmax_jacobian(d.leaf, lw.leaf).reshape(-1, k * l)
        for secs, dg, g in zip(self._level_secs, d.levels, lw.levels):
            d_out[secs, : k * k] = _softmax_jacobian(dg, g).reshape(-1, k * k)
        d_out[self._root_secs, :k] = _softmax_jacobian(d.root, lw.root)
        d_emb, d_w, d_b = self.hyper.decoder.backward(cache, d_out)
        d_top = _softmax_jacobian(d.top[None, :], lw.top[None, :])[0]

        parts = [d_emb.ravel()]
        for w, b in zip(d_w, d_b):
            parts += [w.ravel(), b]
        parts.append(d_top)
        return loss, np.concatenate(parts)


def _store_from_groups(struct: CircuitStructure, lw: GroupLogWeights) -> WeightStore:
    mats: list[np.ndarray | None] = [None] * struct.num_sectors
    sector_of = lambda nid: struct.nodes[nid].sector
    for i, nid in enumerate(struct.leaf_nodes):
        mats[sector_of(nid)] = np.exp(lw.leaf[i])
    for (ids, _, _), g in zip(struct.levels, lw.levels):
        for i, nid in enumerate(ids):
            mats[sector_of(nid)] = np.exp(g[i])
    for i, nid in enumerate(struct.root_nodes):
        mats[sector_of(nid)] = np.exp(lw.root[i])[None, :]
    mats[-1] = np.exp(lw.top)[None, :]
    store = WeightStore.__new__(WeightStore)
    store.structure = struct
    store.matrices = mats
    store._log = None
    return store


def _log_density(struct: CircuitStructure, lw: GroupLogWeights, evidence) -> np.ndarray:
    single = np.asarray(evidence).ndim == 1
    ev = as_evidence(evidence, struct.n)
    chunks = [
        evaluate.forward(struct, lw, ev[i : i + _EVAL_CHUNK]).log_density
        for i in range(0, len(ev), _EVAL_CHUNK)
    ]
    out = np.concatenate(chunks)
    return float(out[0]) if single else out


def nll_loss(model, batch) -> float:
    """Mean negative log-likelihood of a batch of complete assignments."""
    batch = np.asarray(batch)
    if batch.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(-model.log_density(batch)))


def gradient(model, batch) -> np.ndarray:
    """Exact reverse-mode gradient of nll_loss w.r.t. every trainable."""
    return model.loss_and_grad(batch)[1]


@dataclass(eq=False)
class OptState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "OptState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(
    params: np.ndarray, grad: np.ndarray, state: OptState, config: TrainConfig
) -> tuple[np.ndarray, OptState]:
    """One bias-corrected Adam update; coupled L2 decay is added to the gradient."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("parameter/gradient/state shapes disagree")
    if config.weight_decay:
        grad = grad + config.weight_decay * params
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * grad**2
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    return params - config.lr * m_hat / (np.sqrt(v_hat) + config.eps), OptState(m, v, t)


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    valid_ll: float


@dataclass(eq=False)
class TrainResult:
    model: object
    history: list[EpochRecord]
    best_valid_ll: float
    steps: int


def train_loop(model, dataset, config: TrainConfig) -> TrainResult:
    """Shuffled mini-batch Adam with per-epoch validation and early stopping.

    Keeps the parameter vector with the best validation log-likelihood seen
    so far and restores it into the model before returning.
    """
    train, valid = np.asarray(dataset.train), np.asarray(dataset.valid)
    if len(train) == 0 or len(valid) == 0:
        raise ValueError("train and valid splits must be nonempty")

    rng = np.random.default_rng(config.seed)
    state = OptState.zeros(model.num_params)
    best_params = model.params.copy()
    best_valid = -np.inf
    history: list[EpochRecord] = []
    stale = 0
    step = 0
    epoch = 0

    while True:
        epoch += 1
        order = rng.permutation(len(train))
        epoch_losses = []
        for start in range(0, len(train), config.batch_size):
            batch = train[order[start : start + config.batch_size]]
            loss, grad = model.loss_and_grad(batch)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at step {step}: {loss}")
            model.params, state = adam_step(model.params, grad, state, config)
            epoch_losses.append(loss)
            step += 1
            if step >= config.max_steps:
                break

        valid_ll = float(np.mean(model.log_density(valid)))
        history.append(EpochRecord(epoch, float(np.mean(epoch_losses)), valid_ll))
        if valid_ll > best_valid:
            best_valid = valid_ll
            best_params = model.params.copy()
            stale = 0
        else:
            stale += 1

        if (
            stale >= config.patience
            or step >= config.max_steps
            or (config.max_epochs is not None and epoch >= config.max_epochs)
        ):
            break

    model.params = best_params
    return TrainResult(model, history, best_valid, step)
