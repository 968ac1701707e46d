"""Materialized circuit parameters: normalized mixture weights per sector."""

from __future__ import annotations

import numpy as np

from .structure import CircuitStructure

_ROW_SUM_TOL = 1e-12


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax over the last axis (shift-invariant)."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


class WeightStore:
    """Per-sector mixture-weight matrices; rows are sum nodes and sum to 1.

    Log-space copies are cached lazily since evaluation runs entirely in
    log space. Immutable by convention: treat the arrays as read-only.
    """

    def __init__(self, structure: CircuitStructure, matrices: list[np.ndarray]):
        if len(matrices) != structure.num_sectors:
            raise ValueError(
                f"expected {structure.num_sectors} sector matrices, got {len(matrices)}"
            )
        for sec, mat in zip(structure.sectors, matrices):
            if mat.shape != (sec.rows, sec.cols):
                raise ValueError(
                    f"sector {sec.id} expects shape {(sec.rows, sec.cols)}, got {mat.shape}"
                )
            if np.any(mat < 0):
                raise ValueError(f"sector {sec.id} has negative weights")
            if np.max(np.abs(mat.sum(axis=-1) - 1.0)) > _ROW_SUM_TOL:
                raise ValueError(f"sector {sec.id} rows do not sum to 1")
        self.structure = structure
        self.matrices = [np.asarray(m, dtype=np.float64) for m in matrices]
        self._log: list[np.ndarray] | None = None

    def __getitem__(self, sector_id: int) -> np.ndarray:
        return self.matrices[sector_id]

    def __len__(self) -> int:
        return len(self.matrices)

    @property
    def log_matrices(self) -> list[np.ndarray]:
        if self._log is None:
            with np.errstate(divide="ignore"):
                self._log = [np.log(m) for m in self.matrices]
        return self._log

    @property
    def top(self) -> np.ndarray:
        """Top-level replica mixture as a flat (r,) vector."""
        return self.matrices[-1][0]

    @classmethod
    def from_logits(cls, structure: CircuitStructure, logits: list[np.ndarray]) -> "WeightStore":
        store = cls.__new__(cls)
        store.structure = structure
        store.matrices = [softmax(np.asarray(t, dtype=np.float64)) for t in logits]
        store._log = None
        return store

    @classmethod
    def random(cls, structure: CircuitStructure, seed: int = 0, scale: float = 1.0) -> "WeightStore":
        """Random normalized weights (softmax of Gaussian logits); for tests and probes."""
        rng = np.random.default_rng(seed)
        logits = [
            rng.normal(0.0, scale, size=(sec.rows, sec.cols))
            for sec in structure.sectors
        ]
        return cls.from_logits(structure, logits)

    @classmethod
    def uniform(cls, structure: CircuitStructure) -> "WeightStore":
        return cls(
            structure,
            [np.full((sec.rows, sec.cols), 1.0 / sec.cols) for sec in structure.sectors],
        )
