"""Dataset loading, the synthetic latent-tree benchmark, and metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

SPLITS = ("train", "valid", "test")


@dataclass(eq=False)
class Dataset:
    name: str
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        widths = {m.shape[1] for m in (self.train, self.valid, self.test)}
        if len(widths) != 1:
            raise DataError(f"{self.name}: splits disagree on column count: {widths}")
        for split in SPLITS:
            m = getattr(self, split)
            if m.size == 0:
                raise DataError(f"{self.name}: empty {split} split")
            if not np.isin(m, (0, 1)).all():
                raise DataError(f"{self.name}: non-binary entries in {split} split")

    @property
    def n(self) -> int:
        return self.train.shape[1]

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def read_matrix(path: Path | str) -> np.ndarray:
    """Parse a comma-separated 0/1 matrix; errors carry the offending line number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing data file: {path}")
    rows: list[list[int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split(",")
            try:
                row = [int(tok) for tok in tokens]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer token") from None
            if any(v not in (0, 1) for v in row):
                raise DataError(f"{path}:{lineno}: non-binary value")
            if rows and len(row) != len(rows[0]):
                raise DataError(
                    f"{path}:{lineno}: ragged row (got {len(row)} columns, expected {len(rows[0])})"
                )
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.int8)


def write_matrix(path: Path | str, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in matrix:
            fh.write(",".join(str(v) for v in row) + "\n")


def load_dataset(root_dir: Path | str, name: str) -> Dataset:
    """Load <name>.{train,valid,test}.data from root_dir."""
    root = Path(root_dir)
    matrices = {split: read_matrix(root / f"{name}.{split}.data") for split in SPLITS}
    return Dataset(name, **matrices)


def save_dataset(dataset: Dataset, root_dir: Path | str) -> None:
    root = Path(root_dir)
    root.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        write_matrix(root / f"{dataset.name}.{split}.data", dataset.split(split))


SYNTHETIC_VARS = 256
SYNTHETIC_ROWS = 10_000
_SYNTHETIC_SPLIT = (7000, 1000, 2000)  # 70/10/20
_NOISE_SCALE = 1.0


def gen_synthetic(seed: int = 0) -> Dataset:
    """Latent-tree binary dataset: 256 variables, 10000 rows, 70/10/20 split.

    A standard-normal latent is drawn at the root of a complete binary tree
    and propagated down with independent Gaussian noise at each level; each
    leaf bit thresholds its latent at zero. Leaf-to-leaf correlation
    therefore decays monotonically with tree path length.
    """
    rng = np.random.default_rng(seed)
    depth = int(np.log2(SYNTHETIC_VARS))
    z = rng.standard_normal((SYNTHETIC_ROWS, 1))
    for level in range(depth):
        width = 2 ** (level + 1)
        z = np.repeat(z, 2, axis=1) + _NOISE_SCALE * rng.standard_normal(
            (SYNTHETIC_ROWS, width)
        )
    bits = (z > 0).astype(np.int8)
    a, b, _ = _SYNTHETIC_SPLIT
    return Dataset("synthetic", bits[:a], bits[a : a + b], bits[a + b :])


def avg_log_likelihood(model, split: np.ndarray) -> tuple[float, float]:
    """Mean log-likelihood over the rows of a split, with its standard error."""
    split = np.asarray(split)
    if len(split) == 0:
        raise ValueError("empty split")
    ll = model.log_density(split)
    stderr = float(np.std(ll, ddof=1) / np.sqrt(len(ll))) if len(ll) > 1 else 0.0
    return float(np.mean(ll)), stderr


def parzen_score(test_matrix: np.ndarray, sample_matrix: np.ndarray, sigma: float = 0.2) -> float:
    """Mean log-density of the samples under a Gaussian KDE on the test rows.

    Rows are treated as real vectors; kernels are isotropic with variance
    sigma^2 and include the full d-dimensional normalization constant.
    """
    test = np.asarray(test_matrix, dtype=np.float64)
    samples = np.asarray(sample_matrix, dtype=np.float64)
    if test.size == 0 or samples.size == 0:
        raise ValueError("empty test or sample matrix")
    if test.shape[1] != samples.shape[1]:
        raise ValueError(
            f"column mismatch: test has {test.shape[1]}, samples have {samples.shape[1]}"
        )
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = test.shape[1]
    log_norm = np.log(len(test)) + 0.5 * d * np.log(2.0 * np.pi * sigma**2)
    total = 0.0
    for start in range(0, len(samples), 256):
        chunk = samples[start : start + 256]
        sq = ((chunk[:, None, :] - test[None, :, :]) ** 2).sum(axis=-1)
        t = -sq / (2.0 * sigma**2)
        m = t.max(axis=1)
        log_kde = m + np.log(np.exp(t - m[:, None]).sum(axis=1)) - log_norm
        total += float(log_kde.sum())
    return total / len(samples)


@dataclass(frozen=True)
class ParzenConfig:
    sigma: float = 0.2
    sample_count: int = 500

    def __post_init__(self):
        if self.sigma <= 0 or self.sample_count < 1:
            raise ValueError(f"invalid Parzen config: {self}")
