"""Binary model persistence.

Layout (all little-endian): magic "HPC1", uint32 format version, the
structure config (n, k, r, l, seed as int64), a variant tag, variant
extras, named float64 parameter sections with explicit lengths, and an
optional training-history block. Floats round-trip bit-identically.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ModelFormatError
from .hypernet import DecoderConfig
from .structure import build_structure
from .training import EpochRecord, HyperModel, PlainModel

MAGIC = b"HPC1"
VERSION = 1
_VARIANT_TAG = {"plain": 0, "hyper": 1}
_TAG_VARIANT = {v: k for k, v in _VARIANT_TAG.items()}


def _pack_section(name: str, values: np.ndarray) -> bytes:
    data = np.ascontiguousarray(values, dtype="<f8")
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw + struct.pack("<Q", data.size) + data.tobytes()


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise ModelFormatError("truncated model file")
        out = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return out if len(out) > 1 else out[0]

    def floats(self, count: int) -> np.ndarray:
        size = count * 8
        if self.pos + size > len(self.blob):
            raise ModelFormatError("truncated parameter section")
        out = np.frombuffer(self.blob, dtype="<f8", count=count, offset=self.pos).copy()
        self.pos += size
        return out

    def section(self) -> tuple[str, np.ndarray]:
        name_len = self.take("<H")
        name = self.blob[self.pos : self.pos + name_len].decode("utf-8")
        self.pos += name_len
        return name, self.floats(self.take("<Q"))


def save_model(path: Path | str, model, history: list[EpochRecord] | None = None) -> None:
    st = model.structure
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<5q", st.n, st.k, st.r, st.l, st.seed),
        struct.pack("<B", _VARIANT_TAG[model.variant]),
    ]
    if model.variant == "hyper":
        cfg = model.hyper.config
        parts.append(struct.pack("<3q", model.hyper.h, cfg.width, cfg.depth))
        hp = model.hyper
        decoder = np.concatenate(
            [a.ravel() for pair in zip(hp.decoder.weights, hp.decoder.biases) for a in pair]
        )
        sections = [
            ("embeddings", hp.embeddings.ravel()),
            ("decoder", decoder),
            ("top_logits", hp.top_logits),
        ]
    else:
        sections = [("params", model.params)]

    parts.append(struct.pack("<I", len(sections)))
    parts += [_pack_section(name, vals) for name, vals in sections]

    if history:
        parts.append(struct.pack("<BQ", 1, len(history)))
        rows = np.array(
            [(rec.epoch, rec.train_nll, rec.valid_ll) for rec in history], dtype="<f8"
        )
        parts.append(rows.tobytes())
    else:
        parts.append(struct.pack("<B", 0))

    Path(path).write_bytes(b"".join(parts))


def load_model(path: Path | str):
    """Returns (model, history); history is None when the file has none."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic bytes")
    rd = _Reader(blob)
    rd.pos = 4
    version = rd.take("<I")
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    n, k, r, l, seed = rd.take("<5q")
    variant = _TAG_VARIANT.get(rd.take("<B"))
    if variant is None:
        raise ModelFormatError(f"{path}: unknown model variant tag")
    structure = build_structure(n, k, r, l, seed)

    if variant == "hyper":
        h, width, depth = rd.take("<3q")
        sections = dict(rd.section() for _ in range(rd.take("<I")))
        model = HyperModel.create(structure, h, DecoderConfig(width=width, depth=depth))
        try:
            model.params = np.concatenate(
                [sections["embeddings"], sections["decoder"], sections["top_logits"]]
            )
        except KeyError as exc:
            raise ModelFormatError(f"{path}: missing section {exc}") from None
    else:
        sections = dict(rd.section() for _ in range(rd.take("<I")))
        if "params" not in sections:
            raise ModelFormatError(f"{path}: missing section 'params'")
        model = PlainModel(structure, params=sections["params"])

    history = None
    if rd.take("<B"):
        count = rd.take("<Q")
        rows = rd.floats(count * 3).reshape(count, 3)
        history = [EpochRecord(int(e), t, v) for e, t, v in rows]
    return model, history
