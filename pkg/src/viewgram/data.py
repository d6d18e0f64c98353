"""View-feature file I/O, synthetic dataset generation, and split handling.

Binary formats (all little-endian):

  view features ("VNF1"): magic, u32 version=1, u32 num_views, u32 dim,
      then num_views*dim float32 values row-major.
  descriptors   ("VND1"): magic, u32 version=1, u32 count, u32 dim, then per
      record a u32 id length, the UTF-8 id bytes, and dim float32 values.

The synthetic generator encodes class identity in view *order*: a confusable
class pair shares one multiset of unit-norm prototype rows but arranges them
in two cyclic orders whose 2-gram windows differ, so order-agnostic pooling
cannot tell the two classes apart while n-gram models (n >= 2) can.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, DataError, FormatError
from .rng import Rng

log = logging.getLogger(__name__)

VIEW_MAGIC = b"VNF1"
DESC_MAGIC = b"VND1"
FORMAT_VERSION = 1

CANONICAL_SPLITS = ("train", "test", "gallery", "query")


# ---------------------------------------------------------------------------
# view-feature files


def write_view_features(path, matrix) -> None:
    """Write a (num_views, dim) matrix as a VNF1 file (float32 payload)."""
    m = np.asarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise DataError(f"view features must be a matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        offset = int(np.argmin(np.isfinite(m.reshape(-1))))
        raise DataError(f"non-finite value at element {offset}")
    with open(path, "wb") as fh:
        fh.write(VIEW_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, m.shape[0], m.shape[1]))
        fh.write(m.astype("<f4").tobytes())


def read_view_features(path) -> np.ndarray:
    """Read a VNF1 file back into a float32 (num_views, dim) matrix."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != VIEW_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, num_views, dim = struct.unpack("<III", raw[4:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = 16 + 4 * num_views * dim
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw[16:], dtype="<f4").reshape(num_views, dim)
    if not np.isfinite(values).all():
        offset = int(np.argmin(np.isfinite(values.reshape(-1))))
        raise DataError(f"{path}: non-finite value at element {offset}")
    return values.astype(np.float32)


# ---------------------------------------------------------------------------
# descriptor files


def write_descriptors(path, ids: list[str], matrix) -> None:
    m = np.asarray(matrix, dtype=np.float32)
    if m.ndim != 2 or m.shape[0] != len(ids):
        raise DataError(
            f"descriptor matrix {m.shape} does not match {len(ids)} ids"
        )
    with open(path, "wb") as fh:
        fh.write(DESC_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, m.shape[0], m.shape[1]))
        for i, sid in enumerate(ids):
            encoded = sid.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(m[i].astype("<f4").tobytes())


def read_descriptors(path) -> tuple[list[str], np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != DESC_MAGIC:
        raise FormatError(f"{path}: not a descriptor file")
    version, count, dim = struct.unpack("<III", raw[4:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    ids, rows = [], np.empty((count, dim), dtype=np.float32)
    pos = 16
    for i in range(count):
        if pos + 4 > len(raw):
            raise FormatError(f"{path}: truncated at record {i}")
        (id_len,) = struct.unpack("<I", raw[pos:pos + 4])
        pos += 4
        end = pos + id_len + 4 * dim
        if end > len(raw):
            raise FormatError(f"{path}: truncated at record {i}")
        ids.append(raw[pos:pos + id_len].decode("utf-8"))
        rows[i] = np.frombuffer(raw[pos + id_len:end], dtype="<f4")
        pos = end
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return ids, rows


# ---------------------------------------------------------------------------
# manifests


def write_manifest(path, records: list[dict]) -> None:
    text = json.dumps(records, indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_manifest(path) -> list[dict]:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    seen = set()
    classes = set()
    for rec in records:
        if rec["id"] in seen:
            raise DataError(f"duplicate sample id {rec['id']!r}")
        seen.add(rec["id"])
        classes.add(rec["class_index"])
    if classes and sorted(classes) != list(range(len(classes))):
        raise DataError("class indices are not dense in [0, C)")
    return records


def load_split(manifest_path, split: str) -> list[tuple[str, int, np.ndarray]]:
    """Load (id, class_index, features) for every record in a split."""
    base = Path(manifest_path).parent
    out = []
    for rec in load_manifest(manifest_path):
        if rec["split"] == split:
            out.append((rec["id"], rec["class_index"], read_view_features(base / rec["path"])))
    return out


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int
    confusable_pairs: int
    views: int
    dim: int
    samples_per_class: Mapping[str, int]  # split name -> count
    sigma: float
    seed: int

    def __post_init__(self):
        if self.classes < 1 or self.views < 1 or self.dim < 2:
            raise ConfigurationError("need classes >= 1, views >= 1, dim >= 2")
        if self.confusable_pairs > 0:
            if self.classes % 2 != 0:
                raise ConfigurationError("confusable pairs require an even class count")
            if 2 * self.confusable_pairs > self.classes:
                raise ConfigurationError(
                    f"{self.confusable_pairs} pairs need {2 * self.confusable_pairs} classes, "
                    f"have {self.classes}"
                )
            if self.views < 3:
                raise ConfigurationError("confusable pairs need at least 3 views")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be non-negative")
        for split, count in self.samples_per_class.items():
            if split not in CANONICAL_SPLITS or count < 0:
                raise ConfigurationError(f"bad split spec {split!r}={count}")


def _cyclic_bigrams(proto: np.ndarray) -> list[bytes]:
    v = proto.shape[0]
    return sorted(
        proto[i].tobytes() + proto[(i + 1) % v].tobytes() for i in range(v)
    )


def class_prototypes(spec: SyntheticSpec) -> list[np.ndarray]:
    """Per-class (views, dim) float64 prototype sequences, unit-norm rows.

    Classes 2p and 2p+1 (p < confusable_pairs) share one row multiset; the
    second class swaps rows 0 and 2, which changes the cyclic 2-gram
    windows while leaving any order-agnostic statistic identical.
    """
    return _prototypes_with_rng(spec, Rng(spec.seed))


def generate_synthetic(spec: SyntheticSpec, out_dir) -> list[dict]:
    """Write one VNF1 file per sample and return the manifest records.

    Every sample is a uniformly random cyclic shift of its class prototype
    sequence plus elementwise Gaussian noise; all draws come from the
    seeded generator, so identical specs give byte-identical outputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = Rng(spec.seed)
    protos = _prototypes_with_rng(spec, rng)

    records = []
    for split in CANONICAL_SPLITS:
        count = spec.samples_per_class.get(split, 0)
        for ci in range(spec.classes):
            label = f"class{ci:02d}"
            for i in range(count):
                shift = rng.randint(spec.views)
                seq = np.roll(protos[ci], -shift, axis=0)
                if spec.sigma > 0:
                    seq = seq + rng.normal((spec.views, spec.dim), spec.sigma)
                sid = f"{label}-{split}-{i:03d}"
                fname = sid + ".vnf"
                write_view_features(out / fname, seq.astype(np.float32))
                records.append(
                    {
                        "id": sid,
                        "class_label": label,
                        "class_index": ci,
                        "path": fname,
                        "split": split,
                    }
                )
    return records


def _prototypes_with_rng(spec: SyntheticSpec, rng: Rng) -> list[np.ndarray]:
    protos: list[np.ndarray] = [None] * spec.classes

    def draw_unit_rows() -> np.ndarray:
        rows = rng.normal((spec.views, spec.dim))
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)

    for p in range(spec.confusable_pairs):
        for _ in range(100):
            base = draw_unit_rows()
            swapped = base.copy()
            swapped[[0, 2]] = swapped[[2, 0]]
            if _cyclic_bigrams(base) != _cyclic_bigrams(swapped):
                break
        else:  # pragma: no cover
            raise ConfigurationError("could not build a confusable pair")
        protos[2 * p] = base
        protos[2 * p + 1] = swapped
    for c in range(2 * spec.confusable_pairs, spec.classes):
        protos[c] = draw_unit_rows()
    return protos


def split_dataset(records: list[dict], fractions: Mapping[str, float], seed: int) -> list[dict]:
    """Reassign split tags by per-class stratified seeded shuffle.

    Fractions must sum to 1; each class is shuffled and cut into buckets of
    round(fraction * n) samples (the last bucket takes the remainder).  A
    class smaller than the bucket count is assigned best-effort with a
    logged warning.
    """
    if abs(sum(fractions.values()) - 1.0) > 1e-9:
        raise ConfigurationError(f"fractions sum to {sum(fractions.values())}, expected 1")
    for split in fractions:
        if split not in CANONICAL_SPLITS:
            raise ConfigurationError(f"unknown split {split!r}")

    rng = Rng(seed)
    by_class: dict[int, list[int]] = {}
    for idx, rec in enumerate(records):
        by_class.setdefault(rec["class_index"], []).append(idx)

    out = [dict(rec) for rec in records]
    splits = list(fractions.items())
    for ci in sorted(by_class):
        indices = by_class[ci]
        rng.shuffle(indices)
        if len(indices) < len(splits):
            log.warning(
                "class %d has %d samples for %d splits; assignment is best-effort",
                ci, len(indices), len(splits),
            )
        start = 0
        for si, (split, frac) in enumerate(splits):
            if si == len(splits) - 1:
                chunk = indices[start:]
            else:
                take = int(round(frac * len(indices)))
                chunk = indices[start:start + take]
                start += take
            for idx in chunk:
                out[idx]["split"] = split
    return out
