"""Binary embedding interchange files plus JSON companion manifests.

Fixed little-endian layout, readable from any language without
dependencies:

    offset 0   magic  b"VLEB"
    offset 4   u16    format version (currently 1)
    offset 6   u32    D (embedding dimension)
    offset 10  u64    N (record count)
    offset 18  u32    C (number of classes)
    offset 22  f64    temperature
    offset 30  N records of (u32 label, D consecutive f32 components)

The companion manifest lives next to the payload as
``<stem>.manifest.json`` and carries task name, class names, split tag and
source model id.
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from pathlib import Path

import numpy as np

from .core import EmbeddingTable, TextPrototypeSet
from .errors import BadMagic, EmptyClassTexts, NormViolation, TruncatedPayload

MAGIC = b"VLEB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQId")

# Norm deviation bands for stored vectors: re-normalize above _RENORM,
# warn above _WARN, reject above _REJECT.
_RENORM = 1e-5
_WARN = 1e-4
_REJECT = 1e-2


def manifest_path(path) -> Path:
    return Path(path).with_suffix(".manifest.json")


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("label", "<u4"), ("vec", "<f4", (dim,))])


def write_embeddings(path, vectors: np.ndarray, labels: np.ndarray, num_classes: int,
                     temperature: float, manifest: dict | None = None) -> Path:
    """Write one interchange file (atomic temp-file rename) and its manifest."""
    path = Path(path)
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    labels = np.ascontiguousarray(labels, dtype=np.uint32)
    n, dim = vectors.shape
    if labels.shape != (n,):
        raise ValueError("labels must match vector rows")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    records = np.empty(n, dtype=_record_dtype(dim))
    records["label"] = labels
    records["vec"] = vectors
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dim, n, num_classes, float(temperature)))
        fh.write(records.tobytes())
    os.replace(tmp, path)
    if manifest is not None:
        mpath = manifest_path(path)
        tmp = mpath.with_name(mpath.name + ".tmp")
        tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        os.replace(tmp, mpath)
    return path


def write_table(path, table: EmbeddingTable, temperature: float,
                manifest: dict | None = None) -> Path:
    return write_embeddings(path, table.vectors, table.labels, table.num_classes,
                            temperature, manifest)


def _load_raw(path) -> tuple[np.ndarray, np.ndarray, int, float]:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(f"{path}: {len(blob)} bytes is shorter than the header")
    magic, version, dim, n, num_classes, temperature = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagic(f"{path}: magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise BadMagic(f"{path}: unsupported format version {version}")
    if dim == 0 or num_classes == 0:
        raise TruncatedPayload(f"{path}: zero dimension or class count")
    expected = _HEADER.size + n * (4 + 4 * dim)
    if len(blob) != expected:
        raise TruncatedPayload(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    records = np.frombuffer(blob, dtype=_record_dtype(dim), count=n, offset=_HEADER.size)
    vectors = np.ascontiguousarray(records["vec"])
    labels = records["label"].astype(np.int64)
    if temperature <= 0 or not np.isfinite(temperature):
        raise TruncatedPayload(f"{path}: invalid stored temperature {temperature!r}")
    return vectors, labels, int(num_classes), float(temperature)


def _enforce_norms(vectors: np.ndarray, origin: str) -> np.ndarray:
    """Re-normalize rows drifting beyond the table tolerance; warn past
    _WARN, reject past _REJECT. Rows within tolerance stay bit-identical."""
    if vectors.shape[0] == 0:
        return vectors
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    dev = np.abs(norms - 1.0)
    worst = float(dev.max())
    if worst > _REJECT:
        raise NormViolation(f"{origin}: stored norms deviate up to {worst:.3g}")
    if worst > _WARN:
        warnings.warn(f"{origin}: re-normalizing {int((dev > _WARN).sum())} rows "
                      f"with norm deviation up to {worst:.3g}", stacklevel=3)
    fix = dev > _RENORM
    if np.any(fix):
        fixed = vectors[fix].astype(np.float64)
        vectors = vectors.copy()
        vectors[fix] = (fixed / norms[fix, None]).astype(np.float32)
    return vectors


def _read_manifest(path) -> dict | None:
    mpath = manifest_path(path)
    if mpath.exists():
        return json.loads(mpath.read_text())
    return None


def load_embeddings(path) -> tuple[EmbeddingTable, float, dict | None]:
    """Read a visual interchange file into a validated table.

    Returns (table, temperature, manifest). Labels must already index
    classes below the stored class count.
    """
    vectors, labels, num_classes, temperature = _load_raw(path)
    vectors = _enforce_norms(vectors, str(path))
    table = EmbeddingTable.create(vectors, labels, num_classes)
    return table, temperature, _read_manifest(path)


def load_text_prototypes(path, renormalize: bool = True,
                         temperature_override: float | None = None
                         ) -> tuple[TextPrototypeSet, dict | None]:
    """Read a text interchange file (one or more rows per class) into a
    prototype set. Every class must have at least one row."""
    vectors, labels, num_classes, temperature = _load_raw(path)
    vectors = _enforce_norms(vectors, str(path))
    per_class = []
    for c in range(num_classes):
        rows = vectors[labels == c].astype(np.float64)
        if rows.shape[0] == 0:
            raise EmptyClassTexts(f"{path}: class {c} has no text rows")
        per_class.append(rows)
    tau = temperature if temperature_override is None else temperature_override
    texts = TextPrototypeSet.from_texts(per_class, temperature=tau, renormalize=renormalize)
    return texts, _read_manifest(path)
