"""On-disk data model: FVM1 matrices, descriptor-set indices, dataset manifests.

FVM1 is a minimal binary matrix format readable from any language without
third-party dependencies:

    bytes 0-3   ASCII magic "FVM1"
    bytes 4-7   rows, unsigned 32-bit little-endian
    bytes 8-11  cols, unsigned 32-bit little-endian
    then        rows*cols IEEE-754 float64 little-endian, row-major

Set indices and manifests are UTF-8 tab-separated text with no quoting.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError, FvmFormatError

MAGIC = b"FVM1"
_HEADER = struct.Struct("<4sII")

SPLITS = ("train", "validation", "test")


def check_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D finite float64 array with rows, cols >= 1."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DataValidationError(f"{name} must be 2-D, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DataValidationError(f"{name} must have rows >= 1 and cols >= 1, got {a.shape}")
    if not np.isfinite(a).all():
        raise DataValidationError(f"{name} contains non-finite values")
    return np.ascontiguousarray(a)


def save_matrix(m, path) -> None:
    """Write a matrix in FVM1 format. Rejects empty or non-finite input."""
    a = check_matrix(m)
    rows, cols = a.shape
    if rows >= 2**32 or cols >= 2**32:
        raise DataValidationError(f"matrix dimensions {a.shape} exceed the uint32 header range")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(a.astype("<f8", copy=False).tobytes())


def load_matrix(path) -> np.ndarray:
    """Read an FVM1 matrix; round-trips bit-exactly with save_matrix."""
    with open(path, "rb") as fh:
        data = fh.read()
    return matrix_from_bytes(data, name=str(path))


def matrix_from_bytes(data: bytes, name: str = "<bytes>") -> np.ndarray:
    if len(data) < _HEADER.size:
        raise FvmFormatError(f"{name}: truncated header ({len(data)} bytes)")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FvmFormatError(f"{name}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + rows * cols * 8
    if len(data) != expected:
        raise FvmFormatError(f"{name}: payload is {len(data)} bytes, expected {expected}")
    if rows < 1 or cols < 1:
        raise DataValidationError(f"{name}: empty matrix ({rows}x{cols})")
    a = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    if not np.isfinite(a).all():
        raise DataValidationError(f"{name}: payload contains non-finite values")
    return a.astype(np.float64, copy=True)


def matrix_to_bytes(m) -> bytes:
    a = check_matrix(m)
    return _HEADER.pack(MAGIC, a.shape[0], a.shape[1]) + a.astype("<f8", copy=False).tobytes()


def read_matrix_block(fh, name: str = "<stream>") -> np.ndarray:
    """Read one FVM1 block from an open binary stream (for container files)."""
    head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise FvmFormatError(f"{name}: truncated block header")
    magic, rows, cols = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FvmFormatError(f"{name}: bad block magic {magic!r}")
    payload = fh.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise FvmFormatError(f"{name}: truncated block payload")
    if rows < 1 or cols < 1:
        raise DataValidationError(f"{name}: empty block ({rows}x{cols})")
    a = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
    if not np.isfinite(a).all():
        raise DataValidationError(f"{name}: block contains non-finite values")
    return a.astype(np.float64, copy=True)


@dataclass(frozen=True)
class DescriptorSetIndex:
    """Groups rows of a matrix into named descriptor sets.

    entries are (set_id, row_begin, row_end), 0-based, end-exclusive,
    non-overlapping, with unique set ids.
    """

    entries: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        seen = set()
        for set_id, begin, end in self.entries:
            if set_id in seen:
                raise DataValidationError(f"duplicate set id {set_id!r}")
            seen.add(set_id)
            if begin < 0 or end <= begin:
                raise DataValidationError(f"set {set_id!r}: bad range [{begin}, {end})")
        spans = sorted((begin, end, set_id) for set_id, begin, end in self.entries)
        for (b0, e0, id0), (b1, e1, id1) in zip(spans, spans[1:]):
            if b1 < e0:
                raise DataValidationError(f"sets {id0!r} and {id1!r} overlap")

    @property
    def set_ids(self) -> list[str]:
        return [set_id for set_id, _, _ in self.entries]

    def extract(self, matrix: np.ndarray):
        """Yield (set_id, rows) slices in entry order. Checks bounds."""
        n = matrix.shape[0]
        for set_id, begin, end in self.entries:
            if end > n:
                raise DataValidationError(
                    f"set {set_id!r} range [{begin}, {end}) exceeds matrix rows {n}"
                )
            yield set_id, matrix[begin:end]


@dataclass(frozen=True)
class DatasetManifest:
    """Sentence-image pairing with a train/validation/test split per sentence."""

    pairs: tuple[tuple[str, str, str], ...]

    def __post_init__(self):
        seen = set()
        for sentence_id, _image_id, split in self.pairs:
            if sentence_id in seen:
                raise DataValidationError(f"duplicate sentence id {sentence_id!r}")
            seen.add(sentence_id)
            if split not in SPLITS:
                raise DataValidationError(
                    f"sentence {sentence_id!r}: unknown split {split!r}, expected one of {SPLITS}"
                )

    def image_of(self, sentence_id: str) -> str:
        for sid, image_id, _ in self.pairs:
            if sid == sentence_id:
                return image_id
        raise KeyError(sentence_id)

    def sentences_of(self, image_id: str) -> list[str]:
        return [sid for sid, iid, _ in self.pairs if iid == image_id]

    def sentence_to_image(self) -> dict[str, str]:
        return {sid: iid for sid, iid, _ in self.pairs}

    def image_to_sentences(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for sid, iid, _ in self.pairs:
            out.setdefault(iid, []).append(sid)
        return out

    def subset(self, split: str) -> "DatasetManifest":
        if split not in SPLITS:
            raise DataValidationError(f"unknown split {split!r}")
        return DatasetManifest(tuple(p for p in self.pairs if p[2] == split))


def _read_tsv_rows(path, n_fields: int):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise FvmFormatError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields, got {len(fields)}"
                )
            rows.append(fields)
    return rows


def load_set_index(path) -> DescriptorSetIndex:
    """Load `set_id<TAB>row_begin<TAB>row_end` lines."""
    entries = []
    for set_id, begin_s, end_s in _read_tsv_rows(path, 3):
        try:
            begin, end = int(begin_s), int(end_s)
        except ValueError as exc:
            raise FvmFormatError(f"{path}: non-integer range for set {set_id!r}") from exc
        entries.append((set_id, begin, end))
    return DescriptorSetIndex(tuple(entries))


def save_set_index(index: DescriptorSetIndex, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for set_id, begin, end in index.entries:
            fh.write(f"{set_id}\t{begin}\t{end}\n")


def load_manifest(path) -> DatasetManifest:
    """Load `sentence_id<TAB>image_id<TAB>split` lines."""
    return DatasetManifest(tuple((s, i, sp) for s, i, sp in _read_tsv_rows(path, 3)))


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sentence_id, image_id, split in manifest.pairs:
            fh.write(f"{sentence_id}\t{image_id}\t{split}\n")


def load_ids(path) -> list[str]:
    """Load one id per line (single-column TSV)."""
    ids = [row[0] for row in _read_tsv_rows(path, 1)]
    if len(set(ids)) != len(ids):
        raise DataValidationError(f"{path}: duplicate ids")
    return ids


def save_ids(ids, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for one in ids:
            fh.write(f"{one}\n")
