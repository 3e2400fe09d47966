"""Binary array container (``.ldiv``) and text manifests.

Layout of an ``.ldiv`` file, all little-endian::

    offset  size      field
    0       4         magic  b"LDIV"
    4       4         version (uint32, currently 1)
    8       1         dtype   (uint8, 1 = binary64)
    9       1         rank    (uint8)
    10      8*rank    dims    (uint64 each)
    ...     8*prod    payload, row-major binary64

A manifest is a UTF-8 ``key = value`` document tying a set of arrays into a
model or dataset. Keys are unique and their order carries no meaning; array
references use the ``array.<name>`` prefix and language labels ``label.<i>``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    ManifestError,
    TrailingBytes,
    Truncated,
    UnsupportedDtype,
    UnsupportedVersion,
)

MAGIC = b"LDIV"
VERSION = 1
DTYPE_F64 = 1
ARRAY_SUFFIX = ".ldiv"
MANIFEST_SUFFIX = ".manifest"

_HEADER = struct.Struct("<4sIBB")

# Keys that hold integer dimensions, in the order they are written.
DIM_KEYS = ("D", "R", "Nc", "L", "S")


def write_array(path, data) -> None:
    """Write ``data`` as a binary64 ``.ldiv`` file."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim < 1:
        raise ValueError("arrays must have rank >= 1")
    if arr.ndim > 255:
        raise ValueError("rank does not fit in one byte")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"zero-sized dimension in shape {arr.shape}")
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_F64, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + dims + payload)


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_array(buf)


def decode_array(buf: bytes) -> np.ndarray:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"bad magic {buf[:4]!r}")
    if len(buf) < _HEADER.size:
        raise Truncated("header truncated")
    _, version, dtype, rank = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported version {version}")
    if dtype != DTYPE_F64:
        raise UnsupportedDtype(f"unsupported dtype code {dtype}")
    off = _HEADER.size
    if len(buf) < off + 8 * rank:
        raise Truncated("dimension table truncated")
    dims = struct.unpack_from(f"<{rank}Q", buf, off)
    off += 8 * rank
    count = int(np.prod(dims, dtype=np.uint64)) if rank else 1
    need = off + 8 * count
    if len(buf) < need:
        raise Truncated(f"payload has {len(buf) - off} bytes, expected {8 * count}")
    if len(buf) > need:
        raise TrailingBytes(f"{len(buf) - need} bytes after payload")
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=off)
    return arr.astype(np.float64).reshape(dims)


@dataclass
class Manifest:
    kind: str
    dims: dict = field(default_factory=dict)
    labels: list = field(default_factory=list)
    arrays: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)

    def dim(self, key):
        try:
            return self.dims[key]
        except KeyError:
            raise ManifestError(f"{self.kind} manifest lacks dimension {key!r}") from None

    def array_path(self, base: Path, name: str) -> Path:
        try:
            rel = self.arrays[name]
        except KeyError:
            raise ManifestError(f"{self.kind} manifest lacks array {name!r}") from None
        return base / rel


def _check_labels(labels):
    if len(set(labels)) != len(labels):
        raise ManifestError("language labels must be unique")
    for lab in labels:
        if not isinstance(lab, str) or not lab.strip() or lab != lab.strip() or "\n" in lab:
            raise ManifestError(f"invalid language label {lab!r}")


def format_manifest(m: Manifest) -> str:
    _check_labels(m.labels)
    lines = ["# ldivec manifest", f"kind = {m.kind}", f"version = {VERSION}"]
    for key in DIM_KEYS:
        if key in m.dims:
            lines.append(f"{key} = {int(m.dims[key])}")
    for i, lab in enumerate(m.labels):
        lines.append(f"label.{i} = {lab}")
    for key in sorted(m.fields):
        lines.append(f"{key} = {m.fields[key]}")
    for key in sorted(m.arrays):
        lines.append(f"array.{key} = {Path(m.arrays[key]).as_posix()}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> Manifest:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ManifestError(f"line {lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if key in entries:
            raise ManifestError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value

    kind = entries.pop("kind", None)
    if not kind:
        raise ManifestError("manifest has no kind")
    version = entries.pop("version", str(VERSION))
    if version != str(VERSION):
        raise ManifestError(f"unsupported manifest version {version}")

    m = Manifest(kind=kind)
    labels = {}
    for key, value in entries.items():
        if key in DIM_KEYS:
            try:
                m.dims[key] = int(value)
            except ValueError:
                raise ManifestError(f"dimension {key} is not an integer: {value!r}") from None
            if m.dims[key] < 1:
                raise ManifestError(f"dimension {key} must be >= 1")
        elif key.startswith("label."):
            try:
                labels[int(key[6:])] = value
            except ValueError:
                raise ManifestError(f"bad label key {key!r}") from None
        elif key.startswith("array."):
            m.arrays[key[6:]] = value
        else:
            m.fields[key] = value
    if labels:
        if sorted(labels) != list(range(len(labels))):
            raise ManifestError("label indices must be 0..L-1 without gaps")
        m.labels = [labels[i] for i in range(len(labels))]
    _check_labels(m.labels)
    if "L" in m.dims and m.labels and len(m.labels) != m.dims["L"]:
        raise DimensionMismatch(f"L = {m.dims['L']} but {len(m.labels)} labels given")
    return m


def read_manifest(path) -> Manifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def write_manifest(path, m: Manifest) -> None:
    Path(path).write_text(format_manifest(m), encoding="utf-8")


def data_dir(manifest_path) -> Path:
    return Path(manifest_path).parent / "data"


def save_bundle(manifest_path, kind, arrays, dims=None, labels=(), fields=None) -> Path:
    """Write ``arrays`` under ``data/`` next to the manifest, then the manifest.

    Array files are named ``<manifest stem>.<array name>.ldiv`` so several
    manifests can share one directory.
    """
    manifest_path = Path(manifest_path)
    ddir = data_dir(manifest_path)
    ddir.mkdir(parents=True, exist_ok=True)
    stem = manifest_path.name
    if stem.endswith(MANIFEST_SUFFIX):
        stem = stem[: -len(MANIFEST_SUFFIX)]
    refs = {}
    for name, arr in arrays.items():
        fname = f"{stem}.{name}{ARRAY_SUFFIX}"
        write_array(ddir / fname, arr)
        refs[name] = f"data/{fname}"
    m = Manifest(
        kind=kind,
        dims=dict(dims or {}),
        labels=list(labels),
        arrays=refs,
        fields=dict(fields or {}),
    )
    write_manifest(manifest_path, m)
    return manifest_path


def load_bundle(manifest_path, kind=None, shapes=None):
    """Read a manifest and every array it references.

    ``shapes`` maps array names to expected shapes whose entries are either
    ints or dimension keys resolved against the manifest. Missing files and
    shape mismatches are reported as :class:`ManifestError` subclasses.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no such manifest: {manifest_path}")
    m = read_manifest(manifest_path)
    if kind is not None:
        kinds = (kind,) if isinstance(kind, str) else tuple(kind)
        if m.kind not in kinds:
            raise ManifestError(f"{manifest_path}: expected kind {'|'.join(kinds)}, got {m.kind}")
    base = manifest_path.parent
    arrays = {}
    for name, rel in m.arrays.items():
        p = base / rel
        if not p.is_file():
            raise ManifestError(f"{manifest_path}: array {name!r} refers to missing file {rel}")
        arrays[name] = read_array(p)
    for name, shape in (shapes or {}).items():
        if name not in arrays:
            raise ManifestError(f"{manifest_path}: missing array {name!r}")
        expected = tuple(m.dim(s) if isinstance(s, str) else s for s in shape)
        if arrays[name].shape != expected:
            raise DimensionMismatch(
                f"{manifest_path}: array {name!r} has shape {arrays[name].shape}, "
                f"manifest declares {expected}"
            )
    return m, arrays
