"""Portable on-disk bundle: projection matrices, embeddings, and texts.

A bundle directory is the handoff point between whatever extracted the
model internals and this toolkit.  Layout:

    manifest.json         top-level metadata and file names
    w_kq.f64              merged key-query projection, d x d
    w_v.f64               value projection, d' x d
    demo_embeddings.f64   M x d
    test_embeddings.f64   N x d
    demos.jsonl           {"id", "problem", "solution"} per line
    tests.jsonl           {"id", "problem"} per line

All .f64 files are raw row-major little-endian 64-bit floats, so a
write/load round trip preserves every bit.  Loaded objects are treated
as immutable and can be shared freely across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

_F64 = np.dtype("<f8")

_ARRAY_FILES = ("w_kq", "w_v", "demo_embeddings", "test_embeddings")
_TEXT_FILES = ("demos", "tests")

_DEFAULT_FILENAMES = {
    "w_kq": "w_kq.f64",
    "w_v": "w_v.f64",
    "demo_embeddings": "demo_embeddings.f64",
    "test_embeddings": "test_embeddings.f64",
    "demos": "demos.jsonl",
    "tests": "tests.jsonl",
}


class BundleError(ValueError):
    """A bundle directory or in-memory bundle failed validation."""


def _as_f64(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        flat = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise BundleError(f"{name}: non-finite value at flat index {flat}")
    return arr


@dataclass(frozen=True)
class ProjectionBundle:
    """Attention projections of one model layer, with provenance text."""

    w_kq: np.ndarray  # (d, d) merged key-query projection
    w_v: np.ndarray   # (d_prime, d) value projection
    source: str = ""
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "w_kq", _as_f64(self.w_kq, "w_kq"))
        object.__setattr__(self, "w_v", _as_f64(self.w_v, "w_v"))
        if self.w_kq.ndim != 2 or self.w_kq.shape[0] != self.w_kq.shape[1]:
            raise BundleError(f"w_kq must be square, got shape {self.w_kq.shape}")
        if self.w_v.ndim != 2 or self.w_v.shape[1] != self.w_kq.shape[0]:
            raise BundleError(
                f"w_v must be d_prime x d with d={self.w_kq.shape[0]}, got shape {self.w_v.shape}"
            )
        if self.d < 1 or self.d_prime < 1:
            raise BundleError("dimensions d and d_prime must be at least 1")

    @property
    def d(self) -> int:
        return self.w_kq.shape[0]

    @property
    def d_prime(self) -> int:
        return self.w_v.shape[0]


@dataclass(frozen=True)
class Demonstration:
    id: str
    problem: str
    solution: str
    embedding: np.ndarray  # (d,)

    def __post_init__(self):
        object.__setattr__(self, "embedding", np.asarray(self.embedding, dtype=np.float64))


@dataclass(frozen=True)
class TestItem:
    id: str
    problem: str
    embedding: np.ndarray  # (d,)

    __test__ = False  # keep pytest from collecting this as a test case

    def __post_init__(self):
        object.__setattr__(self, "embedding", np.asarray(self.embedding, dtype=np.float64))


@dataclass(frozen=True)
class DemonstrationPool:
    """All candidate demonstrations with their embeddings."""

    items: tuple[Demonstration, ...]
    d: int

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        seen = set()
        for idx, item in enumerate(self.items):
            if item.id in seen:
                raise BundleError(f"duplicate demonstration id {item.id!r} at index {idx}")
            seen.add(item.id)
            _check_embedding(item.embedding, self.d, f"demonstration {idx} (id {item.id!r})")

    def __len__(self) -> int:
        return len(self.items)

    def embedding_matrix(self) -> np.ndarray:
        if not self.items:
            return np.zeros((0, self.d))
        return np.stack([item.embedding for item in self.items])


def _check_embedding(vec, d: int, who: str):
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != d:
        raise BundleError(f"{who}: embedding has length {arr.size}, expected {d}")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise BundleError(f"{who}: non-finite embedding value at component {int(bad[0])}")


def validate_tests(tests, d: int):
    seen = set()
    for idx, t in enumerate(tests):
        if t.id in seen:
            raise BundleError(f"duplicate test id {t.id!r} at index {idx}")
        seen.add(t.id)
        _check_embedding(t.embedding, d, f"test {idx} (id {t.id!r})")


def write_bundle(bundle: ProjectionBundle, pool: DemonstrationPool,
                 tests: list[TestItem], path) -> None:
    """Write a bundle directory that load_bundle restores bit-exactly."""
    if pool.d != bundle.d:
        raise BundleError(f"pool dimension {pool.d} does not match bundle d={bundle.d}")
    validate_tests(tests, bundle.d)

    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    demo_emb = pool.embedding_matrix()
    test_emb = (np.stack([t.embedding for t in tests])
                if tests else np.zeros((0, bundle.d)))

    manifest = {
        "format_version": bundle.format_version,
        "d": bundle.d,
        "d_prime": bundle.d_prime,
        "m": len(pool),
        "n": len(tests),
        "dtype": "f64",
        "files": dict(_DEFAULT_FILENAMES),
        "source": bundle.source,
    }
    arrays = {
        "w_kq": bundle.w_kq,
        "w_v": bundle.w_v,
        "demo_embeddings": demo_emb,
        "test_embeddings": test_emb,
    }
    for key, arr in arrays.items():
        (root / _DEFAULT_FILENAMES[key]).write_bytes(
            np.ascontiguousarray(arr, dtype=_F64).tobytes())

    with open(root / _DEFAULT_FILENAMES["demos"], "w", encoding="utf-8") as f:
        for item in pool.items:
            f.write(json.dumps({"id": item.id, "problem": item.problem,
                                "solution": item.solution}, ensure_ascii=False) + "\n")
    with open(root / _DEFAULT_FILENAMES["tests"], "w", encoding="utf-8") as f:
        for t in tests:
            f.write(json.dumps({"id": t.id, "problem": t.problem},
                               ensure_ascii=False) + "\n")

    with open(root / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False)
        f.write("\n")


def load_bundle(path) -> tuple[ProjectionBundle, DemonstrationPool, list[TestItem]]:
    """Load and fully validate a bundle directory.

    Every malformed input is reported with the offending file (and the
    index or id within it) via BundleError; nothing is silently accepted.
    """
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise BundleError(f"missing file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BundleError(f"manifest.json: invalid JSON ({exc})") from exc

    for key in ("format_version", "d", "d_prime", "m", "n", "dtype", "files"):
        if key not in manifest:
            raise BundleError(f"manifest.json: missing key {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise BundleError(
            f"manifest.json: unsupported format_version {manifest['format_version']!r}")
    if manifest["dtype"] != "f64":
        raise BundleError(f"manifest.json: unsupported dtype {manifest['dtype']!r}")

    d, d_prime = manifest["d"], manifest["d_prime"]
    m, n = manifest["m"], manifest["n"]
    for name, value in (("d", d), ("d_prime", d_prime)):
        if not isinstance(value, int) or value < 1:
            raise BundleError(f"manifest.json: {name} must be a positive integer, got {value!r}")
    for name, value in (("m", m), ("n", n)):
        if not isinstance(value, int) or value < 0:
            raise BundleError(f"manifest.json: {name} must be a non-negative integer, got {value!r}")

    files = manifest["files"]
    for key in _ARRAY_FILES + _TEXT_FILES:
        if key not in files:
            raise BundleError(f"manifest.json: files entry {key!r} missing")

    shapes = {
        "w_kq": (d, d),
        "w_v": (d_prime, d),
        "demo_embeddings": (m, d),
        "test_embeddings": (n, d),
    }
    arrays = {}
    for key, shape in shapes.items():
        arrays[key] = _read_array(root, files[key], shape)

    demo_records = _read_jsonl(root, files["demos"], ("id", "problem", "solution"), m)
    test_records = _read_jsonl(root, files["tests"], ("id", "problem"), n)

    _check_matrix_finite(arrays["w_kq"], files["w_kq"])
    _check_matrix_finite(arrays["w_v"], files["w_v"])
    _check_rows_finite(arrays["demo_embeddings"], files["demo_embeddings"],
                       [r["id"] for r in demo_records], "demonstration")
    _check_rows_finite(arrays["test_embeddings"], files["test_embeddings"],
                       [r["id"] for r in test_records], "test")

    bundle = ProjectionBundle(w_kq=arrays["w_kq"], w_v=arrays["w_v"],
                              source=manifest.get("source", ""),
                              format_version=manifest["format_version"])
    items = tuple(
        Demonstration(id=rec["id"], problem=rec["problem"], solution=rec["solution"],
                      embedding=arrays["demo_embeddings"][i])
        for i, rec in enumerate(demo_records)
    )
    pool = DemonstrationPool(items=items, d=d)
    tests = [
        TestItem(id=rec["id"], problem=rec["problem"],
                 embedding=arrays["test_embeddings"][i])
        for i, rec in enumerate(test_records)
    ]
    validate_tests(tests, d)
    return bundle, pool, tests


def _read_array(root: Path, filename: str, shape: tuple[int, int]) -> np.ndarray:
    fp = root / filename
    if not fp.is_file():
        raise BundleError(f"missing file: {fp}")
    raw = fp.read_bytes()
    expected = shape[0] * shape[1] * 8
    if len(raw) != expected:
        raise BundleError(
            f"{filename}: expected {expected} bytes for shape {shape[0]}x{shape[1]} f64, "
            f"found {len(raw)} bytes")
    arr = np.frombuffer(raw, dtype=_F64).reshape(shape)
    return arr.astype(np.float64, copy=True)


def _read_jsonl(root: Path, filename: str, keys: tuple[str, ...], expected: int) -> list[dict]:
    fp = root / filename
    if not fp.is_file():
        raise BundleError(f"missing file: {fp}")
    records = []
    seen_ids = set()
    with open(fp, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BundleError(f"{filename}: invalid JSON at line {lineno} ({exc})") from exc
            for key in keys:
                if key not in rec:
                    raise BundleError(f"{filename}: line {lineno} missing key {key!r}")
                if not isinstance(rec[key], str):
                    raise BundleError(f"{filename}: line {lineno} key {key!r} must be a string")
            if rec["id"] in seen_ids:
                raise BundleError(f"{filename}: duplicate id {rec['id']!r} at line {lineno}")
            seen_ids.add(rec["id"])
            records.append(rec)
    if len(records) != expected:
        raise BundleError(
            f"{filename}: manifest declares {expected} records, found {len(records)}")
    return records


def _check_matrix_finite(arr: np.ndarray, filename: str):
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise BundleError(f"{filename}: non-finite value at flat index {int(bad[0])}")


def _check_rows_finite(arr: np.ndarray, filename: str, ids: list[str], kind: str):
    for row in range(arr.shape[0]):
        bad = np.flatnonzero(~np.isfinite(arr[row]))
        if bad.size:
            raise BundleError(
                f"{filename}: non-finite value in {kind} {row} (id {ids[row]!r}) "
                f"at component {int(bad[0])}")
