"""Structured text records and raster file formats.

Every artifact the workbench writes (camera parameters, scene descriptions,
prompt records, dataset rows, metrics reports, plans, session histories) is
a canonical JSON record: sorted keys, compact separators, floats via repr.
Re-serializing the same data is byte-identical, which the determinism
guarantees depend on.

RGB rasters are stored as binary PPM (P6); depth rasters use the float32
format implemented in :mod:`crayonbench.geometry`.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def canonical_dumps(obj) -> str:
    """Canonical single-line JSON used for all structured text records."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dumps_record(kind: str, payload: dict) -> str:
    return canonical_dumps({"record": kind, **payload})


def loads_record(text: str, expect: str | None = None) -> dict:
    obj = json.loads(text)
    if not isinstance(obj, dict) or "record" not in obj:
        raise ValueError("not a structured record (missing 'record' tag)")
    if expect is not None and obj["record"] != expect:
        raise ValueError(f"expected record kind {expect!r}, got {obj['record']!r}")
    return obj


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fingerprint(config: dict) -> str:
    """Short stable fingerprint of a configuration record."""
    return sha256_hex(canonical_dumps(config).encode("utf-8"))[:16]


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_ppm(path: Path, image: np.ndarray) -> bytes:
    """Write an (H, W, 3) uint8 array as binary PPM; returns the bytes written."""
    blob = ppm_bytes(image)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return blob


def ppm_bytes(image: np.ndarray) -> bytes:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) uint8 image")
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes(order="C")


def read_ppm(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if not blob.startswith(b"P6"):
        raise ValueError("not a binary PPM file")
    # Header: magic, width, height, maxval, each separated by whitespace.
    parts: list[bytes] = []
    idx = 2
    while len(parts) < 3:
        while idx < len(blob) and blob[idx : idx + 1].isspace():
            idx += 1
        if blob[idx : idx + 1] == b"#":
            while idx < len(blob) and blob[idx : idx + 1] != b"\n":
                idx += 1
            continue
        start = idx
        while idx < len(blob) and not blob[idx : idx + 1].isspace():
            idx += 1
        parts.append(blob[start:idx])
    idx += 1  # single whitespace after maxval
    w, h, maxval = (int(p) for p in parts)
    if maxval != 255:
        raise ValueError("only 8-bit PPM supported")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=idx)
    return data.reshape(h, w, 3).copy()


def png_bytes(image: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 array as PNG (for the browser-facing service)."""
    from io import BytesIO

    from PIL import Image

    buf = BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
