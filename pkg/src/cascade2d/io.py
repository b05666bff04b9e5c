"""Snapshot files, atomic writes and the flat key=value config dialect.

Snapshot layout (little endian)::

    4s  magic b"CSLB"
    u16 format version (1)
    u32 n
    f64 time
    f64 viscosity
    u8  kind, 0 = scalar, 1 = vector
    f64 samples, row-major, n*n (scalar) or 2*n*n (vector, x component first)
"""
from __future__ import annotations

import contextlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import FieldError, check_field

MAGIC = b"CSLB"
VERSION = 1
_HEADER = struct.Struct("<4sHIddB")


class ConfigError(ValueError):
    """Malformed key=value configuration."""


@contextlib.contextmanager
def atomic_open(path, mode: str = "w"):
    """Write to a temporary sibling and rename over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        kw = {} if "b" in mode else {"newline": "", "encoding": "utf-8"}
        with os.fdopen(fd, mode, **kw) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@dataclass
class Snapshot:
    data: np.ndarray
    time: float
    viscosity: float

    @property
    def n(self) -> int:
        return self.data.shape[-1]


def encode_snapshot(data: np.ndarray, time: float = 0.0, viscosity: float = 0.0) -> bytes:
    check_field(data)
    kind = 1 if data.ndim == 3 else 0
    head = _HEADER.pack(MAGIC, VERSION, data.shape[-1], float(time), float(viscosity), kind)
    return head + np.ascontiguousarray(data, dtype="<f8").tobytes()


def decode_snapshot(buf: bytes) -> Snapshot:
    if len(buf) < _HEADER.size:
        raise FieldError("snapshot truncated before end of header")
    magic, version, n, time, nu, kind = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FieldError(f"bad snapshot magic {magic!r}")
    if version != VERSION:
        raise FieldError(f"unsupported snapshot version {version}")
    if kind not in (0, 1):
        raise FieldError(f"unknown field kind {kind}")
    shape = (n, n) if kind == 0 else (2, n, n)
    count = int(np.prod(shape))
    body = buf[_HEADER.size:]
    if len(body) != 8 * count:
        raise FieldError(f"snapshot body has {len(body)} bytes, expected {8 * count}")
    data = np.frombuffer(body, dtype="<f8").astype(float).reshape(shape)
    check_field(data)
    return Snapshot(data=data, time=time, viscosity=nu)


def write_snapshot(path, data: np.ndarray, time: float = 0.0, viscosity: float = 0.0) -> None:
    payload = encode_snapshot(data, time, viscosity)
    with atomic_open(path, "wb") as fh:
        fh.write(payload)


def read_snapshot(path) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes())


def write_json(path, obj) -> None:
    with atomic_open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# -- key=value config ----------------------------------------------------------

def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Values stay strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not key.replace("_", "").replace(".", "").replace("-", "").isalnum():
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def format_config(cfg: dict) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(cfg.items()))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def coerce(value, kind, key: str = "?"):
    """Convert a config string to ``kind`` (int, float, bool, str or 'floats')."""
    if not isinstance(value, str):
        return value
    try:
        if kind is bool:
            v = value.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind == "floats":
            return [float(x) for x in value.split(",") if x.strip()]
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} as {getattr(kind, '__name__', kind)}") from exc
