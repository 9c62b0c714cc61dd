"""The ``ALUT`` binary tensor container.

Layout::

    b"ALUT" | version: u32 LE (=1) | header_len: u32 LE | header (UTF-8 JSON) | payload

The JSON header carries ``config``, an ordered ``tensors`` manifest (name,
shape, dtype ``"f32"``/``"f64"``, byte offset into the payload, byte length)
and an optional free-form ``extra`` object. Payloads are raw little-endian
values in manifest order.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .model import ModelConfig, check_params
from .tensor import Tensor

MAGIC = b"ALUT"
VERSION = 1
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class ContainerError(ValueError):
    """Malformed or incompatible ``ALUT`` file."""


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "f32"
    if arr.dtype == np.float64:
        return "f64"
    raise ContainerError(f"unsupported tensor dtype {arr.dtype}")


def encode_container(tensors: dict[str, np.ndarray], config: dict | None = None, extra: dict | None = None) -> bytes:
    manifest, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if not np.all(np.isfinite(arr)):
            raise ContainerError(f"tensor {name!r} has non-finite values")
        tag = _dtype_tag(arr)
        raw = arr.astype(_DTYPES[tag], copy=False).tobytes(order="C")
        manifest.append(
            {"name": name, "shape": list(arr.shape), "dtype": tag, "offset": offset, "length": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    header = {"config": config, "tensors": manifest}
    if extra is not None:
        header["extra"] = extra
    hbytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes + b"".join(chunks)


def decode_container(buf: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(buf) < 12:
        raise ContainerError("truncated file: shorter than the fixed preamble")
    if buf[:4] != MAGIC:
        raise ContainerError("bad magic")
    version, hlen = struct.unpack("<II", buf[4:12])
    if version != VERSION:
        raise ContainerError(f"version mismatch: file has {version}, reader supports {VERSION}")
    if len(buf) < 12 + hlen:
        raise ContainerError("truncated file: header extends past end of file")
    try:
        header = json.loads(buf[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"unreadable header: {exc}") from None
    payload = memoryview(buf)[12 + hlen:]
    tensors: dict[str, np.ndarray] = {}
    expected_offset = 0
    for entry in header.get("tensors", []):
        name, tag = entry["name"], entry["dtype"]
        if tag not in _DTYPES:
            raise ContainerError(f"{name}: unsupported dtype {tag!r}")
        dtype = _DTYPES[tag]
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if entry["length"] != nbytes:
            raise ContainerError(
                f"length mismatch for {name}: header declares {entry['length']} bytes, shape needs {nbytes}"
            )
        if entry["offset"] != expected_offset:
            raise ContainerError(f"{name}: offset {entry['offset']} does not follow previous tensor")
        end = expected_offset + nbytes
        if end > len(payload):
            raise ContainerError(f"truncated file: payload of {name} ends past end of file")
        arr = np.frombuffer(payload[expected_offset:end], dtype=dtype).reshape(shape)
        tensors[name] = arr.astype(dtype.newbyteorder("="), copy=True)
        expected_offset = end
    if expected_offset != len(payload):
        raise ContainerError(
            f"length mismatch: manifest covers {expected_offset} payload bytes, file has {len(payload)}"
        )
    return header, tensors


def save_container(path, tensors, config=None, extra=None) -> None:
    data = encode_container(tensors, config, extra)
    with open(path, "wb") as fh:
        fh.write(data)


def load_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise ContainerError(f"{os.fspath(path)}: {exc.strerror}") from None
    try:
        return decode_container(buf)
    except ContainerError as exc:
        raise ContainerError(f"{os.fspath(path)}: {exc}") from None


def save_weights(params: dict[str, Tensor], config: ModelConfig, path) -> None:
    check_params(params, config)
    save_container(path, {name: p.data for name, p in params.items()}, config.to_dict())


def load_weights(path) -> tuple[dict[str, Tensor], ModelConfig]:
    header, arrays = load_container(path)
    if not isinstance(header.get("config"), dict):
        raise ContainerError(f"{os.fspath(path)}: header has no model config")
    config = ModelConfig.from_dict(header["config"])
    params = {name: Tensor(arr, requires_grad=True, name=name) for name, arr in arrays.items()}
    check_params(params, config)
    return params, config
