"""Single-file artifact container: JSON manifest plus named binary arrays.

A container is a ZIP archive holding ``manifest.json`` and one raw
little-endian binary blob per array (``arrays/<name>``). The manifest
records each array's shape and dtype ("<f4" or "<f8"), so a reader needs
nothing beyond the archive itself. Entries carry a fixed timestamp and no
compression, which makes the bytes a pure function of the content: equal
inputs always produce byte-identical files.

Writes are atomic: the archive is staged next to the target and moved
into place with ``os.replace``.
"""

from __future__ import annotations

import json
import os
import tempfile
import zipfile

import numpy as np

__all__ = ["ContainerError", "read_container", "write_container"]

_ALLOWED_DTYPES = ("<f4", "<f8")
_EPOCH = (1980, 1, 1, 0, 0, 0)  # zipfile's earliest representable time


class ContainerError(ValueError):
    """Malformed or inconsistent container file."""


def write_container(path: str, manifest: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write `manifest` and `arrays` to `path` atomically.

    Array values must already carry their storage dtype ("<f4" or "<f8");
    shapes and dtypes are recorded in the manifest under "arrays". The
    manifest must not already contain an "arrays" key.
    """
    if "arrays" in manifest:
        raise ContainerError("manifest must not predefine the 'arrays' section")
    index = {}
    for name, arr in arrays.items():
        dtype = arr.dtype.newbyteorder("<").str
        if dtype not in _ALLOWED_DTYPES:
            raise ContainerError(f"array {name!r} has unsupported dtype {arr.dtype}")
        index[name] = {"shape": list(arr.shape), "dtype": dtype}
    payload = dict(manifest)
    payload["arrays"] = index
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"

    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            with zipfile.ZipFile(handle, "w", compression=zipfile.ZIP_STORED) as archive:
                _write_entry(archive, "manifest.json", text.encode("utf-8"))
                for name in sorted(arrays):
                    data = np.ascontiguousarray(arrays[name]).tobytes()
                    _write_entry(archive, f"arrays/{name}", data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_container(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container back as (manifest, arrays).

    Arrays come back with their stored dtype; the returned manifest no
    longer carries the internal "arrays" section. Raises
    ``ContainerError`` on any structural mismatch.
    """
    try:
        archive = zipfile.ZipFile(path, "r")
    except (zipfile.BadZipFile, OSError) as exc:
        raise ContainerError(f"cannot open container {path}: {exc}") from None
    with archive:
        try:
            text = archive.read("manifest.json").decode("utf-8")
        except KeyError:
            raise ContainerError(f"{path}: missing manifest.json") from None
        try:
            manifest = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ContainerError(f"{path}: manifest is not valid JSON: {exc}") from None
        index = manifest.pop("arrays", None)
        if not isinstance(index, dict):
            raise ContainerError(f"{path}: manifest lacks an 'arrays' section")
        arrays = {}
        for name, meta in index.items():
            dtype = meta.get("dtype")
            if dtype not in _ALLOWED_DTYPES:
                raise ContainerError(f"{path}: array {name!r} has unsupported dtype {dtype}")
            shape = tuple(meta.get("shape", ()))
            try:
                raw = archive.read(f"arrays/{name}")
            except KeyError:
                raise ContainerError(f"{path}: array {name!r} listed but missing") from None
            expected = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
            if len(raw) != expected:
                raise ContainerError(
                    f"{path}: array {name!r} holds {len(raw)} bytes, expected {expected}"
                )
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape)
    return manifest, arrays


def _write_entry(archive: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    archive.writestr(info, data)
