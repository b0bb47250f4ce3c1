"""Small file helpers shared by the dataset, checkpoint and report writers."""

import hashlib
import os
import tempfile
from pathlib import Path
from typing import Any, Union

import orjson

from .errors import CVRIOError

PathLike = Union[str, os.PathLike]

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write ``data`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as e:
        raise CVRIOError(str(path), f"write failed: {e}", e) from e


def write_json(path: PathLike, payload: Any) -> None:
    atomic_write_bytes(path, orjson.dumps(payload, option=JSON_OPTIONS | orjson.OPT_INDENT_2) + b"\n")


def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                digest.update(chunk)
    except OSError as e:
        raise CVRIOError(str(path), f"read failed: {e}", e) from e
    return digest.hexdigest()
