"""Canonical serialization and atomic file writes."""

import json
import os
import tempfile
from pathlib import Path


def canonical_json(obj) -> str:
    """Key-sorted, 2-space-indented JSON with a trailing newline.

    Byte-stable for equal values, so saved documents diff cleanly and
    round-trip tests can compare raw bytes.
    """
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write text via temp file + rename so readers never see partial files."""
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
