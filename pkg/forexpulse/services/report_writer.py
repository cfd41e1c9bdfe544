"""Report emission: every output file is written to a temp file and renamed into place."""

import contextlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable

import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)


def write_text(path: Path, content: str) -> Path:
    """
    Atomically write ``content`` to ``path``.

    Args:
        path: Destination; parent directories are created
        content: Full file content

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    logger.debug("Wrote %s", path)
    return path


def write_lines(path: Path, lines: Iterable[str]) -> Path:
    return write_text(path, "".join(f"{line}\n" for line in lines))


def to_jsonable(payload: Any) -> Any:
    if isinstance(payload, BaseModel):
        return payload.model_dump(mode="json")
    if isinstance(payload, dict):
        return {str(k): to_jsonable(v) for k, v in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [to_jsonable(v) for v in payload]
    return payload


def dumps_json(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path, payload: Any) -> Path:
    """Write a model or plain structure as sorted, indented JSON."""
    return write_text(path, dumps_json(payload))


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    """Write a frame without its index, LF line endings."""
    return write_text(path, frame.to_csv(index=False, lineterminator="\n"))
