"""
Result files: CSV series and JSON reports.

Files of a run are staged in memory and written together by commit(); each
one goes to a temporary file in the target directory first and is renamed
into place, so a failing run leaves no partial data behind.
"""

import io
import json
import logging
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _plain(value: Any) -> Any:
    """Convert numpy scalars, arrays, enums and tuples to JSON-ready values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    return value


def csv_text(frame: pd.DataFrame) -> str:
    """CSV with a header row, ',' separators, '\\n' line ends and 17 significant digits."""
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def json_text(payload: Dict[str, Any]) -> str:
    return json.dumps(_plain(payload), indent=2) + "\n"


def atomic_write(path: Union[str, Path], text: str) -> None:
    """Write text to path through a temporary sibling file and os.replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class RunOutput:
    """Collects the files of one run and writes them on commit."""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self._staged: List[Tuple[str, str]] = []

    def add_csv(self, name: str, frame: pd.DataFrame) -> None:
        self._staged.append((name, csv_text(frame)))

    def add_json(self, name: str, payload: Dict[str, Any]) -> None:
        self._staged.append((name, json_text(payload)))

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self._staged]

    def commit(self) -> List[Path]:
        written = []
        for name, text in self._staged:
            target = self.out_dir / name
            atomic_write(target, text)
            written.append(target)
        logger.info("wrote %d files to %s", len(written), self.out_dir)
        self._staged.clear()
        return written
