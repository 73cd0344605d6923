#!/usr/bin/env python3
"""
Shared utilities for the solver tools
"""

import os
import json
import tempfile
from pathlib import Path
from datetime import datetime
from typing import Any


def save_json(data: Any, path: Path, indent: int = 2) -> None:
    """Save data to JSON file"""
    atomic_write_text(path, json.dumps(data, indent=indent, ensure_ascii=False, default=str))


def timestamp() -> str:
    """Get current ISO timestamp"""
    return datetime.now().isoformat()


def ensure_dir(path: Path) -> Path:
    """Ensure directory exists, create if needed"""
    path.mkdir(parents=True, exist_ok=True)
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    """Write text to a temp file in the target directory, then rename over path"""
    path = Path(path)
    ensure_dir(path.parent)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def format_float(value: float) -> str:
    """Shortest repr that round-trips a float exactly"""
    return repr(float(value))
