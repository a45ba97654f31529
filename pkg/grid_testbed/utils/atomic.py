"""Atomic file writes: write a temp file in the target directory, then rename."""

import os
import shutil
import tempfile
from pathlib import Path
from typing import Union


def atomic_write_bytes(path: Union[str, Path], content: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix='.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(content)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except Exception:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: Union[str, Path], content: str) -> None:
    atomic_write_bytes(path, content.encode('utf-8'))


def atomic_copy_file(source: Union[str, Path], path: Union[str, Path]) -> None:
    """copies through the same hidden temp naming, never leaving a partial file behind"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix='.', suffix='.tmp')
    os.close(fd)
    try:
        shutil.copyfile(source, tmp)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
