"""Advisory file locking and atomic replace, shared by the workboard and skill bank.

Writers serialise through an exclusive flock on a sidecar lockfile and commit
via write-temp-then-rename, so readers never block and always observe a fully
committed document.
"""
from __future__ import annotations

import fcntl
import os
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

from .errors import LockTimeout

DEFAULT_LOCK_WAIT_S = 10.0
_POLL_INTERVAL_S = 0.005


@contextmanager
def exclusive_lock(lock_path: Path, wait_s: float = DEFAULT_LOCK_WAIT_S):
    """Acquire an exclusive advisory lock, polling until *wait_s* elapses.

    flock is per open file description, so this excludes both other
    processes and other threads of this process.
    """
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    fd = open(lock_path, "a+")
    try:
        deadline = time.monotonic() + wait_s
        while True:
            try:
                fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
                break
            except BlockingIOError:
                if time.monotonic() >= deadline:
                    raise LockTimeout(f"could not lock {lock_path} within {wait_s}s")
                time.sleep(_POLL_INTERVAL_S)
        yield
    finally:
        try:
            fcntl.flock(fd, fcntl.LOCK_UN)
        finally:
            fd.close()


def atomic_write_text(path: Path, content: str) -> None:
    """Write *content* to *path* via a temp file in the same directory + rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(content)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, str(path))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
