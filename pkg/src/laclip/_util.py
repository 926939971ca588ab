"""Small shared helpers: atomic file writes and worker-count policy."""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager


@contextmanager
def atomic_write(path, mode: str = "wb"):
    """Write to a temp file in the target directory, then rename over path.

    Readers never observe a partially written file; on error the temp file
    is removed and the destination is untouched.
    """
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, mode) as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def worker_count() -> int:
    """Worker cap from LACLIP_THREADS; 0 or unset means one per CPU."""
    raw = os.environ.get("LACLIP_THREADS", "0").strip()
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 0:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)
