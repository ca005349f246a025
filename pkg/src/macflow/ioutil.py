"""Deterministic file output helpers.

All text artifacts are written through :func:`atomic_write`: content goes
to a temporary file in the target directory which is then renamed over the
destination, so readers never observe a half-written file.  Floats are
serialized with :func:`format_float` (shortest round-trip repr) so that
identical runs produce bit-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from contextlib import contextmanager


def format_float(x) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(x))


@contextmanager
def atomic_write(path, mode="w"):
    """Open a temporary file and rename it onto ``path`` on success."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-",
                               suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def config_hash(config: dict) -> str:
    """Stable hash of a configuration mapping (sorted-key JSON, sha256)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"),
                      default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def standard_header(fh, kind: str, cfg_hash: str | None = None,
                    seed=None, extra: dict | None = None) -> None:
    """Write the self-describing comment preamble used by all CSV outputs."""
    fh.write(f"# kind: {kind}\n")
    fh.write("# units: nondimensional\n")
    if cfg_hash is not None:
        fh.write(f"# config_hash: {cfg_hash}\n")
    if seed is not None:
        fh.write(f"# seed: {seed}\n")
    for key, value in (extra or {}).items():
        fh.write(f"# {key}: {value}\n")
