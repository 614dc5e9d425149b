"""Atomic file output and lossless float formatting for CSV/JSON artifacts."""

import numbers
import os
import tempfile


def fmt(x):
    """17 significant digits: round-trips every float64."""
    return format(float(x), ".17g")


def atomic_write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(c):
    if isinstance(c, str):
        return c
    if isinstance(c, numbers.Integral):
        return str(int(c))
    return fmt(c)


def write_csv(path, header, rows):
    """Write rows of already-formatted or numeric cells; floats use ``fmt``."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(c) for c in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
