"""CSV/JSON writers for run artifacts.

Every file embeds the configuration that produced it: JSON documents carry
a ``config`` member, CSV files start with a ``# config-sha256=...`` comment
line followed by the config itself.  Files are written atomically.
"""

import hashlib
import json
import os
import sys
import tempfile

import numpy as np

FLOAT_FMT = "{:.8e}"


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return str(v)


def csv_text(header, rows, config=None):
    lines = []
    if config is not None:
        lines.append(f"# config-sha256={config_hash(config)} config={canonical_json(config)}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def json_text(payload, config=None):
    doc = dict(payload)
    if config is not None:
        doc = {"config": config, "config_sha256": config_hash(config), **doc}
    return json.dumps(doc, indent=2, sort_keys=False, default=_default) + "\n"


def write_text(path, text):
    """Write ``text`` to ``path`` atomically (temp file + rename); ``-`` is stdout."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
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


def read_csv(path):
    """Return ``(config, header, rows)`` from a CSV written by :func:`csv_text`."""
    config = None
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        config = json.loads(lines[0].split(" config=", 1)[1])
        lines = lines[1:]
    lines = [line for line in lines if not line.startswith("#")]
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    return config, header, rows


def ensemble_csv_rows(samples):
    return [[i, *row] for i, row in enumerate(np.asarray(samples))]


def columns_csv(grid, columns, names):
    """Rows of ``grid`` followed by one column per entry of ``columns``."""
    header = ["grid", *names]
    rows = [[g, *(c[j] for c in columns)] for j, g in enumerate(grid)]
    return header, rows
