"""CSV/JSON writers with fixed headers and 17-significant-digit floats."""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

MOMENT_COLUMNS = ["two_s", "s_tilde", "sz_mean", "sz2_mean", "photon_mean", "method",
                  "converged", "residual"]
DISTRIBUTION_COLUMNS = ["two_s", "s_tilde", "p", "p_scaled"]
SPECTRUM_COLUMNS = ["index", "re_lambda", "im_lambda", "source"]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, columns, rows) -> Path:
    import io as _io
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row[c] for c in columns]
        w.writerow([fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _encode(obj):
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, complex):
        return _encode([obj.real, obj.imag])
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(obj) -> str:
    return _encode(obj) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def moment_rows(moments):
    for m in moments:
        yield [m.two_s, m.two_s / m.n_atoms, m.sz_mean, m.sz2_mean, m.photon_mean, m.method,
               m.converged, m.residual]


def distribution_rows(dist):
    for t, s, p, ps in zip(dist.two_s, dist.s_tilde, dist.p, dist.p_scaled):
        yield [int(t), s, p, ps]


def spectrum_rows(spec):
    for i, lam in enumerate(spec.eigenvalues):
        yield [i, lam.real, lam.imag, spec.source]
