"""Persistence: checkpoints, time-series CSV, JSON report, SVG plot.

Checkpoint layout::

    b"EXTFLOWCK"                  9-byte magic
    uint64 little-endian          length of the JSON header in bytes
    JSON header (utf-8)           schema_version, config echo, scalars, array table
    float64 little-endian blocks  one per array, nodes ordered x2 outer, x1 inner

Floats in the header are written with ``repr`` precision, so scalars and
series round-trip exactly; arrays are raw IEEE doubles.
"""

import csv
import io as _io
import json
import math
import struct

import numpy as np

MAGIC = b"EXTFLOWCK"
SCHEMA_VERSION = 1

CSV_COLUMNS = (
    ["t", "lambda", "lambda_b", "fd_dlambda"]
    + [f"t{k}" for k in range(1, 11)]
    + ["total_weighted", "total_plain", "q2", "q4", "cond_ok", "cond_margin_min", "vol", "r"]
)


def _to_file_order(field):
    # internal arrays are indexed [i1, i2]; files store x2 outer, x1 inner
    return np.ascontiguousarray(np.asarray(field, dtype="<f8").T)


def _from_file_order(flat, shape):
    N1, N2 = shape
    return np.array(flat.reshape(N2, N1).T, dtype=float)


def save_checkpoint(path, header, arrays):
    """Write ``header`` (JSON-serializable dict) and named ``(N1, N2)`` arrays."""
    header = dict(header)
    header["schema_version"] = SCHEMA_VERSION
    table = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        data = _to_file_order(arr).tobytes()
        table.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header["arrays"] = table
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not an extflow checkpoint")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        body = fh.read()
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema {header.get('schema_version')}")
    arrays = {}
    for entry in header["arrays"]:
        raw = np.frombuffer(body, dtype="<f8", count=entry["nbytes"] // 8, offset=entry["offset"])
        arrays[entry["name"]] = _from_file_order(raw, entry["shape"])
    return header, arrays


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, rows, columns=CSV_COLUMNS):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def svg_chart(times, series, title="", width=640, height=360):
    """Polyline chart of each named series against ``times`` (one panel each)."""
    names = list(series)
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 30
    panel_h = (height - pad_t - pad_b) / max(len(names), 1)
    t = np.asarray(times, float)
    t0, t1 = (t.min(), t.max()) if t.size else (0.0, 1.0)
    if t1 == t0:
        t1 = t0 + 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]
    x_of = lambda tt: pad_l + (tt - t0) / (t1 - t0) * (width - pad_l - pad_r)  # noqa: E731
    for k, name in enumerate(names):
        y = np.asarray(series[name], float)
        top = pad_t + k * panel_h
        bot = top + panel_h - 12
        finite = y[np.isfinite(y)]
        lo, hi = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
        if hi == lo:
            lo, hi = lo - 0.5 * max(abs(lo), 1e-12), hi + 0.5 * max(abs(hi), 1e-12)
        y_of = lambda v: bot - (v - lo) / (hi - lo) * (bot - top)  # noqa: E731
        pts = " ".join(f"{x_of(tt):.2f},{y_of(v):.2f}" for tt, v in zip(t, y) if math.isfinite(v))
        color = _COLORS[k % len(_COLORS)]
        parts.append(
            f'<rect x="{pad_l}" y="{top:.2f}" width="{width - pad_l - pad_r}" '
            f'height="{bot - top:.2f}" fill="none" stroke="#bbb"/>'
        )
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{pad_l - 6}" y="{top + 10:.2f}" text-anchor="end">{hi:.6g}</text>')
        parts.append(f'<text x="{pad_l - 6}" y="{bot:.2f}" text-anchor="end">{lo:.6g}</text>')
        parts.append(f'<text x="{pad_l + 6}" y="{top + 12:.2f}" fill="{color}">{name}</text>')
    parts.append(f'<text x="{pad_l}" y="{height - 8}">t = {t0:.4g}</text>')
    parts.append(f'<text x="{width - pad_r}" y="{height - 8}" text-anchor="end">t = {t1:.4g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, times, series, title=""):
    with open(path, "w") as fh:
        fh.write(svg_chart(times, series, title))
