"""CSV and PGM writers for study artefacts."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..lgcp_model import read_grid_csv, write_grid_csv
from ..mala import Q_LADDER, ChainOutput, QuantileSummary

__all__ = [
    "read_grid_csv",
    "write_grid_csv",
    "write_table",
    "write_quantiles",
    "read_quantiles",
    "write_traces",
    "write_pgm",
]


def write_table(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_quantiles(path, qs: QuantileSummary) -> None:
    """Quantile cube as rows ``k,i,j,c`` (``k`` indexes the probability ladder)."""
    K, M, _ = qs.c.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,i,j,c\n")
        for k in range(K):
            for i in range(M):
                for j in range(M):
                    fh.write(f"{k},{i},{j},{float(qs.c[k, i, j])!r}\n")


def read_quantiles(path, q_ladder=Q_LADDER) -> QuantileSummary:
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    k, i, j = (raw[:, n].astype(int) for n in range(3))
    c = np.zeros((k.max() + 1, i.max() + 1, j.max() + 1))
    c[k, i, j] = raw[:, 3]
    return QuantileSummary(np.asarray(q_ladder, dtype=float)[: c.shape[0]], c)


def write_traces(path, out: ChainOutput) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iter,accept_prob,h\n")
        for it, (a, h) in enumerate(zip(out.accept_trace, out.h_trace), start=1):
            fh.write(f"{it},{float(a)!r},{float(h)!r}\n")


def write_pgm(path, values: np.ndarray, vmin: float | None = None, vmax: float | None = None) -> None:
    """Greyscale P2 (ASCII) heatmap, linearly scaled to 0..255. Row 0 of ``values`` is the top row."""
    a = np.asarray(values, dtype=float)
    lo = np.nanmin(a) if vmin is None else vmin
    hi = np.nanmax(a) if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    g = np.clip(np.rint((a - lo) / span * 255.0), 0, 255).astype(int)
    lines = ["P2", f"{a.shape[1]} {a.shape[0]}", "255"]
    lines += [" ".join(map(str, row)) for row in g]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
