"""
Result persistence: CSV and JSON files stamped with the config hash, run
manifests, and small self-contained SVG plots.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from dataclasses import dataclass, field
from html import escape
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import HashMismatch

HASH_PREFIX = "# config_hash="


def tool_version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # not installed
        return "0+unknown"


def write_csv(path, header: Sequence[str], rows, config_hash: str):
    """CSV with a leading ``# config_hash=...`` line; floats use ``repr`` for exact round trips."""
    with open(path, "w", newline="") as fh:
        fh.write(f"{HASH_PREFIX}{config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return Path(path)


def read_csv(path):
    """(config hash, header, rows as strings)."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(HASH_PREFIX):
            raise HashMismatch(f"{path} carries no config hash")
        h = first[len(HASH_PREFIX):].strip()
        rows = list(csv.reader(fh))
    return h, rows[0], rows[1:]


def file_hash(path):
    p = Path(path)
    if p.suffix == ".json":
        return json.loads(p.read_text()).get("config_hash")
    if p.suffix == ".svg":
        text = p.read_text()
        i = text.find("config_hash=")
        return None if i < 0 else text[i + 12:].split('"')[0].split()[0].split("<")[0]
    return read_csv(p)[0]


def require_same_hash(paths) -> str:
    """Common config hash of ``paths``; raises :class:`HashMismatch` when they differ."""
    hashes = {str(p): file_hash(p) for p in paths}
    distinct = set(hashes.values())
    if len(distinct) != 1 or None in distinct:
        raise HashMismatch("refusing to aggregate files from different configs: "
                           + ", ".join(f"{k}={v}" for k, v in hashes.items()))
    return distinct.pop()


def aggregate_histograms(paths):
    """Sum the counts of histogram CSVs with identical bins and config hash."""
    require_same_hash(paths)
    edges, counts = None, None
    for p in paths:
        _, _, rows = read_csv(p)
        a = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows])
        e = np.append(a[:, 0], a[-1, 1])
        if edges is None:
            edges, counts = e, a[:, 2].copy()
        elif not np.array_equal(e, edges):
            raise ValueError("histograms have different bins")
        else:
            counts += a[:, 2]
    return edges, counts


def write_json(path, payload: dict, config_hash: str):
    data = {"config_hash": config_hash, **payload}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return Path(path)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    return repr(o)


@dataclass
class RunManifest:
    """Written when a run starts and rewritten when it ends."""

    path: Path
    command: str
    config: Dict[str, object]
    config_hash: str
    seed: int
    experiments: int
    defaults_used: List[str] = field(default_factory=list)
    status: str = "running"
    started: float = field(default_factory=time.time)
    finished: Optional[float] = None
    validation: Dict[str, object] = field(default_factory=dict)
    discards: Dict[str, object] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def payload(self):
        return {
            "command": self.command,
            "tool_version": tool_version(),
            "python": platform.python_version(),
            "status": self.status,
            "seed": self.seed,
            "experiments": self.experiments,
            "seeds": {"master": self.seed, "spawn_keys": [0, self.experiments - 1]},
            "config": self.config,
            "defaults_used": self.defaults_used,
            "timing": {"started": self.started, "finished": self.finished,
                       "elapsed_s": None if self.finished is None else self.finished - self.started},
            "validation": self.validation,
            "discards": self.discards,
            "outputs": self.outputs,
            "notes": self.notes,
        }

    def write(self):
        tmp = Path(str(self.path) + ".tmp")
        write_json(tmp, self.payload(), self.config_hash)
        os.replace(tmp, self.path)

    def finalize(self, status="complete"):
        self.status = status
        self.finished = time.time()
        self.write()


# -- SVG -------------------------------------------------------------------

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def _fmt(v):
    return f"{v:.6g}"


@dataclass
class Series:
    """One layer of a plot. ``kind`` is line, points, bars, vline or paths."""

    kind: str
    x: np.ndarray
    y: Optional[np.ndarray] = None
    yerr: Optional[np.ndarray] = None
    label: str = ""
    color: Optional[str] = None
    width: float = 1.5


def svg_plot(path, series: Sequence[Series], title: str, xlabel: str, ylabel: str, config_hash: str,
             size=(720, 440), xscale: float = 1.0, yscale: float = 1.0):
    """Write a standalone SVG with linear axes. ``xscale``/``yscale`` divide data for display."""
    W, H = size
    ml, mr, mt, mb = 80, 20, 40, 55
    pw, ph = W - ml - mr, H - mt - mb
    xs, ys = [], []
    for s in series:
        x = np.asarray(s.x, dtype=float) / xscale
        xs.append(x[np.isfinite(x)])
        if s.y is not None:
            y = np.asarray(s.y, dtype=float) / yscale
            err = 0 if s.yerr is None else np.asarray(s.yerr, dtype=float) / yscale
            yy = np.concatenate([np.ravel(y - err), np.ravel(y + err)]) if s.yerr is not None else np.ravel(y)
            ys.append(yy[np.isfinite(yy)])
            if s.kind == "bars":
                ys.append(np.array([0.0]))
    x_all = np.concatenate(xs) if xs else np.array([0.0, 1.0])
    y_all = np.concatenate(ys) if ys else np.array([0.0, 1.0])
    x0, x1 = (x_all.min(), x_all.max()) if x_all.size else (0.0, 1.0)
    y0, y1 = (y_all.min(), y_all.max()) if y_all.size else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def X(v):
        return ml + (np.asarray(v) / xscale - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + ph - (np.asarray(v) / yscale - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           f'font-family="sans-serif" font-size="12">',
           f"<!-- config_hash={config_hash} -->",
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in np.linspace(x0, x1, 6):
        px = ml + (t - x0) / (x1 - x0) * pw
        out.append(f'<line x1="{px:.2f}" y1="{mt + ph}" x2="{px:.2f}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{mt + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in np.linspace(y0, y1, 6):
        py = mt + ph - (t - y0) / (y1 - y0) * ph
        out.append(f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{py + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>')
    out.append(f'<clipPath id="plot"><rect x="{ml}" y="{mt}" width="{pw}" height="{ph}"/></clipPath>')
    out.append('<g clip-path="url(#plot)">')
    legend = []
    for i, s in enumerate(series):
        c = s.color or _COLORS[i % len(_COLORS)]
        if s.kind == "line":
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X(s.x), Y(s.y)) if np.isfinite(a) and np.isfinite(b))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="{s.width}"/>')
        elif s.kind == "paths":
            # s.y is a 2D array, one row per path sharing s.x
            for row in np.atleast_2d(s.y):
                pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X(s.x), Y(row)) if np.isfinite(b))
                out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="{s.width}" '
                           f'stroke-opacity="0.5"/>')
        elif s.kind == "points":
            for k, (a, b) in enumerate(zip(X(s.x), Y(s.y))):
                if not (np.isfinite(a) and np.isfinite(b)):
                    continue
                if s.yerr is not None and np.isfinite(s.yerr[k]):
                    lo, hi = Y(s.y[k] - s.yerr[k]), Y(s.y[k] + s.yerr[k])
                    out.append(f'<line x1="{a:.2f}" y1="{lo:.2f}" x2="{a:.2f}" y2="{hi:.2f}" stroke="{c}"/>')
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{c}"/>')
        elif s.kind == "bars":
            edges = np.asarray(s.x, dtype=float)
            base = Y(0.0)
            for a, b, h in zip(X(edges[:-1]), X(edges[1:]), Y(s.y)):
                out.append(f'<rect x="{a:.2f}" y="{min(h, base):.2f}" width="{max(b - a, 0.5):.2f}" '
                           f'height="{abs(base - h):.2f}" fill="{c}" fill-opacity="0.45" stroke="{c}"/>')
        elif s.kind == "vline":
            for a in np.atleast_1d(X(s.x)):
                out.append(f'<line x1="{a:.2f}" y1="{mt}" x2="{a:.2f}" y2="{mt + ph}" stroke="{c}" '
                           f'stroke-dasharray="6,4" stroke-width="{s.width}"/>')
        else:
            raise ValueError(f"unknown series kind '{s.kind}'")
        if s.label:
            legend.append((s.label, c))
    out.append("</g>")
    for k, (label, c) in enumerate(legend):
        y = mt + 16 + 16 * k
        out.append(f'<rect x="{ml + pw - 190}" y="{y - 9}" width="12" height="10" fill="{c}"/>')
        out.append(f'<text x="{ml + pw - 172}" y="{y}">{escape(label)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return Path(path)
