"""Deterministic plot artifacts: CSV always, SVG rendered by hand.

No plotting library: byte-identical output across runs is part of the
reproducibility contract, so SVGs are assembled from formatted strings.
Input files are classified by content: curve JSON, inference-log JSONL,
or heatmap CSV.
"""

from __future__ import annotations

import json
import os

import numpy as np

SVG_W, SVG_H = 480, 320
MARGIN = 40
SERIES = (("emd", "#d62728"), ("iou", "#1f77b4"), ("coverage", "#2ca02c"))


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _polyline(xs, ys, color) -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'


def _frame(title: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}">',
        f'<rect width="{SVG_W}" height="{SVG_H}" fill="white"/>',
        f'<text x="{SVG_W // 2}" y="16" text-anchor="middle" font-size="12">{title}</text>',
        f'<line x1="{MARGIN}" y1="{SVG_H - MARGIN}" x2="{SVG_W - 10}" y2="{SVG_H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{SVG_H - MARGIN}" x2="{MARGIN}" y2="20" stroke="black"/>',
    ]


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [(out_lo + (v - lo) / span * (out_hi - out_lo)) for v in values]


def curve_csv(curve: dict, path) -> None:
    cols = ["step", "iou_mean", "iou_std", "coverage_mean", "coverage_std",
            "emd_mean", "emd_std"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(curve["max_steps"] + 1):
            row = [str(i)] + [repr(curve[c][i]) for c in cols[1:]]
            fh.write(",".join(row) + "\n")


def curve_svg(curve: dict, path) -> None:
    steps = list(range(curve["max_steps"] + 1))
    xs = _scale(steps, 0, max(curve["max_steps"], 1), MARGIN, SVG_W - 10)
    top = max(1.0, max(curve["emd_mean"]) * 1.05)
    parts = _frame(f'{curve["method"]} on {curve["task"]} ({curve["trials"]} trials)')
    for key, color in SERIES:
        vals = curve[f"{key}_mean"]
        ys = _scale(vals, 0.0, top if key == "emd" else 1.0, SVG_H - MARGIN, 20)
        parts.append(_polyline(xs, ys, color))
        parts.append(f'<text x="{SVG_W - 90}" y="{30 + 14 * SERIES.index((key, color))}" '
                     f'font-size="10" fill="{color}">{key}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def histogram_csv(values, path, bins: int = 20, lo: float = 0.0, hi: float = 1.0) -> None:
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=(lo, hi))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_left,bin_right,count\n")
        for i, c in enumerate(counts):
            fh.write(f"{repr(float(edges[i]))},{repr(float(edges[i + 1]))},{int(c)}\n")


def histogram_svg(values, path, title: str, bins: int = 20) -> None:
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    peak = max(1, counts.max())
    width = (SVG_W - MARGIN - 10) / bins
    parts = _frame(title)
    for i, c in enumerate(counts):
        h = (SVG_H - MARGIN - 20) * (c / peak)
        x = MARGIN + i * width
        parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(SVG_H - MARGIN - h)}" '
                     f'width="{_fmt(width * 0.9)}" height="{_fmt(h)}" fill="#1f77b4"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def heatmap_svg(grid: np.ndarray, path, title: str) -> None:
    n = grid.shape[0]
    peak = max(1, int(grid.max()))
    cell = (SVG_H - 60) / n
    parts = _frame(title)
    for i in range(n):
        for j in range(n):
            v = int(grid[i, j])
            if v == 0:
                continue
            shade = 255 - int(200 * v / peak)
            x = MARGIN + i * cell
            y = SVG_H - MARGIN - (j + 1) * cell
            parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cell)}" '
                         f'height="{_fmt(cell)}" fill="rgb({shade},{shade},255)"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def classify(path) -> str:
    """Sniff an input file: 'curve', 'ras_log', or 'heatmap'."""
    name = os.path.basename(str(path))
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline().strip()
    if head.startswith("{"):
        payload = json.loads(head)
        if payload.get("kind") == "curve":
            return "curve"
        if payload.get("type") == "ras_step":
            return "ras_log"
        raise ValueError(f"{name}: unrecognized JSON plot input")
    if "," in head:
        return "heatmap"
    raise ValueError(f"{name}: unrecognized plot input")


def render(paths, out_dir) -> list:
    """Emit CSV + SVG artifacts for each recognized input; returns the
    artifact paths in input order."""
    if not paths:
        raise ValueError("no plot inputs given")
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []

    def out(name):
        artifacts.append(os.path.join(out_dir, name))
        return artifacts[-1]

    for path in paths:
        stem = os.path.splitext(os.path.basename(str(path)))[0]
        kind = classify(path)
        if kind == "curve":
            with open(path, "r", encoding="utf-8") as fh:
                curve = json.load(fh)
            curve_csv(curve, out(f"{stem}.csv"))
            curve_svg(curve, out(f"{stem}.svg"))
        elif kind == "ras_log":
            records = []
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        records.append(json.loads(line))
            rewards = [v for r in records for v in r["rewards_norm"]]
            histogram_csv(rewards, out(f"{stem}_reward_hist.csv"))
            histogram_svg(rewards, out(f"{stem}_reward_hist.svg"),
                          "normalized reward distribution")
            selected = [r["selected"] for r in records]
            n = max((r["n"] for r in records), default=1)
            counts = np.bincount(selected, minlength=n)
            sel_path = out(f"{stem}_selected_index.csv")
            with open(sel_path, "w", encoding="utf-8") as fh:
                fh.write("index,count\n")
                for i, c in enumerate(counts):
                    fh.write(f"{i},{int(c)}\n")
        else:
            grid = np.loadtxt(path, delimiter=",", dtype=np.int64)
            heatmap_svg(grid, out(f"{stem}.svg"), stem)
    return artifacts
