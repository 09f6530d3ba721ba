"""Plain-file exports: PGM rasters and annotated SVG frames."""

from __future__ import annotations

import os
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .diagram import WORKSPACE_H, WORKSPACE_W, CableDiagram


def write_pgm(img: np.ndarray, path: str) -> None:
    """Write a single-channel uint8 image as binary PGM (P5)."""
    arr = np.ascontiguousarray(np.asarray(img, dtype=np.uint8))
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def read_pgm(path: str) -> np.ndarray:
    """Read a binary PGM (P5) image written by write_pgm."""
    with open(path, "rb") as f:
        data = f.read()
    fields: list = []
    pos = 0
    while len(fields) < 4:  # magic, width, height, maxval
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"not a binary PGM file: {path}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace after maxval
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)


_KEYPOINT_COLORS = {
    "p_l": "#1f77b4",
    "p_r": "#17becf",
    "p_pull": "#2ca02c",
    "p_hold": "#d62728",
    "p_c": "#9467bd",
}


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def svg_frame(d: CableDiagram, *,
              keypoints: Optional[Dict[str, Sequence[float]]] = None,
              contour_center: Optional[Sequence[float]] = None,
              caption: Optional[str] = None,
              cable_width: float = 6.0) -> str:
    """Render one diagram state as a standalone SVG document string.

    Keypoints are drawn as labeled circles using a fixed palette keyed by
    name; the contour center gets a crosshair; the caption lands in the
    bottom-left corner.  Output is deterministic for byte-stable reports.
    """
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WORKSPACE_W}" '
        f'height="{WORKSPACE_H}" viewBox="0 0 {WORKSPACE_W} {WORKSPACE_H}">',
        f'<rect width="{WORKSPACE_W}" height="{WORKSPACE_H}" fill="#fafafa"/>',
    ]
    pts = " ".join(f"{_fmt(float(x))},{_fmt(float(y))}" for x, y in d.polyline)
    parts.append(
        f'<polyline points="{pts}" fill="none" stroke="#333333" '
        f'stroke-width="{_fmt(cable_width)}" stroke-linejoin="round" '
        'stroke-linecap="round"/>'
    )
    for c in d.crossings:
        parts.append(
            f'<circle cx="{_fmt(c.location[0])}" cy="{_fmt(c.location[1])}" '
            f'r="{_fmt(cable_width * 0.9)}" fill="none" stroke="#888888" '
            'stroke-width="1" stroke-dasharray="2,2"/>'
        )
    for tip in (d.endpoint_left, d.endpoint_right):
        parts.append(
            f'<circle cx="{_fmt(float(tip[0]))}" cy="{_fmt(float(tip[1]))}" '
            f'r="{_fmt(cable_width * 0.7)}" fill="#333333"/>'
        )
    for name in sorted(keypoints or {}):
        p = keypoints[name]
        if p is None:
            continue
        color = _KEYPOINT_COLORS.get(name, "#ff7f0e")
        parts.append(
            f'<circle cx="{_fmt(float(p[0]))}" cy="{_fmt(float(p[1]))}" r="5" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_fmt(float(p[0]) + 7)}" y="{_fmt(float(p[1]) - 7)}" '
            f'font-size="11" font-family="monospace" fill="{color}">{name}</text>'
        )
    if contour_center is not None:
        x, y = float(contour_center[0]), float(contour_center[1])
        parts.append(
            f'<path d="M {_fmt(x - 6)} {_fmt(y)} H {_fmt(x + 6)} M {_fmt(x)} '
            f'{_fmt(y - 6)} V {_fmt(y + 6)}" stroke="#9467bd" stroke-width="2" fill="none"/>'
        )
    if caption:
        safe = caption.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        parts.append(
            f'<text x="8" y="{WORKSPACE_H - 10}" font-size="12" '
            f'font-family="monospace" fill="#555555">{safe}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def write_svg_frame(path: str, d: CableDiagram, **kwargs) -> None:
    """Write an svg_frame document to disk."""
    with open(path, "w", encoding="ascii") as f:
        f.write(svg_frame(d, **kwargs))
