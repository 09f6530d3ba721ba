"""Image-space observations: rasterization, contours, keypoints and density.

This module is the camera stand-in.  Diagrams are rasterized into a single
bimodal intensity channel with standard knot-diagram occlusion (the strand on
top is drawn last over a background gap), and all downstream perception runs
on that raster: contour extraction by border following, the cable-center
point, noisy keypoint observations around ground-truth plan points, analytic
grasp angles, and a scalar tangle-density metric with a binary comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import ndimage

from .diagram import (
    DEFAULT_CABLE_WIDTH,
    WORKSPACE_H,
    WORKSPACE_W,
    CableDiagram,
)

FOREGROUND = 255
BACKGROUND = 0
THRESHOLD = 128
MIN_CONTOUR_AREA = 50
OCCLUSION_GAP = 2.0
DENSITY_MARGIN = 1e-6
DENSITY_BBOX_PAD = 18.0


class EmptyObservationError(RuntimeError):
    """The image holds no usable foreground after thresholding."""


class DegenerateKeypointsError(ValueError):
    """Coincident keypoints leave the grasp angle undefined."""


class EmptyCropError(RuntimeError):
    """A crop around a keypoint contains no cable pixels."""


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------
# The rasterizer is a scanline strip filler: each polyline segment becomes,
# per pixel column (or row, when steep), a half-open interval of covered
# pixels around the centerline.  A half-open interval of length v always
# holds round(v) integers, so the average stroke width is exact, which the
# mass-versus-strip-area checks rely on.


def _axis_spans(seg_a: np.ndarray, seg_b: np.ndarray, width: float,
                columnwise: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Covered spans for all segments of one orientation, vectorized.

    columnwise picks segments with |dx| >= |dy| and yields (x, y_lo, y_hi)
    triples; otherwise the steep segments yield (y, x_lo, x_hi).  Spans are
    half-open in the cross direction so total coverage is width-exact.
    """
    a, b = seg_a.astype(float), seg_b.astype(float)
    d = b - a
    if columnwise:
        pick = np.abs(d[:, 0]) >= np.abs(d[:, 1])
        k_ax, c_ax = 0, 1
    else:
        pick = np.abs(d[:, 0]) < np.abs(d[:, 1])
        k_ax, c_ax = 1, 0
    a, b, d = a[pick], b[pick], d[pick]
    if len(a) == 0:
        empty = np.empty(0, dtype=int)
        return empty, empty, empty
    flip = d[:, k_ax] < 0
    a[flip], b[flip] = b[flip], a[flip].copy()
    d = b - a
    run = d[:, k_ax]
    live = run > 0
    a, b, d, run = a[live], b[live], d[live], run[live]
    if len(a) == 0:
        empty = np.empty(0, dtype=int)
        return empty, empty, empty
    slope = d[:, c_ax] / run
    half = (width / 2.0) * np.hypot(1.0, slope)
    first = np.ceil(a[:, k_ax]).astype(int)
    count = np.floor(b[:, k_ax]).astype(int) - first + 1
    count = np.maximum(count, 0)
    total = int(count.sum())
    if total == 0:
        empty = np.empty(0, dtype=int)
        return empty, empty, empty
    seg = np.repeat(np.arange(len(a)), count)
    offs = np.arange(total) - np.repeat(np.cumsum(count) - count, count)
    keys = first[seg] + offs
    mid = a[seg, c_ax] + slope[seg] * (keys - a[seg, k_ax])
    lo = np.ceil(mid - half[seg]).astype(int)
    hi = np.ceil(mid + half[seg]).astype(int)
    return keys, lo, hi


def _segment_spans(seg_a: np.ndarray, seg_b: np.ndarray, width: float):
    """Covered spans of a bag of stroked segments, grouped by orientation."""
    if len(seg_a) == 0:
        return (np.empty(0, int),) * 3, (np.empty(0, int),) * 3
    return (_axis_spans(seg_a, seg_b, width, True),
            _axis_spans(seg_a, seg_b, width, False))


def _strip_spans(pts: np.ndarray, width: float):
    """Covered spans of a stroked polyline, grouped by scan orientation."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 2:
        return (np.empty(0, int),) * 3, (np.empty(0, int),) * 3
    return _segment_spans(pts[:-1], pts[1:], width)


def _coverage(keys: np.ndarray, lo: np.ndarray, hi: np.ndarray,
              n_keys: int, n_cross: int):
    """Local coverage mask of half-open spans via bincount difference.

    Returns (k0, k1, c0, c1, cov) where cov is the covered boolean block for
    the key range [k0, k1) and cross range [c0, c1), or None if nothing lands
    inside the grid.
    """
    ok = (keys >= 0) & (keys < n_keys)
    keys, lo, hi = keys[ok], lo[ok], hi[ok]
    if len(keys) == 0:
        return None
    lo = np.clip(lo, 0, n_cross)
    hi = np.clip(hi, 0, n_cross)
    k0, k1 = int(keys.min()), int(keys.max()) + 1
    c0, c1 = int(lo.min()), int(min(n_cross, hi.max()))
    span_c = c1 - c0 + 1
    diff = np.bincount((keys - k0) * span_c + (lo - c0), minlength=(k1 - k0) * span_c)
    diff -= np.bincount((keys - k0) * span_c + (hi - c0), minlength=(k1 - k0) * span_c)
    cov = np.cumsum(diff.reshape(k1 - k0, span_c), axis=1)[:, : c1 - c0] > 0
    return k0, k1, c0, c1, cov


def _accumulate(keys: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                n_keys: int, n_cross: int, mask_t: np.ndarray) -> None:
    """OR half-open spans into a (n_keys, n_cross) view."""
    hit = _coverage(keys, lo, hi, n_keys, n_cross)
    if hit is not None:
        k0, k1, c0, c1, cov = hit
        mask_t[k0:k1, c0:c1] |= cov


def _mask_from_spans(spans, shape: Tuple[int, int]) -> np.ndarray:
    """Union of strip spans as a boolean mask."""
    h, w = shape
    (ck, cl, ch), (rk, rl, rh) = spans
    mask = np.zeros(shape, dtype=bool)
    _accumulate(ck, cl, ch, w, h, mask.T)
    _accumulate(rk, rl, rh, h, w, mask)
    return mask


def _paint_spans(img: np.ndarray, spans, value: int) -> None:
    """Fill spans into img in place (sequential, used for small repaints)."""
    h, w = img.shape
    (ck, cl, ch), (rk, rl, rh) = spans
    # clamp both ends to 0: a negative stop must mean empty, never wrap around
    for k, a, b in zip(ck.tolist(), cl.tolist(), ch.tolist()):
        if 0 <= k < w:
            img[max(a, 0) : max(min(b, h), 0), k] = value
    for k, a, b in zip(rk.tolist(), rl.tolist(), rh.tolist()):
        if 0 <= k < h:
            img[k, max(a, 0) : max(min(b, w), 0)] = value


def _paint_disc(img: np.ndarray, center: np.ndarray, radius: float, value: int) -> None:
    """Fill a disc (pixel centers within radius) in place."""
    h, w = img.shape
    x0 = max(0, int(math.floor(center[0] - radius)))
    x1 = min(w - 1, int(math.ceil(center[0] + radius)))
    y0 = max(0, int(math.floor(center[1] - radius)))
    y1 = min(h - 1, int(math.ceil(center[1] + radius)))
    if x1 < x0 or y1 < y0:
        return
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    inside = (xs[None, :] - center[0]) ** 2 + (ys[:, None] - center[1]) ** 2 <= radius**2
    img[y0 : y1 + 1, x0 : x1 + 1][inside] = value


def _pass_window(d: CableDiagram, vertex_index: int, radius: float) -> np.ndarray:
    """Polyline piece within arclength radius of one crossing pass."""
    poly = d.polyline
    step = poly[1:] - poly[:-1]
    cum = np.concatenate(([0.0], np.cumsum(np.hypot(step[:, 0], step[:, 1]))))
    s0 = cum[vertex_index]
    lo = max(int(np.searchsorted(cum, s0 - radius, side="right")) - 1, 0)
    hi = min(int(np.searchsorted(cum, s0 + radius, side="left")), len(poly) - 1)
    return poly[lo : hi + 1]


def render(d: CableDiagram, cable_width: float = DEFAULT_CABLE_WIDTH) -> np.ndarray:
    """Rasterize a diagram to the workspace intensity image.

    The whole cable is stroked first, then every crossing is repainted in
    depth order: each pass above the bottom one erases a slightly wider gap
    band before restroking itself, so the top strand reads as continuous and
    the strands below it stop short on either side, as in a knot diagram.
    """
    img = np.full((WORKSPACE_H, WORKSPACE_W), BACKGROUND, dtype=np.uint8)
    base = _mask_from_spans(_strip_spans(d.polyline, cable_width), img.shape)
    img[base] = FOREGROUND
    _paint_disc(img, d.polyline[0], cable_width / 2.0, FOREGROUND)
    _paint_disc(img, d.polyline[-1], cable_width / 2.0, FOREGROUND)
    window = 3.0 * cable_width
    for c in d.crossings:
        repaint = sorted(c.passes, key=lambda p: p.layer)[1:]  # bottom stays cut
        for p in repaint:
            piece = _pass_window(d, p.vertex_index, window)
            _paint_spans(img, _strip_spans(piece, cable_width + 2.0 * OCCLUSION_GAP), BACKGROUND)
            _paint_spans(img, _strip_spans(piece, cable_width), FOREGROUND)
    return img


def render_window(d: CableDiagram, center: np.ndarray, size: int,
                  cable_width: float = DEFAULT_CABLE_WIDTH) -> Tuple[np.ndarray, np.ndarray]:
    """Rasterize only a square window of the workspace image.

    Returns (crop, top-left corner) bit-identical to crop_window(render(d),
    center, size): the corner snaps to integer pixels and clamps inside the
    workspace, and the span arithmetic commutes with integer translation.
    Much cheaper than a full render when the window is small.
    """
    cx = int(round(float(center[0]))) - size // 2
    cy = int(round(float(center[1]))) - size // 2
    cx = min(max(cx, 0), WORKSPACE_W - size)
    cy = min(max(cy, 0), WORKSPACE_H - size)
    corner = np.array([cx, cy], dtype=float)

    img = np.full((size, size), BACKGROUND, dtype=np.uint8)
    poly = d.polyline - corner

    # stroke only segment runs whose boxes reach the window; strokes are
    # per-segment unions, so dropping far segments changes no window pixel
    margin = cable_width + 2.0
    a, b = poly[:-1], poly[1:]
    s_lo = np.minimum(a, b)
    s_hi = np.maximum(a, b)
    keep = ((s_hi[:, 0] >= -margin) & (s_lo[:, 0] <= size + margin)
            & (s_hi[:, 1] >= -margin) & (s_lo[:, 1] <= size + margin))
    base = _mask_from_spans(_segment_spans(a[keep], b[keep], cable_width),
                            img.shape)
    img[base] = FOREGROUND
    _paint_disc(img, poly[0], cable_width / 2.0, FOREGROUND)
    _paint_disc(img, poly[-1], cable_width / 2.0, FOREGROUND)
    for lo, hi, erase, stroke in _repaint_pieces(d, cable_width):
        # skip pieces whose stroked box cannot touch the window
        if (hi[0] < cx - margin or hi[1] < cy - margin
                or lo[0] > cx + size + margin or lo[1] > cy + size + margin):
            continue
        _paint_spans(img, _shift_spans(erase, cx, cy), BACKGROUND)
        _paint_spans(img, _shift_spans(stroke, cx, cy), FOREGROUND)
    return img, corner


def _repaint_pieces(d: CableDiagram, cable_width: float):
    """Depth-ordered crossing repaint spans in workspace coordinates, cached.

    Diagrams are treated as immutable once built, so the cache lives on the
    instance and is recomputed only when the stroke width changes.
    """
    cache = getattr(d, "_repaint_cache", None)
    if cache is not None and cache[0] == cable_width:
        return cache[1]
    window = 3.0 * cable_width
    pieces = []
    for c in d.crossings:
        repaint = sorted(c.passes, key=lambda p: p.layer)[1:]  # bottom stays cut
        for p in repaint:
            piece = _pass_window(d, p.vertex_index, window)
            pieces.append((piece.min(axis=0), piece.max(axis=0),
                           _strip_spans(piece, cable_width + 2.0 * OCCLUSION_GAP),
                           _strip_spans(piece, cable_width)))
    object.__setattr__(d, "_repaint_cache", (cable_width, pieces))
    return pieces


def _shift_spans(spans, cx: int, cy: int):
    """Translate spans by an integer offset (exact: ceil commutes with ints)."""
    (ck, cl, ch), (rk, rl, rh) = spans
    return (ck - cx, cl - cy, ch - cy), (rk - cy, rl - cx, rh - cx)


# ---------------------------------------------------------------------------
# Contours
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Contour:
    """Ordered boundary pixels of one foreground component."""

    points: np.ndarray  # (n, 2) int, (x, y)
    area: int  # component pixel count

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)


# Moore neighborhood in clockwise order (image y grows downward), starting
# from the west neighbor.
_MOORE = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]


def _trace_boundary(mask: np.ndarray, start: Tuple[int, int]) -> np.ndarray:
    """Follow the outer boundary of the component containing start.

    start must be the component's first foreground pixel in row-major scan
    order, which makes its west neighbor background; tracing scans the Moore
    ring clockwise from the backtrack neighbor.  The walk is a deterministic
    map on (pixel, backtrack) states, so it is stopped at the first repeated
    state, which closes the boundary loop for every component shape
    (including one-pixel-wide spurs, where plain revisit checks loop).
    """
    h, w = mask.shape

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(mask[y, x])

    sx, sy = start
    boundary = [(sx, sy)]
    pixel = (sx, sy)
    back = 0  # _MOORE index of the backtrack (background) neighbor: west
    seen = {(pixel, back)}
    while True:
        found = -1
        for k in range(1, 9):
            idx = (back + k) % 8
            nx, ny = pixel[0] + _MOORE[idx][0], pixel[1] + _MOORE[idx][1]
            if fg(nx, ny):
                found = idx
                break
        if found < 0:
            break  # isolated pixel
        # the neighbor scanned just before the hit is background and becomes
        # the next backtrack; consecutive ring slots are Moore-adjacent so it
        # is a neighbor of the new pixel too
        prev = (found - 1) % 8
        bx = pixel[0] + _MOORE[prev][0]
        by = pixel[1] + _MOORE[prev][1]
        pixel = (pixel[0] + _MOORE[found][0], pixel[1] + _MOORE[found][1])
        back = _MOORE.index((bx - pixel[0], by - pixel[1]))
        if (pixel, back) in seen:
            break
        seen.add((pixel, back))
        boundary.append(pixel)
    return np.array(boundary, dtype=int)


def extract_cable_contour(img: np.ndarray, threshold: int = THRESHOLD,
                          min_area: int = MIN_CONTOUR_AREA) -> Contour:
    """Trace the boundary of the largest foreground component.

    Components are found with 8-connectivity, components below min_area
    pixels are dropped as speckle, and the survivor with the most pixels is
    traced with Moore-neighbor border following.
    """
    mask = np.asarray(img) >= threshold
    if not mask.any():
        raise EmptyObservationError("no foreground above threshold")
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    best = int(np.argmax(counts))
    if counts[best] < min_area:
        raise EmptyObservationError(
            f"largest component has {counts[best]} px, below the {min_area} px filter"
        )
    comp = labels == best
    ys, xs = np.nonzero(comp)  # row-major, so index 0 is the scan-order first
    pts = _trace_boundary(comp, (int(xs[0]), int(ys[0])))
    return Contour(points=pts, area=int(counts[best]))


def cable_center(contour: Contour) -> np.ndarray:
    """Contour point nearest the contour mean, lowest index on ties."""
    pts = contour.points.astype(float)
    center = pts.mean(axis=0)
    idx = int(np.argmin(np.linalg.norm(pts - center, axis=1)))
    return pts[idx].copy()


# ---------------------------------------------------------------------------
# Keypoints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Keypoints:
    """Endpoint and grasp keypoints, one per heatmap head."""

    p_l: np.ndarray
    p_r: np.ndarray
    p_pull: Optional[np.ndarray] = None
    p_hold: Optional[np.ndarray] = None


@dataclass(frozen=True)
class PerceptionNoise:
    """Observation-noise knobs: keypoint jitter and comparator flips."""

    keypoint_sigma: float = 8.0
    density_flip_prob: float = 0.05

    def __post_init__(self):
        if self.keypoint_sigma < 0:
            raise ValueError("keypoint_sigma must be >= 0")
        if not 0.0 <= self.density_flip_prob <= 0.5:
            raise ValueError("density_flip_prob must be in [0, 0.5]")


ZERO_NOISE = PerceptionNoise(keypoint_sigma=0.0, density_flip_prob=0.0)


def _perturb(point: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(0.0, 1.0, size=2) * sigma
    out = np.asarray(point, dtype=float) + noise
    return np.clip(out, [0.0, 0.0], [WORKSPACE_W - 1.0, WORKSPACE_H - 1.0])


def hulk_keypoints(true_points: Keypoints, noise: PerceptionNoise,
                   rng: np.random.Generator) -> Keypoints:
    """Observe plan keypoints through isotropic Gaussian pixel noise.

    With sigma 0 the ground-truth points come back bit-exact (the noise draws
    still happen, keeping the random stream independent of sigma).  Perturbed
    points are clamped to the workspace.
    """
    s = noise.keypoint_sigma
    p_l = _perturb(true_points.p_l, s, rng)
    p_r = _perturb(true_points.p_r, s, rng)
    p_pull = None if true_points.p_pull is None else _perturb(true_points.p_pull, s, rng)
    p_hold = None if true_points.p_hold is None else _perturb(true_points.p_hold, s, rng)
    return Keypoints(p_l=p_l, p_r=p_r, p_pull=p_pull, p_hold=p_hold)


def grasp_angles_analytic(k: Keypoints) -> Tuple[float, float]:
    """Pull and hold grasp angles from the pull/hold keypoint pair.

    The pull angle is the quadrant-safe arctangent of the hold-to-pull
    vector and the hold angle sits 90 degrees away; both are reported in
    [0, 180) since a gripper axis has no sign.
    """
    if k.p_pull is None or k.p_hold is None:
        raise DegenerateKeypointsError("pull/hold keypoints missing")
    v = np.asarray(k.p_pull, dtype=float) - np.asarray(k.p_hold, dtype=float)
    if not np.any(v):
        raise DegenerateKeypointsError("pull and hold keypoints coincide")
    theta_pull = math.degrees(math.atan2(v[1], v[0])) % 180.0
    theta_hold = (theta_pull + 90.0) % 180.0
    return theta_pull, theta_hold


def principal_angle(mask_points: np.ndarray) -> float:
    """Angle in [0, 180) of the first principal component of 2D points."""
    pts = np.asarray(mask_points, dtype=float)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    v = evecs[:, int(np.argmax(evals))]
    return math.degrees(math.atan2(v[1], v[0])) % 180.0


def reidemeister_angles(img: np.ndarray, k: Keypoints, crop_size: int = 60,
                        threshold: int = THRESHOLD) -> Tuple[float, float]:
    """Endpoint grasp angles orthogonal to the local cable axis.

    Each endpoint gets a masked crop; the angle between (1, 0) and the
    vector orthogonal to the crop's first principal component is returned
    in [0, 180).  A horizontal cable yields 90 degrees at both ends.
    """
    out = []
    for p in (k.p_l, k.p_r):
        crop, _ = crop_window(img, p, crop_size)
        ys, xs = np.nonzero(crop >= threshold)
        if len(xs) == 0:
            raise EmptyCropError(f"no cable pixels in the crop around {p}")
        axis = principal_angle(np.stack([xs, ys], axis=1))
        out.append((axis + 90.0) % 180.0)
    return out[0], out[1]


def crop_window(img: np.ndarray, center: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Square crop clamped inside the image; returns (crop, top-left corner)."""
    h, w = img.shape
    cx = int(round(float(center[0]))) - size // 2
    cy = int(round(float(center[1]))) - size // 2
    cx = min(max(cx, 0), w - size)
    cy = min(max(cy, 0), h - size)
    return img[cy : cy + size, cx : cx + size], np.array([cx, cy], dtype=float)


# ---------------------------------------------------------------------------
# Density comparator
# ---------------------------------------------------------------------------


def _arclength_in_box(poly: np.ndarray, box: Tuple[float, float, float, float]) -> float:
    """Total polyline arclength inside an axis-aligned box (clipped exactly)."""
    x0, y0, x1, y1 = box
    a, b = poly[:-1].astype(float), poly[1:].astype(float)
    d = b - a
    t0 = np.zeros(len(a))
    t1 = np.ones(len(a))
    for ax, lo, hi in ((0, x0, x1), (1, y0, y1)):
        da = d[:, ax]
        pa = a[:, ax]
        with np.errstate(divide="ignore", invalid="ignore"):
            tl = (lo - pa) / da
            th = (hi - pa) / da
        enter = np.where(da >= 0, tl, th)
        leave = np.where(da >= 0, th, tl)
        still = da != 0
        t0 = np.where(still, np.maximum(t0, enter), t0)
        t1 = np.where(still, np.minimum(t1, leave), t1)
        inside_flat = (pa >= lo) & (pa <= hi)
        t1 = np.where(still | inside_flat, t1, -1.0)  # flat outside: no overlap
    overlap = np.clip(t1 - t0, 0.0, 1.0)
    return float(np.sum(overlap * np.linalg.norm(d, axis=1)))


def density(d: CableDiagram, img: Optional[np.ndarray] = None, *,
            lam: float = 1.0, threshold: int = THRESHOLD,
            pad: float = DENSITY_BBOX_PAD,
            cable_width: float = DEFAULT_CABLE_WIDTH) -> float:
    """Tangle density: crossing count plus normalized mass in the knot box.

    The fractional term is the cable mass inside the (padded) bounding box
    of the crossing region divided by the box area, so it stays near [0, 1]
    and never outvotes a whole crossing.  By default the mass is computed
    analytically as clipped arclength times stroke width; passing a raster
    counts foreground pixels instead.
    """
    x0, y0, x1, y1 = d.knot_bbox(pad=pad)
    if img is not None:
        box = img[int(y0) : int(math.ceil(y1)), int(x0) : int(math.ceil(x1))]
        area = float(box.shape[0] * box.shape[1])
        mass = float(np.count_nonzero(box >= threshold))
    else:
        area = (x1 - x0) * (y1 - y0)
        mass = _arclength_in_box(d.polyline, (x0, y0, x1, y1)) * cable_width
    frac = mass / area if area > 0 else 0.0
    return float(d.crossing_count) + lam * frac


DensityLike = Union[float, CableDiagram]


def _as_density(obs: DensityLike) -> float:
    return density(obs) if isinstance(obs, CableDiagram) else float(obs)


def denser(obs_a: DensityLike, obs_b: DensityLike,
           noise: Optional[PerceptionNoise] = None,
           rng: Optional[np.random.Generator] = None,
           margin: float = DENSITY_MARGIN,
           force_flip: bool = False) -> int:
    """Binary comparator: 1 iff obs_a is denser than obs_b beyond the margin.

    Diagrams are reduced through density(); precomputed floats pass through.
    With a noise model the verdict is inverted with density_flip_prob, and
    force_flip inverts it unconditionally (used to script classifier errors).
    """
    verdict = 1 if _as_density(obs_a) > _as_density(obs_b) + margin else 0
    if force_flip:
        return 1 - verdict
    if noise is not None and noise.density_flip_prob > 0.0:
        if rng is None:
            raise ValueError("denser with flip noise needs an rng")
        if rng.random() < noise.density_flip_prob:
            verdict = 1 - verdict
    return verdict
