"""Coarse-to-fine grasp refinement on local cable crops.

Coarse keypoints land within a few pixels of the cable but not reliably on
it, so each one is re-estimated from a small crop: the crop is upsampled to
a fixed input scale, a direction-and-heatmap estimator picks the centerline
point of the strand under the crop center, and the heatmap argmax maps back
to a workspace offset through an exact scale factor.  The estimator is
analytic (ray runs plus a cross-section midpoint walk) so the whole stack
stays deterministic; a synthetic generator of occluded two-strand crossing
crops provides the labeled dataset the estimator is scored against.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .frames import write_pgm
from .percept import (
    BACKGROUND,
    FOREGROUND,
    OCCLUSION_GAP,
    THRESHOLD,
    EmptyCropError,
    _paint_spans,
    _strip_spans,
    crop_window,
)

NET_INPUT_SIZE = 200
LOCAL_CROP_SIZE = 60
GAMMA = LOCAL_CROP_SIZE / NET_INPUT_SIZE  # crop-to-workspace scale for offsets
HEATMAP_SIGMA = 5.0
NET_CENTER = np.array([NET_INPUT_SIZE / 2.0, NET_INPUT_SIZE / 2.0])

# Half-extent of stroke centerlines in crop pixels; long enough that strokes
# always enter and leave the canvas.
_STROKE_SPAN = 170.0
_STROKE_SAMPLES = 241


# ---------------------------------------------------------------------------
# Heatmap arithmetic
# ---------------------------------------------------------------------------


def gaussian_heatmap(point: np.ndarray, shape: Tuple[int, int] = (NET_INPUT_SIZE, NET_INPUT_SIZE),
                     sigma: float = HEATMAP_SIGMA) -> np.ndarray:
    """Unit-peak isotropic Gaussian centered on an integer (u, v) pixel."""
    u, v = int(point[0]), int(point[1])
    h, w = shape
    dx2 = (np.arange(w) - u) ** 2
    dy2 = (np.arange(h) - v) ** 2
    return np.exp(-(dx2[None, :] + dy2[:, None]) / (2.0 * sigma * sigma))


def argmax_point(heatmap: np.ndarray) -> np.ndarray:
    """Pixel (x, y) of the heatmap maximum, row-major first on ties."""
    flat = int(np.argmax(heatmap))
    y, x = divmod(flat, heatmap.shape[1])
    return np.array([x, y], dtype=int)


def offset_for_argmax(argmax: np.ndarray) -> np.ndarray:
    """Workspace offset implied by a heatmap argmax: gamma * (argmax - center)."""
    return GAMMA * (np.asarray(argmax, dtype=float) - NET_CENTER)


# ---------------------------------------------------------------------------
# Synthetic crossing crops
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CropParams:
    """Geometry ranges for synthetic two-strand crossing crops.

    Widths bracket the apparent cable width after the crop upscale, the
    grasped strand passes within center_offset_max of the crop center, the
    crossing sits crossing_dist away along it, and the other strand must
    clear the center by min_clearance so the grasp target is unambiguous.
    """

    size: int = NET_INPUT_SIZE
    width_range: Tuple[float, float] = (14.0, 22.0)
    beta_range: Tuple[float, float] = (0.0, 180.0)
    center_offset_max: float = 6.0
    crossing_dist_range: Tuple[float, float] = (40.0, 80.0)
    min_clearance: float = 25.0
    min_relative_angle: float = 20.0
    deflection_range: Tuple[float, float] = (0.0, 12.0)
    occlusion_gap: float = OCCLUSION_GAP / GAMMA


@dataclass(frozen=True)
class CropSample:
    """One labeled crop: image, stroke direction and grasp-point labels.

    top_centerline is kept for evaluation (distance-to-centerline metrics);
    it is not part of the label an estimator may read.
    """

    image: np.ndarray
    beta: float  # grasped-strand direction in [0, 180)
    grasp_point: np.ndarray  # (u, v) int pixel
    heatmap: np.ndarray
    label_theta: float  # gripper angle, (90 + beta) mod 180
    top_centerline: np.ndarray


def _stroke_centerline(apex: np.ndarray, angle_deg: float, deflection: float,
                       n: int = _STROKE_SAMPLES) -> np.ndarray:
    """Sample a gently bowed stroke centerline through its apex point."""
    rad = math.radians(angle_deg)
    d = np.array([math.cos(rad), math.sin(rad)])
    nv = np.array([-d[1], d[0]])
    s = np.linspace(-_STROKE_SPAN, _STROKE_SPAN, n)
    bow = deflection * (s / _STROKE_SPAN) ** 2
    return apex[None, :] + s[:, None] * d[None, :] + bow[:, None] * nv[None, :]


def generate_crop(rng: np.random.Generator, params: Optional[CropParams] = None) -> CropSample:
    """Draw one synthetic crossing crop with exact labels.

    Two thick strokes are rasterized with the grasped one on top: its stroke
    is painted last over an occlusion gap band, so the strand beneath stops
    short on both sides of the crossing.  The grasp-point label is the top
    centerline sample nearest the crop center and the heatmap is the exact
    unit Gaussian at that pixel.
    """
    p = params or CropParams()
    center = np.array([p.size / 2.0, p.size / 2.0])

    beta = float(rng.uniform(*p.beta_range)) % 180.0
    phi = rng.uniform(0.0, 2.0 * math.pi)
    r = rng.uniform(0.0, p.center_offset_max)
    apex = center + r * np.array([math.cos(phi), math.sin(phi)])
    defl_top = float(rng.uniform(*p.deflection_range)) * (1.0 if rng.random() < 0.5 else -1.0)
    top = _stroke_centerline(apex, beta, defl_top)

    s_cross = rng.uniform(*p.crossing_dist_range) * (1.0 if rng.random() < 0.5 else -1.0)
    rad = math.radians(beta)
    d = np.array([math.cos(rad), math.sin(rad)])
    nv = np.array([-d[1], d[0]])
    crossing = apex + s_cross * d + defl_top * (s_cross / _STROKE_SPAN) ** 2 * nv

    bottom = None
    for _ in range(200):
        beta_b = float(rng.uniform(0.0, 180.0))
        rel = abs(beta_b - beta) % 180.0
        rel = min(rel, 180.0 - rel)
        defl_b = float(rng.uniform(*p.deflection_range)) * (1.0 if rng.random() < 0.5 else -1.0)
        if rel < p.min_relative_angle:
            continue
        cand = _stroke_centerline(crossing, beta_b, defl_b)
        if np.min(np.linalg.norm(cand - center[None, :], axis=1)) < p.min_clearance:
            continue
        bottom = cand
        break
    if bottom is None:
        raise RuntimeError("could not place a bottom stroke clear of the center")

    w_top = rng.uniform(*p.width_range)
    w_bot = rng.uniform(*p.width_range)
    img = np.full((p.size, p.size), BACKGROUND, dtype=np.uint8)
    _paint_spans(img, _strip_spans(bottom, w_bot), FOREGROUND)
    _paint_spans(img, _strip_spans(top, w_top + 2.0 * p.occlusion_gap), BACKGROUND)
    _paint_spans(img, _strip_spans(top, w_top), FOREGROUND)

    fine = _stroke_centerline(apex, beta, defl_top, n=1201)
    g = fine[int(np.argmin(np.linalg.norm(fine - center[None, :], axis=1)))]
    grasp = np.clip(np.rint(g).astype(int), 0, p.size - 1)

    return CropSample(
        image=img,
        beta=beta,
        grasp_point=grasp,
        heatmap=gaussian_heatmap(grasp, shape=img.shape),
        label_theta=(90.0 + beta) % 180.0,
        top_centerline=fine,
    )


def generate_dataset(out_dir: str, n: int = 3500, seed: int = 0,
                     params: Optional[CropParams] = None) -> int:
    """Write n labeled crops as PGM images with JSON label sidecars.

    Per-sample generators are spawned from one seed sequence, so any sample
    can be regenerated independently and the set is order-stable.  Sidecar
    fields are beta, u, v and theta; heatmaps are recomputable exactly from
    (u, v) and are not stored.
    """
    os.makedirs(out_dir, exist_ok=True)
    children = np.random.SeedSequence(seed).spawn(n)
    for i, child in enumerate(children):
        sample = generate_crop(np.random.default_rng(child), params)
        stem = os.path.join(out_dir, f"{i:05d}")
        write_pgm(sample.image, stem + ".pgm")
        label = {
            "beta": float(sample.beta),
            "theta": float(sample.label_theta),
            "u": int(sample.grasp_point[0]),
            "v": int(sample.grasp_point[1]),
        }
        with open(stem + ".json", "w", encoding="ascii") as f:
            json.dump(label, f, sort_keys=True)
            f.write("\n")
    return n


@dataclass(frozen=True)
class SceneSample:
    """One workspace-scale crossing scene for refinement evaluation."""

    image: np.ndarray
    grasp_point: np.ndarray  # float (x, y) on the top centerline
    top_centerline: np.ndarray


def generate_scene(rng: np.random.Generator, params: Optional[CropParams] = None,
                   shape: Tuple[int, int] = (480, 640),
                   margin: float = 120.0) -> SceneSample:
    """Draw a crossing scene at workspace scale around a random anchor.

    The crop-generator geometry is reused with every length scaled by gamma,
    so a local crop upsampled back to the input size shows strokes at the
    same apparent widths the estimator is scored against.  Used to evaluate
    refinement of noisy coarse points on global images.
    """
    p = params or CropParams()
    h, w = shape
    anchor = np.array([rng.uniform(margin, w - margin), rng.uniform(margin, h - margin)])

    beta = float(rng.uniform(*p.beta_range)) % 180.0
    phi = rng.uniform(0.0, 2.0 * math.pi)
    r = rng.uniform(0.0, p.center_offset_max) * GAMMA
    apex = anchor + r * np.array([math.cos(phi), math.sin(phi)])
    defl_top = float(rng.uniform(*p.deflection_range)) * GAMMA * (1.0 if rng.random() < 0.5 else -1.0)
    top = _stroke_centerline(apex, beta, defl_top)

    s_cross = rng.uniform(*p.crossing_dist_range) * GAMMA * (1.0 if rng.random() < 0.5 else -1.0)
    rad = math.radians(beta)
    d = np.array([math.cos(rad), math.sin(rad)])
    nv = np.array([-d[1], d[0]])
    crossing = apex + s_cross * d + defl_top * (s_cross / _STROKE_SPAN) ** 2 * nv

    bottom = None
    for _ in range(200):
        beta_b = float(rng.uniform(0.0, 180.0))
        rel = abs(beta_b - beta) % 180.0
        rel = min(rel, 180.0 - rel)
        defl_b = float(rng.uniform(*p.deflection_range)) * GAMMA * (1.0 if rng.random() < 0.5 else -1.0)
        if rel < p.min_relative_angle:
            continue
        cand = _stroke_centerline(crossing, beta_b, defl_b)
        if np.min(np.linalg.norm(cand - anchor[None, :], axis=1)) < p.min_clearance * GAMMA:
            continue
        bottom = cand
        break
    if bottom is None:
        raise RuntimeError("could not place a bottom stroke clear of the anchor")

    w_top = rng.uniform(*p.width_range) * GAMMA
    w_bot = rng.uniform(*p.width_range) * GAMMA
    img = np.full(shape, BACKGROUND, dtype=np.uint8)
    _paint_spans(img, _strip_spans(bottom, w_bot), FOREGROUND)
    _paint_spans(img, _strip_spans(top, w_top + 2.0 * OCCLUSION_GAP), BACKGROUND)
    _paint_spans(img, _strip_spans(top, w_top), FOREGROUND)

    fine = _stroke_centerline(apex, beta, defl_top, n=1201)
    g = fine[int(np.argmin(np.linalg.norm(fine - anchor[None, :], axis=1)))]
    return SceneSample(image=img, grasp_point=g, top_centerline=fine)


# ---------------------------------------------------------------------------
# Analytic estimator
# ---------------------------------------------------------------------------


def _ray_runs(mask: np.ndarray, origin: np.ndarray, dirs: np.ndarray,
              step: float, max_steps: int) -> np.ndarray:
    """Run length from origin along each direction until background or border."""
    h, w = mask.shape
    t = np.arange(1, max_steps + 1) * step
    px = origin[0] + dirs[:, 0:1] * t[None, :]
    py = origin[1] + dirs[:, 1:2] * t[None, :]
    xi = np.rint(px).astype(int)
    yi = np.rint(py).astype(int)
    inb = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    good = inb & mask[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
    bad = ~good
    first_bad = np.argmax(bad, axis=1)
    steps_ok = np.where(bad.any(axis=1), first_bad, max_steps)
    return steps_ok * step


def _is_fg(mask: np.ndarray, p: np.ndarray) -> bool:
    """Nearest-pixel foreground test with bounds check."""
    h, w = mask.shape
    x, y = int(round(float(p[0]))), int(round(float(p[1])))
    return 0 <= x < w and 0 <= y < h and bool(mask[y, x])


def _section_midpoint(mask: np.ndarray, p: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Midpoint of the foreground cross-section through p along the normal."""
    runs = _ray_runs(mask, p, np.stack([normal, -normal]), step=0.25, max_steps=120)
    return p + 0.5 * (runs[0] - runs[1]) * normal


def estimate(img: np.ndarray, threshold: int = THRESHOLD, *,
             angle_step: float = 1.0,
             ray_step: float = 0.7) -> Tuple[float, np.ndarray]:
    """Estimate gripper angle and grasp heatmap for one input-scale crop.

    The strand direction is scored by foreground ray runs from the pixel
    nearest the crop center: the run sum of each opposite direction pair is
    longest along the strand, and the top-scoring degrees are averaged on
    the doubled circle.  The grasp point is found by walking cross-section
    midpoints toward the center's projection onto the strand axis, which
    keeps it on the grasped strand even where strokes merge at a crossing.
    Coarser angle_step and ray_step trade accuracy for speed.
    """
    arr = np.asarray(img)
    mask = arr >= threshold
    if not mask.any():
        raise EmptyCropError("no cable pixels in the crop")
    h, w = mask.shape
    center = np.array([w / 2.0, h / 2.0])

    if _is_fg(mask, center):
        q0 = center.copy()
    else:
        # snap to the nearest foreground pixel
        _, (iy, ix) = ndimage.distance_transform_edt(~mask, return_indices=True)
        cy, cx = int(center[1]), int(center[0])
        q0 = np.array([float(ix[cy, cx]), float(iy[cy, cx])])

    half = np.arange(0.0, 180.0, angle_step)
    angles = np.radians(np.concatenate([half, half + 180.0]))
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    max_steps = int(math.hypot(h, w) / ray_step) + 1
    runs = _ray_runs(mask, q0, dirs, step=ray_step, max_steps=max_steps)
    n_half = len(half)
    score = runs[:n_half] + runs[n_half:]
    sel = score >= 0.9 * float(score.max())
    doubled = np.radians(2.0 * half[sel])
    weights = score[sel]
    beta_hat = math.degrees(math.atan2(float(np.sum(weights * np.sin(doubled))),
                                       float(np.sum(weights * np.cos(doubled))))) / 2.0 % 180.0

    rad = math.radians(beta_hat)
    d = np.array([math.cos(rad), math.sin(rad)])
    nv = np.array([-d[1], d[0]])
    m = _section_midpoint(mask, q0, nv)
    for _ in range(3):
        t = float(np.dot(center - m, d))
        p = m + t * d
        shrink = 0
        while shrink < 16 and not _is_fg(mask, p):
            t *= 0.7
            p = m + t * d
            shrink += 1
        if not _is_fg(mask, p):
            break
        m = _section_midpoint(mask, p, nv)

    g = np.clip(np.rint(m).astype(int), 0, [w - 1, h - 1])
    return (90.0 + beta_hat) % 180.0, gaussian_heatmap(g, shape=(h, w))


# ---------------------------------------------------------------------------
# Keypoint refinement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraspRefinement:
    """Refined keypoint: gripper angle, workspace offset and landing point."""

    theta_hat: Optional[float]
    offset: np.ndarray
    refined_point: np.ndarray
    fallback: bool = False


def refine_crop(crop: np.ndarray, coarse: np.ndarray,
                threshold: int = THRESHOLD, *,
                angle_step: float = 1.0,
                ray_step: float = 0.7) -> GraspRefinement:
    """Refine a coarse keypoint from its pre-cropped local window.

    The crop is upsampled to the estimator input size by nearest neighbor,
    and the heatmap argmax maps back through the exact offset law
    offset = gamma * (argmax - center).  An empty crop falls back to a zero
    offset with the fallback flag set.
    """
    coarse = np.asarray(coarse, dtype=float)
    if not (crop >= threshold).any():
        return GraspRefinement(theta_hat=None, offset=np.zeros(2),
                               refined_point=coarse.copy(), fallback=True)
    idx = (np.arange(NET_INPUT_SIZE) * LOCAL_CROP_SIZE) // NET_INPUT_SIZE
    upscaled = crop[idx][:, idx]
    theta_hat, heatmap = estimate(upscaled, threshold,
                                  angle_step=angle_step, ray_step=ray_step)
    offset = offset_for_argmax(argmax_point(heatmap))
    return GraspRefinement(theta_hat=theta_hat, offset=offset,
                           refined_point=coarse + offset, fallback=False)


def refine_keypoint(img: np.ndarray, coarse: np.ndarray,
                    threshold: int = THRESHOLD, *,
                    angle_step: float = 1.0,
                    ray_step: float = 0.7) -> GraspRefinement:
    """Refine one coarse keypoint against the workspace image.

    Crops a local window around the keypoint and delegates to refine_crop.
    """
    arr = np.asarray(img)
    coarse = np.asarray(coarse, dtype=float)
    crop, _ = crop_window(arr, coarse, LOCAL_CROP_SIZE)
    return refine_crop(crop, coarse, threshold,
                       angle_step=angle_step, ray_step=ray_step)
