"""Untangling plans on the crossing graph: endpoint pulls and crossing removal.

Planning is trace-based: walking the cable from the right endpoint, the first
visit that dips under another strand marks the crossing to delete.  The plan
grasps two stubs at that crossing, the under-crossing arc on the traced side
(pull) and an over-crossing arc (hold), each one cable width out from the
crossing point.  The module also provides the noiseless move semantics (pure
code rewrite plus re-embed) and a full-rollout oracle built on them; the
executor layers stochastic failures on top of the same functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from .diagram import (
    DEFAULT_CABLE_WIDTH,
    OVER,
    UNDER_ONE,
    UNDER_TWO,
    WORKSPACE_H,
    WORKSPACE_W,
    CableDiagram,
    CableGraph,
    build_graph,
)
from .layout import embed_cached, stretch_endpoints

DEFAULT_PULL_MAGNITUDE = 80.0

# Default Reidemeister targets: endpoint anchors at mid-height, one tenth of
# the workspace in from each side.
DEFAULT_TARGET_LEFT = np.array([WORKSPACE_W * 0.1, WORKSPACE_H * 0.5])
DEFAULT_TARGET_RIGHT = np.array([WORKSPACE_W * 0.9, WORKSPACE_H * 0.5])


class PlanningError(RuntimeError):
    """The diagram admits no plan (corrupt graph or nothing to delete)."""


@dataclass(frozen=True)
class NodeDeletionPlan:
    """Grasp plan to pull one crossing apart.

    pull_edge is the arc traced from the right endpoint into the crossing
    (layer -1 or -2 there); hold_edge is an over-crossing arc (+1) at the
    same vertex.  The grasp points sit on those arcs one cable width from
    the crossing location.
    """

    crossing_vertex: int
    pull_edge: int
    hold_edge: int
    pull_point: np.ndarray
    hold_point: np.ndarray


@dataclass(frozen=True)
class ReidemeisterPlan:
    """Bilateral endpoint pull toward opposite workspace anchors."""

    left_point: np.ndarray
    right_point: np.ndarray
    target_left: np.ndarray
    target_right: np.ndarray


Plan = Union[NodeDeletionPlan, ReidemeisterPlan]


def _point_along(pts: np.ndarray, dist: float) -> np.ndarray:
    """Point at arclength dist from pts[0], clamped to the last point."""
    acc = 0.0
    for i in range(len(pts) - 1):
        seg = float(np.linalg.norm(pts[i + 1] - pts[i]))
        if seg > 0 and acc + seg >= dist:
            t = (dist - acc) / seg
            return pts[i] + t * (pts[i + 1] - pts[i])
        acc += seg
    return pts[-1].copy()


def _stub_point(d: CableDiagram, arc_index: int, crossing_at_start: bool,
                dist: float) -> np.ndarray:
    """Point on an arc at dist from its crossing end (capped at mid-arc)."""
    pts = d.arc_points(arc_index)
    if not crossing_at_start:
        pts = pts[::-1]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    return _point_along(pts, min(dist, total / 2.0))


def _is_self_loop_arc(d: CableDiagram, arc_index: int, cid: int) -> bool:
    """True when both ends of the arc land on the same crossing."""
    entries = d.code.entries
    if arc_index <= 0 or arc_index >= len(entries):
        return False  # endpoint arcs never loop
    return (
        entries[arc_index - 1].crossing_id == cid
        and entries[arc_index].crossing_id == cid
    )


def plan_node_deletion(g: CableGraph, d: CableDiagram,
                       cable_width: float = DEFAULT_CABLE_WIDTH) -> NodeDeletionPlan:
    """Plan the next crossing removal, traced from the right endpoint.

    The target is the first visit with an under layer (-1 or -2) walking
    right to left; the pull stub is the traced arc on the right side of
    that visit, and the hold stub is the over pass's free arc at the same
    crossing, preferring its own right side.
    """
    entries = d.code.entries
    if d.code.crossing_count == 0:
        raise PlanningError("straight cable: nothing to delete")
    pos = None
    for i in range(len(entries) - 1, -1, -1):
        if entries[i].layer in (UNDER_ONE, UNDER_TWO):
            pos = i
            break
    if pos is None:
        raise PlanningError("no under-crossing reachable from the right endpoint")
    cid = entries[pos].crossing_id
    pull_edge = pos + 1

    over_pos = next(
        i for i, e in enumerate(entries) if e.crossing_id == cid and e.layer == OVER
    )
    hold_edge = None
    for arc in (over_pos + 1, over_pos):
        if not _is_self_loop_arc(d, arc, cid):
            hold_edge = arc
            break
    if hold_edge is None:
        raise PlanningError(f"crossing {cid}: over pass has no holdable stub")

    pull_point = _stub_point(d, pull_edge, crossing_at_start=True, dist=cable_width)
    hold_point = _stub_point(
        d, hold_edge, crossing_at_start=(hold_edge == over_pos + 1), dist=cable_width
    )
    return NodeDeletionPlan(
        crossing_vertex=cid,
        pull_edge=pull_edge,
        hold_edge=hold_edge,
        pull_point=pull_point,
        hold_point=hold_point,
    )


def node_deletion_pull(plan: NodeDeletionPlan,
                       magnitude: float = DEFAULT_PULL_MAGNITUDE) -> np.ndarray:
    """Pull displacement: unit vector from hold through pull, scaled."""
    v = plan.pull_point - plan.hold_point
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise PlanningError("pull and hold points coincide")
    return v / norm * magnitude


def plan_reidemeister(g: CableGraph, d: CableDiagram, w_l: np.ndarray,
                      w_r: np.ndarray) -> ReidemeisterPlan:
    """Plan the bilateral endpoint pull to the two workspace anchors."""
    return ReidemeisterPlan(
        left_point=d.endpoint_left.copy(),
        right_point=d.endpoint_right.copy(),
        target_left=np.asarray(w_l, dtype=float).copy(),
        target_right=np.asarray(w_r, dtype=float).copy(),
    )


# ---------------------------------------------------------------------------
# Noiseless move semantics
# ---------------------------------------------------------------------------


def apply_node_deletion(d: CableDiagram, plan: NodeDeletionPlan, *,
                        sep_scale: float = 1.0,
                        cable_width: float = DEFAULT_CABLE_WIDTH) -> CableDiagram:
    """Remove the planned crossing and re-embed around the old knot center."""
    code = d.code.without_crossing(plan.crossing_vertex)
    return embed_cached(
        code, sep_scale=sep_scale, center=d.knot_center(), cable_width=cable_width
    )


def apply_reidemeister(d: CableDiagram, w_l: np.ndarray, w_r: np.ndarray,
                       cable_width: float = DEFAULT_CABLE_WIDTH) -> CableDiagram:
    """Pull the endpoints to the anchors; geometry only, topology unchanged."""
    return stretch_endpoints(d, np.asarray(w_l, dtype=float),
                             np.asarray(w_r, dtype=float), cable_width=cable_width)


def bruce_rollout(d: CableDiagram, w_l: Optional[np.ndarray] = None,
                  w_r: Optional[np.ndarray] = None, *,
                  sep_scale: float = 1.0,
                  cable_width: float = DEFAULT_CABLE_WIDTH) -> List[Plan]:
    """Noiseless full-rollout oracle: alternate endpoint pulls and deletions.

    Returns the plan sequence that untangles the diagram under noiseless
    dynamics: a Reidemeister move before every Node Deletion, ending when no
    crossing remains.  Raises PlanningError if the sequence would exceed
    2 * (initial crossings) + 2 actions, which indicates a planner or
    dynamics bug rather than a hard configuration.
    """
    w_l = DEFAULT_TARGET_LEFT if w_l is None else np.asarray(w_l, dtype=float)
    w_r = DEFAULT_TARGET_RIGHT if w_r is None else np.asarray(w_r, dtype=float)
    bound = 2 * d.code.crossing_count + 2
    plans: List[Plan] = []
    state = d
    while True:
        g = build_graph(state)
        plans.append(plan_reidemeister(g, state, w_l, w_r))
        state = apply_reidemeister(state, w_l, w_r, cable_width=cable_width)
        if state.code.crossing_count == 0:
            return plans
        nd = plan_node_deletion(build_graph(state), state, cable_width=cable_width)
        plans.append(nd)
        state = apply_node_deletion(
            state, nd, sep_scale=sep_scale, cable_width=cable_width
        )
        if state.code.crossing_count == 0:
            return plans
        if len(plans) >= bound:
            raise PlanningError(
                f"rollout exceeded {bound} actions with "
                f"{state.code.crossing_count} crossings left"
            )
