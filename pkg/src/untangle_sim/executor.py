"""Seeded bilateral execution of untangling episodes.

run_trial drives one cable from its initial tangle to a terminal state: an
initial endpoint pull, then crossing deletions interleaved with the loop
conditions and recovery moves of the chosen policy.  The robot only sees
noisy keypoints, local crops and the density comparator; the simulator
resolves every grasp against the true scene, with three failure channels:
a grasp that lands off its strand does nothing, a grasp that lands on the
wrong strand yanks a new kink into the cable, and a gripper can wedge
against the table and drag the whole cable to its parking pose.  Released
cable can additionally spring out toward the workspace edge.  All rolls
come from one seeded generator, so a trial replays bit-exact from its
seed, and force hooks in DynamicsConfig make each failure channel fire
deterministically for tests.

Policy names combine three letters: H is the endpoint-pull and deletion
planner (always present), L refines every grasp on a local crop, and S
adds the loop conditions plus re-posing and wedged recovery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .actions import (
    LEFT,
    NODE_DELETION,
    REIDEMEISTER,
    REPOSING_ROTATION,
    REPOSING_TRANSLATION,
    RIGHT,
    ArmAction,
    BilateralAction,
)
from .diagram import (
    DEFAULT_CABLE_WIDTH,
    WORKSPACE_H,
    WORKSPACE_W,
    CableDiagram,
    build_graph,
)
from .layout import LayoutError, embed_cached, knot_template, stretch_endpoints
from .percept import (
    THRESHOLD,
    DegenerateKeypointsError,
    EmptyObservationError,
    Keypoints,
    PerceptionNoise,
    ZERO_NOISE,
    density,
    extract_cable_contour,
    grasp_angles_analytic,
    hulk_keypoints,
    principal_angle,
    render,
    render_window,
)
from .planner import (
    PlanningError,
    apply_node_deletion,
    node_deletion_pull,
    plan_node_deletion,
)
from .recovery import (
    TERMINATED_AT_REFERENCE,
    GripperPose,
    ObservationHistory,
    WorkspaceAnchors,
    leaving_workspace_condition,
    plan_reposing,
    plan_wedged_recovery,
    rotate_condition,
    termination_condition,
    wedged_condition,
)
from .refine import LOCAL_CROP_SIZE, GraspRefinement, refine_crop

# Refinement estimator knobs for in-loop use; coarser than the benchmark
# defaults but far inside the grasp angle tolerance.
EXEC_ANGLE_STEP = 2.0
EXEC_RAY_STEP = 1.0

# Crossing passes this close to a grasp point count as extra strands when
# rolling for a wedge, in units of cable width.
WEDGE_NEIGHBORHOOD = 1.5

CAUSE_REFERENCE = "terminated_at_reference"
CAUSE_NO_PROGRESS = "terminated_no_progress"
CAUSE_WEDGE_LIMIT = "wedge_recovery_limit"
CAUSE_LEFT_WORKSPACE = "left_workspace"
CAUSE_ACTION_CAP = "action_cap"
CAUSE_PLANNER_DONE = "planner_exhausted"

FAILURE_MODES = ("A", "B", "C", "D", "E")


@dataclass(frozen=True)
class DynamicsConfig:
    """Grasp tolerances, failure-channel probabilities and safety caps.

    Defaults describe an ideal world: grasps succeed within their radius
    and angle tolerance and no stochastic channel fires.  The force hooks
    make one channel fire on every opportunity regardless of probability,
    which pins down the matching failure mode in tests.
    """

    grasp_radius: float = 10.0
    angle_tolerance: float = 45.0
    wedge_base_prob: float = 0.0
    wedge_density_gain: float = 0.0
    springout_prob: float = 0.0
    springout_range: Tuple[float, float] = (200.0, 400.0)
    wedge_recovery_limit: int = 3
    max_actions: int = 50
    plain_action_cap: int = 15
    reset_history_on_stretch: bool = True
    force_wedge: bool = False
    force_springout: bool = False
    force_termination_flip: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.grasp_radius <= 0:
            raise ValueError("grasp_radius must be positive")
        if not 0.0 <= self.angle_tolerance <= 90.0:
            raise ValueError("angle_tolerance must lie in [0, 90] degrees")
        for name in ("wedge_base_prob", "wedge_density_gain", "springout_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        lo, hi = self.springout_range
        if not 0.0 <= lo <= hi:
            raise ValueError("springout_range must be ordered and nonnegative")
        if self.wedge_recovery_limit < 1 or self.max_actions < 1 or self.plain_action_cap < 1:
            raise ValueError("limits must be at least 1")


@dataclass(frozen=True)
class Policy:
    """Which optional layers run on top of the base planner."""

    name: str
    use_refinement: bool
    use_recovery: bool

    @staticmethod
    def parse(name: str) -> "Policy":
        """Parse a policy name made of the letters H, L and S."""
        letters = set(name.strip().upper())
        if not letters or not letters <= {"H", "L", "S"}:
            raise ValueError(f"unknown policy {name!r}; use letters from H, L, S")
        if "H" not in letters:
            raise ValueError(f"policy {name!r} lacks the base planner letter H")
        canon = "H" + ("L" if "L" in letters else "") + ("S" if "S" in letters else "")
        return Policy(canon, use_refinement="L" in letters, use_recovery="S" in letters)


POLICIES = ("H", "HL", "HS", "HLS")


@dataclass(frozen=True)
class TrialResult:
    """How one episode ended, plus its full action log."""

    policy: str
    success: bool
    failure_mode: Optional[str]
    n_actions: int
    initial_crossings: int
    final_crossings: int
    terminal_cause: str
    log: List[dict]
    final_diagram: CableDiagram
    frames: Optional[List[CableDiagram]] = None

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "policy": self.policy,
            "success": bool(self.success),
            "failure_mode": self.failure_mode,
            "n_actions": int(self.n_actions),
            "initial_crossings": int(self.initial_crossings),
            "final_crossings": int(self.final_crossings),
            "terminal_cause": self.terminal_cause,
            "log": self.log,
        }


def classify_failure(terminal_cause: str, final_crossings: int) -> Optional[str]:
    """Failure mode for a finished episode, or None for success.

    Wedge exhaustion and workspace escape are failures outright; the other
    causes only fail when crossings remain: premature termination at the
    reference is a comparator error (C), stalled-density termination is a
    planning dead end (D), and everything else that ran out of actions is
    a grasp failure (A).
    """
    if terminal_cause == CAUSE_WEDGE_LIMIT:
        return "B"
    if terminal_cause == CAUSE_LEFT_WORKSPACE:
        return "E"
    if final_crossings <= 1:
        return None
    if terminal_cause == CAUSE_REFERENCE:
        return "C"
    if terminal_cause == CAUSE_NO_PROGRESS:
        return "D"
    return "A"


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------


def _polyline_distance(p: np.ndarray, pts: np.ndarray) -> Tuple[float, int]:
    """Distance from p to a polyline and the nearest segment index."""
    if len(pts) == 1:
        return float(np.hypot(p[0] - pts[0, 0], p[1] - pts[0, 1])), 0
    a, b = pts[:-1], pts[1:]
    ab = b - a
    den = np.maximum((ab ** 2).sum(-1), 1e-12)
    t = np.clip(((p[None, :] - a) * ab).sum(-1) / den, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.hypot(p[0] - proj[:, 0], p[1] - proj[:, 1])
    k = int(np.argmin(d))
    return float(d[k]), k


def _perp_at(pts: np.ndarray, p: np.ndarray) -> Optional[float]:
    """Gripper angle orthogonal to the polyline direction nearest p."""
    if len(pts) < 2:
        return None
    _, k = _polyline_distance(p, pts)
    v = pts[k + 1] - pts[k]
    if not np.any(v):
        return None
    return (math.degrees(math.atan2(v[1], v[0])) + 90.0) % 180.0


def _angle_gap(a: float, b: float) -> float:
    """Acute gap between two gripper axes, in degrees."""
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def _center_estimate(d: CableDiagram) -> np.ndarray:
    """Polyline point nearest the polyline mean (contour-center analog)."""
    pts = d.polyline
    mean = pts.mean(axis=0)
    idx = int(np.argmin(np.hypot(pts[:, 0] - mean[0], pts[:, 1] - mean[1])))
    return pts[idx].copy()


def _tail_perp(d: CableDiagram, left: bool) -> Optional[float]:
    """True grasp angle for one tail: orthogonal to its end segment."""
    pts = d.polyline
    v = (pts[1] - pts[0]) if left else (pts[-2] - pts[-1])
    if not np.any(v):
        return None
    return (math.degrees(math.atan2(v[1], v[0])) + 90.0) % 180.0


_REFERENCE_DENSITY: Dict[float, float] = {}


def _reference_density(cable_width: float) -> float:
    """Density of the single-crossing reference scene (memoized)."""
    key = round(float(cable_width), 6)
    if key not in _REFERENCE_DENSITY:
        ref = knot_template("single_crossing", rng_seed=0, cable_width=cable_width)
        _REFERENCE_DENSITY[key] = density(ref, cable_width=cable_width)
    return _REFERENCE_DENSITY[key]


# ---------------------------------------------------------------------------
# World state and stochastic channels
# ---------------------------------------------------------------------------


@dataclass
class _World:
    """Mutable state of one running episode."""

    diagram: CableDiagram
    pose: GripperPose
    history: ObservationHistory
    anchors: WorkspaceAnchors
    noise: PerceptionNoise
    dynamics: DynamicsConfig
    rng: np.random.Generator
    sep_scale: float
    cable_width: float
    actions_taken: int = 0
    recoveries: int = 0
    terminal_cause: Optional[str] = None
    log: List[dict] = field(default_factory=list)
    frames: Optional[List[CableDiagram]] = None


def _wedge_probability(w: _World, point: np.ndarray) -> float:
    """Wedge chance at a grasp point: base plus a crowding term."""
    dyn = w.dynamics
    strands = 1
    best, best_c = math.inf, None
    for c in w.diagram.crossings:
        dist = math.hypot(point[0] - c.location[0], point[1] - c.location[1])
        if dist < best:
            best, best_c = dist, c
    if best_c is not None and best <= WEDGE_NEIGHBORHOOD * w.cable_width:
        strands = len(best_c.passes)
    p = dyn.wedge_base_prob + dyn.wedge_density_gain * (strands - 1)
    return min(max(p, 0.0), 1.0)


def _drag_to_park(w: _World, arm: str) -> None:
    """Wedge an arm: flag it and drag the cable to its parking pose."""
    park = w.pose.park(arm)
    delta = park - _center_estimate(w.diagram)
    # raw translation on purpose: the parking pose sits outside the frame
    w.diagram = w.diagram._transformed(lambda p: p + delta)
    w.pose.set_wedged(arm, True)


def _roll_wedge(w: _World, arm: str, point: Optional[np.ndarray]) -> bool:
    """Roll the wedge channel for one engaged arm; True aborts the action."""
    if point is None:
        return False
    prob = _wedge_probability(w, np.asarray(point, dtype=float))
    draw = float(w.rng.random())  # always drawn: keeps the stream aligned
    if w.dynamics.force_wedge or draw < prob:
        _drag_to_park(w, arm)
        return True
    return False


def _roll_springout(w: _World) -> bool:
    """Roll the springout channel after the cable is released."""
    dyn = w.dynamics
    if dyn.force_springout:
        c = _center_estimate(w.diagram)
        edges = (
            (c[0], np.array([-1.0, 0.0])),
            (WORKSPACE_W - c[0], np.array([1.0, 0.0])),
            (c[1], np.array([0.0, -1.0])),
            (WORKSPACE_H - c[1], np.array([0.0, 1.0])),
        )
        direction = min(edges, key=lambda e: e[0])[1]
        delta = direction * dyn.springout_range[1]
    else:
        if dyn.springout_prob <= 0.0:
            return False
        if float(w.rng.random()) >= dyn.springout_prob:
            return False
        ang = float(w.rng.uniform(0.0, 2.0 * math.pi))
        mag = float(w.rng.uniform(*dyn.springout_range))
        delta = mag * np.array([math.cos(ang), math.sin(ang)])
    # raw translation: springing past the border is the point of the channel
    w.diagram = w.diagram._transformed(lambda p: p + delta)
    return True


def _check_escape(w: _World) -> None:
    """Flag the episode terminal when the cable has left the workspace."""
    if w.terminal_cause is not None or w.pose.wedged_arm() is not None:
        return
    c = _center_estimate(w.diagram)
    if not (0.0 <= c[0] <= WORKSPACE_W and 0.0 <= c[1] <= WORKSPACE_H):
        w.terminal_cause = CAUSE_LEFT_WORKSPACE


def _log_action(w: _World, kind: str, action: Optional[BilateralAction],
                outcome, springout: bool = False) -> None:
    """Count, log and snapshot one executed action, then run the escape check."""
    w.actions_taken += 1
    c = _center_estimate(w.diagram)
    w.log.append({
        "event": "action",
        "t": w.actions_taken,
        "kind": kind,
        "arms": None if action is None else action.to_json(),
        "outcome": outcome,
        "wedged_arm": w.pose.wedged_arm(),
        "springout": bool(springout),
        "crossings": int(w.diagram.crossing_count),
        "density": round(density(w.diagram, cable_width=w.cable_width), 6),
        "center": [round(float(c[0]), 3), round(float(c[1]), 3)],
    })
    if w.frames is not None:
        w.frames.append(w.diagram)
    _check_escape(w)


# ---------------------------------------------------------------------------
# Grasp observation and resolution
# ---------------------------------------------------------------------------


def _refine_at(w: _World, coarse: np.ndarray) -> GraspRefinement:
    """Refine a coarse keypoint on a locally rendered crop."""
    crop, _ = render_window(w.diagram, coarse, LOCAL_CROP_SIZE, w.cable_width)
    return refine_crop(crop, coarse, angle_step=EXEC_ANGLE_STEP,
                       ray_step=EXEC_RAY_STEP)


def _crop_axis_angle(w: _World, point: np.ndarray) -> Optional[float]:
    """Endpoint-style grasp angle from a local crop's principal axis."""
    crop, _ = render_window(w.diagram, point, LOCAL_CROP_SIZE, w.cable_width)
    ys, xs = np.nonzero(crop >= THRESHOLD)
    if len(xs) == 0:
        return None
    return (principal_angle(np.stack([xs, ys], axis=1)) + 90.0) % 180.0


def _resolve_grasp(w: _World, point: np.ndarray, theta: Optional[float],
                   intended_arc: Optional[int],
                   theta_ref: Optional[float]) -> Tuple[str, Optional[int]]:
    """Resolve one grasp against the true scene.

    Returns (outcome, arc): "ok" with the grasped arc, "snag" with the
    wrongly grasped arc, or "miss" with None.  A grasp is intended for one
    arc (or for any strand when intended_arc is None); landing within the
    grasp radius of the wrong arc snags it, and a bad approach angle on
    the right arc slips off as a plain miss.
    """
    dyn = w.dynamics
    point = np.asarray(point, dtype=float)
    slices = w.diagram.arc_slices()
    dists = np.empty(len(slices))
    for k, (i, j) in enumerate(slices):
        dists[k], _ = _polyline_distance(point, w.diagram.polyline[i : j + 1])

    def angle_ok(ref: Optional[float]) -> bool:
        if theta is None or ref is None:
            return True
        return _angle_gap(theta, ref) <= dyn.angle_tolerance

    if intended_arc is None:
        k = int(np.argmin(dists))
        if dists[k] > dyn.grasp_radius:
            return "miss", None
        i, j = slices[k]
        ref = _perp_at(w.diagram.polyline[i : j + 1], point)
        return ("ok", k) if angle_ok(ref) else ("miss", None)

    if dists[intended_arc] <= dyn.grasp_radius:
        return ("ok", intended_arc) if angle_ok(theta_ref) else ("miss", None)
    others = [k for k in range(len(slices)) if k != intended_arc
              and dists[k] <= dyn.grasp_radius]
    if others:
        snagged = min(others, key=lambda k: dists[k])
        return "snag", snagged
    return "miss", None


def _apply_snag(w: _World, arc: int) -> bool:
    """Yank a kink into the wrongly grasped arc; False when it slips free."""
    code = w.diagram.code.with_kink(arc)
    try:
        w.diagram = embed_cached(code, sep_scale=w.sep_scale,
                                 center=w.diagram.knot_center(),
                                 cable_width=w.cable_width)
        return True
    except LayoutError:
        return False


# ---------------------------------------------------------------------------
# Action executors
# ---------------------------------------------------------------------------


def _execute_reidemeister(w: _World, policy: Policy) -> None:
    """Observe the tails, grasp both, and pull them taut to the anchors."""
    d = w.diagram
    true_k = Keypoints(p_l=d.endpoint_left.copy(), p_r=d.endpoint_right.copy())
    obs = hulk_keypoints(true_k, w.noise, w.rng)

    attempts: Dict[str, ArmAction] = {}
    verdicts: Dict[str, str] = {}
    last_arc = len(d.arc_slices()) - 1
    for arm, coarse, intended in ((LEFT, obs.p_l, 0), (RIGHT, obs.p_r, last_arc)):
        if policy.use_refinement:
            ref = _refine_at(w, coarse)
            point, theta = ref.refined_point, ref.theta_hat
        else:
            point, theta = coarse, _crop_axis_angle(w, coarse)
        outcome, arc = _resolve_grasp(w, point, theta, intended,
                                      _tail_perp(d, left=(arm == LEFT)))
        verdicts[arm] = outcome
        target = w.anchors.w_l if arm == LEFT else w.anchors.w_r
        attempts[arm] = ArmAction(arm, point=point, theta=theta,
                                  delta=target - point, grasp=True,
                                  arc=arc if outcome == "snag" else intended)
    action = BilateralAction(REIDEMEISTER, left=attempts[LEFT], right=attempts[RIGHT])

    for arm in (LEFT, RIGHT):  # wedge rolls, fixed order, first hit aborts
        if _roll_wedge(w, arm, attempts[arm].point):
            _log_action(w, REIDEMEISTER, action, dict(verdicts, aborted="wedged"))
            return

    snags = [arm for arm in (LEFT, RIGHT) if verdicts[arm] == "snag"]
    if snags:  # one kink per action: the left gripper wins a double snag
        arm = snags[0]
        if not _apply_snag(w, attempts[arm].arc):
            verdicts[arm] = "miss"
    pulled = {arm: verdicts[arm] == "ok" for arm in (LEFT, RIGHT)}
    if any(pulled.values()):
        try:
            w.diagram = stretch_endpoints(
                w.diagram, w.anchors.w_l, w.anchors.w_r, w.cable_width,
                pull_left=pulled[LEFT], pull_right=pulled[RIGHT])
        except LayoutError:
            pass  # no clear route: the pull does nothing
    sprung = any(pulled.values()) and _roll_springout(w)
    _log_action(w, REIDEMEISTER, action, verdicts, springout=sprung)


def _execute_node_deletion(w: _World, policy: Policy, plan) -> None:
    """Observe the planned stubs, grasp pull and hold, and delete the crossing."""
    d = w.diagram
    true_k = Keypoints(p_l=d.endpoint_left.copy(), p_r=d.endpoint_right.copy(),
                       p_pull=plan.pull_point.copy(), p_hold=plan.hold_point.copy())
    obs = hulk_keypoints(true_k, w.noise, w.rng)
    try:
        ref_pull, ref_hold = grasp_angles_analytic(true_k)
    except DegenerateKeypointsError:
        ref_pull = ref_hold = None

    if policy.use_refinement:
        r_pull = _refine_at(w, obs.p_pull)
        r_hold = _refine_at(w, obs.p_hold)
        pts = {"pull": r_pull.refined_point, "hold": r_hold.refined_point}
        thetas = {"pull": r_pull.theta_hat, "hold": r_hold.theta_hat}
    else:
        pts = {"pull": obs.p_pull, "hold": obs.p_hold}
        try:
            th_p, th_h = grasp_angles_analytic(obs)
        except DegenerateKeypointsError:
            th_p = th_h = None
        thetas = {"pull": th_p, "hold": th_h}

    verdicts, arcs = {}, {}
    for role, intended, ref in (("pull", plan.pull_edge, ref_pull),
                                ("hold", plan.hold_edge, ref_hold)):
        verdicts[role], arcs[role] = _resolve_grasp(
            w, pts[role], thetas[role], intended, ref)

    pull_is_left = plan.pull_point[0] <= plan.hold_point[0]
    role_of = {LEFT: "pull" if pull_is_left else "hold",
               RIGHT: "hold" if pull_is_left else "pull"}
    pull_delta = node_deletion_pull(plan)
    arms = {}
    for arm in (LEFT, RIGHT):
        role = role_of[arm]
        arms[arm] = ArmAction(
            arm, point=pts[role], theta=thetas[role],
            delta=pull_delta if role == "pull" else np.zeros(2), grasp=True,
            arc=arcs[role] if arcs[role] is not None else
            (plan.pull_edge if role == "pull" else plan.hold_edge))
    action = BilateralAction(NODE_DELETION, left=arms[LEFT], right=arms[RIGHT])
    outcome = {role_of[arm]: verdicts[role_of[arm]] for arm in (LEFT, RIGHT)}

    for arm in (LEFT, RIGHT):
        if _roll_wedge(w, arm, arms[arm].point):
            _log_action(w, NODE_DELETION, action, dict(outcome, aborted="wedged"))
            return

    sprung = False
    if verdicts["pull"] == "ok" and verdicts["hold"] == "ok":
        from .planner import apply_node_deletion

        w.diagram = apply_node_deletion(d, plan, sep_scale=w.sep_scale,
                                        cable_width=w.cable_width)
        sprung = _roll_springout(w)
    elif "snag" in verdicts.values():
        role = "pull" if verdicts["pull"] == "snag" else "hold"
        if _apply_snag(w, arcs[role]):
            sprung = _roll_springout(w)
        else:
            outcome[role] = "miss"
    _log_action(w, NODE_DELETION, action, outcome, springout=sprung)


def _execute_reposing(w: _World, policy: Policy, rotate: bool) -> None:
    """Grasp the cable near its center and carry the knot back to w_c."""
    center = _center_estimate(w.diagram)
    refinement = _refine_at(w, center) if policy.use_refinement else None
    action = plan_reposing(center, refinement, w.anchors, rotate)
    kind = REPOSING_ROTATION if rotate else REPOSING_TRANSLATION
    arm = action.right

    if _roll_wedge(w, RIGHT, arm.point):
        _log_action(w, kind, action, {"right": "wedged"})
        return
    outcome, _ = _resolve_grasp(w, arm.point, arm.theta, None, None)
    sprung = False
    if outcome == "ok":
        if rotate:
            w.diagram = w.diagram.rotated_180(arm.point)
        w.diagram = w.diagram.translated(w.anchors.w_c - _center_estimate(w.diagram))
        sprung = _roll_springout(w)
    _log_action(w, kind, action, {"right": outcome}, springout=sprung)


def _execute_recovery(w: _World, policy: Policy) -> None:
    """Run the two-step wedged-arm handoff through the center anchor."""
    stuck = w.pose.wedged_arm()
    carry_from = _center_estimate(w.diagram)

    # plan against the predicted post-carry scene, which is observable
    predicted = w.diagram._transformed(
        lambda p, dd=w.anchors.w_c - carry_from: p + dd)
    try:
        contour = extract_cable_contour(render(predicted, w.cable_width))
        contour_pts = contour.points.astype(float)
    except EmptyObservationError:
        contour_pts = predicted.polyline
    hold_ref = None
    if policy.use_refinement:
        other_anchor = w.anchors.w_l if stuck == RIGHT else w.anchors.w_r
        gaps = np.hypot(contour_pts[:, 0] - other_anchor[0],
                        contour_pts[:, 1] - other_anchor[1])
        coarse_hold = contour_pts[int(np.argmin(gaps))]
        crop, _ = render_window(predicted, coarse_hold, LOCAL_CROP_SIZE, w.cable_width)
        hold_ref = refine_crop(crop, coarse_hold, angle_step=EXEC_ANGLE_STEP,
                               ray_step=EXEC_RAY_STEP)
    release, hold = plan_wedged_recovery(
        contour_pts, w.pose, w.anchors, stuck,
        hold_refinement=hold_ref, carry_from=carry_from)

    # step one: carry to the center anchor and let go
    w.diagram = w.diagram.translated(w.anchors.w_c - carry_from)
    sprung = _roll_springout(w)
    _log_action(w, release.kind, release, {stuck: "carry"}, springout=sprung)
    if w.terminal_cause is not None:
        return

    # step two: the free arm pins the cable while the stuck arm pushes off
    other = LEFT if stuck == RIGHT else RIGHT
    pin = hold.left if other == LEFT else hold.right
    outcome, _ = _resolve_grasp(w, pin.point, pin.theta, None, None)
    freeing_failed = bool(w.dynamics.force_wedge)
    if not freeing_failed and w.dynamics.wedge_base_prob > 0.0:
        freeing_failed = float(w.rng.random()) < w.dynamics.wedge_base_prob
    if freeing_failed:
        _drag_to_park(w, stuck)  # the push-off jams again
    else:
        w.pose.set_wedged(stuck, False)
    w.recoveries += 1
    _log_action(w, hold.kind, hold,
                {other: outcome, stuck: "stuck" if freeing_failed else "freed"})


# ---------------------------------------------------------------------------
# Episode loop
# ---------------------------------------------------------------------------


def _conditions_blocked(w: _World) -> bool:
    """True when the episode has ended and the loop must stop."""
    return w.terminal_cause is not None


def run_trial(diagram: CableDiagram, policy="HLS", *,
              noise: Optional[PerceptionNoise] = None,
              dynamics: Optional[DynamicsConfig] = None,
              rng: Optional[np.random.Generator] = None,
              anchors: Optional[WorkspaceAnchors] = None,
              sep_scale: float = 1.0,
              cable_width: float = DEFAULT_CABLE_WIDTH,
              collect_frames: bool = False) -> TrialResult:
    """Run one untangling episode and report how it ended.

    The episode starts with one endpoint pull, then repeats: check the
    policy's loop conditions (termination, wedged, rotate, leaving), run
    any recovery or re-posing they demand, and delete the next crossing.
    Policies without the condition layer simply delete until the planner
    runs dry or the plain action cap is hit.  Every stochastic draw comes
    from rng (or a generator seeded by dynamics.seed), so identical inputs
    replay identical episodes.
    """
    pol = Policy.parse(policy) if isinstance(policy, str) else policy
    dyn = dynamics if dynamics is not None else DynamicsConfig()
    w = _World(
        diagram=diagram,
        pose=GripperPose(),
        history=ObservationHistory(_reference_density(cable_width)),
        anchors=anchors if anchors is not None else WorkspaceAnchors(),
        noise=noise if noise is not None else ZERO_NOISE,
        dynamics=dyn,
        rng=rng if rng is not None else np.random.default_rng(dyn.seed),
        sep_scale=sep_scale,
        cable_width=cable_width,
    )
    if collect_frames:
        w.frames = [diagram]
    initial_crossings = diagram.crossing_count
    cap = dyn.max_actions if pol.use_recovery else dyn.plain_action_cap

    _execute_reidemeister(w, pol)
    if dyn.reset_history_on_stretch:
        w.history.clear()
    w.history.append(w.actions_taken,
                     density(w.diagram, cable_width=w.cable_width))

    while w.terminal_cause is None:
        if pol.use_recovery:
            verdict = termination_condition(
                w.history, noise=w.noise, rng=w.rng,
                force_flip=dyn.force_termination_flip)
            if verdict is not None:
                w.terminal_cause = (CAUSE_REFERENCE if verdict == "reference"
                                    else CAUSE_NO_PROGRESS)
                w.log.append({"event": "conditions", "after_t": w.actions_taken,
                              "termination": verdict})
                break
        if w.actions_taken >= cap:
            w.terminal_cause = CAUSE_ACTION_CAP
            break

        if pol.use_recovery:
            while wedged_condition(_center_estimate(w.diagram), w.pose):
                if w.recoveries >= dyn.wedge_recovery_limit:
                    w.terminal_cause = CAUSE_WEDGE_LIMIT
                    break
                _execute_recovery(w, pol)
                if _conditions_blocked(w):
                    break
            if _conditions_blocked(w):
                break
            rotate = rotate_condition(w.history, noise=w.noise, rng=w.rng)
            leaving = leaving_workspace_condition(
                _center_estimate(w.diagram), w.anchors)
            w.log.append({"event": "conditions", "after_t": w.actions_taken,
                          "termination": None, "rotate": bool(rotate),
                          "leaving": bool(leaving)})
            if rotate:
                _execute_reposing(w, pol, rotate=True)
                if _conditions_blocked(w):
                    break
            if leaving and leaving_workspace_condition(
                    _center_estimate(w.diagram), w.anchors):
                _execute_reposing(w, pol, rotate=False)
                if _conditions_blocked(w):
                    break
        elif w.pose.wedged_arm() is None:
            pass  # no condition layer: plain deletion loop
        if w.pose.wedged_arm() is not None and not pol.use_recovery:
            # a wedged arm pins the cable out of reach; burn an action
            _log_action(w, NODE_DELETION, None, {"aborted": "wedged"})
            w.history.append(w.actions_taken,
                             density(w.diagram, cable_width=w.cable_width))
            continue

        try:
            plan = plan_node_deletion(build_graph(w.diagram), w.diagram,
                                      w.cable_width)
        except PlanningError:
            w.terminal_cause = CAUSE_PLANNER_DONE
            break
        _execute_node_deletion(w, pol, plan)
        w.history.append(w.actions_taken,
                         density(w.diagram, cable_width=w.cable_width))

    final_crossings = w.diagram.crossing_count
    failure = classify_failure(w.terminal_cause, final_crossings)
    return TrialResult(
        policy=pol.name,
        success=failure is None and final_crossings <= 1,
        failure_mode=failure,
        n_actions=w.actions_taken,
        initial_crossings=initial_crossings,
        final_crossings=final_crossings,
        terminal_cause=w.terminal_cause,
        log=w.log,
        final_diagram=w.diagram,
        frames=w.frames,
    )
