"""Stuck-state detection and recovery planning for the untangling loop.

The untangling loop consults a small set of read-only conditions between
deletion steps: has the scene stopped getting sparser (termination), has it
grown denser twice in a row (re-posing rotation), has the knot drifted from
the center anchor (re-posing translation), and did an arm drag the whole
cable to its parking pose (wedged).  All density talk goes through the same
seeded comparator, so condition verdicts are reproducible under comparator
noise.  The planners here turn a positive condition into bilateral actions:
re-posing grasps the cable and carries it back to the center anchor,
optionally rotating it half a turn first, and wedged recovery hands the
cable from the stuck arm to the free one in two steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .actions import (
    LEFT,
    RECOVERY_HOLD,
    RECOVERY_RELEASE,
    REPOSING_ROTATION,
    REPOSING_TRANSLATION,
    RIGHT,
    ArmAction,
    BilateralAction,
)
from .percept import DENSITY_MARGIN, denser

# Condition thresholds, in workspace pixels.
WEDGE_RADIUS = 20.0
LEAVING_RADIUS = 200.0
# Deletion steps without a strict density drop before giving up.
PROGRESS_WINDOW = 5

TERMINATED_AT_REFERENCE = "reference"
TERMINATED_NO_PROGRESS = "no_progress"

_DEFAULT_W_L = (64.0, 240.0)
_DEFAULT_W_C = (320.0, 240.0)
_DEFAULT_W_R = (576.0, 240.0)
_DEFAULT_PARK_LEFT = (-60.0, 240.0)
_DEFAULT_PARK_RIGHT = (700.0, 240.0)


@dataclass(frozen=True)
class WorkspaceAnchors:
    """Left, center and right drop anchors, ordered left to right."""

    w_l: np.ndarray = _DEFAULT_W_L
    w_c: np.ndarray = _DEFAULT_W_C
    w_r: np.ndarray = _DEFAULT_W_R

    def __post_init__(self):
        for name in ("w_l", "w_c", "w_r"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.w_l[0] < self.w_c[0] < self.w_r[0]):
            raise ValueError("anchors must be ordered left to right")


@dataclass
class GripperPose:
    """Parking poses and wedged flags for both arms.

    Arm motion is abstracted away: between actions each gripper sits at its
    parking pose just outside the workspace, so the poses here only change
    meaning through the wedged flags.
    """

    park_left: np.ndarray = _DEFAULT_PARK_LEFT
    park_right: np.ndarray = _DEFAULT_PARK_RIGHT
    wedged_left: bool = False
    wedged_right: bool = False

    def __post_init__(self):
        self.park_left = np.asarray(self.park_left, dtype=float)
        self.park_right = np.asarray(self.park_right, dtype=float)

    def park(self, arm: str) -> np.ndarray:
        """Parking pose of one arm."""
        if arm == LEFT:
            return self.park_left
        if arm == RIGHT:
            return self.park_right
        raise ValueError(f"unknown arm {arm!r}")

    def wedged(self, arm: str) -> bool:
        """Wedged flag of one arm."""
        if arm == LEFT:
            return self.wedged_left
        if arm == RIGHT:
            return self.wedged_right
        raise ValueError(f"unknown arm {arm!r}")

    def set_wedged(self, arm: str, flag: bool) -> None:
        """Set one arm's wedged flag."""
        if arm == LEFT:
            self.wedged_left = flag
        elif arm == RIGHT:
            self.wedged_right = flag
        else:
            raise ValueError(f"unknown arm {arm!r}")

    def wedged_arm(self) -> Optional[str]:
        """The wedged arm, left reported first, or None."""
        if self.wedged_left:
            return LEFT
        if self.wedged_right:
            return RIGHT
        return None


@dataclass(frozen=True)
class HistoryEntry:
    """One logged observation: step index, observation and its density."""

    step: int
    density: float
    observation: object = None


@dataclass
class ObservationHistory:
    """Per-trial density log the loop conditions read.

    reference_density is the density of the goal scene (one crossing left);
    entries are appended after every deletion step with strictly increasing
    step indices.
    """

    reference_density: float
    entries: List[HistoryEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, step: int, density: float, observation: object = None) -> None:
        """Log one observation; step indices must strictly increase."""
        if self.entries and step <= self.entries[-1].step:
            raise ValueError(
                f"step {step} not after logged step {self.entries[-1].step}"
            )
        self.entries.append(HistoryEntry(step, float(density), observation))

    def density_back(self, k: int) -> float:
        """Density k entries before the latest one."""
        return self.entries[-1 - k].density

    def clear(self) -> None:
        """Drop all entries, keeping the reference."""
        self.entries.clear()


# ---------------------------------------------------------------------------
# Loop conditions
# ---------------------------------------------------------------------------


def rotate_condition(history: ObservationHistory, *, noise=None, rng=None,
                     margin: float = DENSITY_MARGIN) -> bool:
    """True when the scene has grown strictly denser two steps in a row.

    Two consecutive density increases mean deletion pulls are piling the
    cable up instead of loosening it, which a half-turn re-pose breaks.
    Both comparator calls always run so the comparator noise stream does
    not depend on the first verdict.
    """
    if len(history) < 3:
        return False
    latest = denser(history.density_back(0), history.density_back(1),
                    noise=noise, rng=rng, margin=margin)
    previous = denser(history.density_back(1), history.density_back(2),
                      noise=noise, rng=rng, margin=margin)
    return latest == 1 and previous == 1


def termination_condition(history: ObservationHistory, *, noise=None, rng=None,
                          margin: float = DENSITY_MARGIN,
                          force_flip: bool = False) -> Optional[str]:
    """Terminal verdict for the current history, or None to continue.

    The run ends at TERMINATED_AT_REFERENCE when the scene is no denser
    than the single-crossing reference, and at TERMINATED_NO_PROGRESS when
    density has not strictly dropped over the last PROGRESS_WINDOW deletion
    steps.  Both comparators run whenever their operands exist, keeping the
    noise stream independent of the verdicts; force_flip inverts only the
    reference comparison.
    """
    if len(history) == 0:
        return None
    at_reference = denser(history.density_back(0), history.reference_density,
                          noise=noise, rng=rng, margin=margin,
                          force_flip=force_flip)
    no_progress = None
    if len(history) >= PROGRESS_WINDOW + 1:
        no_progress = denser(history.density_back(PROGRESS_WINDOW),
                             history.density_back(0),
                             noise=noise, rng=rng, margin=margin)
    if at_reference == 0:
        return TERMINATED_AT_REFERENCE
    if no_progress == 0:
        return TERMINATED_NO_PROGRESS
    return None


def wedged_condition(center_estimate: np.ndarray, pose: GripperPose,
                     threshold: float = WEDGE_RADIUS) -> bool:
    """True when the cable center estimate sits at an arm parking pose.

    A wedged gripper drags the whole cable with it, so the center estimate
    landing within threshold of a parking pose (strictly: the threshold
    itself is not inside) is the visible signature of a wedge.
    """
    c = np.asarray(center_estimate, dtype=float)
    for park in (pose.park_left, pose.park_right):
        if float(np.hypot(c[0] - park[0], c[1] - park[1])) < threshold:
            return True
    return False


def leaving_workspace_condition(center_estimate: np.ndarray,
                                anchors: WorkspaceAnchors,
                                threshold: float = LEAVING_RADIUS) -> bool:
    """True when the cable center has drifted strictly beyond threshold
    pixels from the center anchor."""
    c = np.asarray(center_estimate, dtype=float)
    d = float(np.hypot(c[0] - anchors.w_c[0], c[1] - anchors.w_c[1]))
    return d > threshold


# ---------------------------------------------------------------------------
# Recovery planners
# ---------------------------------------------------------------------------


def plan_reposing(center: np.ndarray, refinement, anchors: WorkspaceAnchors,
                  rotate: bool, theta: Optional[float] = None) -> BilateralAction:
    """Plan a right-arm re-pose that carries the knot back to the center.

    The arm grasps the cable at its center estimate (or at the refined
    point when a refinement is given), optionally rotates the scene half a
    turn, and drops it so the estimate lands on the center anchor.  The
    carry displacement always targets the coarse center: refinement moves
    the grasp onto the strand, not the destination.
    """
    center = np.asarray(center, dtype=float)
    point = center
    if refinement is not None:
        point = np.asarray(refinement.refined_point, dtype=float)
        if refinement.theta_hat is not None:
            theta = float(refinement.theta_hat)
    kind = REPOSING_ROTATION if rotate else REPOSING_TRANSLATION
    arm = ArmAction(RIGHT, point=point, theta=theta,
                    delta=anchors.w_c - center, grasp=True)
    return BilateralAction(kind, right=arm)


def plan_wedged_recovery(contour, pose: GripperPose, anchors: WorkspaceAnchors,
                         stuck_arm: str, hold_refinement=None,
                         carry_from: Optional[np.ndarray] = None) -> List[BilateralAction]:
    """Plan the two-step handoff that frees a wedged arm.

    Step one: the stuck arm, still holding the cable at its parking pose,
    carries it to the center anchor and releases.  Step two: the free arm
    pins the cable at the contour point nearest its own anchor while the
    stuck arm, gripper open, pushes off through the center back to its
    parking pose.  Raises ValueError when the named arm is not wedged.
    """
    if not pose.wedged(stuck_arm):
        raise ValueError(f"{stuck_arm} arm is not wedged")
    park = pose.park(stuck_arm)
    start = park if carry_from is None else np.asarray(carry_from, dtype=float)
    other = RIGHT if stuck_arm == LEFT else LEFT
    anchor = anchors.w_r if other == RIGHT else anchors.w_l

    pts = np.asarray(getattr(contour, "points", contour), dtype=float)
    gaps = np.hypot(pts[:, 0] - anchor[0], pts[:, 1] - anchor[1])
    p_hold = pts[int(np.argmin(gaps))]
    theta_hold = None
    if hold_refinement is not None:
        p_hold = np.asarray(hold_refinement.refined_point, dtype=float)
        if hold_refinement.theta_hat is not None:
            theta_hold = float(hold_refinement.theta_hat)

    carry = ArmAction(stuck_arm, point=start, delta=anchors.w_c - start, grasp=True)
    hold = ArmAction(other, point=p_hold, theta=theta_hold, grasp=True)
    home = ArmAction(stuck_arm, point=anchors.w_c, delta=park - anchors.w_c,
                     grasp=False)
    step_release = BilateralAction(RECOVERY_RELEASE, **{stuck_arm: carry})
    step_hold = BilateralAction(RECOVERY_HOLD, **{other: hold, stuck_arm: home})
    return [step_release, step_hold]
