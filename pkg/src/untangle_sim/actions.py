"""Bilateral action tuples shared by the planners and the executor.

Every behavior the system can run is expressed as one bilateral action: an
action kind plus up to two per-arm grasp tuples.  Keeping the types here,
with no simulator imports, lets the recovery planners and the executor talk
about the same objects without depending on each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

# Action kinds, one per distinct executor behavior.
REIDEMEISTER = "reidemeister"
NODE_DELETION = "node_deletion"
REPOSING_TRANSLATION = "reposing_translation"
REPOSING_ROTATION = "reposing_rotation"
RECOVERY_RELEASE = "recovery_release"
RECOVERY_HOLD = "recovery_hold"

KINDS = (
    REIDEMEISTER,
    NODE_DELETION,
    REPOSING_TRANSLATION,
    REPOSING_ROTATION,
    RECOVERY_RELEASE,
    RECOVERY_HOLD,
)

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class ArmAction:
    """One arm's tuple: grasp point, gripper angle, pull and grip state.

    point is where the gripper descends; None means the arm acts from its
    current pose.  theta is the gripper angle in [0, 180) with None for
    don't-care.  delta is the planar displacement applied after the descent
    and grasp is whether the gripper closes.  arc, when set, is the diagram
    arc index the grasp is meant to land on; the executor resolves success
    against that strand.
    """

    arm: str
    point: Optional[np.ndarray] = None
    theta: Optional[float] = None
    delta: np.ndarray = field(default_factory=lambda: np.zeros(2))
    grasp: bool = True
    arc: Optional[int] = None

    def __post_init__(self):
        if self.arm not in (LEFT, RIGHT):
            raise ValueError(f"unknown arm {self.arm!r}")
        if self.point is not None:
            object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))

    def to_json(self) -> dict:
        out = {
            "arm": self.arm,
            "point": None if self.point is None else [float(v) for v in self.point],
            "theta": None if self.theta is None else float(self.theta),
            "delta": [float(v) for v in self.delta],
            "grasp": bool(self.grasp),
        }
        if self.arc is not None:
            out["arc"] = int(self.arc)
        return out


@dataclass(frozen=True)
class BilateralAction:
    """One action kind with its per-arm tuples; either arm may sit out."""

    kind: str
    left: Optional[ArmAction] = None
    right: Optional[ArmAction] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.left is not None and self.left.arm != LEFT:
            raise ValueError("left slot holds a non-left arm action")
        if self.right is not None and self.right.arm != RIGHT:
            raise ValueError("right slot holds a non-right arm action")
        if self.left is None and self.right is None:
            raise ValueError("bilateral action with no arm actions")

    def arms(self) -> List[ArmAction]:
        return [a for a in (self.left, self.right) if a is not None]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "left": None if self.left is None else self.left.to_json(),
            "right": None if self.right is None else self.right.to_json(),
        }
