"""Cable diagrams: Gauss codes, planar polyline embeddings, and the crossing graph.

A cable configuration is modeled as an open curve in a 640x480 pixel workspace.
Its topology is carried by an extended Gauss code: the sequence of crossings met
while walking the cable from the left endpoint to the right one.  Each crossing
is visited two or three times (three when a third segment piles onto an already
crossed point), and every visit records the local depth of our strand there:

    O<k>   the strand passes over every other strand at crossing k   (+1)
    U<k>   the strand passes below exactly one strand                (-1)
    W<k>   the strand passes below two strands                       (-2)

The graph abstraction has one vertex per crossing plus the two endpoints, one
edge per arc between consecutive visits, and annotates each (vertex, edge)
incidence with the depth value above (+1 at endpoints).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

WORKSPACE_W = 640
WORKSPACE_H = 480
DEFAULT_CABLE_WIDTH = 6.0

OVER = 1
UNDER_ONE = -1
UNDER_TWO = -2

_LAYER_TOKEN = {OVER: "O", UNDER_ONE: "U", UNDER_TWO: "W"}
_TOKEN_LAYER = {v: k for k, v in _LAYER_TOKEN.items()}
_TOKEN_RE = re.compile(r"^([OUW])(\d+)$")


class GaussCodeError(ValueError):
    """Raised for syntactically or structurally invalid Gauss codes."""


@dataclass(frozen=True)
class GaussEntry:
    crossing_id: int
    layer: int  # OVER / UNDER_ONE / UNDER_TWO

    def token(self) -> str:
        return f"{_LAYER_TOKEN[self.layer]}{self.crossing_id}"


@dataclass(frozen=True)
class GaussCode:
    """Validated crossing sequence for one open cable, left endpoint first."""

    entries: Tuple[GaussEntry, ...]

    def __post_init__(self):
        _validate_entries(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def crossing_ids(self) -> List[int]:
        """Distinct crossing ids in order of first visit."""
        seen: List[int] = []
        for e in self.entries:
            if e.crossing_id not in seen:
                seen.append(e.crossing_id)
        return seen

    @property
    def crossing_count(self) -> int:
        return len(set(e.crossing_id for e in self.entries))

    def serialize(self) -> str:
        return " ".join(e.token() for e in self.entries)

    def canonical_key(self) -> Tuple[Tuple[int, int], ...]:
        """Entries with ids renumbered by first appearance; stable cache key."""
        order: Dict[int, int] = {}
        out = []
        for e in self.entries:
            if e.crossing_id not in order:
                order[e.crossing_id] = len(order) + 1
            out.append((order[e.crossing_id], e.layer))
        return tuple(out)

    def reversed_(self) -> "GaussCode":
        """The same cable read from the other endpoint."""
        return GaussCode(tuple(reversed(self.entries)))

    def without_crossing(self, crossing_id: int) -> "GaussCode":
        """Code after the given crossing is fully pulled apart."""
        kept = tuple(e for e in self.entries if e.crossing_id != crossing_id)
        return GaussCode(kept)

    def with_kink(self, gap: int, over_first: bool = True) -> "GaussCode":
        """Insert a trivial self-loop (two adjacent visits of a fresh crossing).

        gap is an arc index: 0 inserts on the left endpoint arc, len(entries)
        on the right endpoint arc.
        """
        if not 0 <= gap <= len(self.entries):
            raise GaussCodeError(f"kink gap {gap} out of range")
        new_id = max((e.crossing_id for e in self.entries), default=0) + 1
        a = GaussEntry(new_id, OVER if over_first else UNDER_ONE)
        b = GaussEntry(new_id, UNDER_ONE if over_first else OVER)
        ent = self.entries[:gap] + (a, b) + self.entries[gap:]
        return GaussCode(ent)

    def kink_ids(self) -> List[int]:
        """Crossings whose two visits are adjacent along the cable (pull-taut removable)."""
        out = []
        for i in range(len(self.entries) - 1):
            a, b = self.entries[i], self.entries[i + 1]
            if a.crossing_id == b.crossing_id:
                out.append(a.crossing_id)
        return sorted(set(out))

    def without_kinks(self) -> "GaussCode":
        """Iteratively remove self-loops until none remain (taut-pull closure)."""
        code = self
        while True:
            kinks = code.kink_ids()
            if not kinks:
                return code
            code = code.without_crossing(kinks[0])


def _validate_entries(entries: Sequence[GaussEntry]) -> None:
    by_id: Dict[int, List[int]] = {}
    for e in entries:
        if e.crossing_id <= 0:
            raise GaussCodeError(f"crossing id must be positive, got {e.crossing_id}")
        if e.layer not in (OVER, UNDER_ONE, UNDER_TWO):
            raise GaussCodeError(f"bad layer {e.layer}")
        by_id.setdefault(e.crossing_id, []).append(e.layer)
    for cid, layers in by_id.items():
        if len(layers) == 2:
            if sorted(layers) != [UNDER_ONE, OVER]:
                raise GaussCodeError(
                    f"crossing {cid}: two visits must be one O and one U, got "
                    f"{[_LAYER_TOKEN[l] for l in layers]}"
                )
        elif len(layers) == 3:
            if sorted(layers) != [UNDER_TWO, UNDER_ONE, OVER]:
                raise GaussCodeError(
                    f"crossing {cid}: three visits must be O, U and W, got "
                    f"{[_LAYER_TOKEN[l] for l in layers]}"
                )
        else:
            raise GaussCodeError(
                f"crossing {cid} appears {len(layers)} times (want 2 or 3)"
            )
    # an over pass needs a free stub on at least one side: a hold grasp there
    # is undefined when both neighboring arcs loop back into the same crossing
    for i, e in enumerate(entries):
        if (
            e.layer == OVER
            and 0 < i < len(entries) - 1
            and entries[i - 1].crossing_id == e.crossing_id == entries[i + 1].crossing_id
        ):
            raise GaussCodeError(
                f"crossing {e.crossing_id}: over pass flanked by its own "
                "crossing on both sides leaves no holdable stub"
            )


def parse_gauss_code(text: str) -> GaussCode:
    """Parse one cable's Gauss code from whitespace-separated O/U/W tokens.

    Lines may carry '#' comments.  Multi-line input is allowed but must
    describe a single cable (token stream is concatenated).
    """
    tokens: List[str] = []
    for line in text.splitlines() or [text]:
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    entries = []
    for tok in tokens:
        m = _TOKEN_RE.match(tok)
        if not m:
            raise GaussCodeError(f"bad token {tok!r} (want O<k>, U<k> or W<k>)")
        entries.append(GaussEntry(int(m.group(2)), _TOKEN_LAYER[m.group(1)]))
    return GaussCode(tuple(entries))


# ---------------------------------------------------------------------------
# Diagram: code + geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossingPass:
    """One visit of the cable through a crossing point."""

    vertex_index: int  # index into the diagram polyline
    layer: int


@dataclass(frozen=True)
class Crossing:
    crossing_id: int
    location: Tuple[float, float]
    passes: Tuple[CrossingPass, ...]  # in traversal order


@dataclass
class CableDiagram:
    """Open-curve knot diagram: polyline geometry plus crossing records.

    Invariants (checked by validate): the polyline starts at the left endpoint
    (smaller x, ties by smaller y), stays inside the workspace, every crossing
    pass sits exactly on its crossing location, and the visit order along the
    polyline spells out `code`.
    """

    code: GaussCode
    polyline: np.ndarray  # (N, 2) float64
    crossings: List[Crossing] = field(default_factory=list)

    @property
    def endpoint_left(self) -> np.ndarray:
        return self.polyline[0]

    @property
    def endpoint_right(self) -> np.ndarray:
        return self.polyline[-1]

    @property
    def crossing_count(self) -> int:
        return len(self.crossings)

    def crossing_by_id(self, cid: int) -> Crossing:
        for c in self.crossings:
            if c.crossing_id == cid:
                return c
        raise KeyError(cid)

    def visit_sequence(self) -> List[Tuple[int, int]]:
        """(crossing_id, layer) pairs ordered by polyline traversal."""
        visits = []
        for c in self.crossings:
            for p in c.passes:
                visits.append((p.vertex_index, c.crossing_id, p.layer))
        visits.sort()
        return [(cid, layer) for _, cid, layer in visits]

    def arc_slices(self) -> List[Tuple[int, int]]:
        """Polyline index ranges [i, j] for each arc between consecutive visits.

        Arc k runs from visit k-1's vertex to visit k's vertex (arc 0 starts at
        the left endpoint, the last arc ends at the right endpoint).
        """
        marks = sorted(
            p.vertex_index for c in self.crossings for p in c.passes
        )
        bounds = [0] + marks + [len(self.polyline) - 1]
        return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

    def arc_points(self, arc_index: int) -> np.ndarray:
        i, j = self.arc_slices()[arc_index]
        return self.polyline[i : j + 1]

    def knot_center(self) -> np.ndarray:
        """Centroid of crossing locations (polyline centroid when untangled)."""
        if self.crossings:
            return np.mean([c.location for c in self.crossings], axis=0)
        return self.polyline.mean(axis=0)

    def knot_bbox(self, pad: float = 0.0) -> Tuple[float, float, float, float]:
        """(x0, y0, x1, y1) box around the crossing region, padded and clamped."""
        pts = (
            np.array([c.location for c in self.crossings])
            if self.crossings
            else self.polyline
        )
        x0, y0 = pts.min(axis=0) - pad
        x1, y1 = pts.max(axis=0) + pad
        return (
            max(0.0, x0),
            max(0.0, y0),
            min(float(WORKSPACE_W), x1),
            min(float(WORKSPACE_H), y1),
        )

    def translated(self, delta: np.ndarray) -> "CableDiagram":
        """Rigid translation, silently clamped so the polyline stays in frame."""
        delta = np.asarray(delta, dtype=float)
        lo = self.polyline.min(axis=0)
        hi = self.polyline.max(axis=0)
        margin = 2.0
        dmin = np.array([margin, margin]) - lo
        dmax = np.array([WORKSPACE_W - margin, WORKSPACE_H - margin]) - hi
        delta = np.clip(delta, dmin, dmax)
        return self._transformed(lambda p: p + delta)

    def rotated_180(self, pivot: np.ndarray) -> "CableDiagram":
        """Rotate the whole diagram half a turn about pivot.

        The endpoint nearest the left edge swaps, so the stored code reverses
        to keep the read-from-left convention; the knot itself is unchanged.
        """
        pivot = np.asarray(pivot, dtype=float)
        d = self._transformed(lambda p: 2.0 * pivot - p)
        # reversal: polyline order flips so the new left endpoint leads again
        n = len(d.polyline)
        poly = d.polyline[::-1].copy()
        crossings = [
            Crossing(
                c.crossing_id,
                c.location,
                tuple(
                    sorted(
                        (CrossingPass(n - 1 - p.vertex_index, p.layer) for p in c.passes),
                        key=lambda p: p.vertex_index,
                    )
                ),
            )
            for c in d.crossings
        ]
        out = CableDiagram(self.code.reversed_(), poly, crossings)
        return _enforce_left_right(out)

    def _transformed(self, fn) -> "CableDiagram":
        poly = np.array([fn(p) for p in self.polyline], dtype=float)
        crossings = [
            Crossing(c.crossing_id, tuple(fn(np.asarray(c.location))), c.passes)
            for c in self.crossings
        ]
        return CableDiagram(self.code, poly, crossings)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "v": 1,
            "polyline": [[round(float(x), 3), round(float(y), 3)] for x, y in self.polyline],
            "crossings": [
                {
                    "id": c.crossing_id,
                    "location": [round(float(c.location[0]), 3), round(float(c.location[1]), 3)],
                    "passes": [
                        {"vertex": p.vertex_index, "layer": p.layer} for p in c.passes
                    ],
                }
                for c in self.crossings
            ],
            "endpoints": {
                "left": [float(self.endpoint_left[0]), float(self.endpoint_left[1])],
                "right": [float(self.endpoint_right[0]), float(self.endpoint_right[1])],
            },
            "code": self.code.serialize(),
        }
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "CableDiagram":
        doc = json.loads(text)
        if doc.get("v") != 1:
            raise ValueError(f"unsupported diagram schema version {doc.get('v')}")
        code = parse_gauss_code(doc["code"])
        poly = np.array(doc["polyline"], dtype=float)
        crossings = [
            Crossing(
                c["id"],
                (float(c["location"][0]), float(c["location"][1])),
                tuple(CrossingPass(p["vertex"], p["layer"]) for p in c["passes"]),
            )
            for c in doc["crossings"]
        ]
        return CableDiagram(code, poly, crossings)

    def validate(self) -> None:
        """Check structural invariants; raises AssertionError on violation."""
        assert self.polyline.ndim == 2 and self.polyline.shape[1] == 2
        lo = self.polyline.min(axis=0)
        hi = self.polyline.max(axis=0)
        assert lo[0] >= 0 and lo[1] >= 0 and hi[0] <= WORKSPACE_W and hi[1] <= WORKSPACE_H, (
            "polyline leaves the workspace"
        )
        l, r = self.endpoint_left, self.endpoint_right
        assert (l[0], l[1]) <= (r[0], r[1]), "left endpoint must sort before right"
        for c in self.crossings:
            for p in c.passes:
                assert np.allclose(self.polyline[p.vertex_index], c.location), (
                    f"pass of crossing {c.crossing_id} off its location"
                )
        visits = [(cid, layer) for cid, layer in self.visit_sequence()]
        want = [(e.crossing_id, e.layer) for e in self.code.entries]
        assert visits == want, "polyline visit order disagrees with stored code"


def _enforce_left_right(d: CableDiagram) -> CableDiagram:
    """Reverse traversal bookkeeping if the polyline starts on the right."""
    l, r = d.polyline[0], d.polyline[-1]
    if (l[0], l[1]) <= (r[0], r[1]):
        return d
    n = len(d.polyline)
    poly = d.polyline[::-1].copy()
    crossings = [
        Crossing(
            c.crossing_id,
            c.location,
            tuple(
                sorted(
                    (CrossingPass(n - 1 - p.vertex_index, p.layer) for p in c.passes),
                    key=lambda p: p.vertex_index,
                )
            ),
        )
        for c in d.crossings
    ]
    return CableDiagram(d.code.reversed_(), poly, crossings)


# ---------------------------------------------------------------------------
# Graph abstraction
# ---------------------------------------------------------------------------

ENDPOINT_LEFT = "L"
ENDPOINT_RIGHT = "R"


@dataclass(frozen=True)
class GraphEdge:
    index: int  # arc index along the cable
    u: object  # vertex id: "L", "R" or crossing id
    v: object


@dataclass
class CableGraph:
    """Vertex/edge abstraction of a diagram with depth annotations.

    annotation[(vertex, edge_index)] holds one depth value per incidence of
    that edge at that vertex (self-loop edges have two): +1 at endpoints and
    over-passes, -1 where the edge dips below one strand, -2 below two.
    """

    vertices: List[object]
    edges: List[GraphEdge]
    annotation: Dict[Tuple[object, int], Tuple[int, ...]]

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degree(self, vertex) -> int:
        deg = 0
        for e in self.edges:
            deg += (e.u == vertex) + (e.v == vertex)
        return deg

    def edges_at(self, vertex) -> List[GraphEdge]:
        return [e for e in self.edges if vertex in (e.u, e.v)]


def build_graph(diagram_or_code) -> CableGraph:
    """Build the annotated crossing graph from a diagram (or bare code)."""
    code = diagram_or_code.code if isinstance(diagram_or_code, CableDiagram) else diagram_or_code
    waypoints: List[object] = [ENDPOINT_LEFT]
    waypoints += [e.crossing_id for e in code.entries]
    waypoints.append(ENDPOINT_RIGHT)

    vertices: List[object] = [ENDPOINT_LEFT, ENDPOINT_RIGHT] + code.crossing_ids()
    edges = [
        GraphEdge(i, waypoints[i], waypoints[i + 1]) for i in range(len(waypoints) - 1)
    ]
    ann: Dict[Tuple[object, int], Tuple[int, ...]] = {
        (ENDPOINT_LEFT, 0): (OVER,),
        (ENDPOINT_RIGHT, len(edges) - 1): (OVER,),
    }
    for pos, entry in enumerate(code.entries):
        # visit at waypoint pos+1 touches arcs pos and pos+1
        for arc in (pos, pos + 1):
            key = (entry.crossing_id, arc)
            ann[key] = ann.get(key, ()) + (entry.layer,)
    return CableGraph(vertices, edges, ann)


def is_untangled(graph: CableGraph) -> bool:
    """A cable is untangled exactly when only the two endpoints remain."""
    return graph.vertex_count == 2
