"""Planar embedding of Gauss codes into workspace polylines.

The pipeline is correctness-first: a crossing sequence is realized as a planar
map by searching strand interleavings at each crossing (rotation systems) for
one with Euler characteristic 2, the map is drawn with a straight-line planar
grid drawing on subdivided arcs, and the result is transformed into the
workspace with seeded jitter/mirroring plus corner-cut smoothing.  Every
candidate polyline is checked by an independent exact reader before it is
returned, so the round-trip guarantee (visits read off the polyline equal the
input code) holds by verification, not by hope.  Crossings are represented as
exactly shared polyline vertices, which keeps the reader exact in floats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .diagram import (
    DEFAULT_CABLE_WIDTH,
    WORKSPACE_H,
    WORKSPACE_W,
    CableDiagram,
    Crossing,
    CrossingPass,
    GaussCode,
    GaussEntry,
    parse_gauss_code,
)

WORKSPACE_CENTER = np.array([WORKSPACE_W / 2.0, WORKSPACE_H / 2.0])

# Layout tuning.  The fit box keeps knots clear of the borders so that grasp
# noise, halos and tail routing have room to work.
FIT_BOX = (400.0, 300.0)
SEP_TARGET = 48.0
JITTER_PX = 2.5
MAX_ATTEMPTS = 14


class LayoutError(RuntimeError):
    """The code could not be drawn in the workspace (retries exhausted)."""


# ---------------------------------------------------------------------------
# Rotation-system search
# ---------------------------------------------------------------------------
# Stubs: arc j runs from waypoint j to waypoint j+1; (j, 0) is its tail end,
# (j, 1) its head end.  The visit at entry position p (waypoint p+1) owns the
# incoming stub (p, 1) and the outgoing stub (p+1, 0).

Stub = Tuple[int, int]

# endpoint node names: ints, never strings, so hash order is process-stable
_NODE_L = -1
_NODE_R = -2


def _visit_positions(code: GaussCode) -> Dict[int, List[int]]:
    vis: Dict[int, List[int]] = {}
    for pos, e in enumerate(code.entries):
        vis.setdefault(e.crossing_id, []).append(pos)
    return vis


def _crossing_rotations(positions: List[int]):
    """Yield candidate cyclic stub orders for one crossing.

    Transversality constraint: the two stubs of each strand sit on opposite
    sides, and strands interleave.  Two visits give 2 candidates, three give 8.
    """
    def stubs(p: int) -> Tuple[Stub, Stub]:
        return (p, 1), (p + 1, 0)

    if len(positions) == 2:
        (a_in, a_out), (b_in, b_out) = stubs(positions[0]), stubs(positions[1])
        yield [a_in, b_in, a_out, b_out]
        yield [a_in, b_out, a_out, b_in]
    else:
        a, b, c = (stubs(p) for p in positions)
        a_in, a_out = a
        for first, second in ((b, c), (c, b)):
            for f0 in (0, 1):
                for s0 in (0, 1):
                    yield [
                        a_in,
                        first[f0],
                        second[s0],
                        a_out,
                        first[1 - f0],
                        second[1 - s0],
                    ]


def _trace_faces(rotation: Dict[object, List[Stub]], n_arcs: int) -> List[List[Stub]]:
    """Trace face orbits of the rotation system (half-edge successor walk).

    A directed half-edge (arc, 0) runs tail->head, (arc, 1) head->tail.  Its
    arrival stub is (arc, 1-dir); the face continues along the rotation
    successor of that stub, departing in the direction that stub implies.
    """
    succ: Dict[Stub, Stub] = {}
    for order in rotation.values():
        k = len(order)
        for i, s in enumerate(order):
            succ[s] = order[(i + 1) % k]
    faces: List[List[Stub]] = []
    seen = set()
    for arc in range(n_arcs):
        for direction in (0, 1):
            he = (arc, direction)
            if he in seen:
                continue
            orbit = []
            cur = he
            while cur not in seen:
                seen.add(cur)
                orbit.append(cur)
                a, d = cur
                cur = succ[(a, 1 - d)]  # departing from a tail stub moves tail->head
            faces.append(orbit)
    return faces


def _find_rotation_system(code: GaussCode):
    """Search strand interleavings for a planar rotation system.

    Returns (rotation, cofacial) or None.  Systems whose two endpoints share a
    face are preferred: those can be drawn with both tails on the outer
    boundary, which taut endpoint pulls need.  Codes without such a system
    (they appear mid-untangle, e.g. an overhand minus its last crossing) fall
    back to any planar system; an endpoint then sits walled into an inner
    face, which is fine for grasping and deletion but not for taut pulls.
    """
    vis = _visit_positions(code)
    cids = code.crossing_ids()
    m = len(code.entries) + 1  # arc count
    n_vertices = len(cids) + 2

    option_lists = [list(_crossing_rotations(vis[cid])) for cid in cids]
    base = {_NODE_L: [(0, 0)], _NODE_R: [(m - 1, 1)]}
    fallback = None
    for combo in itertools.product(*option_lists):
        rotation: Dict[object, List[Stub]] = dict(base)
        for cid, order in zip(cids, combo):
            rotation[cid] = order
        faces = _trace_faces(rotation, m)
        if n_vertices - m + len(faces) != 2:
            continue
        l_face = next(i for i, f in enumerate(faces) if (0, 0) in f)
        r_face = next(i for i, f in enumerate(faces) if (m - 1, 1) in f)
        if l_face == r_face:
            return rotation, True
        if fallback is None:
            fallback = rotation
    if fallback is not None:
        return fallback, False
    return None


# ---------------------------------------------------------------------------
# Straight-line drawing of the chosen rotation system
# ---------------------------------------------------------------------------

def _grid_drawing(code: GaussCode, rotation: Dict[object, List[Stub]],
                  cofacial: bool):
    """Draw the map: subdivide arcs, build the planar embedding, place nodes.

    Returns positions mapping node names (endpoint ints, crossing ids, stub
    tuples) to float grid coordinates.  Every node is an int or an int tuple:
    their hashes are unsalted, so the drawing routine's internal set walks
    visit nodes in the same order in every process.
    """
    m = len(code.entries) + 1
    waypoints: List[object] = [_NODE_L] + [e.crossing_id for e in code.entries] + [_NODE_R]

    emb = nx.PlanarEmbedding()
    for v, order in rotation.items():
        for i, w in enumerate(order):
            if i == 0:
                emb.add_half_edge(v, w)
            else:
                emb.add_half_edge(v, w, cw=order[i - 1])
    for arc in range(m):
        tail, head = waypoints[arc], waypoints[arc + 1]
        a, b = (arc, 0), (arc, 1)
        emb.add_half_edge(a, tail)
        emb.add_half_edge(a, b, cw=tail)
        emb.add_half_edge(b, a)
        emb.add_half_edge(b, head, cw=a)

    if cofacial:
        # Bridge L and R with a long scaffold path through their shared face.
        # The drawing routine picks the face with the most nodes as the outer
        # face, so the scaffold forces both endpoints onto the drawing's outer
        # boundary; the scaffold nodes are dropped once positions exist.
        k = len(emb.nodes) + 4
        path = [(_NODE_L, i) for i in range(k)]
        emb.add_half_edge(_NODE_L, path[0], cw=(0, 0))
        emb.add_half_edge(path[0], _NODE_L)
        for i in range(k - 1):
            emb.add_half_edge(path[i], path[i + 1], cw=path[i - 1] if i else _NODE_L)
            emb.add_half_edge(path[i + 1], path[i])
        emb.add_half_edge(path[-1], _NODE_R, cw=path[-2] if k > 1 else _NODE_L)
        emb.add_half_edge(_NODE_R, path[-1], cw=(m - 1, 1))

    emb.check_structure()
    pos = nx.combinatorial_embedding_to_pos(emb)
    return {kk: np.array(v, dtype=float) for kk, v in pos.items() if not
            (isinstance(kk, tuple) and kk[0] == _NODE_L)}


# ---------------------------------------------------------------------------
# Arc-chain assembly, transforms, smoothing
# ---------------------------------------------------------------------------

@dataclass
class _ArcChain:
    """Per-arc point lists; arcs share their junction points exactly."""

    code: GaussCode
    arcs: List[np.ndarray]  # arc j: (k_j, 2), first/last rows are waypoints

    def polyline(self) -> np.ndarray:
        parts = [self.arcs[0]]
        for a in self.arcs[1:]:
            parts.append(a[1:])
        return np.vstack(parts)

    def pass_vertex_indices(self) -> List[int]:
        """Polyline vertex index of each code entry, in entry order."""
        out = []
        idx = 0
        for j, a in enumerate(self.arcs[:-1]):
            idx += len(a) - 1
            out.append(idx)
        return out

    def transform(self, fn) -> "_ArcChain":
        return _ArcChain(self.code, [np.apply_along_axis(fn, 1, a) for a in self.arcs])

    def affine(self, mat: np.ndarray, shift: np.ndarray) -> "_ArcChain":
        return _ArcChain(self.code, [a @ mat.T + shift for a in self.arcs])


def _assemble_chain(code: GaussCode, pos: Dict) -> _ArcChain:
    m = len(code.entries) + 1
    waypoints: List[object] = [_NODE_L] + [e.crossing_id for e in code.entries] + [_NODE_R]
    arcs = []
    for j in range(m):
        arcs.append(
            np.array(
                [
                    pos[waypoints[j]],
                    pos[(j, 0)],
                    pos[(j, 1)],
                    pos[waypoints[j + 1]],
                ],
                dtype=float,
            )
        )
    return _ArcChain(code, arcs)


def _chaikin(points: np.ndarray, rounds: int = 2) -> np.ndarray:
    """Corner-cut the interior of an open polyline, endpoints pinned.

    The first and last segment directions are preserved, which keeps stub
    angles at crossings (and hence transversality) intact.
    """
    pts = points
    for _ in range(rounds):
        if len(pts) < 3:
            return pts
        q = pts[:-1] * 0.75 + pts[1:] * 0.25
        r = pts[:-1] * 0.25 + pts[1:] * 0.75
        mid = np.empty((2 * (len(pts) - 1), 2))
        mid[0::2] = q
        mid[1::2] = r
        pts = np.vstack([pts[:1], mid, pts[-1:]])
    return pts


def _smooth_chain(chain: _ArcChain) -> _ArcChain:
    return _ArcChain(chain.code, [_chaikin(a) for a in chain.arcs])


# ---------------------------------------------------------------------------
# Exact polyline reader / verifier
# ---------------------------------------------------------------------------

def read_visit_groups(poly: np.ndarray):
    """Group polyline vertex indices that share exact coordinates.

    Returns a list of (coordinate, sorted vertex indices) for every coordinate
    visited more than once; these are the geometric crossing points.
    """
    seen: Dict[Tuple[float, float], List[int]] = {}
    for i, p in enumerate(poly):
        seen.setdefault((float(p[0]), float(p[1])), []).append(i)
    return [(np.array(k), v) for k, v in seen.items() if len(v) > 1]


def _segment_pairs_intersecting(poly: np.ndarray) -> List[Tuple[int, int]]:
    """Indices of non-adjacent segment pairs that touch or cross (vectorized)."""
    p = poly[:-1]
    q = poly[1:]
    n = len(p)
    if n < 3:
        return []
    # bounding-box prefilter over the full pair matrix, upper triangle only
    lox, hix = np.minimum(p[:, 0], q[:, 0]), np.maximum(p[:, 0], q[:, 0])
    loy, hiy = np.minimum(p[:, 1], q[:, 1]), np.maximum(p[:, 1], q[:, 1])
    ok = (
        (lox[:, None] <= hix[None, :])
        & (lox[None, :] <= hix[:, None])
        & (loy[:, None] <= hiy[None, :])
        & (loy[None, :] <= hiy[:, None])
    )
    ii, jj = np.nonzero(np.triu(ok, k=2))
    if len(ii) == 0:
        return []
    a, b, c, d = p[ii], q[ii], p[jj], q[jj]

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    d1 = cross(b - a, c - a)
    d2 = cross(b - a, d - a)
    d3 = cross(d - c, a - c)
    d4 = cross(d - c, b - c)
    proper = ((d1 * d2) < 0) & ((d3 * d4) < 0)

    def on_seg(sa, sb, pt):
        col = cross(sb - sa, pt - sa) == 0
        inx = (np.minimum(sa[:, 0], sb[:, 0]) <= pt[:, 0]) & (
            pt[:, 0] <= np.maximum(sa[:, 0], sb[:, 0])
        )
        iny = (np.minimum(sa[:, 1], sb[:, 1]) <= pt[:, 1]) & (
            pt[:, 1] <= np.maximum(sa[:, 1], sb[:, 1])
        )
        return col & inx & iny

    touch = on_seg(a, b, c) | on_seg(a, b, d) | on_seg(c, d, a) | on_seg(c, d, b)
    hit = proper | touch
    out = []
    for k in np.nonzero(hit)[0]:
        out.append((int(ii[k]), int(jj[k])))
    return out


def _transversal(poly: np.ndarray, coord: np.ndarray, verts: List[int]) -> bool:
    """Check that the strands through a shared point genuinely cross."""
    stubs = []  # (angle, pass_label)
    for label, v in enumerate(verts):
        for nb in (v - 1, v + 1):
            if nb < 0 or nb >= len(poly):
                return False  # endpoint sitting on a crossing: reject
            d = poly[nb] - coord
            if d[0] == 0 and d[1] == 0:
                return False  # zero-length stub
            stubs.append((math.atan2(d[1], d[0]), label))
    stubs.sort()
    labels = [l for _, l in stubs]
    k = len(verts)
    for i in range(2 * k):
        if labels[i] == labels[(i + 1) % (2 * k)]:
            return False
        if labels[i] != labels[(i + k) % (2 * k)]:
            return False
    return True


def _chain_transversal(chain: "_ArcChain") -> bool:
    """Cheap pre-check: stub angles at shared junctions must interleave.

    Corner cutting preserves the first and last segment direction of every
    arc, so a chain failing here fails the full verifier smoothed or not.
    """
    poly = chain.polyline()
    groups: Dict[Tuple[float, float], List[int]] = {}
    for vi in chain.pass_vertex_indices():
        p = poly[vi]
        groups.setdefault((float(p[0]), float(p[1])), []).append(vi)
    for key, verts in groups.items():
        if len(verts) > 1 and not _transversal(poly, np.array(key), verts):
            return False
    return True


def polyline_realizes(poly: np.ndarray, code: GaussCode) -> bool:
    """Exact check: the polyline's self-intersection pattern spells the code."""
    groups = read_visit_groups(poly)
    # visits in traversal order, labeled by group id in first-appearance order
    marks: List[Tuple[int, int]] = []  # (vertex index, group number)
    for g, (_, verts) in enumerate(groups):
        for v in verts:
            marks.append((v, g))
    marks.sort()
    first_seen: Dict[int, int] = {}
    actual: List[int] = []
    for _, g in marks:
        if g not in first_seen:
            first_seen[g] = len(first_seen) + 1
        actual.append(first_seen[g])
    renum: Dict[int, int] = {}
    expected: List[int] = []
    for e in code.entries:
        if e.crossing_id not in renum:
            renum[e.crossing_id] = len(renum) + 1
        expected.append(renum[e.crossing_id])
    if actual != expected:
        return False

    # endpoints must not lie on any crossing point
    for coord, verts in groups:
        if 0 in verts or (len(poly) - 1) in verts:
            return False
        if not _transversal(poly, coord, verts):
            return False

    # every touching segment pair must meet at a crossing coordinate that is a
    # shared endpoint of both segments
    cross_coords = {(float(c[0]), float(c[1])) for c, _ in groups}
    for i, j in _segment_pairs_intersecting(poly):
        si = {tuple(map(float, poly[i])), tuple(map(float, poly[i + 1]))}
        sj = {tuple(map(float, poly[j])), tuple(map(float, poly[j + 1]))}
        shared = si & sj
        if len(shared) != 1 or next(iter(shared)) not in cross_coords:
            return False
    return True


# ---------------------------------------------------------------------------
# Public embedding entry points
# ---------------------------------------------------------------------------

_BASE_CACHE: Dict[tuple, _ArcChain] = {}


def _base_chain(code: GaussCode) -> _ArcChain:
    """Deterministic raw grid drawing for a code (cached by canonical key)."""
    key = code.canonical_key()
    hit = _BASE_CACHE.get(key)
    if hit is not None:
        return _ArcChain(code, [a.copy() for a in hit.arcs])
    found = _find_rotation_system(code)
    if found is None:
        raise LayoutError(
            f"code {code.serialize()!r} admits no planar drawing"
        )
    rotation, cofacial = found
    pos = _grid_drawing(code, rotation, cofacial)
    chain = _assemble_chain(code, pos)
    if len(_BASE_CACHE) > 4096:
        _BASE_CACHE.clear()
    _BASE_CACHE[key] = _ArcChain(code, [a.copy() for a in chain.arcs])
    return chain


def _chain_to_diagram(chain: _ArcChain) -> CableDiagram:
    poly = chain.polyline()
    idxs = chain.pass_vertex_indices()
    by_id: Dict[int, List[CrossingPass]] = {}
    loc: Dict[int, Tuple[float, float]] = {}
    for entry, vi in zip(chain.code.entries, idxs):
        by_id.setdefault(entry.crossing_id, []).append(
            CrossingPass(vi, entry.layer)
        )
        loc[entry.crossing_id] = (float(poly[vi][0]), float(poly[vi][1]))
    crossings = [
        Crossing(cid, loc[cid], tuple(sorted(ps, key=lambda p: p.vertex_index)))
        for cid, ps in by_id.items()
    ]
    return CableDiagram(chain.code, poly, crossings)


def _straight_diagram(center: np.ndarray) -> CableDiagram:
    code = GaussCode(())
    x0, x1 = center[0] - 170.0, center[0] + 170.0
    xs = np.linspace(x0, x1, 13)
    ys = np.full_like(xs, center[1])
    return CableDiagram(code, np.stack([xs, ys], axis=1), [])


def _unique_rows(pts: np.ndarray) -> np.ndarray:
    """Distinct rows of an (n, 2) array, first occurrence order."""
    if len(pts) == 0:
        return pts
    seen = {}
    for row in pts:
        seen.setdefault((float(row[0]), float(row[1])), row)
    return np.array(list(seen.values()))


def _fit_transform(chain: _ArcChain, sep_scale: float, center: np.ndarray,
                   rng: Optional[np.random.Generator],
                   cable_width: float) -> Optional[_ArcChain]:
    """Rotate/flip/scale/jitter the grid chain into the workspace box."""
    poly = chain.polyline()
    vl, vr = poly[0], poly[-1]
    span = vr - vl
    if span[0] == 0 and span[1] == 0:
        return None
    ang = math.atan2(span[1], span[0])
    ca, sa = math.cos(-ang), math.sin(-ang)
    mat = np.array([[ca, -sa], [sa, ca]])
    if rng is not None and rng.random() < 0.5:
        mat = np.array([[1.0, 0.0], [0.0, -1.0]]) @ mat  # mirror across x-axis
    chain = chain.affine(mat, np.zeros(2))

    poly = chain.polyline()
    cross_pts = _unique_rows(poly[chain.pass_vertex_indices()])
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    size = np.maximum(hi - lo, 1e-9)
    fit = min(FIT_BOX[0] / size[0], FIT_BOX[1] / size[1])
    scale = fit
    if len(cross_pts) >= 2:
        d = cross_pts[:, None, :] - cross_pts[None, :, :]
        dist = np.sqrt((d ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        min_sep = dist.min()
        if min_sep > 0:
            scale = min(fit, SEP_TARGET * sep_scale / min_sep)
    chain = chain.affine(np.eye(2) * scale, np.zeros(2))

    poly = chain.polyline()
    mid = (poly.min(axis=0) + poly.max(axis=0)) / 2.0
    chain = chain.affine(np.eye(2), center - mid)

    if rng is not None:
        # jitter in node space: perturb arc points, re-pinning shared junctions
        order: Dict[Tuple[float, float], int] = {}
        rows = []
        for a in chain.arcs:
            rows.append([order.setdefault((p[0], p[1]), len(order))
                         for p in a.tolist()])
        draws = rng.normal(0.0, JITTER_PX, size=(len(order), 2))
        chain = _ArcChain(chain.code,
                          [a + draws[idx] for a, idx in zip(chain.arcs, rows)])

    # hard separation floor between distinct crossings
    poly = chain.polyline()
    pts = _unique_rows(poly[chain.pass_vertex_indices()])
    if len(pts) >= 2:
        d = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((d ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() < 2.0 * cable_width:
            return None
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    if lo[0] < 4 or lo[1] < 4 or hi[0] > WORKSPACE_W - 4 or hi[1] > WORKSPACE_H - 4:
        return None
    l, r = poly[0], poly[-1]
    if (l[0], l[1]) > (r[0], r[1]):
        return None
    return chain


def embed(code: GaussCode, rng: Optional[np.random.Generator] = None, *,
          sep_scale: float = 1.0, center: Optional[np.ndarray] = None,
          cable_width: float = DEFAULT_CABLE_WIDTH,
          smooth: bool = True) -> CableDiagram:
    """Draw a Gauss code as a workspace polyline diagram.

    The rng drives jitter and mirroring only; topology always matches the
    code.  Raises LayoutError when the code is unrealizable or cannot be
    placed under the separation and fit constraints.
    """
    center = WORKSPACE_CENTER if center is None else np.asarray(center, dtype=float)
    if len(code.entries) == 0:
        d = _straight_diagram(center)
        if rng is not None:
            d = d.translated(rng.normal(0.0, 6.0, size=2))
        return d

    base = _base_chain(code)
    attempts: List[Optional[np.random.Generator]] = []
    if rng is not None:
        attempts += [rng] * (MAX_ATTEMPTS - 2)
    attempts += [None, None]  # deterministic fallbacks: no jitter

    last_err = "fit/separation constraints failed"
    for i, r in enumerate(attempts):
        chain = _fit_transform(base, sep_scale, center, r, cable_width)
        if chain is None:
            continue
        if not _chain_transversal(chain):
            last_err = "verification failed"
            continue
        for candidate in ((_smooth_chain(chain), chain) if smooth else (chain,)):
            poly = candidate.polyline()
            if polyline_realizes(poly, code):
                return _chain_to_diagram(candidate)
        last_err = "verification failed"
    raise LayoutError(
        f"could not embed {code.serialize()!r}: {last_err}"
    )


_EMBED_CACHE: Dict[Tuple, CableDiagram] = {}


def _relabeled(d: CableDiagram, code: GaussCode) -> CableDiagram:
    """Copy of a canonically-numbered diagram carrying the caller's ids."""
    ids = code.crossing_ids()
    crossings = [
        Crossing(ids[c.crossing_id - 1], c.location, c.passes) for c in d.crossings
    ]
    return CableDiagram(code, d.polyline.copy(), crossings)


def embed_cached(code: GaussCode, *, sep_scale: float = 1.0,
                 center: Optional[np.ndarray] = None,
                 cable_width: float = DEFAULT_CABLE_WIDTH) -> CableDiagram:
    """Deterministic embed memoized across equivalent codes.

    The code is renumbered to its canonical form before embedding, so every
    code with the same shape shares one cached drawing; the result is
    relabeled back to the caller's crossing ids and translated so its knot
    center lands on the requested center.  Intended for mid-episode
    re-embeds where seeded variety is not needed and speed is.
    """
    canon = GaussCode(tuple(GaussEntry(cid, layer) for cid, layer in code.canonical_key()))
    key = (canon.canonical_key(), round(float(sep_scale), 6), round(float(cable_width), 6))
    hit = _EMBED_CACHE.get(key)
    if hit is None:
        # fixed seed: deterministic, yet keeps the jittered fit attempts whose
        # layouts are far rounder than the last-resort unjittered fallback
        hit = embed(canon, np.random.default_rng(12022),
                    sep_scale=sep_scale, cable_width=cable_width)
        if len(_EMBED_CACHE) > 2048:
            _EMBED_CACHE.clear()
        _EMBED_CACHE[key] = hit
    out = _relabeled(hit, code)
    if center is None:
        return out
    return out.translated(np.asarray(center, dtype=float) - out.knot_center())


# ---------------------------------------------------------------------------
# Endpoint tail routing (taut pulls to workspace anchors)
# ---------------------------------------------------------------------------

def _pt_seg_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points (n, 2) to segments a->b (m, 2) as an (n, m) grid."""
    ab = b - a
    den = np.maximum((ab ** 2).sum(-1), 1e-12)
    ap = pts[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None, :, :]).sum(-1) / den[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    delta = pts[:, None, :] - proj
    return np.sqrt((delta ** 2).sum(-1))


def _segment_clear(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray,
                   clearance: float) -> bool:
    """True when segment p->q stays at least clearance away from segments a->b."""
    if len(a) == 0:
        return True
    r = q - p
    pa, pb = a - p, b - p
    d1 = r[0] * pa[:, 1] - r[1] * pa[:, 0]
    d2 = r[0] * pb[:, 1] - r[1] * pb[:, 0]
    s = b - a
    ap_, aq = p - a, q - a
    d3 = s[:, 0] * ap_[:, 1] - s[:, 1] * ap_[:, 0]
    d4 = s[:, 0] * aq[:, 1] - s[:, 1] * aq[:, 0]
    if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
        return False
    # non-crossing segments attain their min distance at an endpoint
    if _pt_seg_dist(np.array([p, q]), a, b).min() < clearance:
        return False
    if _pt_seg_dist(np.vstack([a, b]), p[None, :], q[None, :]).min() < clearance:
        return False
    return True


def _fan_clear(p0: np.ndarray, targets: np.ndarray, a: np.ndarray, b: np.ndarray,
               clearance: float) -> np.ndarray:
    """Mask of targets t for which segment p0->t clears segments a->b."""
    n = len(targets)
    if len(a) == 0:
        return np.ones(n, dtype=bool)
    if _pt_seg_dist(p0[None, :], a, b).min() < clearance:
        return np.zeros(n, dtype=bool)
    r = targets - p0
    pa, pb = a - p0, b - p0
    d1 = r[:, 0, None] * pa[None, :, 1] - r[:, 1, None] * pa[None, :, 0]
    d2 = r[:, 0, None] * pb[None, :, 1] - r[:, 1, None] * pb[None, :, 0]
    s = b - a
    ap = p0 - a
    d3 = (s[:, 0] * ap[:, 1] - s[:, 1] * ap[:, 0])[None, :]
    aq = targets[:, None, :] - a[None, :, :]
    d4 = s[None, :, 0] * aq[..., 1] - s[None, :, 1] * aq[..., 0]
    ok = ~((d1 * d2 < 0) & (d3 * d4 < 0)).any(axis=1)
    # non-crossing segments attain their min distance at an endpoint
    ok &= _pt_seg_dist(targets, a, b).min(axis=1) >= clearance
    pts = np.vstack([a, b])
    ww = np.maximum((r * r).sum(axis=1), 1e-12)
    t = np.clip(((pts - p0) @ r.T) / ww[None, :], 0.0, 1.0)
    closest = p0[None, None, :] + t[:, :, None] * r[None, :, :]
    dist = np.sqrt(((pts[:, None, :] - closest) ** 2).sum(-1))
    ok &= dist.min(axis=0) >= clearance
    return ok


def _tail_mask(poly: np.ndarray, from_left: bool, cutoff: float) -> np.ndarray:
    """Mask of segments farther than cutoff along the cable from one endpoint."""
    seg_len = np.sqrt(((poly[1:] - poly[:-1]) ** 2).sum(-1))
    if from_left:
        start = np.concatenate([[0.0], np.cumsum(seg_len)[:-1]])
    else:
        start = np.concatenate([[0.0], np.cumsum(seg_len[::-1])[:-1]])[::-1]
    return start >= cutoff


def _boundary_point(rect, s: float) -> np.ndarray:
    """Point at clockwise arclength s from the rect's top-left corner."""
    x0, y0, x1, y1 = rect
    w, h = x1 - x0, y1 - y0
    s = s % (2 * (w + h))
    if s < w:
        return np.array([x0 + s, y0])
    s -= w
    if s < h:
        return np.array([x1, y0 + s])
    s -= h
    if s < w:
        return np.array([x1 - s, y1])
    s -= w
    return np.array([x0, y1 - s])


def _gate_arclen(rect, target: np.ndarray) -> float:
    """Arclength of the boundary point nearest the (outside) target."""
    x0, y0, x1, y1 = rect
    tx = min(max(target[0], x0), x1)
    ty = min(max(target[1], y0), y1)
    d_edges = [abs(target[1] - y0), abs(target[0] - x1),
               abs(target[1] - y1), abs(target[0] - x0)]
    side = int(np.argmin(d_edges))
    if side == 0:
        p = np.array([tx, y0])
    elif side == 1:
        p = np.array([x1, ty])
    elif side == 2:
        p = np.array([tx, y1])
    else:
        p = np.array([x0, ty])
    return _boundary_arclen(rect, p)


def _boundary_arclen(rect, p: np.ndarray) -> float:
    """Clockwise distance from the rect's top-left corner to boundary point p."""
    x0, y0, x1, y1 = rect
    w, h = x1 - x0, y1 - y0
    d_top = abs(p[1] - y0)
    d_right = abs(p[0] - x1)
    d_bot = abs(p[1] - y1)
    d_left = abs(p[0] - x0)
    side = int(np.argmin([d_top, d_right, d_bot, d_left]))
    if side == 0:
        return p[0] - x0
    if side == 1:
        return w + (p[1] - y0)
    if side == 2:
        return w + h + (x1 - p[0])
    return 2 * w + h + (y1 - p[1])


def _perimeter_walk(rect, start: np.ndarray, end: np.ndarray, clockwise: bool):
    """Corner points walking the rectangle boundary from start to end."""
    x0, y0, x1, y1 = rect
    corners = [np.array([x0, y0]), np.array([x1, y0]),
               np.array([x1, y1]), np.array([x0, y1])]
    total = 2 * (x1 - x0) + 2 * (y1 - y0)
    s0 = _boundary_arclen(rect, start)
    s1 = _boundary_arclen(rect, end)
    if clockwise:
        span = (s1 - s0) % total
        offs = [((_boundary_arclen(rect, c) - s0) % total, c) for c in corners]
    else:
        span = (s0 - s1) % total
        offs = [((s0 - _boundary_arclen(rect, c)) % total, c) for c in corners]
    pts = [(o, c) for o, c in offs if 1e-9 < o < span - 1e-9]
    pts.sort(key=lambda t: t[0])
    return [c for _, c in pts]


def stretch_endpoints(d: CableDiagram, target_left: np.ndarray,
                      target_right: np.ndarray,
                      cable_width: float = DEFAULT_CABLE_WIDTH, *,
                      pull_left: bool = True,
                      pull_right: bool = True) -> CableDiagram:
    """Extend the free tails so the endpoints land on the given anchors.

    Models a taut endpoint pull: the knot body stays put, the tails escape the
    cable's bounding region and run around its perimeter to the anchors.  A
    free tail has no passes of its own, so when the current endpoint sits in a
    pocket the pull re-routes the whole tail from a stub just off its last
    crossing.  Each candidate routing is verified by the exact reader; raises
    LayoutError when no clear route exists.  A side with its pull flag off
    (the gripper missed the tail) stays where it lies.
    """
    target_left = np.asarray(target_left, dtype=float)
    target_right = np.asarray(target_right, dtype=float)
    if not (pull_left or pull_right):
        return d
    if len(d.code.entries) == 0:
        # no knot body: lay the cable straight between the pulled anchors
        left = target_left if pull_left else np.asarray(d.polyline[0], float)
        right = target_right if pull_right else np.asarray(d.polyline[-1], float)
        n = max(len(d.polyline), 9)
        t = np.linspace(0.0, 1.0, n)[:, None]
        poly = left[None, :] * (1 - t) + right[None, :] * t
        return CableDiagram(d.code, poly.copy(), [])

    pad = 4.0 * cable_width
    lo = d.polyline.min(axis=0) - pad
    hi = d.polyline.max(axis=0) + pad
    lo = np.maximum(lo, 2.0)
    hi = np.minimum(hi, [WORKSPACE_W - 2.0, WORKSPACE_H - 2.0])
    rect = (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
    total = 2 * (rect[2] - rect[0]) + 2 * (rect[3] - rect[1])

    n_pts = len(d.polyline)
    seg_a = d.polyline[:-1]
    seg_b = d.polyline[1:]
    seg_len = np.sqrt(((seg_b - seg_a) ** 2).sum(-1))
    clear = 0.8 * cable_width
    pass_idx = sorted(p.vertex_index for c in d.crossings for p in c.passes)
    k_first, k_last = pass_idx[0], pass_idx[-1]

    n_scan = max(int(total / 20.0), 16)
    scan_s = (np.arange(n_scan) + 0.5) * (total / n_scan)
    scan_pts = np.array([_boundary_point(rect, s) for s in scan_s])

    def routes(p0: np.ndarray, mask: np.ndarray, target: np.ndarray):
        """Candidate tail paths p0 -> ... -> target, shortest walks first."""
        a, b = seg_a[mask], seg_b[mask]
        gate = _boundary_point(rect, _gate_arclen(rect, target))
        s_gate = _boundary_arclen(rect, gate)
        okm = _fan_clear(p0, np.vstack([target[None, :], scan_pts]), a, b, clear)
        out = []
        # a straight shot to the anchor, when clear, beats any perimeter walk
        if okm[0]:
            out.append([target.astype(float)])
        cands = []
        for s, bp, ok in zip(scan_s, scan_pts, okm[1:]):
            if not ok:
                continue
            for cw in (True, False):
                span = (s_gate - s) % total if cw else (s - s_gate) % total
                cands.append((span, s, cw, bp))
        cands.sort(key=lambda t: (t[0], t[1], not t[2]))
        for span, s, cw, bp in cands[:8]:
            walk = _perimeter_walk(rect, bp, gate, cw)
            out.append([bp] + walk + [gate, target.astype(float)])
        return out

    def stub_mask(k: int, from_left: bool) -> np.ndarray:
        """Obstacles for a tail re-routed from a stub off the pass at vertex k."""
        mask = np.ones(n_pts - 1, dtype=bool)
        # the free tail is being replaced, so it is no obstacle
        if from_left:
            mask[:k] = False
        else:
            mask[k:] = False
        # own strand within the stub's span of the crossing
        acc, i = 0.0, k - 1
        while i >= 0 and acc < 2.5 * cable_width:
            mask[i] = False
            acc += seg_len[i]
            i -= 1
        acc, i = 0.0, k
        while i < n_pts - 1 and acc < 2.5 * cable_width:
            mask[i] = False
            acc += seg_len[i]
            i += 1
        # other strands through the crossing still wall it beyond a tight ball
        base = d.polyline[k]
        near = np.minimum(np.linalg.norm(seg_a - base, axis=1),
                          np.linalg.norm(seg_b - base, axis=1))
        return mask & (near >= cable_width)

    def side_candidates(from_left: bool, target: np.ndarray):
        """Ranked (priority, core trim, tail points) options for one tail."""
        out = []
        p0 = d.polyline[0] if from_left else d.polyline[-1]
        mask_keep = _tail_mask(d.polyline, from_left, 3.0 * cable_width)
        for r, route in enumerate(routes(p0, mask_keep, target)):
            out.append((r, None, route))
        if out:
            # the tail escapes as it lies; no need to consider retraction
            out.append((10_000, None, []))
            return out
        # retraction stubs: drop the free tail, leave the crossing anew
        k = k_first if from_left else k_last
        base = d.polyline[k]
        probe = max(k - 2, 0) if from_left else min(k + 2, n_pts - 1)
        v = d.polyline[probe] - base
        nv = float(np.linalg.norm(v))
        if nv > 1e-9:
            ang0 = float(np.arctan2(v[1], v[0]))
        else:
            ang0 = np.pi if from_left else 0.0
        mask_stub = stub_mask(k, from_left)
        for j, ddeg in enumerate((0.0, 40.0, -40.0, 80.0, -80.0, 120.0, -120.0, 180.0)):
            ang = ang0 + np.radians(ddeg)
            q0 = base + 2.5 * cable_width * np.array([np.cos(ang), np.sin(ang)])
            if not (0.0 <= q0[0] <= WORKSPACE_W and 0.0 <= q0[1] <= WORKSPACE_H):
                continue
            for r, route in enumerate(routes(q0, mask_stub, target)):
                out.append((100 * (j + 1) + r, k, [q0] + route))
        out.sort(key=lambda t: t[0])
        out = out[:25]
        # last resort: leave this tail where it lies.  A tail walled inside an
        # inner face cannot reach its anchor without changing the code; the
        # pull then only moves the other side.
        out.append((10_000, None, []))
        return out

    cand_l = side_candidates(True, target_left) if pull_left else [(10_000, None, [])]
    cand_r = side_candidates(False, target_right) if pull_right else [(10_000, None, [])]
    stay_l, stay_r = len(cand_l) - 1, len(cand_r) - 1

    def attempt(i: int, j: int) -> Optional[CableDiagram]:
        _, trim_l, route_l = cand_l[i]
        _, trim_r, route_r = cand_r[j]
        lo_i = 0 if trim_l is None else trim_l
        hi_i = n_pts if trim_r is None else trim_r + 1
        prefix = (np.zeros((0, 2)) if not route_l else
                  _dedupe(np.array(list(reversed(route_l)), dtype=float)))
        suffix = (np.zeros((0, 2)) if not route_r else
                  _dedupe(np.array(route_r, dtype=float)))
        poly = np.vstack([prefix, d.polyline[lo_i:hi_i], suffix])
        plo, phi = poly.min(axis=0), poly.max(axis=0)
        if plo[0] < 0 or plo[1] < 0 or phi[0] > WORKSPACE_W or phi[1] > WORKSPACE_H:
            return None
        if not polyline_realizes(poly, d.code):
            return None
        shift = len(prefix) - lo_i
        crossings = [
            Crossing(
                c.crossing_id,
                c.location,
                tuple(CrossingPass(p.vertex_index + shift, p.layer) for p in c.passes),
            )
            for c in d.crossings
        ]
        out = CableDiagram(d.code, poly, crossings)
        out.validate()
        return out

    # both sides routed first, then single-sided pulls, then the no-op
    routed = sorted((cand_l[i][0] + cand_r[j][0], i, j)
                    for i in range(stay_l) for j in range(stay_r))
    half = sorted([(cand_l[i][0], i, stay_r) for i in range(stay_l)] +
                  [(cand_r[j][0], stay_l, j) for j in range(stay_r)])
    order = (routed[:24] + half + routed[24:400] + [(0, stay_l, stay_r)])
    for _, i, j in order:
        got = attempt(i, j)
        if got is not None:
            return got
    raise LayoutError("no clear tail route to the workspace anchors")


def _dedupe(poly: np.ndarray) -> np.ndarray:
    keep = [0]
    for i in range(1, len(poly)):
        if not np.array_equal(poly[i], poly[keep[-1]]):
            keep.append(i)
    return poly[keep]


# ---------------------------------------------------------------------------
# Knot template library
# ---------------------------------------------------------------------------
# Curated Gauss codes checked in as data files.  Each was verified offline:
# it embeds with both tails on the outer boundary, every crossing-deletion
# subset embeds at separation scales 1.0 and 0.6, and taut endpoint pulls
# reach the workspace anchors.  The names describe the knot each code
# approximates; crossing counts are a modeling choice, not ground truth.

TEMPLATE_NAMES = (
    "straight",
    "single_crossing",
    "overhand",
    "figure_eight",
    "two_overhand",
    "overhand_plus_figure_eight",
    "double_overhand",
    "square",
    "stevedore",
    "bowline",
    "ashley_stopper",
    "granny",
    "heaving_line",
)

DENSE_PREFIX = "dense_"
DENSE_SEP_SCALE = 0.6

_TEMPLATE_CACHE: Dict[str, GaussCode] = {}


def template_code(name: str) -> GaussCode:
    """Load a template's Gauss code from the packaged data files."""
    base = name[len(DENSE_PREFIX):] if name.startswith(DENSE_PREFIX) else name
    if base not in TEMPLATE_NAMES:
        raise KeyError(f"unknown knot template {name!r}")
    if base not in _TEMPLATE_CACHE:
        text = (resources.files("untangle_sim") / "templates" /
                f"{base}.gauss").read_text()
        _TEMPLATE_CACHE[base] = parse_gauss_code(text)
    return _TEMPLATE_CACHE[base]


def knot_template(name: str, rng_seed: int = 0,
                  cable_width: float = DEFAULT_CABLE_WIDTH) -> CableDiagram:
    """Embed a named template near the workspace center.

    The seed perturbs jitter and mirroring but never the topology.  A
    "dense_" prefix embeds the same code at reduced crossing separation.
    """
    code = template_code(name)
    sep = DENSE_SEP_SCALE if name.startswith(DENSE_PREFIX) else 1.0
    rng = np.random.default_rng(rng_seed)
    return embed(code, rng, sep_scale=sep, cable_width=cable_width)
