"""Triangle meshes, bounding volumes and exact mesh-mesh intersection.

Everything here runs in float64. Results of the exact predicate must not
depend on how triangles are batched, so rigid transforms and dot products
are written as explicit elementwise sums rather than ``matmul`` (whose
summation order can change with array shape).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateTriangle, EmptyMesh, FormatError, MismatchedBvh

AREA_EPS = 1e-12
PREDICATE_EPS = 1e-9
# Conservative slack for bounding-box culls; must exceed PREDICATE_EPS so
# culling never rejects a pair that the exact predicate calls touching.
BROAD_PHASE_MARGIN = 1e-6
LEAF_SIZE = 4
MAX_DEPTH = 64


# --------------------------------------------------------------------------
# elementwise linear algebra (shape-independent rounding)
# --------------------------------------------------------------------------

def _dot3(u, v):
    return (u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1]) + u[..., 2] * v[..., 2]


def _cross3(u, v):
    return np.stack(
        [
            u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1],
            u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2],
            u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0],
        ],
        axis=-1,
    )


def matmul3(a, b):
    """Batched 3x3 product with a fixed summation order."""
    return (
        a[..., :, 0, None] * b[..., None, 0, :]
        + a[..., :, 1, None] * b[..., None, 1, :]
    ) + a[..., :, 2, None] * b[..., None, 2, :]


def matvec3(a, v):
    return (a[..., :, 0] * v[..., None, 0] + a[..., :, 1] * v[..., None, 1]) + a[..., :, 2] * v[..., None, 2]


def transform_points(rotation, translation, points):
    """Apply ``x -> R x + t``; ``rotation`` (..., 3, 3), ``points`` (V, 3).

    Leading dimensions of ``rotation``/``translation`` broadcast against the
    point set, giving (..., V, 3).
    """
    r = np.asarray(rotation, dtype=np.float64)[..., None, :, :]
    t = np.asarray(translation, dtype=np.float64)[..., None, :]
    p = np.asarray(points, dtype=np.float64)
    return ((r[..., 0] * p[..., 0, None] + r[..., 1] * p[..., 1, None]) + r[..., 2] * p[..., 2, None]) + t


# --------------------------------------------------------------------------
# types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("pose contains non-finite values")
        if abs(np.linalg.det(r) - 1.0) >= 1e-9 or np.max(np.abs(r.T @ r - np.eye(3))) >= 1e-9:
            raise ValueError("rotation is not orthonormal with det 1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_rpy(cls, rpy=(0.0, 0.0, 0.0), xyz=(0.0, 0.0, 0.0)) -> Pose:
        """Fixed-axis roll/pitch/yaw, composed as Rz(yaw) Ry(pitch) Rx(roll)."""
        roll, pitch, yaw = (float(a) for a in rpy)
        cr, sr = np.cos(roll), np.sin(roll)
        cp, sp = np.cos(pitch), np.sin(pitch)
        cy, sy = np.cos(yaw), np.sin(yaw)
        rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
        return cls(matmul3(rz, matmul3(ry, rx)), np.asarray(xyz, dtype=np.float64))

    def compose(self, other: Pose) -> Pose:
        """``self ∘ other``: apply ``other`` first."""
        return Pose(
            matmul3(self.rotation, other.rotation),
            matvec3(self.rotation, other.translation) + self.translation,
        )

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            return transform_points(self.rotation, self.translation, points[None])[0]
        return transform_points(self.rotation, self.translation, points)


@dataclass(frozen=True)
class Triangle:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        for name in ("v0", "v1", "v2"):
            v = np.array(getattr(self, name), dtype=np.float64).reshape(3)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"triangle vertex {name} is not finite")
            object.__setattr__(self, name, v)

    @property
    def vertices(self) -> np.ndarray:
        return np.stack([self.v0, self.v1, self.v2])

    def area(self) -> float:
        return float(triangle_areas(self.vertices[None])[0])

    def is_degenerate(self) -> bool:
        return self.area() < AREA_EPS


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.array(self.min, dtype=np.float64).reshape(3)
        hi = np.array(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError("Aabb min must not exceed max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def of_points(cls, points) -> Aabb:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(p.min(axis=0), p.max(axis=0))

    def contains(self, other: Aabb) -> bool:
        return bool(np.all(self.min <= other.min) and np.all(other.max <= self.max))


class TriangleMesh:
    """Indexed triangle mesh; immutable after construction."""

    def __init__(self, vertices, faces):
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("mesh vertices must be finite")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        v.flags.writeable = False
        f.flags.writeable = False
        self.vertices = v
        self.faces = f

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of vertex coordinates."""
        return self.vertices[self.faces]

    def aabb(self) -> Aabb:
        if self.n_faces == 0:
            raise EmptyMesh("mesh has no faces")
        return Aabb.of_points(self.vertices[np.unique(self.faces)])

    def __repr__(self):
        return f"TriangleMesh(n_vertices={len(self.vertices)}, n_faces={self.n_faces})"


# --------------------------------------------------------------------------
# predicates
# --------------------------------------------------------------------------

def triangle_areas(tris) -> np.ndarray:
    tris = np.asarray(tris, dtype=np.float64)
    n = _cross3(tris[..., 1, :] - tris[..., 0, :], tris[..., 2, :] - tris[..., 0, :])
    return 0.5 * np.sqrt(_dot3(n, n))


def aabb_overlap(a: Aabb, b: Aabb) -> bool:
    """Closed-interval overlap on all three axes."""
    return bool(np.all(a.min <= b.max) and np.all(b.min <= a.max))


def _separated(axes, a, b, eps):
    """Per pair: does any of the (M, K, 3) ``axes`` separate a from b?"""
    pa = [_dot3(axes, a[:, None, v, :]) for v in range(3)]
    pb = [_dot3(axes, b[:, None, v, :]) for v in range(3)]
    tol = eps * np.sqrt(_dot3(axes, axes))
    gap_ab = np.minimum(np.minimum(pb[0], pb[1]), pb[2]) - np.maximum(np.maximum(pa[0], pa[1]), pa[2])
    gap_ba = np.minimum(np.minimum(pa[0], pa[1]), pa[2]) - np.maximum(np.maximum(pb[0], pb[1]), pb[2])
    return np.any((gap_ab > tol) | (gap_ba > tol), axis=1)


def tri_tri_intersect_batch(a, b, eps: float = PREDICATE_EPS) -> np.ndarray:
    """Vectorised closed-set triangle intersection via separating axes.

    ``a`` and ``b`` are (N, 3, 3). Candidate axes: the three coordinate
    axes, both face normals, the nine edge-edge cross products and the six
    in-plane edge normals (these cover the coplanar case). A pair is
    separated when some axis shows a gap larger than ``eps`` in length
    units, so touching counts as intersecting. Axes are tried in stages,
    cheapest first; the outcome equals testing all of them at once.
    Degeneracy is not checked here.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 3 or a.shape[1:] != (3, 3):
        raise ValueError("expected matching (N, 3, 3) triangle arrays")
    out = np.zeros(len(a), dtype=bool)

    # coordinate axes
    lo_a = np.minimum(np.minimum(a[:, 0], a[:, 1]), a[:, 2])
    hi_a = np.maximum(np.maximum(a[:, 0], a[:, 1]), a[:, 2])
    lo_b = np.minimum(np.minimum(b[:, 0], b[:, 1]), b[:, 2])
    hi_b = np.maximum(np.maximum(b[:, 0], b[:, 1]), b[:, 2])
    alive = np.flatnonzero(~np.any(((lo_b - hi_a) > eps) | ((lo_a - hi_b) > eps), axis=1))
    if len(alive) == 0:
        return out
    a, b = a[alive], b[alive]

    # face normals
    ea = a[:, [1, 2, 0], :] - a
    eb = b[:, [1, 2, 0], :] - b
    na = _cross3(ea[:, 0], ea[:, 1])
    nb = _cross3(eb[:, 0], eb[:, 1])
    keep = ~_separated(np.stack([na, nb], axis=1), a, b, eps)
    alive, a, b, ea, eb, na, nb = (x[keep] for x in (alive, a, b, ea, eb, na, nb))
    if len(alive) == 0:
        return out

    # edge-edge and in-plane edge normals
    axes = np.concatenate(
        [
            _cross3(ea[:, :, None, :], eb[:, None, :, :]).reshape(-1, 9, 3),
            _cross3(na[:, None, :], ea),
            _cross3(nb[:, None, :], eb),
        ],
        axis=1,
    )
    out[alive[~_separated(axes, a, b, eps)]] = True
    return out


def tri_tri_intersect(a: Triangle, b: Triangle) -> bool:
    """True iff the two closed triangles share at least one point."""
    va, vb = a.vertices, b.vertices
    if a.is_degenerate() or b.is_degenerate():
        raise DegenerateTriangle("triangle area below %g" % AREA_EPS)
    return bool(tri_tri_intersect_batch(va[None], vb[None])[0])


def any_tri_intersection(tris_a, tris_b, chunk: int = 16384) -> bool:
    """Test aligned triangle pairs chunk by chunk, stopping at the first hit."""
    for s in range(0, len(tris_a), chunk):
        if np.any(tri_tri_intersect_batch(tris_a[s:s + chunk], tris_b[s:s + chunk])):
            return True
    return False


# --------------------------------------------------------------------------
# bounding volume hierarchy
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Bvh:
    """Flat binary AABB tree; node 0 is the root, siblings are adjacent.

    Internal nodes have ``left``/``right`` >= 0; leaves have -1 there and
    own ``triangle_order[start:start + count]``.
    """

    lower: np.ndarray
    upper: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    triangle_order: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def n_triangles(self) -> int:
        return len(self.triangle_order)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def aabb(self, node: int = 0) -> Aabb:
        return Aabb(self.lower[node], self.upper[node])

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.left[node] >= 0:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Median split on the longest axis of the triangle-centroid box.

    Ties in centroid coordinate go to the lower triangle index, so the
    tree is a deterministic function of the mesh.
    """
    if mesh.n_faces == 0:
        raise EmptyMesh("cannot build a BVH over an empty mesh")
    tris = mesh.triangles()
    tri_lo = tris.min(axis=1)
    tri_hi = tris.max(axis=1)
    centroids = tris.mean(axis=1)

    lower, upper, left, right, start, count = [], [], [], [], [], []
    order = []

    def new_node(idx):
        lower.append(tri_lo[idx].min(axis=0))
        upper.append(tri_hi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(-1)
        count.append(0)
        return len(left) - 1

    # iterative pre-order build: (node, triangle indices, depth)
    root = new_node(np.arange(mesh.n_faces))
    stack = [(root, np.arange(mesh.n_faces), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if len(idx) <= leaf_size or depth >= MAX_DEPTH:
            start[node] = len(order)
            count[node] = len(idx)
            order.extend(idx.tolist())
            continue
        c = centroids[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        idx = np.sort(idx)
        idx = idx[np.argsort(centroids[idx, axis], kind="stable")]
        mid = len(idx) // 2
        lo_idx, hi_idx = idx[:mid], idx[mid:]
        l = new_node(lo_idx)
        left[node] = l
        # right child is created now so indices are stable; children pushed
        # so the left subtree is laid out first
        r = new_node(hi_idx)
        right[node] = r
        stack.append((r, hi_idx, depth + 1))
        stack.append((l, lo_idx, depth + 1))

    arr = lambda x, dt: np.asarray(x, dtype=dt)  # noqa: E731
    out = Bvh(
        lower=arr(lower, np.float64).reshape(-1, 3),
        upper=arr(upper, np.float64).reshape(-1, 3),
        left=arr(left, np.int64),
        right=arr(right, np.int64),
        start=arr(start, np.int64),
        count=arr(count, np.int64),
        triangle_order=arr(order, np.int64),
    )
    for a in (out.lower, out.upper, out.left, out.right, out.start, out.count, out.triangle_order):
        a.flags.writeable = False
    return out


def _world_boxes(bvh: Bvh, pose: Pose, nodes=None):
    """Axis-aligned boxes enclosing each posed node box."""
    lo = bvh.lower if nodes is None else bvh.lower[nodes]
    hi = bvh.upper if nodes is None else bvh.upper[nodes]
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    c = transform_points(pose.rotation, pose.translation, centre)
    h = transform_points(np.abs(pose.rotation), np.zeros(3), half)
    return c - h, c + h


def _boxes_overlap(lo_a, hi_a, lo_b, hi_b, margin=BROAD_PHASE_MARGIN):
    return np.all((lo_a <= hi_b + margin) & (lo_b <= hi_a + margin), axis=-1)


def _check_bvh(mesh: TriangleMesh, bvh: Bvh):
    if bvh.n_triangles != mesh.n_faces:
        raise MismatchedBvh(
            f"BVH covers {bvh.n_triangles} triangles but mesh has {mesh.n_faces} faces"
        )


def candidate_triangle_pairs(bvh_a: Bvh, pose_a: Pose, bvh_b: Bvh, pose_b: Pose):
    """Dual-tree traversal; returns aligned triangle-index arrays.

    The traversal advances a whole frontier of node pairs per step. A pair
    splits the node with the larger box unless it is a leaf.
    """
    lo_a, hi_a = _world_boxes(bvh_a, pose_a, [0])
    lo_b, hi_b = _world_boxes(bvh_b, pose_b, [0])
    if not _boxes_overlap(lo_a, hi_a, lo_b, hi_b)[0]:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    lo_a, hi_a = _world_boxes(bvh_a, pose_a)
    lo_b, hi_b = _world_boxes(bvh_b, pose_b)
    size_a = (hi_a - lo_a).sum(axis=1)
    size_b = (hi_b - lo_b).sum(axis=1)

    ia = np.zeros(1, np.int64)
    ib = np.zeros(1, np.int64)
    leaf_pairs_a, leaf_pairs_b = [], []
    while len(ia):
        keep = _boxes_overlap(lo_a[ia], hi_a[ia], lo_b[ib], hi_b[ib])
        ia, ib = ia[keep], ib[keep]
        leaf_a = bvh_a.left[ia] < 0
        leaf_b = bvh_b.left[ib] < 0
        both = leaf_a & leaf_b
        leaf_pairs_a.append(ia[both])
        leaf_pairs_b.append(ib[both])
        split_a = ~leaf_a & (leaf_b | (size_a[ia] >= size_b[ib]))
        split_b = ~both & ~split_a
        ia = np.concatenate([bvh_a.left[ia[split_a]], bvh_a.right[ia[split_a]], ia[split_b], ia[split_b]])
        ib = np.concatenate([ib[split_a], ib[split_a], bvh_b.left[ib[split_b]], bvh_b.right[ib[split_b]]])

    la = np.concatenate(leaf_pairs_a)
    lb = np.concatenate(leaf_pairs_b)
    if len(la) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    # expand leaf ranges into triangle pairs
    i = np.arange(LEAF_SIZE)
    ca = bvh_a.count[la][:, None, None]
    cb = bvh_b.count[lb][:, None, None]
    ii = np.broadcast_to(i[None, :, None], (len(la), LEAF_SIZE, LEAF_SIZE))
    jj = np.broadcast_to(i[None, None, :], (len(la), LEAF_SIZE, LEAF_SIZE))
    valid = (ii < ca) & (jj < cb)
    ta = (bvh_a.start[la][:, None, None] + ii)[valid]
    tb = (bvh_b.start[lb][:, None, None] + jj)[valid]
    return bvh_a.triangle_order[ta], bvh_b.triangle_order[tb]


def mesh_pair_collide(mesh_a: TriangleMesh, bvh_a: Bvh, pose_a: Pose,
                      mesh_b: TriangleMesh, bvh_b: Bvh, pose_b: Pose) -> bool:
    """Broad phase over both BVHs, then exact triangle tests."""
    _check_bvh(mesh_a, bvh_a)
    _check_bvh(mesh_b, bvh_b)
    fa, fb = candidate_triangle_pairs(bvh_a, pose_a, bvh_b, pose_b)
    if len(fa) == 0:
        return False
    ua, inv_a = np.unique(fa, return_inverse=True)
    ub, inv_b = np.unique(fb, return_inverse=True)
    wa = _posed_triangles(mesh_a, pose_a, ua)
    wb = _posed_triangles(mesh_b, pose_b, ub)
    return any_tri_intersection(wa[inv_a], wb[inv_b])


def _posed_triangles(mesh: TriangleMesh, pose: Pose, faces=None) -> np.ndarray:
    f = mesh.faces if faces is None else mesh.faces[faces]
    used, inv = np.unique(f, return_inverse=True)
    world = transform_points(pose.rotation, pose.translation, mesh.vertices[used])
    return world[inv.reshape(f.shape)]


def mesh_pair_collide_brute(mesh_a: TriangleMesh, pose_a: Pose,
                            mesh_b: TriangleMesh, pose_b: Pose) -> bool:
    """All-pairs reference: every posed triangle of A against every one of B."""
    wa = _posed_triangles(mesh_a, pose_a)
    wb = _posed_triangles(mesh_b, pose_b)
    ia, ib = np.meshgrid(np.arange(len(wa)), np.arange(len(wb)), indexing="ij")
    return any_tri_intersection(wa[ia.ravel()], wb[ib.ravel()])


# --------------------------------------------------------------------------
# primitive meshes and file formats
# --------------------------------------------------------------------------

def box_mesh(lower, upper) -> TriangleMesh:
    """Axis-aligned box, 12 outward-facing triangles."""
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    v = np.array([[hi[0] if i & 1 else lo[0], hi[1] if i & 2 else lo[1], hi[2] if i & 4 else lo[2]]
                  for i in range(8)])
    faces = [
        (0, 2, 1), (1, 2, 3),  # z-
        (4, 5, 6), (5, 7, 6),  # z+
        (0, 1, 4), (1, 5, 4),  # y-
        (2, 6, 3), (3, 6, 7),  # y+
        (0, 4, 2), (2, 4, 6),  # x-
        (1, 3, 5), (3, 7, 5),  # x+
    ]
    return TriangleMesh(v, faces)


def cylinder_mesh(radius: float, z0: float, z1: float, segments: int = 8,
                  centre=(0.0, 0.0)) -> TriangleMesh:
    """Closed prism approximating a z-aligned cylinder; 4*segments - 4 faces."""
    if segments < 3:
        raise ValueError("need at least 3 segments")
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([centre[0] + radius * np.cos(ang), centre[1] + radius * np.sin(ang)], axis=1)
    v = np.concatenate([
        np.column_stack([ring, np.full(segments, z0)]),
        np.column_stack([ring, np.full(segments, z1)]),
    ])
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append((i, j, segments + j))
        faces.append((i, segments + j, segments + i))
    for i in range(1, segments - 1):
        faces.append((0, i + 1, i))
        faces.append((segments, segments + i, segments + i + 1))
    return TriangleMesh(v, faces)


def load_mesh(path) -> TriangleMesh:
    """Read an ASCII STL or OBJ (triangles only) file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read mesh {path}: {exc}") from exc
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _parse_obj(text, path)
    if suffix == ".stl":
        return _parse_ascii_stl(text, path)
    raise FormatError(f"unsupported mesh format: {path}")


def _parse_obj(text: str, path) -> TriangleMesh:
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(parts) < 4:
                    raise ValueError
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(idx) != 3:
                    raise FormatError(f"{path}:{lineno}: only triangular faces are supported")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{path}:{lineno}: malformed line {line!r}") from None
    if not faces:
        raise FormatError(f"{path}: no faces")
    try:
        return TriangleMesh(verts, faces)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _parse_ascii_stl(text: str, path) -> TriangleMesh:
    tokens = text.split()
    if not tokens or tokens[0].lower() != "solid":
        raise FormatError(f"{path}: not an ASCII STL file")
    verts = []
    i = 0
    try:
        while i < len(tokens):
            if tokens[i].lower() == "vertex":
                verts.append([float(tokens[i + 1]), float(tokens[i + 2]), float(tokens[i + 3])])
                i += 4
            else:
                i += 1
    except (ValueError, IndexError):
        raise FormatError(f"{path}: malformed vertex record") from None
    if not verts or len(verts) % 3:
        raise FormatError(f"{path}: vertex count is not a multiple of 3")
    v, inv = np.unique(np.asarray(verts), axis=0, return_inverse=True)
    return TriangleMesh(v, inv.reshape(-1, 3))


def save_obj(mesh: TriangleMesh, path) -> None:
    lines = ["v %r %r %r" % tuple(float(c) for c in v) for v in mesh.vertices]
    lines += ["f %d %d %d" % tuple(int(i) + 1 for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")
