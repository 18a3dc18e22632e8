"""Serial-arm kinematics and the self-collision ground-truth oracle."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, FormatError
from .geometry import (
    BROAD_PHASE_MARGIN,
    Bvh,
    Pose,
    TriangleMesh,
    box_mesh,
    build_bvh,
    cylinder_mesh,
    load_mesh,
    matmul3,
    matvec3,
    mesh_pair_collide,
    save_obj,
    transform_points,
    tri_tri_intersect_batch,
)

JOINT_LIMIT = np.pi


@dataclass(frozen=True)
class Joint:
    """Revolute joint between link ``parent`` and link ``parent + 1``."""

    parent: int
    axis: np.ndarray
    origin: Pose

    def __post_init__(self):
        axis = np.array(self.axis, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must have unit norm")
        axis.flags.writeable = False
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True, eq=False)
class Link:
    name: str
    mesh: TriangleMesh
    bvh: Bvh


def make_link(name: str, mesh: TriangleMesh) -> Link:
    return Link(name, mesh, build_bvh(mesh))


@dataclass(frozen=True, eq=False)
class RobotModel:
    name: str
    joints: tuple
    links: tuple
    collision_mask: tuple

    def __post_init__(self):
        joints = tuple(self.joints)
        links = tuple(self.links)
        if len(links) != len(joints) + 1:
            raise ValueError("a serial chain needs exactly one more link than joints")
        for i, j in enumerate(joints):
            if j.parent != i:
                raise ValueError(f"joint {i} must connect link {i} to link {i + 1}")
        mask = set()
        for a, b in self.collision_mask:
            a, b = sorted((int(a), int(b)))
            if not (0 <= a < b < len(links)):
                raise ValueError(f"collision pair ({a}, {b}) out of range")
            if b - a == 1:
                raise ValueError(f"collision pair ({a}, {b}) joins adjacent links")
            mask.add((a, b))
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "collision_mask", tuple(sorted(mask)))

    @property
    def dof(self) -> int:
        return len(self.joints)

    def with_mask(self, pairs) -> RobotModel:
        return RobotModel(self.name, self.joints, self.links, tuple(pairs))

    def content_hash(self) -> str:
        """sha256 over joint parameters, mesh arrays and the mask."""
        h = hashlib.sha256()
        h.update(self.name.encode())
        for j in self.joints:
            for arr in (j.axis, j.origin.rotation, j.origin.translation):
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for link in self.links:
            h.update(link.name.encode())
            h.update(np.ascontiguousarray(link.mesh.vertices, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(link.mesh.faces, dtype="<i8").tobytes())
        h.update(json.dumps(self.collision_mask).encode())
        return h.hexdigest()


def default_mask(n_links: int):
    return tuple((a, b) for a in range(n_links) for b in range(a + 2, n_links))


# --------------------------------------------------------------------------
# kinematics
# --------------------------------------------------------------------------

def _axis_rotations(axis, angles):
    """Rodrigues rotation about a fixed unit axis for a vector of angles."""
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    k2 = matmul3(k, k)
    s = np.sin(angles)[:, None, None]
    c = np.cos(angles)[:, None, None]
    return (np.eye(3) + s * k) + (1.0 - c) * k2


def _check_q(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 1:
        q = q[None]
    if q.ndim != 2 or q.shape[1] != model.dof:
        raise DimensionMismatch(f"expected {model.dof} joint angles, got shape {np.shape(q)}")
    if not np.all(np.isfinite(q)):
        raise ValueError("joint angles must be finite")
    return q


def link_transforms(model: RobotModel, q):
    """Batched forward kinematics.

    Returns ``(R, t)`` with shapes (B, n_links, 3, 3) and (B, n_links, 3).
    Only elementwise arithmetic is used, so a configuration produces the
    same bits whether it is evaluated alone or inside a batch.
    """
    q = _check_q(model, q)
    b = len(q)
    rot = np.empty((b, len(model.links), 3, 3))
    trans = np.empty((b, len(model.links), 3))
    r = np.broadcast_to(np.eye(3), (b, 3, 3))
    t = np.zeros((b, 3))
    rot[:, 0], trans[:, 0] = r, t
    for i, joint in enumerate(model.joints):
        t = matvec3(r, joint.origin.translation) + t
        r = matmul3(matmul3(r, joint.origin.rotation), _axis_rotations(joint.axis, q[:, i]))
        rot[:, i + 1], trans[:, i + 1] = r, t
    return rot, trans


def forward_kinematics(model: RobotModel, q) -> list:
    """World pose of every link (link 0 is the fixed base)."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1:
        raise DimensionMismatch("forward_kinematics takes a single configuration")
    rot, trans = link_transforms(model, q)
    return [Pose(rot[0, k], trans[0, k]) for k in range(len(model.links))]


# --------------------------------------------------------------------------
# self-collision
# --------------------------------------------------------------------------

def self_collision(model: RobotModel, q) -> bool:
    """BVH-accelerated check of every masked link pair at configuration ``q``."""
    poses = forward_kinematics(model, q)
    for i, j in model.collision_mask:
        a, b = model.links[i], model.links[j]
        if mesh_pair_collide(a.mesh, a.bvh, poses[i], b.mesh, b.bvh, poses[j]):
            return True
    return False


def _posed_link_triangles(model: RobotModel, rot, trans):
    """Per link: (B, F, 3, 3) world-space triangles."""
    out = []
    for k, link in enumerate(model.links):
        world = transform_points(rot[:, k], trans[:, k], link.mesh.vertices)
        out.append(world[:, link.mesh.faces])
    return out


def self_collision_brute(model: RobotModel, q) -> bool:
    """All triangle pairs of all masked link pairs; no culling at all."""
    rot, trans = link_transforms(model, np.asarray(q, dtype=np.float64)[None])
    tris = _posed_link_triangles(model, rot, trans)
    for i, j in model.collision_mask:
        ta, tb = tris[i][0], tris[j][0]
        ia, ib = np.meshgrid(np.arange(len(ta)), np.arange(len(tb)), indexing="ij")
        if np.any(tri_tri_intersect_batch(ta[ia.ravel()], tb[ib.ravel()])):
            return True
    return False


def _box_overlap(lo_a, hi_a, lo_b, hi_b):
    m = BROAD_PHASE_MARGIN
    return np.all((lo_a <= hi_b + m) & (lo_b <= hi_a + m), axis=-1)


def self_collision_batch(model: RobotModel, qs, chunk: int = 512) -> np.ndarray:
    """Vectorised labels for many configurations.

    Culls by posed link boxes, then by posed triangle boxes, then runs the
    exact predicate. The culls use a margin wider than the predicate
    tolerance and the predicate itself tests the coordinate axes, so the
    result equals :func:`self_collision` bit for bit.
    """
    qs = _check_q(model, qs)
    out = np.zeros(len(qs), dtype=bool)
    for s in range(0, len(qs), chunk):
        out[s:s + chunk] = _label_chunk(model, qs[s:s + chunk])
    return out


def _label_chunk(model, qs):
    rot, trans = link_transforms(model, qs)
    tris = _posed_link_triangles(model, rot, trans)
    tri_lo = [t.min(axis=2) for t in tris]
    tri_hi = [t.max(axis=2) for t in tris]
    link_lo = [x.min(axis=1) for x in tri_lo]
    link_hi = [x.max(axis=1) for x in tri_hi]
    hit = np.zeros(len(qs), dtype=bool)
    for i, j in model.collision_mask:
        cand = np.flatnonzero(~hit & _box_overlap(link_lo[i], link_hi[i], link_lo[j], link_hi[j]))
        if len(cand) == 0:
            continue
        ov = _box_overlap(
            tri_lo[i][cand, :, None, :], tri_hi[i][cand, :, None, :],
            tri_lo[j][cand, None, :, :], tri_hi[j][cand, None, :, :],
        )
        k, fi, fj = np.nonzero(ov)
        if len(k) == 0:
            continue
        cfg = cand[k]
        res = tri_tri_intersect_batch(tris[i][cfg, fi], tris[j][cfg, fj])
        hit[cfg[res]] = True
    return hit


# --------------------------------------------------------------------------
# robot description files
# --------------------------------------------------------------------------

def load_robot(path) -> RobotModel:
    """Read a JSON robot description; mesh paths are relative to the file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise FileNotFoundError(f"cannot read robot description {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    try:
        joints = []
        for i, j in enumerate(doc["joints"]):
            origin = j.get("origin", {})
            joints.append(Joint(
                parent=int(j.get("parent", i)),
                axis=j["axis"],
                origin=Pose.from_rpy(origin.get("rpy", (0, 0, 0)), origin.get("xyz", (0, 0, 0))),
            ))
        links = [make_link(l["name"], load_mesh(path.parent / l["mesh_path"])) for l in doc["links"]]
        mask = doc.get("collision_mask")
        if mask is None:
            mask = default_mask(len(links))
        return RobotModel(doc["name"], tuple(joints), tuple(links), tuple(tuple(p) for p in mask))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: invalid robot description ({exc})") from None


def save_robot(model: RobotModel, directory, rpy_xyz=None) -> Path:
    """Write ``<name>.json`` plus one OBJ per link into ``directory``.

    ``rpy_xyz`` optionally gives the (rpy, xyz) pair per joint; otherwise
    origins are written as xyz with zero rpy, which requires axis-aligned
    joint origins.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    joints = []
    for i, j in enumerate(model.joints):
        if rpy_xyz is not None:
            rpy, xyz = rpy_xyz[i]
        else:
            if np.max(np.abs(j.origin.rotation - np.eye(3))) > 0:
                raise ValueError("pass rpy_xyz for rotated joint origins")
            rpy, xyz = (0.0, 0.0, 0.0), j.origin.translation
        joints.append({
            "parent": i,
            "axis": [float(a) for a in j.axis],
            "origin": {"rpy": [float(a) for a in rpy], "xyz": [float(a) for a in xyz]},
        })
    links = []
    for link in model.links:
        fname = f"{link.name}.obj"
        save_obj(link.mesh, directory / fname)
        links.append({"name": link.name, "mesh_path": fname})
    doc = {
        "name": model.name,
        "joints": joints,
        "links": links,
        "collision_mask": [list(p) for p in model.collision_mask],
    }
    out = directory / f"{model.name}.json"
    out.write_text(json.dumps(doc, indent=2) + "\n")
    return out


# --------------------------------------------------------------------------
# bundled desk-scale arm
# --------------------------------------------------------------------------

def build_desk_arm() -> RobotModel:
    """Six-revolute arm of boxes and prisms, built in code.

    Base yaw, shoulder and elbow pitch, forearm roll, wrist pitch, flange
    roll. Lengths are chosen so that uniform sampling over [-pi, pi]^6 hits
    a self-collision a little under 30% of the time.
    """
    meshes = [
        ("base", cylinder_mesh(0.11, 0.0, 0.05, segments=10)),
        ("turret", box_mesh([-0.06, -0.06, 0.0], [0.06, 0.06, 0.15])),
        ("upper_arm", box_mesh([-0.04, -0.04, 0.0], [0.04, 0.04, 0.32])),
        ("forearm", cylinder_mesh(0.035, 0.0, 0.28, segments=8)),
        ("wrist", box_mesh([-0.03, -0.03, 0.0], [0.03, 0.03, 0.08])),
        ("flange", cylinder_mesh(0.03, 0.0, 0.08, segments=8)),
        ("gripper", box_mesh([-0.05, -0.02, 0.0], [0.05, 0.02, 0.1])),
    ]
    # (axis, origin xyz in the parent link frame); the lateral shoulder,
    # elbow and wrist offsets keep the upper arm clear of the base
    chain = [
        ((0, 0, 1), (0.0, 0.0, 0.05)),
        ((0, 1, 0), (0.0, 0.15, 0.15)),
        ((0, 1, 0), (0.0, -0.15, 0.32)),
        ((0, 0, 1), (0.0, 0.0, 0.28)),
        ((0, 1, 0), (0.0, 0.07, 0.08)),
        ((0, 0, 1), (0.0, 0.0, 0.08)),
    ]
    joints = tuple(
        Joint(i, axis, Pose(np.eye(3), xyz)) for i, (axis, xyz) in enumerate(chain)
    )
    links = tuple(make_link(name, mesh) for name, mesh in meshes)
    return RobotModel("desk_arm", joints, links, default_mask(len(links)))


def desk_arm_path() -> Path:
    return Path(str(resources.files("selfcollide") / "data" / "desk_arm" / "desk_arm.json"))


def desk_arm() -> RobotModel:
    """The bundled desk-arm, loaded from its description file."""
    return load_robot(desk_arm_path())
