"""Polyhedron data model and rigid-motion utilities.

A polyhedron is a closed solid bounded by flat polygonal faces.  Faces are
stored as ordered vertex-index loops, counterclockwise when viewed from the
outside, so the right-hand rule yields outward normals.  Each face may carry
a fixed-width attribute vector (e.g. an RGB color); width zero is allowed.

All values are immutable after construction: coordinate arrays are marked
read-only, so instances are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InvalidTransformError

# Newell vectors shorter than this are considered degenerate.
DEGENERATE_NORMAL_TOL = 1e-12

# Default relative coplanarity tolerance (scaled by the bounding-box diagonal).
DEFAULT_COPLANARITY_TOL = 1e-6


def _frozen(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PolygonFace:
    """One face: an ordered vertex-index loop plus an attribute vector."""

    loop: tuple
    attr: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "loop", tuple(int(i) for i in self.loop))
        attr = np.atleast_1d(np.array(self.attr, dtype=np.float64))
        if attr.ndim != 1:
            raise GeometryError("face attribute must be a flat vector")
        attr.setflags(write=False)
        object.__setattr__(self, "attr", attr)

    def __len__(self):
        return len(self.loop)


@dataclass(frozen=True)
class Polyhedron:
    """Vertex coordinates plus outward-oriented face loops.

    Construction enforces only structural well-formedness (finite
    coordinates, in-range indices, uniform attribute width); geometric
    soundness is the job of :func:`validate_polyhedron`.
    """

    vertices: np.ndarray
    faces: tuple

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=np.float64)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise GeometryError(f"vertices must be (N, 3), got {verts.shape}")
        if not np.all(np.isfinite(verts)):
            raise GeometryError("vertex coordinates must be finite")
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

        faces = tuple(
            f if isinstance(f, PolygonFace) else PolygonFace(*f) for f in self.faces
        )
        n = len(verts)
        dims = set()
        for fi, face in enumerate(faces):
            for v in face.loop:
                if v < 0 or v >= n:
                    raise GeometryError(f"face {fi} references vertex {v} of {n}")
            dims.add(face.attr.shape[0])
        if len(dims) > 1:
            raise GeometryError(f"inconsistent attribute widths: {sorted(dims)}")
        object.__setattr__(self, "faces", faces)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def attr_dim(self):
        return self.faces[0].attr.shape[0] if self.faces else 0

    def bbox_diagonal(self):
        if self.n_vertices == 0:
            return 0.0
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(span))

    def diameter(self):
        """Bounding-box diagonal; the length scale used by relative tolerances."""
        return self.bbox_diagonal()


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    where: str
    deviation: float = 0.0


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_polyhedron`; ok iff no issues (warnings aside)."""

    ok: bool
    issues: tuple
    warnings: tuple = ()

    def codes(self):
        return [i.code for i in self.issues]


def _newell_vector(points):
    """Sum of cross products around the loop; twice the vector area.

    Centering on the loop centroid keeps the sum well conditioned far from
    the origin.  Robust for near-collinear vertex triples, unlike a single
    cross product.
    """
    c = points.mean(axis=0)
    q = points - c
    return np.cross(q, np.roll(q, -1, axis=0)).sum(axis=0)


def face_normal(p: Polyhedron, face_index: int) -> np.ndarray:
    """Outward unit normal of one face, via Newell's method over the loop."""
    pts = p.vertices[list(p.faces[face_index].loop)]
    n = _newell_vector(pts)
    norm = np.linalg.norm(n)
    if norm < DEGENERATE_NORMAL_TOL:
        raise GeometryError(f"degenerate face {face_index}: |newell| = {norm:.3e}")
    return n / norm


def face_area(p: Polyhedron, face_index: int) -> float:
    pts = p.vertices[list(p.faces[face_index].loop)]
    return 0.5 * float(np.linalg.norm(_newell_vector(pts)))


def validate_polyhedron(
    p: Polyhedron, coplanarity_tol: float = DEFAULT_COPLANARITY_TOL
) -> ValidationReport:
    """Check closedness, orientation pairing, and face planarity.

    Every defect lands in the report rather than raising: short or repeated
    loops, zero-length edges, non-coplanar faces (point-to-plane distance
    above ``coplanarity_tol`` times the bounding-box diagonal), collinear
    loop vertices, unpaired or duplicated directed edges, and vertices that
    belong to fewer than two faces.  Inward-pointing normals are reported as
    warnings only, since the centroid test is meaningful just for convex
    solids.
    """
    issues = []
    warnings = []
    scale = p.bbox_diagonal() or 1.0
    solid_centroid = p.vertices.mean(axis=0) if p.n_vertices else np.zeros(3)

    directed = {}
    face_count_per_vertex = np.zeros(p.n_vertices, dtype=np.int64)

    for fi, face in enumerate(p.faces):
        loop = face.loop
        where = f"face {fi}"
        if len(loop) < 3:
            issues.append(ValidationIssue("short_loop", where, float(len(loop))))
            continue
        if len(set(loop)) != len(loop):
            issues.append(ValidationIssue("repeated_vertex", where))
        face_count_per_vertex[np.unique(list(loop))] += 1

        pts = p.vertices[list(loop)]
        nxt = np.roll(pts, -1, axis=0)
        edge_lens = np.linalg.norm(nxt - pts, axis=1)
        for k, length in enumerate(edge_lens):
            if length < 1e-12 * scale:
                issues.append(
                    ValidationIssue(
                        "zero_length_edge",
                        f"face {fi} edge ({loop[k]},{loop[(k + 1) % len(loop)]})",
                        float(length),
                    )
                )

        # Collinear (or spiked) vertices make in-plane angles ill defined
        # downstream, so they are flagged as issues and rejected.
        prv = np.roll(pts, 1, axis=0)
        e_in = pts - prv
        e_out = nxt - pts
        cross_norm = np.linalg.norm(np.cross(e_in, e_out), axis=1)
        len_prod = np.linalg.norm(e_in, axis=1) * np.linalg.norm(e_out, axis=1)
        bad = (cross_norm < 1e-12 * np.maximum(len_prod, 1e-300)) & (len_prod > 0)
        for k in np.nonzero(bad)[0]:
            issues.append(
                ValidationIssue("collinear_vertices", f"face {fi} vertex {loop[k]}")
            )

        n = _newell_vector(pts)
        norm = np.linalg.norm(n)
        if norm < DEGENERATE_NORMAL_TOL:
            issues.append(ValidationIssue("degenerate_face", where, float(norm)))
        else:
            n = n / norm
            dev = float(np.abs((pts - pts.mean(axis=0)) @ n).max())
            if dev > coplanarity_tol * scale:
                issues.append(ValidationIssue("non_coplanar_face", where, dev))
            if float(n @ (pts.mean(axis=0) - solid_centroid)) < 0.0:
                warnings.append(ValidationIssue("inward_normal", where))

        for k in range(len(loop)):
            a, b = loop[k], loop[(k + 1) % len(loop)]
            if a == b:
                continue
            directed[(a, b)] = directed.get((a, b), 0) + 1

    for (a, b), count in sorted(directed.items()):
        if count > 1:
            issues.append(
                ValidationIssue("duplicate_directed_edge", f"edge ({a},{b})", count)
            )
        if directed.get((b, a), 0) == 0:
            issues.append(ValidationIssue("unpaired_directed_edge", f"edge ({a},{b})"))

    for v in np.nonzero(face_count_per_vertex < 2)[0]:
        issues.append(
            ValidationIssue(
                "vertex_in_few_faces", f"vertex {v}", float(face_count_per_vertex[v])
            )
        )

    return ValidationReport(ok=not issues, issues=tuple(issues), warnings=tuple(warnings))


@dataclass(frozen=True)
class RigidTransform:
    """Proper rotation (det +1) plus translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise InvalidTransformError(f"rotation must be 3x3, got {r.shape}")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-12:
            raise InvalidTransformError("rotation is not orthonormal within 1e-12")
        if abs(np.linalg.det(r) - 1.0) > 1e-12:
            raise InvalidTransformError("rotation determinant is not +1 within 1e-12")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """self ∘ inner: apply ``inner`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ inner.rotation,
            self.rotation @ inner.translation + self.translation,
        )


def apply_rigid_transform(p: Polyhedron, t: RigidTransform) -> Polyhedron:
    """Map every vertex v -> R v + t; faces and attributes are untouched."""
    return Polyhedron(t.apply(p.vertices), p.faces)


def sample_random_rotation(seed: int) -> RigidTransform:
    """Rotation uniform on SO(3) (normalized Gaussian quaternion), zero shift."""
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    r = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return RigidTransform(r, np.zeros(3))


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix: counterclockwise by ``angle`` about ``axis``."""
    u = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(u)
    if norm < 1e-300:
        raise GeometryError("rotation axis has zero length")
    u = u / norm
    k = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


# ---------------------------------------------------------------------------
# Extrusion


@dataclass(frozen=True)
class ColorScheme:
    """Attribute vectors per face role of an extruded solid.

    Roles: ``front`` (+z cap), ``back`` (-z cap), ``side`` (lateral faces),
    and ``bottom_side`` (lateral faces whose pre-rotation outward normal
    points downward, within a configurable cone of -y).
    """

    front: np.ndarray
    back: np.ndarray
    side: np.ndarray
    bottom_side: np.ndarray

    def __post_init__(self):
        for name in ("front", "back", "side", "bottom_side"):
            object.__setattr__(self, name, _frozen(np.atleast_1d(getattr(self, name))))
        dims = {getattr(self, n).shape[0] for n in ("front", "back", "side", "bottom_side")}
        if len(dims) != 1:
            raise GeometryError("color scheme vectors must share one width")

    @property
    def attr_dim(self):
        return self.front.shape[0]

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z, z, z, z)

    @classmethod
    def rgb_default(cls):
        """Red front, blue back, green sides, purple bottom-facing sides."""
        return cls(
            front=np.array([1.0, 0.0, 0.0]),
            back=np.array([0.0, 0.0, 1.0]),
            side=np.array([0.0, 1.0, 0.0]),
            bottom_side=np.array([0.5, 0.0, 0.5]),
        )


def _segments_properly_intersect(p1, p2, p3, p4):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 0:
            return 1
        if v < 0:
            return -1
        return 0

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p1, p2, p3):
        return True
    if o2 == 0 and on_segment(p1, p2, p4):
        return True
    if o3 == 0 and on_segment(p3, p4, p1):
        return True
    if o4 == 0 and on_segment(p3, p4, p2):
        return True
    return False


def polygon_is_simple(points2d: np.ndarray) -> bool:
    """Brute-force check that no two non-adjacent edges intersect."""
    n = len(points2d)
    for a in range(n):
        a2 = (a + 1) % n
        for b in range(a + 1, n):
            b2 = (b + 1) % n
            if a == b or a2 == b or a == b2:
                continue
            if _segments_properly_intersect(
                points2d[a], points2d[a2], points2d[b], points2d[b2]
            ):
                return False
    return True


def polygon_signed_area(points2d: np.ndarray) -> float:
    x, y = points2d[:, 0], points2d[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def extrude_polygon(
    poly2d,
    height: float,
    scheme: ColorScheme | None = None,
    bottom_cone_deg: float = 22.5,
) -> Polyhedron:
    """Stretch a simple CCW polygon along +z into a closed prismatic solid.

    The front cap sits at z = height with the original loop order (outward
    normal +z); the back cap at z = 0 with the loop reversed; each 2D edge
    becomes one quad whose winding makes its normal point outward.  Face
    attributes come from ``scheme`` (empty scheme when None).
    """
    pts = np.array(poly2d, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"expected (n, 2) polygon, got {pts.shape}")
    n = len(pts)
    if n < 3:
        raise GeometryError("polygon needs at least 3 vertices")
    if not (height > 0):
        raise GeometryError(f"extrusion height must be positive, got {height}")
    edge = np.roll(pts, -1, axis=0) - pts
    if np.any(np.linalg.norm(edge, axis=1) == 0.0):
        raise GeometryError("polygon has a zero-length edge")
    if polygon_signed_area(pts) <= 0:
        raise GeometryError("polygon must be counterclockwise")
    if not polygon_is_simple(pts):
        raise GeometryError("polygon is self-intersecting")

    scheme = scheme or ColorScheme.empty()
    back = np.column_stack([pts, np.zeros(n)])
    front = np.column_stack([pts, np.full(n, float(height))])
    vertices = np.vstack([back, front])

    faces = [
        PolygonFace(tuple(range(n, 2 * n)), scheme.front),
        PolygonFace(tuple(reversed(range(n))), scheme.back),
    ]
    cos_cone = math.cos(math.radians(bottom_cone_deg))
    for i in range(n):
        j = (i + 1) % n
        # Outward side normal of a CCW polygon is (dy, -dx); it is within the
        # bottom cone of -y exactly when dx / |edge| >= cos(cone).
        downness = edge[i, 0] / np.linalg.norm(edge[i])
        attr = scheme.bottom_side if downness >= cos_cone else scheme.side
        faces.append(PolygonFace((i, j, n + j, n + i), attr))
    return Polyhedron(vertices, tuple(faces))


# ---------------------------------------------------------------------------
# Alignment


def kabsch_align(a, b):
    """Best proper rotation + translation mapping point set ``a`` onto ``b``.

    Points correspond by index.  Reflections are not permitted: the rotation
    determinant is forced to +1, so mirror images keep a positive residual.
    Returns ``(transform, rmsd)``.
    """
    pa = np.array(a, dtype=np.float64)
    pb = np.array(b, dtype=np.float64)
    if pa.shape != pb.shape or pa.ndim != 2 or pa.shape[1] != 3:
        raise GeometryError(f"point sets must match as (N, 3); got {pa.shape}, {pb.shape}")
    if len(pa) < 3:
        raise GeometryError("kabsch needs at least 3 points")
    ca, cb = pa.mean(axis=0), pb.mean(axis=0)
    qa, qb = pa - ca, pb - cb
    for q in (qa, qb):
        s = np.linalg.svd(q, compute_uv=False)
        if s[1] < 1e-9 * max(s[0], 1e-300):
            raise GeometryError("rank-deficient point set (collinear or coincident)")
    h = qa.T @ qb
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    residual = qb - qa @ r.T
    rmsd = float(np.sqrt((residual**2).sum() / len(pa)))
    return RigidTransform(r, t), rmsd
