"""Directed surface graph of a polyhedron, with face loops carrying attributes.

Nodes are the polyhedron's vertices.  Every consecutive vertex pair of every
face contributes one directed edge owned by that face, so each undirected
edge of the solid appears as two opposite directed edges in two different
faces.  A face is stored as the ordered chain of its edge ids plus an
attribute vector.  The conversion is lossless: :meth:`SurfaceGraph.to_polyhedron`
is an exact inverse of :meth:`SurfaceGraph.from_polyhedron`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphError, InvalidPolyhedronError
from .geometry import (
    DEFAULT_COPLANARITY_TOL,
    PolygonFace,
    Polyhedron,
    _newell_vector,
    validate_polyhedron,
)


@dataclass(frozen=True)
class SurfaceTopology:
    """Connectivity of a surface graph with coordinates withheld."""

    n_nodes: int
    loops: tuple
    attrs: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "loops", tuple(tuple(int(v) for v in loop) for loop in self.loops)
        )
        attrs = np.atleast_2d(np.array(self.attrs, dtype=np.float64))
        if attrs.size == 0:
            attrs = attrs.reshape(len(self.loops), -1)
        attrs.setflags(write=False)
        object.__setattr__(self, "attrs", attrs)
        if attrs.shape[0] != len(self.loops):
            raise GraphError("one attribute row per face loop required")


@dataclass(frozen=True)
class SurfaceGraph:
    """Immutable directed graph with face hyperedges.

    Invariants checked at construction: every directed edge has a unique
    opposite owned by a different face, every face chain links head-to-tail
    into a single closed loop of length >= 3, and the face chains partition
    the edge set.  Construction fails fast on violations, so queries never
    have to re-check.
    """

    coords: np.ndarray
    edge_tail: np.ndarray
    edge_head: np.ndarray
    edge_face: np.ndarray
    face_edges: tuple
    attrs: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        coords.setflags(write=False)
        tail = np.array(self.edge_tail, dtype=np.int64)
        head = np.array(self.edge_head, dtype=np.int64)
        eface = np.array(self.edge_face, dtype=np.int64)
        for arr in (tail, head, eface):
            arr.setflags(write=False)
        attrs = np.atleast_2d(np.array(self.attrs, dtype=np.float64))
        if attrs.size == 0:
            attrs = attrs.reshape(len(self.face_edges), -1)
        attrs.setflags(write=False)
        face_edges = tuple(np.array(fe, dtype=np.int64) for fe in self.face_edges)
        for fe in face_edges:
            fe.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "edge_tail", tail)
        object.__setattr__(self, "edge_head", head)
        object.__setattr__(self, "edge_face", eface)
        object.__setattr__(self, "face_edges", face_edges)
        object.__setattr__(self, "attrs", attrs)

        n_edges = len(tail)
        if not (len(head) == len(eface) == n_edges):
            raise GraphError("edge arrays must have equal length")
        if np.any(tail == head):
            raise GraphError("directed edges must join distinct nodes")
        if attrs.shape[0] != len(face_edges):
            raise GraphError("one attribute row per face required")

        seen = {}
        for e in range(n_edges):
            key = (int(tail[e]), int(head[e]))
            if key in seen:
                raise GraphError(f"duplicate directed edge {key}")
            seen[key] = e
        opposite = np.empty(n_edges, dtype=np.int64)
        for e in range(n_edges):
            o = seen.get((int(head[e]), int(tail[e])))
            if o is None:
                raise GraphError(
                    f"edge ({tail[e]},{head[e]}) has no opposite"
                )
            if eface[o] == eface[e]:
                raise GraphError(
                    f"edge ({tail[e]},{head[e]}) and its opposite share face {eface[e]}"
                )
            opposite[e] = o
        opposite.setflags(write=False)
        object.__setattr__(self, "opposite", opposite)

        covered = np.zeros(n_edges, dtype=bool)
        for fi, chain in enumerate(face_edges):
            if len(chain) < 3:
                raise GraphError(f"face {fi} chain shorter than 3 edges")
            for pos, e in enumerate(chain):
                if eface[e] != fi:
                    raise GraphError(f"edge {e} listed in face {fi} but owned by {eface[e]}")
                if covered[e]:
                    raise GraphError(f"edge {e} appears in two face chains")
                covered[e] = True
                nxt = chain[(pos + 1) % len(chain)]
                if head[e] != tail[nxt]:
                    raise GraphError(f"face {fi} chain breaks at edge {e}")
        if not covered.all():
            raise GraphError("some edges belong to no face chain")

        # CSR-style out-edge index ordered by (tail, head): neighbors and
        # path enumeration read straight off it in deterministic order.
        order = np.lexsort((head, tail))
        starts = np.searchsorted(tail[order], np.arange(len(coords) + 1))
        order.setflags(write=False)
        starts.setflags(write=False)
        object.__setattr__(self, "_out_order", order)
        object.__setattr__(self, "_out_starts", starts)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_polyhedron(
        cls, p: Polyhedron, coplanarity_tol: float = DEFAULT_COPLANARITY_TOL
    ) -> "SurfaceGraph":
        """Build the graph; refuses invalid polyhedra with their report."""
        report = validate_polyhedron(p, coplanarity_tol)
        if not report.ok:
            raise InvalidPolyhedronError(report)
        tails, heads, efaces, face_edges = [], [], [], []
        eid = 0
        for fi, face in enumerate(p.faces):
            loop = face.loop
            chain = []
            for k in range(len(loop)):
                tails.append(loop[k])
                heads.append(loop[(k + 1) % len(loop)])
                efaces.append(fi)
                chain.append(eid)
                eid += 1
            face_edges.append(np.array(chain, dtype=np.int64))
        attrs = (
            np.stack([f.attr for f in p.faces])
            if p.faces
            else np.zeros((0, 0))
        )
        return cls(p.vertices, tails, heads, efaces, tuple(face_edges), attrs)

    # -- queries -------------------------------------------------------------

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_edges(self):
        return self.edge_tail.shape[0]

    @property
    def n_faces(self):
        return len(self.face_edges)

    @property
    def attr_dim(self):
        return self.attrs.shape[1]

    def opposite_edge(self, e: int) -> int:
        """The unique edge with swapped endpoints, owned by the other face."""
        return int(self.opposite[e])

    def out_edges(self, v: int) -> np.ndarray:
        """Edge ids with tail v, ordered by head id."""
        return self._out_order[self._out_starts[v] : self._out_starts[v + 1]]

    def neighbors(self, v: int) -> list:
        """Sorted unique heads of the directed edges leaving v."""
        return sorted({int(self.edge_head[e]) for e in self.out_edges(v)})

    def face_loop(self, fi: int) -> tuple:
        """Vertex loop of a face, read off its edge chain."""
        return tuple(int(self.edge_tail[e]) for e in self.face_edges[fi])

    def face_normals(self) -> np.ndarray:
        """Outward unit normals per face (Newell over each loop)."""
        normals = np.empty((self.n_faces, 3))
        for fi in range(self.n_faces):
            n = _newell_vector(self.coords[list(self.face_loop(fi))])
            norm = np.linalg.norm(n)
            if norm < 1e-12:
                raise GraphError(f"degenerate face {fi} in surface graph")
            normals[fi] = n / norm
        return normals

    def mean_edge_length(self) -> float:
        d = self.coords[self.edge_head] - self.coords[self.edge_tail]
        return float(np.linalg.norm(d, axis=1).mean())

    def topology(self) -> SurfaceTopology:
        """Connectivity with coordinates stripped (loops + attributes)."""
        return SurfaceTopology(
            self.n_nodes, tuple(self.face_loop(fi) for fi in range(self.n_faces)), self.attrs
        )

    def to_polyhedron(self) -> Polyhedron:
        """Exact inverse of :meth:`from_polyhedron` (coordinates bitwise)."""
        faces = tuple(
            PolygonFace(self.face_loop(fi), self.attrs[fi]) for fi in range(self.n_faces)
        )
        return Polyhedron(self.coords, faces)


def build_surface_graph(
    p: Polyhedron, coplanarity_tol: float = DEFAULT_COPLANARITY_TOL
) -> SurfaceGraph:
    return SurfaceGraph.from_polyhedron(p, coplanarity_tol)
