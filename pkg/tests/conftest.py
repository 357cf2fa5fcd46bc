"""Shared solid factories for the test suite."""

import os

import numpy as np
import pytest
from hypothesis import settings

from polyrep import Polyhedron, PolygonFace, extrude_polygon
from polyrep.datasets import (
    TriangleMesh,
    make_box,
    make_prism,
    make_pyramid,
    make_tetrahedron,
    random_simple_polygon,
    synthetic_solid,
)

settings.register_profile("suite", max_examples=25, deadline=None)
settings.register_profile("deep", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "suite"))


@pytest.fixture
def cube():
    return make_box()


@pytest.fixture
def tetrahedron():
    return make_tetrahedron()


@pytest.fixture
def triangular_prism():
    return extrude_polygon(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]), 2.0)


@pytest.fixture
def l_shaped_solid():
    loop = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]])
    return extrude_polygon(loop, 1.0)


def solid_corpus(n, seed=0, jitter=0.1):
    """Mixed bag of generated solids for round-trip style tests."""
    rng = np.random.default_rng(seed)
    kinds = ("tetrahedron", "box", "prism", "pyramid")
    solids = []
    for idx in range(n):
        if idx % 5 == 4:
            solids.append(
                extrude_polygon(random_simple_polygon(rng), float(rng.uniform(0.5, 2.0)))
            )
        else:
            solids.append(synthetic_solid(kinds[idx % 4], rng, jitter=jitter))
    return solids


def icosphere_mesh(subdivisions=1):
    """Subdivided icosahedron projected to the unit sphere: no two adjacent
    triangles are coplanar, so coplanar merging leaves every face alone."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    tris = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdivisions):
        cache = {}
        new_tris = []

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = new_tris
    return TriangleMesh(
        np.array(verts), np.array(tris), np.zeros((len(tris), 0))
    )


def chiral_tetrahedron():
    """Scalene tetrahedron with no mirror symmetry."""
    verts = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.2, 1.1, 0.0], [0.3, 0.2, 1.4]]
    )
    centroid = verts.mean(axis=0)
    faces = []
    for loop in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]:
        pts = verts[list(loop)]
        if np.cross(pts[1] - pts[0], pts[2] - pts[0]) @ (pts.mean(axis=0) - centroid) < 0:
            loop = tuple(reversed(loop))
        faces.append(PolygonFace(loop, np.zeros(0)))
    return Polyhedron(verts, tuple(faces))
