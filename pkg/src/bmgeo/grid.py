"""Sphere discretizations: quadrature grids, scan nodes, tangent frames.

Two node families are used.  Integrals run on a Gauss-Legendre x uniform
azimuth product rule whose polynomial exactness degree is declared per
level; eigenvalue scans run on subdivided-icosahedron vertices, which are
spatially uniform.  A grid built here carries both.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class TangentFrame:
    """Right-handed orthonormal triple {e1, e2, base} at a sphere point."""

    base: np.ndarray
    e1: np.ndarray
    e2: np.ndarray


def tangent_basis(u: np.ndarray) -> TangentFrame:
    """Deterministic tangent frame at u, continuous away from the +-z poles.

    At the poles (the documented exceptional set) a fixed frame aligned
    with the x axis is returned.
    """
    u = np.asarray(u, dtype=float).reshape(3)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("tangent_basis requires a unit vector")
    e1, e2 = _frames_for(u[None, :])
    return TangentFrame(base=u, e1=e1[0], e2=e2[0])


def _frames_for(nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized tangent frames; e1 = normalize(z x u), e2 = u x e1."""
    nodes = np.asarray(nodes, dtype=float)
    s = np.hypot(nodes[..., 0], nodes[..., 1])
    e1 = np.empty_like(nodes)
    polar = s < 1e-9
    ok = ~polar
    e1[ok, 0] = -nodes[ok, 1] / s[ok]
    e1[ok, 1] = nodes[ok, 0] / s[ok]
    e1[ok, 2] = 0.0
    e1[polar] = (1.0, 0.0, 0.0)
    e2 = np.cross(nodes, e1)
    return e1, e2


@dataclass(frozen=True)
class SphereGrid:
    """Immutable sphere grid: quadrature nodes/weights plus scan nodes.

    Invariants: unit nodes, strictly positive weights summing to 4*pi,
    node count strictly increasing with level.
    """

    nodes: np.ndarray        # (N, 3)
    weights: np.ndarray      # (N,)
    level: int
    scheme: str              # "gauss_product" | "icosphere"
    exactness: int           # declared polynomial exactness degree
    scan_nodes: np.ndarray   # (M, 3) spatially uniform nodes for scans

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)
        self.scan_nodes.setflags(write=False)

    @property
    def frames(self) -> tuple[np.ndarray, np.ndarray]:
        return _frames_for(self.nodes)

    def validate(self) -> None:
        norms = np.linalg.norm(self.nodes, axis=1)
        if np.max(np.abs(norms - 1.0)) >= 1e-12:
            raise AssertionError("grid nodes are not unit vectors")
        if np.any(self.weights <= 0.0):
            raise AssertionError("grid weights must be strictly positive")
        if abs(float(self.weights.sum()) - FOUR_PI) >= 1e-10:
            raise AssertionError("grid weights do not sum to 4*pi")

    def to_json_obj(self) -> list[dict]:
        return [
            {"node": [float(x) for x in n], "weight": float(w)}
            for n, w in zip(self.nodes, self.weights)
        ]


def build_grid(level: int, scheme: str = "gauss_product") -> SphereGrid:
    """Build the quadrature grid for a refinement level (deterministic).

    ``gauss_product`` uses 4*2^level Gauss-Legendre polar nodes and twice
    as many uniform azimuth nodes: exact for spherical polynomials of
    total degree <= 8*2^level - 1.  ``icosphere`` uses subdivision-level
    vertices with spherical Voronoi cell areas as weights (second-order
    accurate, exact for degree <= 1 by central symmetry plus
    normalization).
    """
    level = int(level)
    if level < 0:
        raise ValueError("level must be >= 0")
    if scheme == "gauss_product":
        nodes, weights, exactness = _gauss_product(level)
    elif scheme == "icosphere":
        nodes = icosphere_nodes(level)
        weights = _voronoi_weights(nodes)
        exactness = 1
    else:
        raise ValueError(f"unknown grid scheme {scheme!r}")
    weights = weights * (FOUR_PI / weights.sum())
    scan = icosphere_nodes(level) if scheme == "gauss_product" else nodes
    return SphereGrid(
        nodes=nodes, weights=weights, level=level, scheme=scheme,
        exactness=exactness, scan_nodes=scan,
    )


def _gauss_product(level: int) -> tuple[np.ndarray, np.ndarray, int]:
    n_polar = 4 * 2**level
    n_azimuth = 2 * n_polar
    z, wz = np.polynomial.legendre.leggauss(n_polar)
    # half-step azimuth offset keeps nodes off the coordinate planes
    phi = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    s = np.sqrt(1.0 - z**2)
    nodes = np.empty((n_polar * n_azimuth, 3))
    nodes[:, 0] = np.outer(s, np.cos(phi)).ravel()
    nodes[:, 1] = np.outer(s, np.sin(phi)).ravel()
    nodes[:, 2] = np.repeat(z, n_azimuth)
    weights = np.repeat(wz, n_azimuth) * (2.0 * np.pi / n_azimuth)
    return nodes, weights, 2 * n_polar - 1


@lru_cache(maxsize=16)
def icosphere_nodes(level: int) -> np.ndarray:
    """Vertices of the level-times subdivided icosahedron, on the sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                verts.append(m)
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    out = np.array(verts)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    out.setflags(write=False)
    return out


def _voronoi_weights(nodes: np.ndarray) -> np.ndarray:
    from scipy.spatial import SphericalVoronoi

    sv = SphericalVoronoi(np.array(nodes), radius=1.0)
    return sv.calculate_areas()


def integrate_sphere(f, grid: SphereGrid) -> float:
    """Quadrature of f over the sphere: sum of weights times node values."""
    vals = np.asarray(f(grid.nodes), dtype=float)
    if vals.shape != (grid.nodes.shape[0],):
        raise ValueError("integrand must return one value per node")
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand produced non-finite values")
    return float(grid.weights @ vals)


# ---------------------------------------------------------------------------
# regional rules (caps, bands, circles) used by closed-form area measures


def band_quadrature(axis, alpha_min: float, alpha_max: float,
                    n_polar: int, n_azimuth: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on the band {u : alpha_min <= angle(u, axis) <= alpha_max}.

    Gauss-Legendre in the axial coordinate, uniform in azimuth; weight sum
    equals the band area exactly.
    """
    if not 0.0 <= alpha_min < alpha_max <= np.pi:
        raise ValueError("need 0 <= alpha_min < alpha_max <= pi")
    axis = np.asarray(axis, dtype=float).reshape(3)
    axis = axis / np.linalg.norm(axis)
    frame = tangent_basis(axis)
    z0, z1 = np.cos(alpha_max), np.cos(alpha_min)
    t, wt = np.polynomial.legendre.leggauss(n_polar)
    z = 0.5 * (z1 - z0) * t + 0.5 * (z1 + z0)
    wz = 0.5 * (z1 - z0) * wt
    phi = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    s = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
    cs, sn = np.cos(phi), np.sin(phi)
    nodes = (
        np.multiply.outer(s, cs)[..., None] * frame.e1
        + np.multiply.outer(s, sn)[..., None] * frame.e2
        + z[:, None, None] * axis
    ).reshape(-1, 3)
    weights = np.repeat(wz, n_azimuth) * (2.0 * np.pi / n_azimuth)
    return nodes, weights


def cap_quadrature(axis, alpha: float, n_polar: int, n_azimuth: int):
    """Product rule on the cap of angular radius alpha around axis."""
    return band_quadrature(axis, 0.0, alpha, n_polar, n_azimuth)


def circle_quadrature(axis, offset: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Arclength rule on the circle {u : (u, axis) = offset}.

    Uniform nodes; for smooth integrands the periodic trapezoid rule
    converges spectrally.  Weights sum to the circle length.
    """
    axis = np.asarray(axis, dtype=float).reshape(3)
    axis = axis / np.linalg.norm(axis)
    if not -1.0 < offset < 1.0:
        raise ValueError("circle offset must be in (-1, 1)")
    frame = tangent_basis(axis)
    radius = np.sqrt(1.0 - offset**2)
    t = 2.0 * np.pi * np.arange(n) / n
    nodes = (
        offset * axis
        + radius * (np.cos(t)[:, None] * frame.e1 + np.sin(t)[:, None] * frame.e2)
    )
    weights = np.full(n, 2.0 * np.pi * radius / n)
    return nodes, weights
