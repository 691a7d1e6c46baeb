"""Convex bodies and their surface-area measures.

Bodies are immutable descriptions: smooth (support function with positive
definite Q), ball, spherical cone, cylinder over a planar base, or a
non-negative Minkowski combination.  Area measures decompose into
quadrature-backed density pieces, point atoms, and weighted circles; the
closed forms for cones, cylinders and cone-plus-smooth sums are exact, so
their masses are quadrature-grade rather than mesh-grade.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import calculus as calc
from .calculus import cof2, det2, eigvals2, q_batch, trace2
from .functions import SphericalFunction, constant, ellipsoid, linear, random_smooth
from .grid import (SphereGrid, band_quadrature, cap_quadrature,
                   circle_quadrature, tangent_basis)


class UnsupportedBodyError(ValueError):
    """Raised when no exact measure decomposition exists for a body."""


class NotConvexError(ValueError):
    """Raised when a smooth body's Q matrix fails positive definiteness."""


# ---------------------------------------------------------------------------
# planar bodies (convex bodies of the plane, entered via 2-d support functions)


@dataclass(frozen=True)
class PlanarBody:
    """Convex body in the plane given by its support function h(angle)."""

    support: Callable[[np.ndarray], np.ndarray]
    smooth: bool = True
    label: str = ""

    def __call__(self, angles: np.ndarray) -> np.ndarray:
        return np.asarray(self.support(np.asarray(angles, dtype=float)), dtype=float)

    def density(self, angles: np.ndarray, step: float = 1e-4) -> np.ndarray:
        """Curvature radius h'' + h, the density of the planar area measure."""
        a = np.asarray(angles, dtype=float)
        h = self(a)
        hpp = (self(a + step) - 2.0 * h + self(a - step)) / step**2
        return hpp + h

    def area(self, n: int = 2048) -> float:
        a = 2.0 * np.pi * np.arange(n) / n
        return float(0.5 * np.mean(self(a) * self.density(a)) * 2.0 * np.pi)

    def perimeter(self, n: int = 2048) -> float:
        a = 2.0 * np.pi * np.arange(n) / n
        return float(np.mean(self.density(a)) * 2.0 * np.pi)

    def __add__(self, other: "PlanarBody") -> "PlanarBody":
        return PlanarBody(
            support=lambda a, f=self.support, g=other.support: f(a) + g(a),
            smooth=self.smooth and other.smooth,
            label=f"({self.label}+{other.label})",
        )

    def __mul__(self, c) -> "PlanarBody":
        c = float(c)
        if c < 0:
            raise ValueError("planar bodies scale by non-negative factors")
        return PlanarBody(
            support=lambda a, f=self.support: c * f(a),
            smooth=self.smooth,
            label=f"{c:g}*{self.label}",
        )

    __rmul__ = __mul__

    def is_convex_sampled(self, samples: int = 4000, seed: int = 0, tol: float = 1e-9) -> bool:
        """Segment test of convexity of the 1-homogeneous extension on R^2."""
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(samples, 2))
        y = rng.normal(size=(samples, 2))

        def ext(p):
            r = np.linalg.norm(p, axis=-1)
            ang = np.arctan2(p[..., 1], p[..., 0])
            return r * self(ang)

        mid = 0.5 * (x + y)
        keep = np.linalg.norm(mid, axis=-1) > 0.1
        gap = ext(mid[keep]) - 0.5 * (ext(x[keep]) + ext(y[keep]))
        return bool(np.max(gap) <= tol)


def disk(r: float = 1.0) -> PlanarBody:
    r = float(r)
    return PlanarBody(support=lambda a: np.full_like(np.asarray(a, float), r), label=f"disk:{r:g}")


def planar_point(p=(0.0, 0.0)) -> PlanarBody:
    p = np.asarray(p, dtype=float).reshape(2)
    return PlanarBody(
        support=lambda a: p[0] * np.cos(a) + p[1] * np.sin(a),
        label=f"point:{p[0]:g},{p[1]:g}",
    )


def random_planar_body(seed: int, waves: int = 4) -> PlanarBody:
    """Random smooth planar body; Fourier support function kept convex."""
    rng = np.random.default_rng(seed)
    c0 = 1.0 + 0.3 * rng.random()
    ks = np.arange(2, waves + 2)
    amp = rng.normal(size=len(ks)) * 0.5
    bmp = rng.normal(size=len(ks)) * 0.5
    # rho = h'' + h = c0 + sum (1 - k^2)(a_k cos + b_k sin); keep it positive
    gain = np.sum((ks**2 - 1) * np.hypot(amp, bmp))
    scale = 0.6 * c0 / gain if gain > 0 else 1.0
    amp *= scale
    bmp *= scale
    # translations (k = 1 terms) do not affect the measure; add for generality
    t = rng.normal(size=2) * 0.2

    def h(a):
        out = np.full_like(np.asarray(a, float), c0)
        out += t[0] * np.cos(a) + t[1] * np.sin(a)
        for k, ca, cb in zip(ks, amp, bmp):
            out += ca * np.cos(k * a) + cb * np.sin(k * a)
        return out

    return PlanarBody(support=h, label=f"random-planar:{seed}")


# ---------------------------------------------------------------------------
# bodies


class ConvexBody:
    """Base class for body descriptions; see the concrete variants."""

    label: str = ""


@dataclass(frozen=True)
class SmoothBody(ConvexBody):
    """Body of positive curvature given by its support function."""

    h: SphericalFunction
    label: str = ""


@dataclass(frozen=True)
class Ball(ConvexBody):
    radius: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    label: str = "ball"

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")


@dataclass(frozen=True)
class Cone(ConvexBody):
    """Convex hull of the origin and the unit-sphere cap around ``apex_dir``.

    The aperture must lie in (0, pi/2); the degenerate segment (aperture 0)
    and the half-ball (aperture pi/2) are excluded.
    """

    apex_dir: tuple[float, float, float] = (0.0, 0.0, 1.0)
    aperture: float = np.pi / 4
    label: str = "cone"

    def __post_init__(self):
        if not 0.0 < self.aperture < np.pi / 2:
            raise ValueError("cone aperture must lie in (0, pi/2)")
        p = np.asarray(self.apex_dir, dtype=float)
        if abs(np.linalg.norm(p) - 1.0) > 1e-9:
            raise ValueError("cone apex direction must be a unit vector")

    @property
    def axis(self) -> np.ndarray:
        return np.asarray(self.apex_dir, dtype=float)


@dataclass(frozen=True)
class Cylinder(ConvexBody):
    """Right cylinder: planar base swept along ``axis`` for ``height``."""

    base: PlanarBody = field(default_factory=disk)
    height: float = 1.0
    axis_dir: tuple[float, float, float] = (0.0, 0.0, 1.0)
    label: str = "cylinder"

    def __post_init__(self):
        if self.height <= 0:
            raise ValueError("cylinder height must be positive")
        a = np.asarray(self.axis_dir, dtype=float)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise ValueError("cylinder axis must be a unit vector")

    @property
    def axis(self) -> np.ndarray:
        return np.asarray(self.axis_dir, dtype=float)


@dataclass(frozen=True)
class Combo(ConvexBody):
    """Non-negative Minkowski combination sum_i w_i K_i."""

    parts: tuple[tuple[float, ConvexBody], ...] = ()
    label: str = "combo"

    def __post_init__(self):
        if not self.parts:
            raise ValueError("combination needs at least one part")
        for w, _ in self.parts:
            if w < 0 or not np.isfinite(w):
                raise ValueError("combination weights must be finite and >= 0")


def ball(radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> Ball:
    return Ball(radius=float(radius), center=tuple(float(c) for c in center))


def smooth_body(h: SphericalFunction, label: str = "") -> SmoothBody:
    return SmoothBody(h=h, label=label or h.label)


def ellipsoid_body(semi_axes=(1.0, 1.0, 2.0)) -> SmoothBody:
    return smooth_body(ellipsoid(semi_axes))


# ---------------------------------------------------------------------------
# support functions


def support_function(body: ConvexBody) -> SphericalFunction:
    """Support function of any body variant, as a spherical function."""
    if isinstance(body, SmoothBody):
        return body.h
    if isinstance(body, Ball):
        c = np.asarray(body.center, dtype=float)
        if np.allclose(c, 0.0):
            return constant(body.radius)
        return constant(body.radius) + linear(c)
    if isinstance(body, Cone):
        p = body.axis
        theta = body.aperture

        def fn(u):
            alpha = np.arccos(np.clip(u @ p, -1.0, 1.0))
            return np.where(
                alpha <= theta, 1.0,
                np.where(alpha < theta + np.pi / 2, np.cos(alpha - theta), 0.0),
            )

        return SphericalFunction(fn=fn, smoothness="C0", label=f"support({body.label})")
    if isinstance(body, Cylinder):
        e = body.axis
        frame = tangent_basis(e)
        base = body.base
        lam = body.height

        def fn(u):
            x = u @ frame.e1
            y = u @ frame.e2
            s = np.hypot(x, y)
            ang = np.arctan2(y, x)
            return s * base(ang) + lam * np.clip(u @ e, 0.0, None)

        return SphericalFunction(fn=fn, smoothness="C0", label=f"support({body.label})")
    if isinstance(body, Combo):
        total = None
        for w, part in body.parts:
            term = w * support_function(part)
            total = term if total is None else total + term
        return total
    raise TypeError(f"unknown body type {type(body).__name__}")


def as_smooth_support(body: ConvexBody) -> Optional[SphericalFunction]:
    """Summed support function when every part is smooth-compatible, else None."""
    if isinstance(body, (SmoothBody, Ball)):
        return support_function(body)
    if isinstance(body, Combo):
        acc = None
        for w, part in body.parts:
            h = as_smooth_support(part)
            if h is None:
                return None
            term = w * h
            acc = term if acc is None else acc + term
        return acc
    return None


def minkowski_combine(parts) -> ConvexBody:
    """Minkowski-combine (weight, body) pairs; support functions add.

    Nested combinations are flattened with multiplied weights.  If every
    part is smooth-compatible the result collapses to a single smooth
    body with the summed support function.
    """
    parts = list(parts)
    if not parts:
        raise ValueError("need at least one part")
    flat: list[tuple[float, ConvexBody]] = []
    for w, body in parts:
        w = float(w)
        if w < 0:
            raise ValueError("weights must be non-negative")
        if w == 0.0:
            continue
        flat.extend(_flatten(w, body))
    if not flat:
        # all weights zero: the single point at the origin
        return smooth_body(constant(0.0) + linear((0.0, 0.0, 0.0)), label="origin")
    combo = Combo(parts=tuple(flat))
    h = as_smooth_support(combo)
    if h is not None:
        return smooth_body(h, label="+".join(f"{w:g}*{b.label}" for w, b in flat))
    if len(flat) == 1:
        w, b = flat[0]
        if isinstance(b, Cylinder):
            return Cylinder(base=w * b.base, height=w * b.height,
                            axis_dir=b.axis_dir, label=b.label)
    return combo


def _flatten(w: float, body: ConvexBody):
    if isinstance(body, Combo):
        for wi, bi in body.parts:
            if w * wi > 0:
                yield from _flatten(w * wi, bi)
    elif isinstance(body, Ball):
        yield 1.0, Ball(radius=w * body.radius,
                        center=tuple(w * c for c in body.center), label=body.label)
    elif isinstance(body, SmoothBody):
        yield 1.0, smooth_body(w * body.h if w != 1.0 else body.h, label=body.label)
    else:
        yield w, body


def scale_body(body: ConvexBody, c: float) -> ConvexBody:
    return minkowski_combine([(float(c), body)])


def translate_body(body: ConvexBody, v) -> ConvexBody:
    v = np.asarray(v, dtype=float).reshape(3)
    if isinstance(body, Ball):
        return Ball(radius=body.radius, center=tuple(np.asarray(body.center) + v),
                    label=body.label)
    if isinstance(body, SmoothBody):
        return smooth_body(body.h + linear(v), label=f"{body.label}+v")
    raise UnsupportedBodyError("translation is only represented for smooth bodies and balls")


# ---------------------------------------------------------------------------
# area measures


@dataclass(frozen=True)
class DensityPiece:
    """Absolutely continuous part sampled on a dedicated quadrature rule."""

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    label: str = ""

    def mass(self) -> float:
        return float(self.weights @ self.values)


@dataclass(frozen=True)
class PointAtom:
    direction: np.ndarray
    mass: float


@dataclass(frozen=True)
class CircleMeasure:
    """Weighted circle {u : (u, axis) = offset} with a linear density.

    ``density`` is either a constant (per unit length) or a callable of
    the azimuth measured in the tangent frame of the axis.
    """

    axis: np.ndarray
    offset: float
    density: Union[float, Callable[[np.ndarray], np.ndarray]]
    n_nodes: int = 512

    def _rule(self):
        nodes, w = circle_quadrature(self.axis, self.offset, self.n_nodes)
        if callable(self.density):
            frame = tangent_basis(np.asarray(self.axis, dtype=float))
            ang = np.arctan2(nodes @ frame.e2, nodes @ frame.e1)
            dens = np.asarray(self.density(ang), dtype=float)
        else:
            dens = np.full(self.n_nodes, float(self.density))
        return nodes, w * dens

    def mass(self) -> float:
        _, w = self._rule()
        return float(w.sum())

    def integrate(self, f) -> float:
        nodes, w = self._rule()
        return float(w @ np.asarray(f(nodes), dtype=float))

    def vector_moment(self) -> np.ndarray:
        nodes, w = self._rule()
        return w @ nodes


@dataclass(frozen=True)
class AreaMeasure:
    """Surface-area measure decomposition: densities + atoms + circles."""

    pieces: tuple[DensityPiece, ...] = ()
    atoms: tuple[PointAtom, ...] = ()
    curves: tuple[CircleMeasure, ...] = ()
    body_label: str = ""

    def total_mass(self) -> float:
        return (
            sum(p.mass() for p in self.pieces)
            + sum(a.mass for a in self.atoms)
            + sum(c.mass() for c in self.curves)
        )

    def integrate(self, f) -> float:
        """Integral of a spherical function against the full decomposition."""
        total = 0.0
        for p in self.pieces:
            total += float((p.weights * p.values) @ np.asarray(f(p.nodes), dtype=float))
        for a in self.atoms:
            total += a.mass * float(f(a.direction[None, :])[0])
        for c in self.curves:
            total += c.integrate(f)
        return total

    def vector_moment(self) -> np.ndarray:
        """First moment int u dS(u); vanishes for every closed convex body."""
        m = np.zeros(3)
        for p in self.pieces:
            m += (p.weights * p.values) @ p.nodes
        for a in self.atoms:
            m += a.mass * a.direction
        for c in self.curves:
            m += c.vector_moment()
        return m

    def grid_density(self) -> Optional[np.ndarray]:
        """Nodal density when the measure is a single grid-backed piece."""
        if len(self.pieces) == 1 and self.pieces[0].label == "grid" and not self.curves:
            return self.pieces[0].values
        return None


def _regional_sizes(level: int) -> tuple[int, int]:
    n_polar = 8 * 2**level
    return n_polar, 2 * n_polar


def _curve_nodes(level: int) -> int:
    return 128 * 2**level


def _smooth_density(h: SphericalFunction, nodes: np.ndarray, e1, e2,
                    step, richardson, what: str, pd_floor: float = -1e-9) -> np.ndarray:
    q = q_batch(h, nodes, e1, e2, step=step, richardson=richardson)
    lam_min = eigvals2(q)[:, 0]
    worst = float(lam_min.min())
    if worst < pd_floor:
        k = int(np.argmin(lam_min))
        raise NotConvexError(
            f"{what}: Q(h) is not positive definite (min eigenvalue {worst:.3e} "
            f"at node {nodes[k]})"
        )
    return det2(q)


def area_measure(body: ConvexBody, grid: SphereGrid,
                 step=None, richardson: bool = True) -> AreaMeasure:
    """Surface-area measure of a body, as an exact decomposition.

    Smooth bodies (and smooth-collapsing combinations) produce the
    curvature density det(Q(h)) on the grid; balls a constant density;
    cones a cap density plus a weighted circle; cylinders two atoms plus
    a weighted great circle.  Combinations of one cone family with
    smooth parts that are constant off the antipodal cap use the exact
    parallel-cone decomposition.  Anything else has no represented
    measure and raises ``UnsupportedBodyError``.
    """
    if isinstance(body, Ball):
        vals = np.full(len(grid.nodes), body.radius**2)
        return AreaMeasure(
            pieces=(DensityPiece(grid.nodes, grid.weights, vals, "grid"),),
            body_label=body.label,
        )
    if isinstance(body, SmoothBody):
        return _smooth_measure(body.h, grid, step, richardson, body.label)
    if isinstance(body, Cone):
        return _cone_family_measure(1.0, body, None, 0.0, grid, step, richardson,
                                    body.label)
    if isinstance(body, Cylinder):
        return _cylinder_measure(body, grid)
    if isinstance(body, Combo):
        h = as_smooth_support(body)
        if h is not None:
            return _smooth_measure(h, grid, step, richardson, body.label)
        return _combo_measure(body, grid, step, richardson)
    raise TypeError(f"unknown body type {type(body).__name__}")


def _smooth_measure(h: SphericalFunction, grid: SphereGrid, step, richardson,
                    label: str) -> AreaMeasure:
    patch = getattr(h, "localized", None)
    if patch is not None:
        return _patched_smooth_measure(h, patch, grid, step, richardson, label)
    e1, e2 = grid.frames
    vals = _smooth_density(h, grid.nodes, e1, e2, step, richardson,
                           f"area_measure({label or h.label})")
    return AreaMeasure(
        pieces=(DensityPiece(grid.nodes, grid.weights, vals, "grid"),),
        body_label=label,
    )


def _patched_smooth_measure(h, patch, grid, step, richardson, label) -> AreaMeasure:
    """Smooth body whose Q differs from a reference only inside a chart patch."""
    ref_measure = _smooth_measure(patch.reference, grid, step, richardson,
                                  f"{label}:reference")
    nodes, weights = patch.chart_rule(grid.level)
    fr = _frames(nodes)
    vals_h = _density_at(h, nodes, fr, step, richardson, f"{label}:patch")
    vals_ref = _density_at(patch.reference, nodes, fr, step, richardson,
                           f"{label}:patch-reference")
    corr = DensityPiece(nodes, weights, vals_h - vals_ref, "patch-correction")
    return AreaMeasure(
        pieces=ref_measure.pieces + (corr,),
        atoms=ref_measure.atoms,
        curves=ref_measure.curves,
        body_label=label,
    )


def _density_at(h, nodes, frames, step, richardson, what) -> np.ndarray:
    e1, e2 = frames
    q = q_batch(h, nodes, e1, e2, step=step, richardson=richardson)
    lam_min = float(eigvals2(q)[:, 0].min())
    if lam_min < -1e-9:
        raise NotConvexError(f"{what}: Q not positive semi-definite ({lam_min:.3e})")
    return det2(q)


def _cylinder_measure(body: Cylinder, grid: SphereGrid) -> AreaMeasure:
    e = body.axis
    base_area = body.base.area()
    atoms = (
        PointAtom(direction=e.copy(), mass=base_area),
        PointAtom(direction=-e, mass=base_area),
    )
    lam = body.height
    dens = lambda ang: lam * body.base.density(ang)
    curve = CircleMeasure(axis=e, offset=0.0, density=dens,
                          n_nodes=_curve_nodes(grid.level))
    return AreaMeasure(atoms=atoms, curves=(curve,), body_label=body.label)


def _combo_measure(body: Combo, grid: SphereGrid, step, richardson) -> AreaMeasure:
    """Cone + smooth-part combination via the exact parallel decomposition.

    Requires all cone parts to share one (axis, aperture) and the summed
    smooth support function to be constant outside the cap antipodal to
    the cone, which is exactly the family built by the violation search.
    """
    cones: list[tuple[float, Cone]] = []
    smooth_parts: list[tuple[float, ConvexBody]] = []
    for w, part in body.parts:
        if isinstance(part, Cone):
            cones.append((w, part))
        elif as_smooth_support(part) is not None:
            smooth_parts.append((w, part))
        else:
            raise UnsupportedBodyError(
                f"no measure decomposition for combination containing {part.label!r}"
            )
    if not cones:
        raise UnsupportedBodyError("combination is neither smooth nor cone-plus-smooth")
    first = cones[0][1]
    for _, c in cones[1:]:
        if not (np.allclose(c.axis, first.axis) and np.isclose(c.aperture, first.aperture)):
            raise UnsupportedBodyError("cone parts of a combination must share axis and aperture")
    cone_scale = sum(w for w, _ in cones)
    h_smooth = None
    for w, part in smooth_parts:
        term = w * as_smooth_support(part)
        h_smooth = term if h_smooth is None else h_smooth + term
    return _cone_family_measure(cone_scale, first, h_smooth, 0.0, grid, step,
                                richardson, body.label)


def _cone_family_measure(a: float, cone: Cone, h_smooth, b_const, grid: SphereGrid,
                         step, richardson, label: str) -> AreaMeasure:
    """Exact measure of a*C(P, theta) + L for L smooth, constant off the apex cap.

    The sphere splits by the angle alpha from the cone axis P into the
    translated cap (alpha <= theta, density (a+b)^2), the rounded-edge
    band (theta < alpha < pi/2 + theta, density a b sin(theta)/sin(alpha)
    + b^2), the lateral-face circle at alpha = pi/2 + theta (linear
    density a^2 tan(theta)/2 + a b), and the cap around -P covering the
    apex, where the density is det(Q(h_L)).  With b = 0 this is the plain
    cone measure.
    """
    p = cone.axis
    theta = cone.aperture
    n_pol, n_az = _regional_sizes(grid.level)
    apex_axis = -p
    apex_alpha = np.pi / 2 - theta

    if h_smooth is None:
        b = float(b_const)
    else:
        # the smooth part must look like a ball of radius b away from the apex cap
        probe_nodes, _ = band_quadrature(p, 0.0, np.pi / 2 + theta, 24, 48)
        vals = h_smooth(probe_nodes)
        b = float(np.median(vals))
        scale = 1.0 + abs(b)
        if np.max(np.abs(vals - b)) > 1e-7 * scale:
            raise UnsupportedBodyError(
                "smooth part of a cone combination must be constant outside the "
                f"apex cap (spread {np.max(np.abs(vals - b)):.3e})"
            )
        if b < 0:
            raise UnsupportedBodyError("smooth part must have non-negative ball radius")

    pieces = []
    # spherical-cap face
    cap_nodes, cap_w = cap_quadrature(p, theta, n_pol, n_az)
    pieces.append(DensityPiece(cap_nodes, cap_w,
                               np.full(len(cap_nodes), (a + b) ** 2), "cap"))
    # rounded rim band
    if b > 0:
        band_nodes, band_w = band_quadrature(p, theta, np.pi / 2 + theta, n_pol, n_az)
        sin_alpha = np.sqrt(np.clip(1.0 - (band_nodes @ p) ** 2, 1e-300, None))
        band_vals = a * b * np.sin(theta) / sin_alpha + b**2
        pieces.append(DensityPiece(band_nodes, band_w, band_vals, "band"))
    # lateral-face circle
    curve = CircleMeasure(axis=p, offset=-np.sin(theta),
                          density=a**2 * np.tan(theta) / 2.0 + a * b,
                          n_nodes=_curve_nodes(grid.level))
    # apex cap
    if h_smooth is not None:
        apex = _apex_pieces(h_smooth, b, apex_axis, apex_alpha, grid, n_pol, n_az,
                            step, richardson, label)
        pieces.extend(apex)
    return AreaMeasure(pieces=tuple(pieces), curves=(curve,), body_label=label)


def _apex_pieces(h_smooth, b, apex_axis, apex_alpha, grid, n_pol, n_az,
                 step, richardson, label):
    nodes, w = cap_quadrature(apex_axis, apex_alpha, n_pol, n_az)
    patch = getattr(h_smooth, "localized", None)
    if patch is None:
        fr = _frames(nodes)
        vals = _density_at(h_smooth, nodes, fr, step, richardson, f"{label}:apex")
        return [DensityPiece(nodes, w, vals, "apex")]
    # reference density over the cap rule plus a chart-resolved correction
    fr = _frames(nodes)
    ref_vals = _density_at(patch.reference, nodes, fr, step, richardson,
                           f"{label}:apex-reference")
    out = [DensityPiece(nodes, w, ref_vals, "apex")]
    cnodes, cw = patch.chart_rule(grid.level)
    cfr = _frames(cnodes)
    vals_h = _density_at(h_smooth, cnodes, cfr, step, richardson, f"{label}:apex-patch")
    vals_r = _density_at(patch.reference, cnodes, cfr, step, richardson,
                         f"{label}:apex-patch-ref")
    out.append(DensityPiece(cnodes, cw, vals_h - vals_r, "patch-correction"))
    return out


def _frames(nodes):
    from .grid import _frames_for

    return _frames_for(nodes)


# ---------------------------------------------------------------------------
# perturbation range and the brute-force convexity oracle


def perturbation_epsilon(h: SphericalFunction, phi: SphericalFunction,
                         grid: SphereGrid, step=None, richardson: bool = True) -> float:
    """Largest certified s-range for which h + s*phi stays a support function.

    Returns gamma / M with gamma the least eigenvalue of Q(h) and M the
    largest spectral norm of Q(phi) over the grid and scan nodes;
    ``inf`` when Q(phi) vanishes identically (phi acts as a translation).
    """
    nodes = np.vstack([grid.nodes, grid.scan_nodes])
    e1, e2 = _frames(nodes)
    qh = q_batch(h, nodes, e1, e2, step=step, richardson=richardson)
    qp = q_batch(phi, nodes, e1, e2, step=step, richardson=richardson)
    phi_scale = float(np.max(np.abs(phi(nodes))))
    support = np.abs(phi(nodes)) > 1e-12 * (1.0 + phi_scale)
    lam_h = eigvals2(qh)[:, 0]
    if np.any(support) and float(lam_h[support].min()) <= 0.0:
        raise NotConvexError(
            "Q(h) is not positive definite on the support of phi "
            f"(min eigenvalue {float(lam_h[support].min()):.3e})"
        )
    gamma = float(lam_h.min())
    if gamma <= 0.0:
        raise NotConvexError(
            f"Q(h) is not positive definite on the grid (min eigenvalue {gamma:.3e})"
        )
    m = float(np.max(np.abs(eigvals2(qp))))
    if m < 1e-6 * (1.0 + gamma):
        return float("inf")
    return gamma / m


@dataclass(frozen=True)
class ConvexityReport:
    convex: bool
    samples: int
    witness: Optional[tuple[np.ndarray, np.ndarray, float]] = None  # (x, y, gap)


def support_convexity_oracle(f: SphericalFunction, samples: int = 20000,
                             seed: int = 0, tol: float = 1e-9) -> ConvexityReport:
    """Brute-force midpoint-convexity test of the 1-homogeneous extension.

    Samples random segments in a spherical shell around the unit sphere
    (skipping segments passing near the origin) and reports the worst
    violation of H(mid) <= (H(x) + H(y))/2.  A clean pass certifies
    convexity only at the sampled confidence.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    n = int(samples)
    x = rng.normal(size=(n, 3))
    x *= (rng.uniform(0.6, 1.4, size=n) / np.linalg.norm(x, axis=1))[:, None]
    y = rng.normal(size=(n, 3))
    y *= (rng.uniform(0.6, 1.4, size=n) / np.linalg.norm(y, axis=1))[:, None]
    mid = 0.5 * (x + y)
    keep = np.linalg.norm(mid, axis=1) > 0.2
    x, y, mid = x[keep], y[keep], mid[keep]
    ext = f.extension
    gap = ext(mid) - 0.5 * (ext(x) + ext(y))
    worst = int(np.argmax(gap))
    if gap[worst] > tol:
        return ConvexityReport(convex=False, samples=n,
                               witness=(x[worst], y[worst], float(gap[worst])))
    return ConvexityReport(convex=True, samples=n)


# ---------------------------------------------------------------------------
# random smooth bodies


def random_support_function(seed: int, margin: float = 0.05) -> SphericalFunction:
    """Random support function of a smooth body, certified on scan nodes.

    An ellipsoid plus translation plus a small even perturbation; the
    perturbation is halved until Q stays above the requested margin.
    """
    from .grid import icosphere_nodes

    rng = np.random.default_rng(seed)
    axes = 0.8 + 0.6 * rng.random(3)
    h0 = ellipsoid(axes) + linear(0.25 * rng.normal(size=3))
    bump = random_smooth(int(rng.integers(1 << 30)), c0=0.0, scale=1.0,
                         degree=4, even_only=True)
    nodes = icosphere_nodes(3)
    e1, e2 = _frames(nodes)
    delta = 0.15
    for _ in range(8):
        h = h0 + delta * bump
        lam = eigvals2(q_batch(h, nodes, e1, e2, richardson=True))[:, 0]
        if float(lam.min()) > margin:
            return h
        delta *= 0.5
    return h0


def random_smooth_body(seed: int, margin: float = 0.05) -> SmoothBody:
    return smooth_body(random_support_function(seed, margin=margin),
                       label=f"random-body:{seed}")
