"""Scalar fields on the unit sphere and their 1-homogeneous extensions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

# smoothness classes, ordered
_SMOOTHNESS_ORDER = {"C0": 0, "C2": 1, "Cinf": 2}


def _weaker(a: str, b: str) -> str:
    return a if _SMOOTHNESS_ORDER[a] <= _SMOOTHNESS_ORDER[b] else b


@dataclass(frozen=True)
class SphericalFunction:
    """A scalar field evaluable at unit 3-vectors.

    ``fn`` maps an array of shape (..., 3) of unit vectors to values of
    shape (...).  ``smoothness`` is one of ``C0``, ``C2``, ``Cinf``.
    ``d1_extension`` / ``d2_extension``, when set, return the exact
    gradient (..., 3) and Hessian (..., 3, 3) of the 1-homogeneous
    extension; functions without them are differentiated by finite
    differences of the extension.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    smoothness: str = "Cinf"
    label: str = ""
    d1_extension: Optional[Callable[[np.ndarray], np.ndarray]] = None
    d2_extension: Optional[Callable[[np.ndarray], np.ndarray]] = None
    #: optional LocalizedPatch marking that this function differs from a
    #: reference only inside a small chart square (lets measure code put a
    #: dedicated fine quadrature there)
    localized: Optional[object] = None

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.asarray(self.fn(u), dtype=float)

    def extension(self, x: np.ndarray) -> np.ndarray:
        """1-homogeneous extension: |x| * f(x / |x|)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0.0):
            raise ValueError("extension undefined at the origin")
        return r * self.fn(x / r[..., None])

    def sup_norm(self, nodes: np.ndarray) -> float:
        return float(np.max(np.abs(self(nodes))))

    # -- pointwise algebra (labels kept human-readable) ----------------

    def __add__(self, other):
        if isinstance(other, SphericalFunction):
            d1 = d2 = None
            if self.d1_extension is not None and other.d1_extension is not None:
                ga, gb = self.d1_extension, other.d1_extension
                d1 = lambda x: ga(x) + gb(x)
            if self.d2_extension is not None and other.d2_extension is not None:
                sa, sb = self.d2_extension, other.d2_extension
                d2 = lambda x: sa(x) + sb(x)
            return SphericalFunction(
                fn=lambda u, a=self.fn, b=other.fn: a(u) + b(u),
                smoothness=_weaker(self.smoothness, other.smoothness),
                label=f"({self.label}+{other.label})",
                d1_extension=d1,
                d2_extension=d2,
                localized=_combine_patches(self, other),
            )
        c = float(other)
        return self + constant(c)

    __radd__ = __add__

    def __mul__(self, c):
        c = float(c)
        d1 = d2 = None
        if self.d1_extension is not None:
            ga = self.d1_extension
            d1 = lambda x: c * ga(x)
        if self.d2_extension is not None:
            sa = self.d2_extension
            d2 = lambda x: c * sa(x)
        return SphericalFunction(
            fn=lambda u, a=self.fn: c * a(u),
            smoothness=self.smoothness,
            label=f"{c:g}*{self.label}",
            d1_extension=d1,
            d2_extension=d2,
            localized=self.localized.scaled(c) if self.localized is not None else None,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, SphericalFunction) else -float(other))


def _combine_patches(f: "SphericalFunction", g: "SphericalFunction"):
    """Patch of a sum: references absorb the unpatched side; two patches
    must share the chart square, otherwise locality is lost (None)."""
    pf, pg = f.localized, g.localized
    if pf is None and pg is None:
        return None
    if pf is not None and pg is None:
        return pf.with_reference(pf.reference + g)
    if pg is not None and pf is None:
        return pg.with_reference(f + pg.reference)
    if pf.same_square(pg):
        return pf.with_reference(pf.reference + pg.reference)
    return None


def rotate_function(f: SphericalFunction, rho: np.ndarray) -> SphericalFunction:
    """Pull back f by a rotation: the result maps x to f(rho^-1 x).

    ``rho`` must be a proper rotation (orthogonal, determinant +1).
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (3, 3):
        raise ValueError("rotation must be a 3x3 matrix")
    if np.max(np.abs(rho.T @ rho - np.eye(3))) > 1e-10:
        raise ValueError("matrix is not orthogonal within 1e-10")
    if abs(np.linalg.det(rho) - 1.0) > 1e-10:
        raise ValueError("matrix is not a proper rotation (det != +1)")
    d1 = d2 = None
    if f.d1_extension is not None:
        g1 = f.d1_extension
        d1 = lambda x: g1(x @ rho) @ rho.T
    if f.d2_extension is not None:
        base = f.d2_extension
        # D^2(Psi o rho^-1)(x) = rho D^2Psi(rho^-1 x) rho^T
        d2 = lambda x: np.einsum("ij,...jk,lk->...il", rho, base(x @ rho), rho)
    return SphericalFunction(
        fn=lambda u, g=f.fn: g(u @ rho),  # u @ rho == (rho^T u^T)^T = rho^-1 applied row-wise
        smoothness=f.smoothness,
        label=f"rot({f.label})",
        d1_extension=d1,
        d2_extension=d2,
        localized=f.localized.rotated(rho) if f.localized is not None else None,
    )


# ---------------------------------------------------------------------------
# builtins


def constant(c: float = 1.0) -> SphericalFunction:
    c = float(c)

    def d1(x):
        x = np.asarray(x, dtype=float)
        return c * x / np.linalg.norm(x, axis=-1)[..., None]

    def d2(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        xhat = x / r[..., None]
        eye = np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3))
        return c * (eye - xhat[..., :, None] * xhat[..., None, :]) / r[..., None, None]

    return SphericalFunction(
        fn=lambda u: np.full(u.shape[:-1], c),
        label=f"constant:{c:g}",
        d1_extension=d1,
        d2_extension=d2,
    )


def linear(a) -> SphericalFunction:
    """f(u) = (a, u); the support function of the point {a}."""
    a = np.asarray(a, dtype=float).reshape(3)
    return SphericalFunction(
        fn=lambda u: u @ a,
        label=f"linear:{a[0]:g},{a[1]:g},{a[2]:g}",
        d1_extension=lambda x: np.broadcast_to(a, np.asarray(x).shape).copy(),
        d2_extension=lambda x: np.zeros(np.asarray(x).shape[:-1] + (3, 3)),
    )


def ellipsoid(semi_axes) -> SphericalFunction:
    """Support function of an origin-centered ellipsoid: sqrt(u' diag(a^2) u).

    The extension H(x) = sqrt(x' A x) has closed-form derivatives, carried
    as exact hooks: DH = Ax/H and D2H = A/H - (Ax)(Ax)'/H^3.
    """
    ax = np.asarray(semi_axes, dtype=float).reshape(3)
    if np.any(ax <= 0):
        raise ValueError("semi-axes must be positive")
    a2 = ax**2

    def hval(x):
        return np.sqrt(np.clip((x**2) @ a2, 0.0, None))

    def d1(x):
        x = np.asarray(x, dtype=float)
        return a2 * x / hval(x)[..., None]

    def d2(x):
        x = np.asarray(x, dtype=float)
        hv = hval(x)
        ax_ = a2 * x
        return (np.diag(a2) / hv[..., None, None]
                - ax_[..., :, None] * ax_[..., None, :] / hv[..., None, None] ** 3)

    return SphericalFunction(
        fn=hval,
        label=f"ellipsoid:{ax[0]:g},{ax[1]:g},{ax[2]:g}",
        d1_extension=d1,
        d2_extension=d2,
    )


def quadratic_form(m, c0: float = 0.0, label: str = "") -> SphericalFunction:
    """f(u) = c0 + u' M u for symmetric M."""
    m = np.asarray(m, dtype=float).reshape(3, 3)
    m = 0.5 * (m + m.T)
    c0 = float(c0)
    return SphericalFunction(
        fn=lambda u: c0 + np.einsum("...i,ij,...j->...", u, m, u),
        label=label or "quadratic",
    )


def zonal_poly(coeffs, axis=(0.0, 0.0, 1.0)) -> SphericalFunction:
    """Polynomial in the axial coordinate: sum_k c_k (u . axis)^k."""
    coeffs = np.asarray(coeffs, dtype=float)
    axis = np.asarray(axis, dtype=float).reshape(3)
    axis = axis / np.linalg.norm(axis)

    def fn(u):
        t = u @ axis
        return sum(c * t**k for k, c in enumerate(coeffs))

    return SphericalFunction(fn=fn, label="zonal:" + ",".join(f"{c:g}" for c in coeffs))


def abs_coord(i: int = 0) -> SphericalFunction:
    """f(u) = |u_i|; the support function of a segment, only Lipschitz."""
    if i not in (0, 1, 2):
        raise ValueError("coordinate index must be 0, 1 or 2")
    return SphericalFunction(fn=lambda u: np.abs(u[..., i]), smoothness="C0", label=f"abs{i}")


def cap_bump(center=(0.0, 0.0, 1.0), width: float = 0.6, amp: float = 1.0) -> SphericalFunction:
    """Smooth bump supported in the geodesic cap of the given angular width."""
    c = np.asarray(center, dtype=float).reshape(3)
    c = c / np.linalg.norm(c)
    width = float(width)
    if not 0.0 < width < np.pi:
        raise ValueError("width must be in (0, pi)")
    amp = float(amp)

    def fn(u):
        t = np.arccos(np.clip(u @ c, -1.0, 1.0)) / width
        out = np.zeros(t.shape)
        inside = t < 1.0
        s2 = t[inside] ** 2
        out[inside] = amp * np.exp(1.0 - 1.0 / (1.0 - s2))
        return out

    return SphericalFunction(fn=fn, label=f"bump:w={width:g},a={amp:g}")


def random_smooth(seed: int, c0: float = 1.0, scale: float = 0.3, degree: int = 4,
                  even_only: bool = False, odd_only: bool = False) -> SphericalFunction:
    """Random polynomial field on the sphere, reproducible from the seed."""
    rng = np.random.default_rng(seed)
    exps = [
        (a, b, c)
        for a in range(degree + 1)
        for b in range(degree + 1)
        for c in range(degree + 1)
        if 0 < a + b + c <= degree
        and not (even_only and (a + b + c) % 2 == 1)
        and not (odd_only and (a + b + c) % 2 == 0)
    ]
    coeffs = rng.normal(size=len(exps))
    coeffs *= scale / np.sqrt(len(exps))

    def fn(u):
        out = np.full(u.shape[:-1], float(c0) if not odd_only else 0.0)
        x, y, z = u[..., 0], u[..., 1], u[..., 2]
        for (a, b, c), g in zip(exps, coeffs):
            out = out + g * x**a * y**b * z**c
        return out

    kind = "even" if even_only else ("odd" if odd_only else "poly")
    return SphericalFunction(fn=fn, label=f"random-{kind}:seed={seed}")


# named builtins; callables so each lookup returns a fresh object
_REGISTRY: dict[str, Callable[..., SphericalFunction]] = {
    "constant": constant,
    "linear": lambda *a: linear(a if a else (0.3, -0.2, 0.1)),
    "ellipsoid": lambda *a: ellipsoid(a if a else (1.0, 1.0, 2.0)),
    "zonal": lambda *a: zonal_poly(a if a else (1.0, 0.0, 0.3)),
    "abs1": lambda: abs_coord(0),
    "abs2": lambda: abs_coord(1),
    "abs3": lambda: abs_coord(2),
    "bump": lambda *a: cap_bump(width=a[0] if a else 0.6, amp=a[1] if len(a) > 1 else 1.0),
    # support-function family
    "blend": lambda: constant(1.0) + 0.3 * ellipsoid((1.0, 2.0, 1.0)),
    "shifted-ellipsoid": lambda: ellipsoid((0.9, 1.1, 1.4)) + linear((0.2, -0.1, 0.15)),
    "flat-ellipsoid": lambda: ellipsoid((0.6, 1.0, 1.5)),
    # non-support family (all positive, so cone values stay positive)
    "saddle": lambda: quadratic_form(np.diag([0.5, -0.5, 0.0]), c0=1.0, label="saddle"),
    "saddle2": lambda: quadratic_form(np.diag([0.0, 0.6, -0.6]), c0=1.0, label="saddle2"),
    "quartic-wave": lambda: zonal_poly((1.0, 0.0, -3 * 0.35, 0.0, 4 * 0.35)),
    "dimple": lambda: constant(1.0) + cap_bump(width=0.7, amp=-0.5),
    "pinch": lambda: quadratic_form(np.diag([0.45, 0.0, -0.45]), c0=1.0, label="pinch"),
    # sign-mixed saddle; exercises the cone-height search
    "hyperbolic": lambda: quadratic_form(np.diag([0.5, -0.5, 0.0]), c0=0.0, label="hyperbolic"),
}

#: builtin names with known ground truth for the detector round-trip
SUPPORT_BUILTINS = ("constant", "linear", "ellipsoid", "flat-ellipsoid", "blend")
NONSUPPORT_BUILTINS = ("saddle", "saddle2", "quartic-wave", "dimple", "pinch")


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def builtin_function(spec: str) -> SphericalFunction:
    """Resolve a function spec like ``builtin:ellipsoid:1,1,2``.

    The leading ``builtin:`` prefix is optional.  Arguments after the name
    are a comma-separated list of floats.
    """
    s = spec.strip()
    if s.startswith("builtin:"):
        s = s[len("builtin:"):]
    name, _, argstr = s.partition(":")
    if name not in _REGISTRY:
        raise KeyError(f"unknown builtin function {name!r}; known: {', '.join(builtin_names())}")
    args = tuple(float(t) for t in argstr.split(",") if t.strip()) if argstr else ()
    f = _REGISTRY[name](*args)
    if not f.label:
        f = replace(f, label=name)
    return f
