"""Chart-local test functions with closed-form extension derivatives.

The violation search drives support-function families through test
functions whose second derivatives oscillate on a scale far below any
practical finite-difference step.  The functions here are built in a
tangent-plane chart from entire 1-d profiles (heat-smoothed sawtooth and
cutoff), so gradient and Hessian of the 1-homogeneous extension come out
in closed form, and a composite Gauss panel rule resolves the chart patch
to machine accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import erf

from .functions import SphericalFunction, constant


# ---------------------------------------------------------------------------
# entire 1-d profiles

def _tent_profile(sigma_t: float):
    """Heat-smoothed periodic tent wave (period 2, peak 1 at 0) and derivatives.

    Fourier side: tent(t) = 1/2 + (4/pi^2) sum_{k odd} cos(pi k t)/k^2;
    Gaussian smoothing at scale sigma_t multiplies the k-th coefficient by
    exp(-(pi k sigma_t)^2 / 2).  The term count adapts to the smoothing
    scale; one pass per term keeps memory flat on large node sets.
    """
    sigma_t = max(float(sigma_t), 1.0 / 48.0)
    kmax = int(np.ceil(10.0 / sigma_t)) | 1
    ks = np.arange(1, kmax + 1, 2)
    damp = np.exp(-0.5 * (np.pi * ks * sigma_t) ** 2)
    c0 = (4.0 / np.pi**2) * damp / ks**2
    c1 = -(4.0 / np.pi) * damp / ks
    c2 = -4.0 * damp

    def _series(t, coeffs, trig):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for k, c in zip(ks, coeffs):
            out += c * trig(np.pi * k * t)
        return out

    def val(t):
        return 0.5 + _series(t, c0, np.cos)

    def dval(t):
        return _series(t, c1, np.sin)

    def d2val(t):
        return _series(t, c2, np.cos)

    return val, dval, d2val


def _abs_smooth(sigma: float):
    """Gaussian-smoothed |x| and its first two derivatives (entire functions)."""
    s2 = sigma * np.sqrt(2.0)
    c = sigma * np.sqrt(2.0 / np.pi)

    def val(x):
        return x * erf(x / s2) + c * np.exp(-0.5 * (x / sigma) ** 2)

    def dval(x):
        return erf(x / s2)

    def d2val(x):
        return np.sqrt(2.0 / np.pi) / sigma * np.exp(-0.5 * (x / sigma) ** 2)

    return val, dval, d2val


def _cutoff_profile(sigma_t: float):
    """Smoothed plateau cutoff: 1 on [-1/2, 1/2], 0 outside [-1, 1].

    The sharp cutoff is |t+1| + |t-1| - |t+1/2| - |t-1/2|; smoothing
    replaces |.| by its Gaussian convolution.
    """
    a, da, d2a = _abs_smooth(sigma_t)
    knots = (1.0, -1.0, 0.5, -0.5)
    signs = (1.0, 1.0, -1.0, -1.0)

    def val(t):
        return sum(s * a(t + k) for s, k in zip(signs, knots))

    def dval(t):
        return sum(s * da(t + k) for s, k in zip(signs, knots))

    def d2val(t):
        return sum(s * d2a(t + k) for s, k in zip(signs, knots))

    return val, dval, d2val


def _wrap(t):
    return np.mod(t + 1.0, 2.0) - 1.0


def _tent_sharp(t):
    return 1.0 - np.abs(_wrap(t))


def _tent_sharp_d(t):
    return -np.sign(_wrap(t))


def _cutoff_sharp(t):
    return np.clip(2.0 * (1.0 - np.abs(t)), 0.0, 1.0)


def _cutoff_sharp_d(t):
    t = np.asarray(t, dtype=float)
    return np.where((np.abs(t) > 0.5) & (np.abs(t) < 1.0), -2.0 * np.sign(t), 0.0)


# ---------------------------------------------------------------------------
# chart geometry


@dataclass(frozen=True)
class ChartSquare:
    """Tangent-plane square at ``center`` spanned by ``t1``, ``t2``."""

    center: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    half_width: float  # in chart coordinates, padding included

    def coords(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x1 = points @ self.t1
        x2 = points @ self.t2
        x3 = points @ self.center
        return x1, x2, x3

    def lift(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        s = np.sqrt(np.clip(1.0 - x1**2 - x2**2, 1e-12, None))
        return (
            np.multiply.outer(x1, self.t1)
            + np.multiply.outer(x2, self.t2)
            + np.multiply.outer(s, self.center)
        )

    def max_geodesic_radius(self) -> float:
        return float(np.arcsin(min(1.0, np.sqrt(2.0) * self.half_width)))

    def same_as(self, other: "ChartSquare") -> bool:
        return (
            np.array_equal(self.center, other.center)
            and np.array_equal(self.t1, other.t1)
            and np.array_equal(self.t2, other.t2)
            and self.half_width == other.half_width
        )

    def rotated(self, rho: np.ndarray) -> "ChartSquare":
        return ChartSquare(center=rho @ self.center, t1=rho @ self.t1,
                           t2=rho @ self.t2, half_width=self.half_width)


def _composite_gauss(breaks: np.ndarray, nodes_per_panel: int):
    t, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        xs.append(0.5 * (b - a) * t + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _memo_nodes(fn):
    """Memoize an array-to-array map by input-array identity.

    Chart rules hand out the same node array object repeatedly; caching by
    identity lets every body built from one sawtooth reuse its derivative
    fields.  Only large 2-d inputs are kept."""
    cache: dict = {}

    def wrapped(x):
        x = np.asarray(x, dtype=float)
        key = (id(x), x.shape)
        hit = cache.get(key)
        if hit is not None and hit[0] is x:
            return hit[1]
        val = fn(x)
        if x.ndim == 2 and x.shape[0] >= 4096:
            if len(cache) >= 8:
                cache.clear()
            cache[key] = (x, val)
        return val

    return wrapped


_CHART_RULE_CACHE: dict = {}


@dataclass(frozen=True)
class LocalizedPatch:
    """Marks a function that differs from ``reference`` only on a chart square.

    ``breaks1`` / ``breaks2`` partition the chart axes into panels whose
    ends sit at the (smoothed) kinks of the profile, so a fixed-order
    Gauss rule per panel integrates the patch to machine accuracy.
    """

    reference: SphericalFunction
    square: ChartSquare
    breaks1: np.ndarray
    breaks2: np.ndarray
    nodes_per_panel1: int = 20
    nodes_per_panel2: int = 32

    def with_reference(self, reference: SphericalFunction) -> "LocalizedPatch":
        return replace(self, reference=reference)

    def scaled(self, c: float) -> "LocalizedPatch":
        return replace(self, reference=self.reference * c)

    def rotated(self, rho: np.ndarray) -> "LocalizedPatch":
        from .functions import rotate_function

        return replace(self, reference=rotate_function(self.reference, rho),
                       square=self.square.rotated(rho))

    def same_square(self, other: "LocalizedPatch") -> bool:
        return self.square.same_as(other.square)

    def chart_rule(self, level: int = 3) -> tuple[np.ndarray, np.ndarray]:
        """Tensor composite-Gauss rule on the square, lifted to the sphere.

        Node counts double per grid level above 3 so that re-checks at a
        finer level genuinely refine the patch rule as well.  Rules are
        cached by the identity of the break/square arrays, so every body
        sharing one sawtooth also shares node arrays (and through them the
        memoized derivative fields).
        """
        key = (id(self.breaks1), id(self.breaks2), id(self.square.center),
               self.nodes_per_panel1, self.nodes_per_panel2, int(level))
        hit = _CHART_RULE_CACHE.get(key)
        if hit is not None and hit[0] is self.breaks1 and hit[1] is self.square.center:
            return hit[2], hit[3]
        boost = 2 ** max(0, int(level) - 3)
        x1, w1 = _composite_gauss(self.breaks1, self.nodes_per_panel1 * boost)
        x2, w2 = _composite_gauss(self.breaks2, self.nodes_per_panel2 * boost)
        xx1 = np.repeat(x1, len(x2))
        xx2 = np.tile(x2, len(x1))
        ww = np.repeat(w1, len(x2)) * np.tile(w2, len(x1))
        s2 = xx1**2 + xx2**2
        nodes = self.square.lift(xx1, xx2)
        weights = ww / np.sqrt(np.clip(1.0 - s2, 1e-12, None))
        nodes.setflags(write=False)
        if len(_CHART_RULE_CACHE) >= 16:
            _CHART_RULE_CACHE.clear()
        _CHART_RULE_CACHE[key] = (self.breaks1, self.square.center, nodes, weights)
        return nodes, weights


# ---------------------------------------------------------------------------
# sawtooth test functions


@dataclass(frozen=True)
class SawtoothSpec:
    """Parameters of a chart sawtooth: oscillation along t1, cutoff at r."""

    center: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    eps: float
    r: float
    smoothing: float  # absolute smoothing scale in chart units (0 = sharp)

    def to_obj(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "t1": [float(v) for v in self.t1],
            "t2": [float(v) for v in self.t2],
            "eps": self.eps,
            "r": self.r,
            "smoothing": self.smoothing,
        }

    @staticmethod
    def from_obj(obj: dict) -> "SawtoothSpec":
        return SawtoothSpec(
            center=np.asarray(obj["center"], dtype=float),
            t1=np.asarray(obj["t1"], dtype=float),
            t2=np.asarray(obj["t2"], dtype=float),
            eps=float(obj["eps"]),
            r=float(obj["r"]),
            smoothing=float(obj["smoothing"]),
        )


def chart_frame(u0: np.ndarray, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """In-plane chart axes: t1 along the tangent ``direction`` at u0."""
    from .grid import tangent_basis

    u0 = np.asarray(u0, dtype=float).reshape(3)
    d = np.asarray(direction, dtype=float).reshape(2)
    d = d / np.linalg.norm(d)
    fr = tangent_basis(u0)
    t1 = d[0] * fr.e1 + d[1] * fr.e2
    t2 = np.cross(u0, t1)
    return t1, t2


def _chart_function(spec: SawtoothSpec, smoothed: bool) -> SphericalFunction:
    eps, r = spec.eps, spec.r
    if smoothed:
        sig = spec.smoothing
        p, dp, d2p = _tent_profile(sig / eps)
        q, dq, d2q = _cutoff_profile(sig / r)
        pad = min(8.0 * sig, 0.5 * r)
        smoothness = "Cinf"
    else:
        p, dp, d2p = _tent_sharp, _tent_sharp_d, None
        q, dq, d2q = _cutoff_sharp, _cutoff_sharp_d, None
        pad = 0.0
        smoothness = "C0"
    half = r + pad
    u0, t1, t2 = spec.center, spec.t1, spec.t2

    def chart_vals(x1, x2, want=2):
        """Phi and its chart derivatives, masked outside the padded square."""
        inside = (np.abs(x1) <= half) & (np.abs(x2) <= half)
        x1c, x2c = x1[inside], x2[inside]
        pv = eps * p(x1c / eps)
        q1 = q(x1c / r)
        q2 = q(x2c / r)
        out = [np.zeros(x1.shape) for _ in range(6)]
        out[0][inside] = pv * q1 * q2
        if want >= 1:
            pd = dp(x1c / eps)
            q1d = dq(x1c / r)
            q2d = dq(x2c / r)
            out[1][inside] = (pd * q1 + pv * q1d / r) * q2
            out[2][inside] = pv * q1 * q2d / r
        if want == 2:
            pdd = d2p(x1c / eps) / eps
            q1dd = d2q(x1c / r)
            q2dd = d2q(x2c / r)
            out[3][inside] = (pdd * q1 + 2.0 * pd * q1d / r + pv * q1dd / r**2) * q2
            out[4][inside] = (pd * q1 + pv * q1d / r) * q2d / r
            out[5][inside] = pv * q1 * q2dd / r**2
        return out  # [phi, d1, d2, d11, d12, d22]

    def _coords(y):
        y = np.asarray(y, dtype=float)
        rr = np.linalg.norm(y, axis=-1)
        u = y / rr[..., None]
        x1 = u @ t1
        x2 = u @ t2
        x3 = u @ u0
        return rr, u, x1, x2, x3

    def fn(u):
        u = np.asarray(u, dtype=float)
        x1, x2, x3 = u @ t1, u @ t2, u @ u0
        v = chart_vals(x1, x2, want=0)[0]
        return np.where(x3 > 0.0, v, 0.0)

    def d1(y):
        rr, u, x1, x2, x3 = _coords(y)
        vals = chart_vals(x1, x2, want=1)
        phi, f1, f2 = vals[0], vals[1], vals[2]
        mask = (x3 > 0.0).astype(float)
        v1 = t1 - x1[..., None] * u
        v2 = t2 - x2[..., None] * u
        grad = phi[..., None] * u + f1[..., None] * v1 + f2[..., None] * v2
        return grad * mask[..., None]

    def d2(y):
        rr, u, x1, x2, x3 = _coords(y)
        phi, f1, f2, f11, f12, f22 = chart_vals(x1, x2, want=2)
        mask = (x3 > 0.0).astype(float)
        v1 = t1 - x1[..., None] * u
        v2 = t2 - x2[..., None] * u
        eye = np.broadcast_to(np.eye(3), y.shape[:-1] + (3, 3))
        proj = eye - u[..., :, None] * u[..., None, :]
        hess = (
            f11[..., None, None] * v1[..., :, None] * v1[..., None, :]
            + f12[..., None, None] * (v1[..., :, None] * v2[..., None, :]
                                      + v2[..., :, None] * v1[..., None, :])
            + f22[..., None, None] * v2[..., :, None] * v2[..., None, :]
            + (phi - f1 * x1 - f2 * x2)[..., None, None] * proj
        )
        return hess * mask[..., None, None] / rr[..., None, None]

    square = ChartSquare(center=u0, t1=t1, t2=t2, half_width=half)
    patch = None
    if smoothed:
        patch = LocalizedPatch(
            reference=constant(0.0),
            square=square,
            breaks1=_saw_breaks(eps, half),
            breaks2=_cutoff_breaks(r, spec.smoothing, half),
        )
    label = f"sawtooth(eps={eps:g},r={r:g}{',smoothed' if smoothed else ''})"
    return SphericalFunction(
        fn=_memo_nodes(fn), smoothness=smoothness, label=label,
        d1_extension=_memo_nodes(d1),
        d2_extension=_memo_nodes(d2) if smoothed else None,
        localized=patch,
    )


def _saw_breaks(eps: float, half: float) -> np.ndarray:
    """Panel ends at every (smoothed) tent kink: multiples of eps."""
    n = int(np.ceil(half / eps))
    return np.unique(np.clip(eps * np.arange(-n, n + 1), -half, half))


def _cutoff_breaks(r: float, sigma: float, half: float) -> np.ndarray:
    """Panels isolating the cutoff's smoothing zones at +-r/2 and +-r."""
    pts = [-half, half]
    for k in (-r, -r / 2, r / 2, r):
        pts += [k - 6.0 * sigma, k + 6.0 * sigma]
    pts += [0.0, -r * 0.75, r * 0.75, -half / 2, half / 2]
    return np.unique(np.clip(np.asarray(pts), -half, half))


def lipschitz_sawtooth(u0, direction, eps: float, r: float) -> SphericalFunction:
    """Sharp chart sawtooth: amplitude eps, oscillation along ``direction``.

    Lipschitz but not C1; carries exact a.e. first derivatives of the
    extension.  Vanishes outside the lifted square of half width r.
    """
    if not 0.0 < r < 0.5:
        raise ValueError("chart half-width r must lie in (0, 0.5)")
    if not 0.0 < eps <= r / 4.0:
        raise ValueError("need 0 < eps <= r/4")
    t1, t2 = chart_frame(u0, direction)
    spec = SawtoothSpec(center=np.asarray(u0, float), t1=t1, t2=t2,
                        eps=float(eps), r=float(r), smoothing=0.0)
    f = _chart_function(spec, smoothed=False)
    object.__setattr__(f, "sawtooth_spec", spec)
    return f


def smoothed_sawtooth(u0, direction, eps: float, r: float,
                      smoothing: Optional[float] = None) -> SphericalFunction:
    """Mollified chart sawtooth (default scale eps/8), C-infinity.

    Carries exact extension gradient/Hessian hooks and a LocalizedPatch,
    so curvature integrals against it are resolved on a dedicated chart
    rule rather than the global grid.
    """
    if not 0.0 < r < 0.5:
        raise ValueError("chart half-width r must lie in (0, 0.5)")
    if not 0.0 < eps <= r / 4.0:
        raise ValueError("need 0 < eps <= r/4")
    sig = eps / 8.0 if smoothing is None else float(smoothing)
    t1, t2 = chart_frame(u0, direction)
    spec = SawtoothSpec(center=np.asarray(u0, float), t1=t1, t2=t2,
                        eps=float(eps), r=float(r), smoothing=sig)
    f = _chart_function(spec, smoothed=True)
    object.__setattr__(f, "sawtooth_spec", spec)
    return f


def sawtooth_from_spec(spec: SawtoothSpec) -> SphericalFunction:
    f = _chart_function(spec, smoothed=spec.smoothing > 0.0)
    object.__setattr__(f, "sawtooth_spec", spec)
    return f
