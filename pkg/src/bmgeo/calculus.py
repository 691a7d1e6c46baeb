"""Covariant calculus on the sphere via 1-homogeneous extensions.

Second covariant derivatives are never formed through charts: the 2x2
curvature-type matrix Q(f, u) = (f_ij + delta_ij f) is read off the
Euclidean Hessian of the 1-homogeneous extension restricted to the
tangent plane, which has the same nonzero spectrum plus a zero eigenvalue
along u.  Differentiation is central finite differences with optional
Richardson extrapolation, unless a function carries exact derivative
hooks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functions import SphericalFunction, quadratic_form, random_smooth, zonal_poly
from .grid import SphereGrid, TangentFrame, integrate_sphere

__all__ = [
    "SymMatrix2", "QSample", "SmoothnessError",
    "homogeneous_hessian", "extension_hessian", "extension_gradient",
    "covariant_batch", "q_matrix", "q_batch",
    "cofactor", "cof2", "det2", "trace2", "eigvals2",
    "trace_det_identity_check", "cheng_yau_residual",
    "parts_identity_residual", "second_variation_identity_residual",
]


class SmoothnessError(ValueError):
    """Raised when an operation needs more smoothness than a function has."""


# ---------------------------------------------------------------------------
# 2x2 symmetric matrices


@dataclass(frozen=True)
class SymMatrix2:
    """Symmetric 2x2 matrix [[a, b], [b, c]]."""

    a: float
    b: float
    c: float

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.b, self.c]])

    @staticmethod
    def from_array(m) -> "SymMatrix2":
        m = np.asarray(m, dtype=float)
        return SymMatrix2(float(m[0, 0]), 0.5 * float(m[0, 1] + m[1, 0]), float(m[1, 1]))

    def det(self) -> float:
        return self.a * self.c - self.b * self.b

    def trace(self) -> float:
        return self.a + self.c

    def eigenvalues(self) -> tuple[float, float]:
        """Eigenvalues in ascending order (closed form)."""
        mean = 0.5 * (self.a + self.c)
        rad = np.hypot(0.5 * (self.a - self.c), self.b)
        return (mean - rad, mean + rad)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def cofactor(m: SymMatrix2) -> SymMatrix2:
    """Cofactor matrix of a symmetric 2x2 matrix: [[c, -b], [-b, a]].

    Additive in its argument, and positive (semi-)definite exactly when
    the argument is.
    """
    return SymMatrix2(m.c, -m.b, m.a)


def trace_det_identity_check(m: SymMatrix2) -> float:
    """Residual of det(A) = (1/2) sum_ij cof(A)_ij A_ij; zero in exact arithmetic."""
    c = cofactor(m)
    pairing = c.a * m.a + 2.0 * c.b * m.b + c.c * m.c
    return abs(m.det() - 0.5 * pairing)


# vectorized (..., 2, 2) helpers


def det2(q: np.ndarray) -> np.ndarray:
    return q[..., 0, 0] * q[..., 1, 1] - q[..., 0, 1] * q[..., 1, 0]


def trace2(q: np.ndarray) -> np.ndarray:
    return q[..., 0, 0] + q[..., 1, 1]


def cof2(q: np.ndarray) -> np.ndarray:
    out = np.empty_like(q)
    out[..., 0, 0] = q[..., 1, 1]
    out[..., 1, 1] = q[..., 0, 0]
    out[..., 0, 1] = -q[..., 0, 1]
    out[..., 1, 0] = -q[..., 1, 0]
    return out


def eigvals2(q: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric (..., 2, 2) arrays, ascending along the last axis."""
    mean = 0.5 * (q[..., 0, 0] + q[..., 1, 1])
    rad = np.hypot(0.5 * (q[..., 0, 0] - q[..., 1, 1]), q[..., 0, 1])
    return np.stack([mean - rad, mean + rad], axis=-1)


# ---------------------------------------------------------------------------
# finite differences of the 1-homogeneous extension

_EYE3 = np.eye(3)


def _fd_hessian(ext, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    hcol = h[:, None]
    out = np.empty(x.shape[:-1] + (3, 3))
    center = ext(x)
    for i in range(3):
        e = _EYE3[i]
        out[:, i, i] = (ext(x + hcol * e) - 2.0 * center + ext(x - hcol * e)) / h**2
    for i in range(3):
        for j in range(i + 1, 3):
            p = hcol * (_EYE3[i] + _EYE3[j])
            m = hcol * (_EYE3[i] - _EYE3[j])
            val = (ext(x + p) - ext(x + m) - ext(x - m) + ext(x - p)) / (4.0 * h**2)
            out[:, i, j] = val
            out[:, j, i] = val
    return out


def _fd_gradient(ext, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    hcol = h[:, None]
    out = np.empty_like(x)
    for i in range(3):
        e = _EYE3[i]
        out[:, i] = (ext(x + hcol * e) - ext(x - hcol * e)) / (2.0 * h)
    return out


def _steps(f: SphericalFunction, nodes: np.ndarray, step, richardson: bool) -> np.ndarray:
    if step is None:
        base = 2e-3 if richardson else 1e-4
        return base * (1.0 + np.abs(f(nodes)))
    return np.broadcast_to(float(step), nodes.shape[:1]).astype(float)


def extension_hessian(f: SphericalFunction, nodes: np.ndarray,
                      step=None, richardson: bool = False) -> np.ndarray:
    """Euclidean Hessian of the extension at each node, shape (N, 3, 3).

    Uses the exact hook when the function carries one; otherwise central
    second differences (default step 1e-4 * (1 + |f|)), with one
    Richardson extrapolation step when requested (default base step 2e-3).
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if f.d2_extension is not None:
        return f.d2_extension(nodes)
    h = _steps(f, nodes, step, richardson)
    if not richardson:
        return _fd_hessian(f.extension, nodes, h)
    coarse = _fd_hessian(f.extension, nodes, h)
    fine = _fd_hessian(f.extension, nodes, 0.5 * h)
    return (4.0 * fine - coarse) / 3.0


def extension_gradient(f: SphericalFunction, nodes: np.ndarray,
                       step=None, richardson: bool = False) -> np.ndarray:
    """Euclidean gradient of the extension at each node, shape (N, 3)."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if f.d1_extension is not None:
        return f.d1_extension(nodes)
    h = _steps(f, nodes, step, richardson)
    if not richardson:
        return _fd_gradient(f.extension, nodes, h)
    coarse = _fd_gradient(f.extension, nodes, h)
    fine = _fd_gradient(f.extension, nodes, 0.5 * h)
    return (4.0 * fine - coarse) / 3.0


def homogeneous_hessian(f: SphericalFunction, u: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Finite-difference Hessian of the 1-homogeneous extension at one point.

    The result is symmetric by construction and annihilates u up to
    O(step^2) by homogeneity.
    """
    u = np.asarray(u, dtype=float).reshape(3)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("u must be a unit vector")
    step = float(step)
    if not 0.0 < step <= 1e-2:
        raise ValueError("step must lie in (0, 1e-2]")
    h = np.array([step])
    return _fd_hessian(f.extension, u[None, :], h)[0]


# ---------------------------------------------------------------------------
# Q matrices


@dataclass(frozen=True)
class QSample:
    """Q(f, u) in a tangent frame, together with its spectrum."""

    point: np.ndarray
    q: SymMatrix2
    frame: TangentFrame
    eigenvalues: tuple[float, float]


def q_batch(f: SphericalFunction, nodes: np.ndarray, e1: np.ndarray, e2: np.ndarray,
            step=None, richardson: bool = False) -> np.ndarray:
    """Q(f, u) at each node: tangent-plane restriction of the extension Hessian."""
    hess = extension_hessian(f, nodes, step=step, richardson=richardson)
    q = np.empty(nodes.shape[:1] + (2, 2))
    he1 = np.einsum("nij,nj->ni", hess, e1)
    he2 = np.einsum("nij,nj->ni", hess, e2)
    q[:, 0, 0] = np.einsum("ni,ni->n", e1, he1)
    q[:, 1, 1] = np.einsum("ni,ni->n", e2, he2)
    q01 = 0.5 * (np.einsum("ni,ni->n", e1, he2) + np.einsum("ni,ni->n", e2, he1))
    q[:, 0, 1] = q01
    q[:, 1, 0] = q01
    return q


def q_matrix(f: SphericalFunction, u: np.ndarray, frame: TangentFrame,
             step=None, richardson: bool = False) -> QSample:
    """Q(f, u) = (f_ij + delta_ij f) expressed in the given tangent frame."""
    u = np.asarray(u, dtype=float).reshape(3)
    if not np.allclose(frame.base, u, atol=1e-12):
        raise ValueError("frame.base must equal u")
    q = q_batch(f, u[None, :], frame.e1[None, :], frame.e2[None, :],
                step=step, richardson=richardson)[0]
    m = SymMatrix2.from_array(q)
    return QSample(point=u, q=m, frame=frame, eigenvalues=m.eigenvalues())


@dataclass(frozen=True)
class CovariantData:
    """Values, covariant gradients and Q matrices of f over a node set."""

    values: np.ndarray  # (N,)
    grad: np.ndarray    # (N, 2) components along (e1, e2)
    q: np.ndarray       # (N, 2, 2)

    @property
    def cov_hessian(self) -> np.ndarray:
        """Covariant Hessian f_ij = q_ij - delta_ij f."""
        out = self.q.copy()
        out[:, 0, 0] -= self.values
        out[:, 1, 1] -= self.values
        return out


def covariant_batch(f: SphericalFunction, nodes: np.ndarray,
                    e1: np.ndarray, e2: np.ndarray,
                    step=None, richardson: bool = False) -> CovariantData:
    vals = f(nodes)
    grad3 = extension_gradient(f, nodes, step=step, richardson=richardson)
    grad = np.stack([
        np.einsum("ni,ni->n", grad3, e1),
        np.einsum("ni,ni->n", grad3, e2),
    ], axis=-1)
    q = q_batch(f, nodes, e1, e2, step=step, richardson=richardson)
    return CovariantData(values=vals, grad=grad, q=q)


def _require_c2(f: SphericalFunction, what: str) -> None:
    if f.smoothness == "C0":
        raise SmoothnessError(
            f"{what} needs a C2 function, got {f.label or 'anonymous'} tagged C0; "
            "smooth it first (see bmgeo.mollifier)"
        )


# ---------------------------------------------------------------------------
# integral identities, evaluated as residuals


def default_test_battery() -> tuple[SphericalFunction, ...]:
    """Fixed smooth test functions used by the identity residuals.

    Deliberately not all polynomial: quadrature of polynomial integrands
    is exact at every level, which would hide the refinement behaviour.
    """
    a1 = np.array([0.48, -0.6, 0.64])
    a2 = np.array([-0.6, 0.64, 0.48])
    return (
        SphericalFunction(fn=lambda u: np.exp(0.7 * (u @ a1)), label="exp-zonal"),
        SphericalFunction(fn=lambda u: np.sin(5.0 * (u @ a2)), label="sin-zonal"),
        random_smooth(seed=2718, c0=0.2, scale=0.5, degree=3),
    )


def cheng_yau_residual(h: SphericalFunction, grid: SphereGrid,
                       test_functions=None, step=None, richardson: bool = True) -> float:
    """Weak-form residual of the divergence-free property of cof(Q(h)).

    The matrix field cof(Q(h)) is row-wise divergence free, so its double
    weak pairing with any smooth scalar, int <cof(Q(h)), Hess psi> dH^2,
    vanishes.  Testing against Hessians of scalars keeps every integrand a
    frame-invariant scalar while still moving all derivatives onto the
    test function (no third derivatives of h are formed).  Returns the
    largest absolute pairing over the battery.
    """
    _require_c2(h, "cheng_yau_residual")
    if test_functions is None:
        test_functions = default_test_battery()
    e1, e2 = grid.frames
    c = cof2(q_batch(h, grid.nodes, e1, e2, step=step, richardson=richardson))
    worst = 0.0
    for psi in test_functions:
        _require_c2(psi, "cheng_yau_residual test function")
        dpsi = covariant_batch(psi, grid.nodes, e1, e2, step=step, richardson=richardson)
        pairing = np.einsum("nij,nij->n", c, dpsi.cov_hessian)
        worst = max(worst, abs(float(grid.weights @ pairing)))
    return worst


def parts_identity_residual(h: SphericalFunction, psi: SphericalFunction,
                            phi: SphericalFunction, grid: SphereGrid,
                            step=None, richardson: bool = True) -> tuple[float, float]:
    """Residuals of the two integration-by-parts identities against cof(Q(h)).

    With c = cof(Q(h)), the three integrals
        I1 = int psi sum_ij phi_ij c_ij,
        I2 = -int sum_ij psi_i phi_j c_ij,
        I3 = int phi sum_ij psi_ij c_ij
    agree in the continuum; returns (|I1 - I2|, |I1 - I3|).
    """
    for g in (h, psi, phi):
        _require_c2(g, "parts_identity_residual")
    e1, e2 = grid.frames
    c = cof2(q_batch(h, grid.nodes, e1, e2, step=step, richardson=richardson))
    dpsi = covariant_batch(psi, grid.nodes, e1, e2, step=step, richardson=richardson)
    dphi = covariant_batch(phi, grid.nodes, e1, e2, step=step, richardson=richardson)
    i1 = float(grid.weights @ (dpsi.values * np.einsum("nij,nij->n", dphi.cov_hessian, c)))
    i2 = -float(grid.weights @ np.einsum("ni,nij,nj->n", dpsi.grad, c, dphi.grad))
    i3 = float(grid.weights @ (dphi.values * np.einsum("nij,nij->n", dpsi.cov_hessian, c)))
    return abs(i1 - i2), abs(i1 - i3)


def second_variation_identity_residual(f: SphericalFunction, phi: SphericalFunction,
                                       grid: SphereGrid, step=None,
                                       richardson: bool = True) -> float:
    """Residual of  2 int f det(Q(phi)) = int phi^2 tr(Q(f)) - int <cof(Q(f)) dphi, dphi>."""
    _require_c2(f, "second_variation_identity_residual")
    _require_c2(phi, "second_variation_identity_residual")
    e1, e2 = grid.frames
    df = covariant_batch(f, grid.nodes, e1, e2, step=step, richardson=richardson)
    dphi = covariant_batch(phi, grid.nodes, e1, e2, step=step, richardson=richardson)
    lhs = 2.0 * float(grid.weights @ (df.values * det2(dphi.q)))
    cf = cof2(df.q)
    rhs = float(grid.weights @ (dphi.values**2 * trace2(df.q))) - float(
        grid.weights @ np.einsum("ni,nij,nj->n", dphi.grad, cf, dphi.grad)
    )
    return abs(lhs - rhs)
