"""Independent oracles used to freeze expected values.

Everything here is deliberately primitive: closed-form monomial
integrals, explicit boundary meshes, and textbook Hessians, computed
without touching the library's quadrature or differentiation paths.
"""

import numpy as np


def double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def monomial_sphere_integral(a: int, b: int, c: int) -> float:
    """Exact integral of x^a y^b z^c over the unit sphere."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    num = (double_factorial(a - 1) * double_factorial(b - 1)
           * double_factorial(c - 1))
    return 4.0 * np.pi * num / double_factorial(a + b + c + 1)


def mesh_area_from_points(pts: np.ndarray) -> float:
    """Total triangle area of a (n_theta, n_phi, 3) closed lat-long mesh."""
    n_t, n_p, _ = pts.shape
    area = 0.0
    for i in range(n_t - 1):
        a = pts[i]
        b = pts[i + 1]
        a_next = np.roll(a, -1, axis=0)
        b_next = np.roll(b, -1, axis=0)
        t1 = 0.5 * np.linalg.norm(np.cross(b - a, a_next - a), axis=1)
        t2 = 0.5 * np.linalg.norm(np.cross(b_next - b, a_next - b), axis=1)
        area += float(t1.sum() + t2.sum())
    return area


def ellipsoid_mesh_area(semi_axes, n: int = 400) -> float:
    """Surface area of an ellipsoid from an explicit boundary mesh."""
    a, b, c = semi_axes
    theta = np.linspace(0.0, np.pi, n)
    phi = np.linspace(0.0, 2.0 * np.pi, 2 * n, endpoint=False)
    st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
    pts = np.stack([
        a * st * np.cos(phi)[None, :],
        b * st * np.sin(phi)[None, :],
        c * ct * np.ones_like(phi)[None, :],
    ], axis=-1)
    return mesh_area_from_points(pts)


def smooth_body_mesh_area(h_extension, n: int = 300, fd_step: float = 1e-5) -> float:
    """Mesh area of a smooth body from its support function.

    Boundary points are the gradient of the 1-homogeneous extension,
    obtained by plain central differences (independent of the library's
    differentiation code).
    """
    theta = np.linspace(1e-4, np.pi - 1e-4, n)
    phi = np.linspace(0.0, 2.0 * np.pi, 2 * n, endpoint=False)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    u = np.stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)],
                 axis=-1).reshape(-1, 3)
    grad = np.empty_like(u)
    for i in range(3):
        e = np.zeros(3)
        e[i] = fd_step
        grad[:, i] = (h_extension(u + e) - h_extension(u - e)) / (2.0 * fd_step)
    return mesh_area_from_points(grad.reshape(n, 2 * n, 3))


def cone_mesh_area(theta: float, n: int = 600) -> float:
    """Mesh area of the convex hull of the origin and a unit-sphere cap."""
    # cap rings
    t = np.linspace(0.0, theta, n)
    phi = np.linspace(0.0, 2.0 * np.pi, 2 * n, endpoint=False)
    cap = np.stack([
        np.sin(t)[:, None] * np.cos(phi)[None, :],
        np.sin(t)[:, None] * np.sin(phi)[None, :],
        np.cos(t)[:, None] * np.ones_like(phi)[None, :],
    ], axis=-1)
    # lateral rings: segments from origin to the rim circle
    s = np.linspace(0.0, 1.0, n)
    rim = np.stack([
        np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi),
        np.cos(theta) * np.ones_like(phi),
    ], axis=-1)
    lateral = s[:, None, None] * rim[None, :, :]
    return mesh_area_from_points(cap) + mesh_area_from_points(lateral)


def ellipsoid_extension_hessian(semi_axes, x: np.ndarray) -> np.ndarray:
    """Closed-form Hessian of sqrt(x' A x) for A = diag(a^2, b^2, c^2)."""
    A = np.diag(np.asarray(semi_axes, dtype=float) ** 2)
    x = np.asarray(x, dtype=float)
    s = np.sqrt(x @ A @ x)
    Ax = A @ x
    return A / s - np.outer(Ax, Ax) / s**3


def zonal_laplacian(g, gp, gpp, axis, points: np.ndarray) -> np.ndarray:
    """Covariant Laplacian of a zonal function g(t), t = u . axis."""
    t = points @ axis
    return (1.0 - t**2) * gpp(t) - 2.0 * t * gp(t)
