"""The area-measure functional, mixed volumes, and Brunn-Minkowski checks.

For a fixed continuous f on the sphere, F(K) integrates f against the
surface-area measure of K.  F is translation invariant, 2-homogeneous,
and linear in f; when f is a support function F is (three times) a mixed
volume and satisfies the concave-square-root inequality, whose two forms
are evaluated here as signed margins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bodies as bod
from .bodies import (ConvexBody, PlanarBody, area_measure, minkowski_combine,
                     perturbation_epsilon, smooth_body, support_convexity_oracle)
from .calculus import cof2, covariant_batch, det2, q_batch, trace2
from .functions import SphericalFunction
from .grid import SphereGrid

__all__ = [
    "BMReport", "VariationProfile", "evaluate_functional", "mixed_volume",
    "bm_check", "variation_profile", "planar_functional",
    "planar_additivity_residual", "case1_rescaled",
]


def evaluate_functional(f: SphericalFunction, body: ConvexBody, grid: SphereGrid,
                        step=None, richardson: bool = True) -> float:
    """F(K): integral of f against the surface-area measure of the body."""
    return area_measure(body, grid, step=step, richardson=richardson).integrate(f)


def mixed_volume(body: ConvexBody, l_support: SphericalFunction, grid: SphereGrid,
                 oracle_samples: int = 4000) -> float:
    """Mixed volume V(K, K, L) = F(h_L, K) / 3 in three dimensions.

    ``l_support`` must pass the sampled convexity oracle, otherwise the
    integral is not a mixed volume and the call is refused.
    """
    report = support_convexity_oracle(l_support, samples=oracle_samples)
    if not report.convex:
        x, y, gap = report.witness
        raise ValueError(
            "l_support is not a support function (midpoint convexity fails "
            f"by {gap:.3e} on segment {x} .. {y})"
        )
    return evaluate_functional(l_support, body, grid) / 3.0


@dataclass(frozen=True)
class BMReport:
    """One evaluation of a Brunn-Minkowski form: margin = lhs - rhs."""

    form: str                      # "concave_root" | "min_form"
    t: float
    lhs: float
    rhs: float
    margin: float
    f_values: tuple[float, float, float]  # F(K0), F(K1), F(Kt)
    labels: tuple[str, str]

    def to_obj(self) -> dict:
        return {
            "form": self.form, "t": self.t, "lhs": self.lhs, "rhs": self.rhs,
            "margin": self.margin,
            "F_K0": self.f_values[0], "F_K1": self.f_values[1],
            "F_Kt": self.f_values[2],
            "bodies": list(self.labels),
        }


def bm_check(f: SphericalFunction, k0: ConvexBody, k1: ConvexBody, t: float,
             form: str, grid: SphereGrid, step=None,
             richardson: bool = True) -> BMReport:
    """Evaluate one Brunn-Minkowski instance for F at interpolation t.

    ``min_form`` compares F((1-t)K0 + tK1) with min(F(K0), F(K1));
    ``concave_root`` compares sqrt(F((1-t)K0 + tK1)) with the convex
    combination of the roots and refuses negative F values rather than
    rooting them.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if form not in ("min_form", "concave_root"):
        raise ValueError("form must be 'min_form' or 'concave_root'")
    kt = minkowski_combine([(1.0 - t, k0), (t, k1)])
    f0 = evaluate_functional(f, k0, grid, step=step, richardson=richardson)
    f1 = evaluate_functional(f, k1, grid, step=step, richardson=richardson)
    ft = evaluate_functional(f, kt, grid, step=step, richardson=richardson)
    if form == "min_form":
        lhs, rhs = ft, min(f0, f1)
    else:
        neg_floor = -1e-12 * (1.0 + abs(f0) + abs(f1) + abs(ft))
        if f0 < neg_floor or f1 < neg_floor or ft < neg_floor:
            raise ValueError(
                "concave_root form needs non-negative F values, got "
                f"F(K0)={f0:.3e}, F(K1)={f1:.3e}, F(Kt)={ft:.3e}; "
                "use the min form or the negative-branch check"
            )
        lhs = np.sqrt(max(ft, 0.0))
        rhs = (1.0 - t) * np.sqrt(max(f0, 0.0)) + t * np.sqrt(max(f1, 0.0))
    return BMReport(form=form, t=float(t), lhs=float(lhs), rhs=float(rhs),
                    margin=float(lhs - rhs), f_values=(f0, f1, ft),
                    labels=(k0.label, k1.label))


def case1_rescaled(f: SphericalFunction, k0: ConvexBody, k1: ConvexBody, t: float,
                   grid: SphereGrid) -> tuple[ConvexBody, ConvexBody, float]:
    """Normalize a positive-F pair so both bodies have F = 1.

    Returns (K0 / sqrt(F(K0)), K1 / sqrt(F(K1)), t-bar); a min-form
    evaluation of the rescaled triple decides the concave-root form of
    the original one.
    """
    f0 = evaluate_functional(f, k0, grid)
    f1 = evaluate_functional(f, k1, grid)
    if f0 <= 0 or f1 <= 0:
        raise ValueError("case-1 rescaling needs strictly positive F(K0), F(K1)")
    r0, r1 = np.sqrt(f0), np.sqrt(f1)
    tbar = t * r1 / ((1.0 - t) * r0 + t * r1)
    return (bod.scale_body(k0, 1.0 / r0), bod.scale_body(k1, 1.0 / r1), float(tbar))


# ---------------------------------------------------------------------------
# perturbation families


@dataclass(frozen=True)
class VariationProfile:
    """Value and first two derivatives of s -> F(body with support h + s*phi).

    ``f1``/``f2`` come from the cofactor-pairing and determinant formulas;
    ``fd_f1``/``fd_f2`` re-derive them from a centered 5-point stencil of
    direct F evaluations inside the certified range.
    """

    f0: float
    f1: float
    f2: float
    fd_f1: float
    fd_f2: float
    eps: float
    stencil_step: float

    def discrepancies(self) -> tuple[float, float]:
        return abs(self.f1 - self.fd_f1), abs(self.f2 - self.fd_f2)

    def within_tolerance(self) -> bool:
        d1, d2 = self.discrepancies()
        return (d1 <= max(1e-5, 1e-3 * abs(self.f1))
                and d2 <= max(1e-5, 1e-3 * abs(self.f2)))

    def to_obj(self) -> dict:
        return {
            "F0": self.f0, "F1": self.f1, "F2": self.f2,
            "fd_F1": self.fd_f1, "fd_F2": self.fd_f2,
            "eps": self.eps, "stencil_step": self.stencil_step,
            "within_tolerance": self.within_tolerance(),
        }


def variation_profile(f: SphericalFunction, h: SphericalFunction,
                      phi: SphericalFunction, grid: SphereGrid,
                      step=None, richardson: bool = True,
                      default_step: float = 0.0625) -> VariationProfile:
    """First and second variation of F along the family h + s*phi at s = 0.

    F' pairs f with <cof(Q(h)), Q(phi)>, F'' is twice the f-weighted
    integral of det(Q(phi)); both are cross-checked by differencing
    direct evaluations of F at five stencil points with step eps/4.
    """
    eps = perturbation_epsilon(h, phi, grid, step=step, richardson=richardson)
    if eps <= 0.0:
        raise ValueError("empty certified perturbation range")
    e1, e2 = grid.frames
    qh = q_batch(h, grid.nodes, e1, e2, step=step, richardson=richardson)
    qp = q_batch(phi, grid.nodes, e1, e2, step=step, richardson=richardson)
    fv = f(grid.nodes)
    f0 = float(grid.weights @ (fv * det2(qh)))
    f1 = float(grid.weights @ (fv * np.einsum("nij,nij->n", cof2(qh), qp)))
    f2 = 2.0 * float(grid.weights @ (fv * det2(qp)))

    d = default_step if np.isinf(eps) else eps / 4.0
    vals = []
    for k in (-2, -1, 0, 1, 2):
        if k == 0:
            vals.append(f0)
            continue
        body = smooth_body(h + (k * d) * phi, label=f"h+{k}d*phi")
        vals.append(evaluate_functional(f, body, grid, step=step, richardson=richardson))
    m2, m1, c0, p1, p2 = vals
    fd_f1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * d)
    fd_f2 = (-m2 + 16.0 * m1 - 30.0 * c0 + 16.0 * p1 - p2) / (12.0 * d**2)
    return VariationProfile(f0=f0, f1=f1, f2=f2, fd_f1=float(fd_f1),
                            fd_f2=float(fd_f2), eps=float(eps), stencil_step=d)


# ---------------------------------------------------------------------------
# the planar (n = 2) degenerate case


def planar_functional(f2d, body: PlanarBody, n: int = 4096) -> float:
    """Planar analogue: integral of f2d(angle) against the length measure."""
    a = 2.0 * np.pi * np.arange(n) / n
    vals = np.asarray(f2d(a), dtype=float)
    return float(np.mean(vals * body.density(a)) * 2.0 * np.pi)


def planar_additivity_residual(k0: PlanarBody, k1: PlanarBody, f2d,
                               n: int = 4096) -> float:
    """|F(K0 + K1) - F(K0) - F(K1)| for the planar functional.

    The planar length measure is Minkowski additive, so this vanishes for
    every continuous f2d; the residual is pure numerics.
    """
    return abs(
        planar_functional(f2d, k0 + k1, n=n)
        - planar_functional(f2d, k0, n=n)
        - planar_functional(f2d, k1, n=n)
    )
