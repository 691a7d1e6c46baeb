"""Support-function detector and Brunn-Minkowski violation search.

A continuous f is a support function exactly when Q(f, .) is positive
semi-definite over the sphere.  The detector scans the spectrum; when it
finds a negative direction it drives a one-parameter family of bodies
built from a spherical cone, a small ball, and a localized sawtooth
perturbation, and turns the resulting loss of square-root concavity into
an explicit min-form inequality violation with re-checkable margins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import bodies as bod
from .bodies import Ball, Cone, SmoothBody, minkowski_combine, smooth_body
from .calculus import (SmoothnessError, cof2, det2, eigvals2, q_batch, trace2)
from .charts import SawtoothSpec, lipschitz_sawtooth, sawtooth_from_spec, smoothed_sawtooth
from .functions import SphericalFunction, constant, ellipsoid
from .functional import BMReport, bm_check, evaluate_functional
from .grid import SphereGrid, build_grid

__all__ = [
    "DetectionReport", "Witness", "Case2Certificate", "LadderExhausted",
    "min_q_eigen_scan", "build_sawtooth_test", "second_variation_positive",
    "find_bm_violation", "verify_witness",
    "THETA_BAR_LADDER", "ETA_LADDER", "SAWTOOTH_LADDER",
]

THETA_BAR_LADDER = (np.pi / 12, np.pi / 6, np.pi / 4, np.pi / 3)
ETA_LADDER = (0.1, 0.05, 0.01)
#: (r, eps) pairs tried for the sawtooth, coarसest first
SAWTOOTH_LADDER = tuple(
    (r, r / div) for r in (0.2, 0.1) for div in (16, 64)
)


class LadderExhausted(RuntimeError):
    """No parameter ladder entry produced the required certificate."""

    def __init__(self, message: str, best_value: Optional[float] = None):
        super().__init__(message)
        self.best_value = best_value


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of the global positive-semidefiniteness scan of Q(f, .)."""

    decision: str              # "support" | "not_support"
    lambda_min: float
    argmin_node: np.ndarray
    eigvec: np.ndarray         # tangent 2-vector (frame of argmin node)
    tolerance: float
    label: str = ""

    def to_obj(self) -> dict:
        return {
            "decision": self.decision,
            "lambda_min": self.lambda_min,
            "argmin_node": [float(v) for v in self.argmin_node],
            "eigvec": [float(v) for v in self.eigvec],
            "tolerance": self.tolerance,
            "function": self.label,
        }


def min_q_eigen_scan(f: SphericalFunction, grid: SphereGrid,
                     step=None, richardson: bool = True) -> DetectionReport:
    """Scan the least eigenvalue of Q(f, .) over the uniform scan nodes.

    The decision threshold is -1e-6 * (1 + sup|f|): the boundary of the
    support-function cone is positive SEMI-definite, so flat directions
    (linear f) classify as support.
    """
    if f.smoothness == "C0":
        raise SmoothnessError(
            "eigenvalue scan needs a C2 function; mollify first (bmgeo.mollifier)"
        )
    nodes = grid.scan_nodes
    from .grid import _frames_for

    e1, e2 = _frames_for(nodes)
    q = q_batch(f, nodes, e1, e2, step=step, richardson=richardson)
    lam = eigvals2(q)
    k = int(np.argmin(lam[:, 0]))
    lam_min = float(lam[k, 0])
    tol = 1e-6 * (1.0 + float(np.max(np.abs(f(nodes)))))
    vec = _eigvec2(q[k], lam_min)
    return DetectionReport(
        decision="support" if lam_min >= -tol else "not_support",
        lambda_min=lam_min, argmin_node=nodes[k].copy(), eigvec=vec,
        tolerance=tol, label=f.label,
    )


def _eigvec2(m: np.ndarray, lam: float) -> np.ndarray:
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    v1 = np.array([b, lam - a])
    v2 = np.array([lam - c, b])
    v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
    n = np.linalg.norm(v)
    if n < 1e-14:  # isotropic matrix: any direction
        return np.array([1.0, 0.0])
    return v / n


def build_sawtooth_test(u0, direction, eps: float, r: float) -> SphericalFunction:
    """Lipschitz chart sawtooth: oscillation of amplitude eps along a
    tangent direction, cut off outside the chart square of half width r."""
    return lipschitz_sawtooth(u0, direction, eps, r)


# ---------------------------------------------------------------------------
# second variation along sawtooth directions


def _chart_integrals(f: SphericalFunction, phi: SphericalFunction, level: int):
    """(2 int f det(Q(phi)), int f trace(Q(phi)), max |eig Q(phi)|) via the patch rule."""
    patch = phi.localized
    nodes, w = patch.chart_rule(level)
    from .grid import _frames_for

    e1, e2 = _frames_for(nodes)
    q = q_batch(phi, nodes, e1, e2)
    fv = np.asarray(f(nodes), dtype=float)
    det_int = float(w @ (fv * det2(q)))
    trace_int = float(w @ (fv * trace2(q)))
    m = float(np.max(np.abs(eigvals2(q))))
    return 2.0 * det_int, trace_int, m


def second_variation_positive(f: SphericalFunction, report: DetectionReport,
                              grid: SphereGrid,
                              ladder=SAWTOOTH_LADDER) -> tuple[SphericalFunction, float]:
    """Find a smoothed sawtooth phi with 2 int f det(Q(phi)) dH^2 > 0.

    The oscillation direction is the eigenvector of Q(f, u0) belonging to
    the LARGEST eigenvalue: the cofactor matrix swaps the spectrum while
    keeping eigenvectors, so that direction carries the negative cofactor
    eigenvalue that makes the gradient quadratic form negative.
    """
    if report.decision != "not_support":
        raise ValueError("second_variation_positive needs a not_support report")
    if report.lambda_min >= -10.0 * report.tolerance:
        raise ValueError(
            f"lambda_min {report.lambda_min:.3e} too close to the PSD boundary "
            f"(need < {-10.0 * report.tolerance:.3e})"
        )
    u0 = report.argmin_node
    from .grid import tangent_basis

    fr = tangent_basis(u0)
    q0 = q_batch(f, u0[None, :], fr.e1[None, :], fr.e2[None, :])[0]
    lam_lo, lam_hi = eigvals2(q0[None])[0]
    direction = _eigvec2(q0, lam_hi)
    best = None
    for r, eps in ladder:
        phi = smoothed_sawtooth(u0, direction, eps, r)
        value, _, _ = _chart_integrals(f, phi, grid.level)
        if best is None or value > best[1]:
            best = (phi, value)
        if value > 1e-10 * (1.0 + abs(value)):
            return phi, value
    raise LadderExhausted(
        "no sawtooth in the ladder made the second variation positive "
        f"(best {best[1]:.3e}); the grid may be too coarse for this function",
        best_value=best[1],
    )


# ---------------------------------------------------------------------------
# witnesses


@dataclass(frozen=True)
class Witness:
    """Explicit min-form violation for a non-support f.

    The bodies are built from the cone over the cap antipodal to the bad
    node, inflated by a small ball and perturbed by the sawtooth; after
    normalizing both endpoint bodies to F = 1 the min-form margin of the
    stored instance is negative, by an amount re-checkable at any finer
    grid level.
    """

    bad_node: np.ndarray
    antipode: np.ndarray
    theta_bar: float
    theta: float
    phi: SphericalFunction
    eta: float
    s: float
    second_variation: float
    bm_instance: BMReport
    bodies: tuple
    t_bar: float
    grid_level: int = 4
    case: str = "cone"

    def to_obj(self) -> dict:
        spec = getattr(self.phi, "sawtooth_spec", None)
        return {
            "case": self.case,
            "bad_node": [float(v) for v in self.bad_node],
            "antipode": [float(v) for v in self.antipode],
            "theta_bar": self.theta_bar,
            "theta": self.theta,
            "eta": self.eta,
            "s": self.s,
            "t_bar": self.t_bar,
            "second_variation": self.second_variation,
            "sawtooth": spec.to_obj() if spec is not None else None,
            "bm_instance": self.bm_instance.to_obj(),
        }


@dataclass(frozen=True)
class Case2Certificate:
    """Certificate for the negative branch: some body has F < 0 while the
    second variation along an admissible family is positive, breaking the
    convexity of sqrt(-F) that the min-form inequality would force."""

    body_label: str
    f_value: float
    second_variation: float
    phi: SphericalFunction
    bm_instance: Optional[BMReport] = None

    def to_obj(self) -> dict:
        spec = getattr(self.phi, "sawtooth_spec", None)
        return {
            "case": "negative_branch",
            "body": self.body_label,
            "F_body": self.f_value,
            "second_variation": self.second_variation,
            "sawtooth": spec.to_obj() if spec is not None else None,
            "bm_instance": None if self.bm_instance is None else self.bm_instance.to_obj(),
        }


def _cone_family_bodies(pbar, theta_bar, eta, phi, s_values):
    """Bodies cone + {support h = eta + s phi} for each requested s."""
    cone = Cone(apex_dir=tuple(pbar), aperture=float(theta_bar))
    out = []
    for s in s_values:
        h = constant(eta) + s * phi
        out.append(minkowski_combine([(1.0, cone), (1.0, smooth_body(h, label=f"ball{eta:g}+{s:.3e}*saw"))]))
    return out


def find_bm_violation(f: SphericalFunction, grid: SphereGrid,
                      theta_ladder=THETA_BAR_LADDER, eta_ladder=ETA_LADDER,
                      sawtooth_ladder=SAWTOOTH_LADDER,
                      mollify_k: int = 40, mollify_samples: int = 3000,
                      seed: int = 0) -> Union[Witness, Case2Certificate, None]:
    """Full pipeline: scan Q(f); if f is a support function return None,
    otherwise construct an explicit Brunn-Minkowski violation.

    Continuous-only inputs are smoothed by rotation averaging first.  The
    cone route needs a cap antipodal to the bad node with positive cone
    value; when every ladder aperture fails, the search falls through to
    the negative branch, which certifies through a body with F < 0.
    """
    if f.smoothness == "C0":
        from .mollifier import mollify

        f = mollify(f, k=mollify_k, samples=mollify_samples, seed=seed)
    report = min_q_eigen_scan(f, grid)
    if report.decision == "support":
        return None
    phi, value = second_variation_positive(f, report, grid, ladder=sawtooth_ladder)
    spec = phi.sawtooth_spec
    patch_radius = phi.localized.square.max_geodesic_radius()

    p = report.argmin_node
    pbar = -p
    f_scale = 1.0 + float(np.max(np.abs(f(grid.nodes))))
    theta_bar = None
    for tb in theta_ladder:
        if np.pi / 2 - tb <= patch_radius * 1.02:
            continue  # sawtooth support must stay inside the open cap
        cone_val = evaluate_functional(f, Cone(apex_dir=tuple(pbar), aperture=tb), grid)
        if cone_val > 1e-9 * f_scale:
            theta_bar = tb
            break
    if theta_bar is None:
        return _negative_branch(f, report, phi, value, grid)

    _, trace_int, m_norm = _chart_integrals(f, phi, grid.level)
    c2 = value / 2.0
    for eta in eta_ladder:
        eps_cert = eta / m_norm
        delta = 0.9 * eps_cert
        k_m, k_p = _cone_family_bodies(pbar, theta_bar, eta, phi, (-delta, delta))
        f_m = evaluate_functional(f, k_m, grid)
        f_p = evaluate_functional(f, k_p, grid)
        if f_m <= 0 or f_p <= 0:
            continue
        b_coef = eta * trace_int
        a_coef = 0.5 * (f_m + f_p) - c2 * delta**2
        if 4.0 * a_coef * c2 <= 2.0 * b_coef**2:
            continue  # first-variation term still dominates; shrink eta
        r0, r1 = np.sqrt(f_m), np.sqrt(f_p)
        tbar = r1 / (r0 + r1)
        kb0 = bod.scale_body(k_m, 1.0 / r0)
        kb1 = bod.scale_body(k_p, 1.0 / r1)
        instance = bm_check(f, kb0, kb1, tbar, "min_form", grid)
        if instance.margin < -1e-13 * (1.0 + abs(instance.rhs)):
            return Witness(
                bad_node=p, antipode=pbar, theta_bar=float(theta_bar),
                theta=float(np.pi / 2 - theta_bar), phi=phi, eta=float(eta),
                s=float(delta), second_variation=value, bm_instance=instance,
                bodies=(kb0, kb1), t_bar=float(tbar), grid_level=grid.level,
                case="cone",
            )
    raise LadderExhausted(
        "cone construction found no negative margin over the eta ladder",
        best_value=value,
    )


def _negative_branch(f, report, phi, value, grid) -> Case2Certificate:
    """Find some smooth body with F < 0 and certify through it."""
    candidates = [Ball(1.0)]
    for axes in ((1.0, 1.0, 2.0), (0.6, 1.0, 1.5), (2.0, 1.0, 0.7)):
        candidates.append(bod.smooth_body(ellipsoid(axes)))
    body = None
    f_val = None
    for cand in candidates:
        val = evaluate_functional(f, cand, grid)
        if val < 0:
            body, f_val = cand, val
            break
    if body is None:
        raise LadderExhausted(
            "negative branch: no candidate body with F < 0; detector is "
            "inconclusive at this grid resolution", best_value=value,
        )
    h = bod.support_function(body)
    e1, e2 = grid.frames
    qh = q_batch(h, grid.nodes, e1, e2)
    qp_nodes, qp_w = phi.localized.chart_rule(grid.level)
    from .grid import _frames_for

    pe1, pe2 = _frames_for(qp_nodes)
    qp = q_batch(phi, qp_nodes, pe1, pe2)
    fv_patch = np.asarray(f(qp_nodes), dtype=float)
    b_coef = float(qp_w @ (fv_patch * np.einsum(
        "nij,nij->n", cof2(q_batch(h, qp_nodes, pe1, pe2)), qp)))
    c2 = value / 2.0
    gamma = float(eigvals2(qh)[:, 0].min())
    m_norm = float(np.max(np.abs(eigvals2(qp))))
    eps_cert = gamma / m_norm
    s_star = -b_coef / (2.0 * c2)
    instance = None
    if abs(s_star) < 0.6 * eps_cert:
        delta = 0.35 * eps_cert
        k0 = smooth_body(h + (s_star - delta) * phi, label="neg-branch-0")
        k1 = smooth_body(h + (s_star + delta) * phi, label="neg-branch-1")
        cand = bm_check(f, k0, k1, 0.5, "min_form", grid)
        if cand.margin < 0:
            instance = cand
    return Case2Certificate(body_label=body.label, f_value=f_val,
                            second_variation=value, phi=phi,
                            bm_instance=instance)


def verify_witness(f: SphericalFunction, witness: Witness,
                   level: Optional[int] = None) -> dict:
    """Recompute a witness with fresh quadrature, one level finer by default.

    Returns the recomputed second variation and min-form margin; both must
    keep their signs for the witness to stand.
    """
    base = witness.bm_instance
    lvl = level if level is not None else witness.grid_level + 1
    fine = build_grid(lvl)
    value, _, _ = _chart_integrals(f, witness.phi, fine.level)
    kb0, kb1 = witness.bodies
    instance = bm_check(f, kb0, kb1, witness.t_bar, "min_form", fine)
    return {
        "level": lvl,
        "second_variation": value,
        "margin": instance.margin,
        "confirmed": bool(value > 0 and instance.margin < 0),
        "base_margin": base.margin,
    }
