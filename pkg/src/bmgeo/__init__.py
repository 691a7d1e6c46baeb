"""Spherical calculus, surface-area measures, and Brunn-Minkowski checks.

The central question this package operationalizes: given a continuous
function f on the 2-sphere, the area-measure functional
F(K) = int f dS(K, .) satisfies the min-form Brunn-Minkowski inequality
exactly when f is the support function of a convex body.  The detector
decides the support property by scanning curvature matrices and, on
failure, constructs an explicit inequality violation from a cone, a small
ball, and a localized sawtooth perturbation.
"""

__version__ = "0.1.0"

from .bodies import (AreaMeasure, Ball, Combo, Cone, ConvexBody, Cylinder,
                     NotConvexError, PlanarBody, SmoothBody,
                     UnsupportedBodyError, area_measure, ball, disk,
                     ellipsoid_body, minkowski_combine, perturbation_epsilon,
                     random_planar_body, random_smooth_body,
                     random_support_function, smooth_body,
                     support_convexity_oracle, support_function)
from .calculus import (QSample, SmoothnessError, SymMatrix2,
                       cheng_yau_residual, cofactor, homogeneous_hessian,
                       parts_identity_residual, q_matrix,
                       second_variation_identity_residual,
                       trace_det_identity_check)
from .detect import (Case2Certificate, DetectionReport, LadderExhausted,
                     Witness, build_sawtooth_test, find_bm_violation,
                     min_q_eigen_scan, second_variation_positive,
                     verify_witness)
from .functional import (BMReport, VariationProfile, bm_check,
                         evaluate_functional, mixed_volume,
                         planar_additivity_residual, variation_profile)
from .functions import (SphericalFunction, builtin_function, rotate_function)
from .grid import (SphereGrid, TangentFrame, build_grid, integrate_sphere,
                   tangent_basis)
from .mollifier import RotationKernel, mollified_inequality_transfer, mollify
