"""Perpetual American options: pricing, model recovery and chain simulation."""

from __future__ import annotations

from .chain import (ChainModel, chain_hitting_laplace, chain_put_price, discretize_speed_measure,
                    generator_residuals, hitting_convergence)
from .curves import (ConvexCurve, PutCurveInput, ValidationReport, eval_with_derivatives,
                     find_k_under, find_kstar, validate_put_curve)
from .duality import brute_force_phi, check_self_duality, phi_to_put, put_to_phi
from .errors import (CurveParseError, CurveStructureError, DegenerateCurveError, DomainError,
                     ForwardError, KStarInfiniteError, ModelError, NumericalError, PerpputError,
                     SmoothnessError)
from .extensions import (call_to_psi, gbm_call, joint_put_call_check, perpetual_call_price,
                         psi_to_call, recover_dividend)
from .forward import (FundamentalSolution, VolCurve, fundamental_phi, gbm_put, hitting_laplace,
                      perpetual_put_price)
from .inverse import alternative_upper_vol, exercise_boundary, recover_volatility
from .scale import ScaleSystem, SpeedMeasure, build_scale_system, build_speed_measure
from .simulate import PathEnsemble, PathSample, martingale_diagnostic, mc_put_price, simulate_paths

__version__ = "0.1.0"

__all__ = [
    "ChainModel", "ConvexCurve", "CurveParseError", "CurveStructureError", "DegenerateCurveError",
    "DomainError", "ForwardError", "FundamentalSolution", "KStarInfiniteError", "ModelError",
    "NumericalError", "PathEnsemble", "PathSample", "PerpputError", "PutCurveInput", "ScaleSystem",
    "SmoothnessError", "SpeedMeasure", "ValidationReport", "VolCurve", "alternative_upper_vol",
    "brute_force_phi", "build_scale_system", "build_speed_measure", "call_to_psi",
    "chain_hitting_laplace", "chain_put_price", "check_self_duality", "discretize_speed_measure",
    "eval_with_derivatives", "exercise_boundary", "find_k_under", "find_kstar", "fundamental_phi",
    "gbm_call", "gbm_put", "generator_residuals", "hitting_convergence", "hitting_laplace", "joint_put_call_check",
    "martingale_diagnostic", "mc_put_price", "perpetual_call_price", "perpetual_put_price",
    "phi_to_put", "psi_to_call", "put_to_phi", "recover_dividend", "recover_volatility",
    "simulate_paths", "validate_put_curve",
]
