"""Moment-annihilating Schauder bases of weighted L^p spaces and heat decay."""

__version__ = "0.1.0"

from .annihilate import (AnnihilationCertificate, PerturbationPlan, build_annihilating_basis,
                         gram_schmidt_annihilating, mirror_basis, perturbation_step,
                         restricted_dual_norm, shrinking_check)
from .basis import BasisState, basis_constant_estimate, basis_projection
from .errors import HeatBasisError
from .functionals import (J, MomentFunctional, iterated_integral, rapid_decay_check,
                          representer, support_check, transfer, transfer_inverse)
from .grid import DyadicGrid, GridFunction, Weight, check_fast_growth, make_dyadic_grid, weighted_norm
from .haar import HaarIndex, indicator_in_haar
from .heat import DecayReport, TimeSchedule, decay_fit, heat_evolve, sup_norm_at, expansion_residual
from .tensor import TensorFunction, build_product_weight, tensor_heat_decay, tensor_projection_split

__all__ = [
    "AnnihilationCertificate", "BasisState", "DecayReport", "DyadicGrid", "GridFunction",
    "HaarIndex", "HeatBasisError", "J", "MomentFunctional", "PerturbationPlan", "TensorFunction",
    "TimeSchedule", "Weight", "basis_constant_estimate", "basis_projection",
    "build_annihilating_basis", "build_product_weight", "check_fast_growth", "decay_fit",
    "gram_schmidt_annihilating", "heat_evolve", "indicator_in_haar", "iterated_integral",
    "make_dyadic_grid", "mirror_basis", "perturbation_step", "rapid_decay_check", "representer",
    "restricted_dual_norm", "shrinking_check", "sup_norm_at", "support_check",
    "tensor_heat_decay", "tensor_projection_split", "transfer", "transfer_inverse",
    "expansion_residual", "weighted_norm",
]
