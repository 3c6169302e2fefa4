"""Graded differential polynomials for superfields and their components."""
from .charges import (
    ChargeDensity,
    ConsistencyError,
    QuadratureContractError,
    apply_Q_density,
    charge,
    compile_density,
    derive,
    expand_bosonic_nonlocal,
    expand_fermionic_nonlocal,
    expand_local_charges,
    numeric_equiv,
    random_grassmann_ensemble,
)
from .components import ComponentExpr, ComponentPair, u, xi
from .superexpr import (
    SuperExpr,
    Phi,
    apply_D,
    apply_Dinv,
    chi,
    gardner_forward,
    gardner_invert,
    to_components,
)

__all__ = [
    "ChargeDensity",
    "ComponentExpr",
    "ComponentPair",
    "ConsistencyError",
    "Phi",
    "QuadratureContractError",
    "SuperExpr",
    "apply_D",
    "apply_Dinv",
    "apply_Q_density",
    "charge",
    "chi",
    "compile_density",
    "derive",
    "expand_bosonic_nonlocal",
    "expand_fermionic_nonlocal",
    "expand_local_charges",
    "gardner_forward",
    "gardner_invert",
    "numeric_equiv",
    "random_grassmann_ensemble",
    "to_components",
    "u",
    "xi",
]
