"""Super KdV charges, Clifford-valued KdV dynamics and soliton stability."""
from .algebra import AlgebraElement, bar, body, body_projection, get_algebra, mul, random_element, soul
from .pde import (
    BlowUpError,
    FieldState,
    SchemeConfig,
    gardner_map,
    integrate,
    make_system,
    perturb,
    rhs_broken,
    rhs_gardner,
    rhs_kdv,
    rhs_skdv,
    soliton_state,
)
from .spectral import DECAY_TOL, DecayContractError, Grid

__version__ = "0.1.0"

__all__ = [
    "AlgebraElement",
    "BlowUpError",
    "DECAY_TOL",
    "DecayContractError",
    "FieldState",
    "Grid",
    "SchemeConfig",
    "bar",
    "body",
    "body_projection",
    "gardner_map",
    "get_algebra",
    "integrate",
    "make_system",
    "mul",
    "perturb",
    "random_element",
    "rhs_broken",
    "rhs_gardner",
    "rhs_kdv",
    "rhs_skdv",
    "soliton_state",
    "soul",
]
