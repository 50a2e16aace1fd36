"""Numerical constructions of A-flows with expanding attractors."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    basin_census,
    box_counting,
    forward_invariance_check,
    lyapunov_spectrum,
    orientability_test,
    splitting_rate_check,
    trap_check,
)
from .constructions import REGISTRY, build  # noqa: E402
from .models import (  # noqa: E402
    DaConfig,
    anosov_map,
    da_map,
    extend_to_next_sphere,
    lemma1_field,
    plykin_config,
    plykin_map,
    suspension_flow,
)
from .orbits import find_equilibria, find_periodic_orbit, flow_map, integrate, integrate_with_tangent  # noqa: E402
from .surgery import excise_repelling_orbit, glue_flows, surgery_compatibility, theorem1_assembly  # noqa: E402
