"""Certification tools for post-quantum steering assemblages."""

from .assemblage import (Assemblage, BipartiteAssemblage, MinimalFunctional, Scenario,
                         SteeringFunctional, ValidationReport, add_noise, behaviour, denoise,
                         evaluate_functional, evaluate_minimal, expand_minimal, filter_back,
                         lift_qutrit, minimal_form, prbox_product, reconstruct_from_minimal,
                         validate_bipartite_ns, validate_tripartite_ns)
from .behaviour import Behaviour, MeasurementSet

__version__ = "0.1.0"
