"""Bundled published example: the post-quantum assemblage and its witness functional."""

import json
import math
from importlib import resources

from ..assemblage import Assemblage, MinimalFunctional
from ..io import decode_assemblage, decode_minimal

BETA_EXAMPLE = -0.520495
BETA_AQ_EXAMPLE = -0.508417
MU_OCTAGON = math.cos(math.pi / 8)


def _load(name: str) -> dict:
    return json.loads(resources.files(__name__).joinpath(name).read_text())


def example_assemblage_json() -> dict:
    return _load("example_assemblage.json")


def example_functional_json() -> dict:
    return _load("example_functional.json")


def example_assemblage() -> Assemblage:
    """The noisy qubit assemblage sigma* rebuilt from its minimal representation."""
    return decode_assemblage(example_assemblage_json())


def example_functional() -> MinimalFunctional:
    return decode_minimal(example_functional_json())
