"""World3-03 corpus access and standalone sector equations.

The full model ships as ``corpus/world3-03.sdm`` in the model grammar.
This module loads and validates it, and re-exposes the persistent-pollution
and footprint equations as plain functions so they can be tested without
running a simulation.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .engine import ModelError, ModelSpec
from .parser import parse_model_text

CORPUS_FILENAME = "world3-03.sdm"
CORPUS_SHA256 = "45ea51e8801260be97a3f33b5bfa0773f77b90ca3980db2859476ef854c53c2a"

#: Environment variable that overrides the bundled corpus path.
CORPUS_ENV_VAR = "LIMITS_SD_CORPUS"


class CorpusCorrupt(ModelError):
    """The bundled corpus file does not match its recorded checksum."""


class NegativeComponent(ModelError):
    """A footprint component that must be nonnegative was negative."""


@dataclass(frozen=True)
class PollutionSectorBindings:
    """Inputs to the persistent-pollution generation equations.

    Mirrors the like-named corpus elements so the standalone functions
    below can be checked against simulated series point by point.
    """

    population: float
    per_capita_resource_use_multiplier: float
    fraction_resources_persistent: float
    industrial_materials_emission_factor: float
    industrial_materials_toxicity_index: float
    arable_land: float
    agricultural_inputs_per_hectare: float
    fraction_agricultural_inputs_persistent: float
    agricultural_materials_toxicity_index: float
    persistent_pollution_generation_rate: float = 0.0
    persistent_pollution_stock: float = 0.0
    assimilation_half_life: float = 1.5


@dataclass(frozen=True)
class FootprintBindings:
    """Inputs to the human-ecological-footprint equation (all in hectares)."""

    arable_land_footprint: float
    urban_land_footprint: float
    persistent_pollution_generation_rate: float
    k_absorption: float
    normalization: float


def corpus_path() -> Path:
    """Path of the corpus file, honoring the environment override."""
    override = os.environ.get(CORPUS_ENV_VAR)
    if override:
        return Path(override)
    return Path(__file__).parent / "corpus" / CORPUS_FILENAME


def load_world3_corpus(path: Path | None = None, *, verify_checksum: bool | None = None) -> ModelSpec:
    """Load and validate the World3-03 model.

    The bundled file is checksummed; a mismatch raises :class:`CorpusCorrupt`.
    When loading from an explicit or overridden path the checksum is skipped
    unless ``verify_checksum`` forces it.
    """
    if path is None:
        path = corpus_path()
        if verify_checksum is None:
            verify_checksum = CORPUS_ENV_VAR not in os.environ
    text = Path(path).read_text(encoding="utf-8")
    if verify_checksum:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        if digest != CORPUS_SHA256:
            raise CorpusCorrupt(
                f"corpus checksum mismatch: expected {CORPUS_SHA256}, got {digest}"
            )
    return parse_model_text(text)


def pp_generation_industry(b: PollutionSectorBindings) -> float:
    """Persistent pollution generated by industrial activity (units/year)."""
    return (
        b.population
        * b.per_capita_resource_use_multiplier
        * b.fraction_resources_persistent
        * b.industrial_materials_emission_factor
        * b.industrial_materials_toxicity_index
    )


def pp_generation_agriculture(b: PollutionSectorBindings) -> float:
    """Persistent pollution generated by agricultural inputs (units/year)."""
    return (
        b.arable_land
        * b.agricultural_inputs_per_hectare
        * b.fraction_agricultural_inputs_persistent
        * b.agricultural_materials_toxicity_index
    )


def human_ecological_footprint(f: FootprintBindings) -> float:
    """Footprint as a ratio to regenerative capacity.

    Sum of arable, urban, and pollution-absorption land divided by the
    normalization constant. Absorption land is proportional to the
    pollution generation rate with constant ``k_absorption``.
    """
    absorption = f.k_absorption * f.persistent_pollution_generation_rate
    components = {
        "arable_land_footprint": f.arable_land_footprint,
        "urban_land_footprint": f.urban_land_footprint,
        "absorption_land_footprint": absorption,
    }
    for name, value in components.items():
        if value < 0:
            raise NegativeComponent(f"{name} is negative: {value}")
    return sum(components.values()) / f.normalization
