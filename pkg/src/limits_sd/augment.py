"""AI pollution pathway: parameters and model splicing.

Adds a third persistent-pollution source driven by the share of industrial
output devoted to AI infrastructure, with carbon and e-waste intensity
coefficients that decay exponentially toward a floor. The pathway switches
on at a fixed activation year and is added to the existing generation-rate
equation; nothing else in the model is modified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .engine import BinOp, Call, Element, Lit, ModelError, ModelSpec, Neg, TIME, Var


class MissingHook(ModelError):
    """The spec lacks an element the augmentation needs to attach to."""

    def __init__(self, name: str):
        super().__init__(f"model is missing required element {name!r}")
        self.name = name


class BadPreset(ModelError):
    """A preset file could not be parsed into AiParams."""


@dataclass(frozen=True)
class AiParams:
    """Parameters of the AI pollution pathway.

    ``fioai`` is the fraction of industrial output allocated to AI. The two
    intensity coefficients convert that output into pollution units per
    output unit; each decays at its own rate but is bounded below by
    ``coeff_floor`` times its initial value. ``conversion_const`` maps the
    combined physical emissions onto the model's pollution scale.
    """

    fioai: float
    carbon_coeff_initial: float
    ewaste_coeff_initial: float
    carbon_decline_rate: float
    ewaste_decline_rate: float
    coeff_floor: float
    conversion_const: float
    activation_year: float = 2020.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fioai <= 1.0:
            raise ValueError(f"fioai must be in [0, 1], got {self.fioai}")
        for name in ("carbon_coeff_initial", "ewaste_coeff_initial",
                     "carbon_decline_rate", "ewaste_decline_rate",
                     "conversion_const"):
            value = getattr(self, name)
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
        if not 0.0 <= self.coeff_floor <= 1.0:
            raise ValueError(f"coeff_floor must be in [0, 1], got {self.coeff_floor}")
        if not 1900.0 <= self.activation_year <= 2100.0:
            raise ValueError(
                f"activation_year must be in [1900, 2100], got {self.activation_year}"
            )


def declining_coefficient(initial: float, rate: float, floor_mult: float,
                          t: float, t0: float) -> float:
    """Exponentially decaying coefficient with a multiplicative floor.

    Constant at ``initial`` before ``t0``, matching the spliced model
    expression, which clamps the elapsed time at zero.
    """
    return max(floor_mult * initial,
               initial * math.exp(-rate * max(0.0, t - t0)))


def pp_generation_ai(industrial_output: float, t: float, p: AiParams) -> float:
    """AI-attributed pollution generation rate; zero before activation."""
    if t < p.activation_year:
        return 0.0
    carbon = declining_coefficient(
        p.carbon_coeff_initial, p.carbon_decline_rate, p.coeff_floor,
        t, p.activation_year)
    ewaste = declining_coefficient(
        p.ewaste_coeff_initial, p.ewaste_decline_rate, p.coeff_floor,
        t, p.activation_year)
    return p.fioai * industrial_output * (carbon + ewaste) * p.conversion_const


#: Names of the constants added by augment_model, in declaration order.
AI_CONSTANT_NAMES = (
    "ai_fioai",
    "ai_carbon_coeff_initial",
    "ai_ewaste_coeff_initial",
    "ai_carbon_decline_rate",
    "ai_ewaste_decline_rate",
    "ai_coeff_floor",
    "ai_conversion_const",
    "ai_activation_year",
)

#: Names of the auxiliaries added by augment_model.
AI_AUX_NAMES = (
    "ai_carbon_coeff",
    "ai_ewaste_coeff",
    "persistent_pollution_generation_ai",
)

AI_SECTOR = "ai"

_HOOK_RATE = "persistent_pollution_generation_rate"
_HOOK_OUTPUT = "industrial_output"


def _decline_expr(initial_name: str, rate_name: str):
    # max(floor*initial, initial*exp(-rate*max(0, time - t0)))
    elapsed = Call("max", (Lit(0.0),
                           BinOp("-", Var(TIME), Var("ai_activation_year"))))
    decayed = BinOp("*", Var(initial_name),
                    Call("exp", (Neg(BinOp("*", Var(rate_name), elapsed)),)))
    floored = BinOp("*", Var("ai_coeff_floor"), Var(initial_name))
    return Call("max", (floored, decayed))


def augment_model(spec: ModelSpec, p: AiParams) -> ModelSpec:
    """Splice the AI pathway into a World3-compatible spec.

    Adds eight constants and three auxiliaries, and rewrites the
    pollution generation rate to ``<old expression> +
    persistent_pollution_generation_ai``. Every other element is carried
    over unchanged.
    """
    by_name = dict(spec.elements)
    for hook in (_HOOK_RATE, _HOOK_OUTPUT):
        if hook not in by_name:
            raise MissingHook(hook)

    const_values = {
        "ai_fioai": p.fioai,
        "ai_carbon_coeff_initial": p.carbon_coeff_initial,
        "ai_ewaste_coeff_initial": p.ewaste_coeff_initial,
        "ai_carbon_decline_rate": p.carbon_decline_rate,
        "ai_ewaste_decline_rate": p.ewaste_decline_rate,
        "ai_coeff_floor": p.coeff_floor,
        "ai_conversion_const": p.conversion_const,
        "ai_activation_year": p.activation_year,
    }
    for name in const_values:
        if name in by_name:
            raise ModelError(f"augmentation name collision: {name!r} already defined")

    added: list[Element] = [
        Element(name=name, kind="constant", value=value, sector=AI_SECTOR)
        for name, value in const_values.items()
    ]
    added.append(Element(
        name="ai_carbon_coeff", kind="auxiliary", sector=AI_SECTOR,
        expr=_decline_expr("ai_carbon_coeff_initial", "ai_carbon_decline_rate")))
    added.append(Element(
        name="ai_ewaste_coeff", kind="auxiliary", sector=AI_SECTOR,
        expr=_decline_expr("ai_ewaste_coeff_initial", "ai_ewaste_decline_rate")))
    active = BinOp(
        "*",
        BinOp("*", Var("ai_fioai"), Var(_HOOK_OUTPUT)),
        BinOp("*",
              BinOp("+", Var("ai_carbon_coeff"), Var("ai_ewaste_coeff")),
              Var("ai_conversion_const")))
    added.append(Element(
        name="persistent_pollution_generation_ai", kind="auxiliary", sector=AI_SECTOR,
        expr=Call("clip", (active, Lit(0.0), Var(TIME), Var("ai_activation_year")))))

    old_rate = by_name[_HOOK_RATE]
    if old_rate.kind != "auxiliary":
        raise MissingHook(_HOOK_RATE)
    by_name[_HOOK_RATE] = replace(
        old_rate,
        expr=BinOp("+", old_rate.expr, Var("persistent_pollution_generation_ai")))
    for element in added:
        by_name[element.name] = element
    return spec.with_elements(by_name)


def load_preset(path: Path | str) -> AiParams:
    """Read AiParams from a ``key = value`` preset file."""
    values: dict[str, float] = {}
    field_names = {f.name for f in fields(AiParams)}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadPreset(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in field_names:
            raise BadPreset(f"line {lineno}: unknown parameter {key!r}")
        try:
            values[key] = float(value.strip())
        except ValueError as exc:
            raise BadPreset(f"line {lineno}: bad number for {key!r}") from exc
    missing = field_names - values.keys() - {"activation_year"}
    if missing:
        raise BadPreset(f"preset missing parameters: {sorted(missing)}")
    try:
        return AiParams(**values)
    except ValueError as exc:
        raise BadPreset(str(exc)) from exc


def save_preset(p: AiParams, path: Path | str, header: str = "") -> None:
    """Write AiParams as a ``key = value`` preset file."""
    lines = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
    for f in fields(AiParams):
        lines.append(f"{f.name} = {getattr(p, f.name)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
