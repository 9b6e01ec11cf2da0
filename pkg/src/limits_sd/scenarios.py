"""Named scenarios, run comparison, and headline metrics.

Scenarios bundle a corpus, constant overrides, and an optional AI
augmentation. The comparison helpers compute percent deltas at benchmark
years, peak timing/height, the 2100 residue delta, and the cumulative
overshoot area between two series.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .augment import AiParams, augment_model, load_preset
from .engine import ModelError, ModelSpec, RunResult, SimConfig, integrate_run
from .world3 import load_world3_corpus

BENCHMARK_YEARS = (2020, 2040, 2060, 2080, 2100)


class UnknownScenario(ModelError):
    pass


class GridMismatch(ModelError):
    pass


class UnknownVariable(ModelError):
    pass


class EmptySeries(ModelError):
    pass


class WindowOutOfRange(ModelError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    base_corpus: str = "world3-03"
    overrides: Mapping[str, float] = field(default_factory=dict)
    augmentation: Optional[AiParams] = None
    description: str = ""


@dataclass(frozen=True)
class PeakMetrics:
    """Maximum of a series: earliest attaining time, value, and final value."""

    peak_time: float
    peak_value: float
    value_at_end: float


@dataclass(frozen=True)
class ComparisonReport:
    variable: str
    benchmark_years: tuple
    base_values: tuple
    other_values: tuple
    pct_delta: tuple          # None where the base value is zero
    peak_base: PeakMetrics
    peak_other: PeakMetrics
    residue_delta_2100: Optional[float]
    cumulative_overshoot_pct: Optional[float]
    overshoot_window: Optional[tuple]


def _default_preset_path() -> Path:
    return Path(__file__).parent / "corpus" / "ai-params.preset"


def load_registry(path: Path | None = None,
                  preset_path: Path | None = None) -> dict:
    """Read the scenario registry (TOML), resolving augmentation presets."""
    if path is None:
        path = Path(__file__).parent / "corpus" / "scenarios.toml"
    if preset_path is None:
        preset_path = _default_preset_path()
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    registry: dict = {}
    for name, entry in raw.get("scenario", {}).items():
        augmentation = None
        preset_ref = entry.get("augmentation", "")
        if preset_ref:
            ref = Path(preset_ref)
            if not ref.is_absolute():
                ref = Path(path).parent / ref
            augmentation = load_preset(ref)
        registry[name] = Scenario(
            name=name,
            base_corpus=entry.get("base_corpus", "world3-03"),
            overrides=dict(entry.get("overrides", {})),
            augmentation=augmentation,
            description=entry.get("description", ""),
        )
    return registry


def resolve_scenario(name: str, registry: Mapping[str, Scenario] | None = None) -> Scenario:
    if registry is None:
        registry = load_registry()
    try:
        return registry[name]
    except KeyError:
        known = ", ".join(sorted(registry))
        raise UnknownScenario(f"unknown scenario {name!r} (known: {known})") from None


def run_scenario(scenario: Scenario | str, config: SimConfig | None = None,
                 spec: ModelSpec | None = None,
                 registry: Mapping[str, Scenario] | None = None) -> RunResult:
    """Run a scenario: overrides applied, augmentation spliced if present."""
    if isinstance(scenario, str):
        scenario = resolve_scenario(scenario, registry)
    if config is None:
        config = SimConfig()
    if spec is None:
        spec = load_world3_corpus()
    if scenario.augmentation is not None:
        spec = augment_model(spec, scenario.augmentation)
    if scenario.overrides:
        merged = dict(config.overrides)
        merged.update(scenario.overrides)
        config = SimConfig(t_start=config.t_start, t_end=config.t_end,
                           dt=config.dt, overrides=merged,
                           record_all=config.record_all)
    result = integrate_run(spec, config)
    result.scenario = scenario.name
    return result


def peak_metrics(series: Sequence[float], times: Sequence[float]) -> PeakMetrics:
    """Earliest maximum of a series plus the final value."""
    if not series:
        raise EmptySeries("cannot compute peak of an empty series")
    if len(series) != len(times):
        raise GridMismatch("series and times have different lengths")
    best = max(range(len(series)), key=lambda i: (series[i], -i))
    return PeakMetrics(peak_time=times[best], peak_value=series[best],
                       value_at_end=series[-1])


def _index_of_year(times: Sequence[float], year: float) -> int:
    """Nearest-sample index; the default grid contains integer years exactly."""
    return min(range(len(times)), key=lambda i: (abs(times[i] - year), i))


def pct_delta(base: float, other: float) -> Optional[float]:
    """Percent change from base, or None when the base is zero."""
    if base == 0:
        return None
    return 100.0 * (other - base) / base


def cumulative_overshoot(base: Sequence[float], other: Sequence[float],
                         times: Sequence[float], window: tuple) -> float:
    """Percent extra area of `other` over `base` in a time window.

    Trapezoidal integration on the shared grid; both series must share it.
    """
    if len(base) != len(times) or len(other) != len(times):
        raise GridMismatch("series lengths do not match the time grid")
    lo, hi = window
    if lo > hi or lo < times[0] or hi > times[-1]:
        raise WindowOutOfRange(f"window {window} outside [{times[0]}, {times[-1]}]")
    i0 = _index_of_year(times, lo)
    i1 = _index_of_year(times, hi)

    def trapz(series):
        total = 0.0
        for i in range(i0, i1):
            total += 0.5 * (series[i] + series[i + 1]) * (times[i + 1] - times[i])
        return total

    area_base = trapz(base)
    area_other = trapz(other)
    if area_base == 0:
        raise WindowOutOfRange("base series has zero area over the window")
    return 100.0 * (area_other - area_base) / area_base


def compare_runs(base: RunResult, other: RunResult, variable: str,
                 years: Sequence[int] = BENCHMARK_YEARS,
                 overshoot_window: Optional[tuple] = None) -> ComparisonReport:
    """Percent deltas at benchmark years plus peak/residue/overshoot metrics."""
    if list(base.times) != list(other.times):
        raise GridMismatch("runs were produced on different time grids")
    for run in (base, other):
        if variable not in run.series:
            raise UnknownVariable(f"variable {variable!r} not recorded in run "
                                  f"{run.scenario or '<unnamed>'!r}")
    sb = base.series[variable]
    so = other.series[variable]
    base_values, other_values, deltas = [], [], []
    for year in years:
        i = _index_of_year(base.times, year)
        base_values.append(sb[i])
        other_values.append(so[i])
        deltas.append(pct_delta(sb[i], so[i]))
    i2100 = _index_of_year(base.times, 2100)
    residue = pct_delta(sb[i2100], so[i2100]) if base.times[i2100] == 2100 else None
    overshoot = None
    if overshoot_window is not None:
        overshoot = cumulative_overshoot(sb, so, base.times, overshoot_window)
    return ComparisonReport(
        variable=variable,
        benchmark_years=tuple(years),
        base_values=tuple(base_values),
        other_values=tuple(other_values),
        pct_delta=tuple(deltas),
        peak_base=peak_metrics(sb, base.times),
        peak_other=peak_metrics(so, other.times),
        residue_delta_2100=residue,
        cumulative_overshoot_pct=overshoot,
        overshoot_window=tuple(overshoot_window) if overshoot_window else None,
    )
