"""Deterministic recovery of AI-pathway parameters from delta targets.

The search is a derivative-free coordinate descent: golden-section line
searches along one bounded coordinate at a time, sweeping coordinates in a
fixed order from a fixed start point (the box midpoint). No randomness is
involved anywhere, so identical inputs give identical results.

Coordinates are not raw AiParams fields one-to-one: the two intensity
coefficients are searched as a combined initial coefficient plus an e-waste
share, which removes the worst identifiability degeneracy (the two
coefficients enter the flow as a sum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .augment import AiParams, augment_model
from .engine import CompiledModel, ModelError, ModelSpec, SimConfig, integrate_run
from .world3 import CORPUS_SHA256, load_world3_corpus

BENCHMARK_YEARS = (2020, 2040, 2060, 2080, 2100)
DEFAULT_DELTA_TARGETS = (0.94, 3.77, 21.69, 37.31, 45.35)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BudgetExhaustedWithoutImprovement(ModelError):
    """The evaluation budget ran out before any accepted improvement."""

    def __init__(self, message: str, report: "CalibrationReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class CalibrationTarget:
    variable: str = "persistent_pollution"
    years: tuple = BENCHMARK_YEARS
    target_pct: tuple = DEFAULT_DELTA_TARGETS
    weights: tuple = ()

    def effective_weights(self) -> tuple:
        if self.weights:
            if len(self.weights) != len(self.years):
                raise ModelError("weights length does not match years")
            return self.weights
        return tuple(1.0 for _ in self.years)


@dataclass(frozen=True)
class Coordinate:
    """One search dimension: a bounded interval, optionally log-scaled."""

    name: str
    lower: float
    upper: float
    log: bool = False

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ModelError(f"coordinate {self.name}: lower > upper")
        if self.log and self.lower <= 0:
            raise ModelError(f"coordinate {self.name}: log scale needs lower > 0")

    def midpoint(self) -> float:
        if self.log:
            return 10 ** ((math.log10(self.lower) + math.log10(self.upper)) / 2)
        return (self.lower + self.upper) / 2

    def to_internal(self, x: float) -> float:
        return math.log10(x) if self.log else x

    def from_internal(self, u: float) -> float:
        return 10 ** u if self.log else u


@dataclass(frozen=True)
class ParamBounds:
    """Search box. Coordinates are searched; fixed fields are pinned."""

    coordinates: tuple = (
        Coordinate("combined_coeff_initial", 1e-5, 3e-2, log=True),
        Coordinate("ewaste_share", 0.10, 0.50),
        Coordinate("carbon_decline_rate", 0.0, 0.5),
        Coordinate("ewaste_decline_rate", 0.0, 0.4),
        Coordinate("coeff_floor", 0.01, 0.9),
    )
    # fioai multiplies the same product as the combined coefficient, so
    # searching both would be exactly degenerate; it is pinned instead.
    fixed: Mapping[str, float] = field(default_factory=lambda: {
        "fioai": 0.05,
        "conversion_const": 1.0,
        "activation_year": 2020.0,
    })

    def start_vector(self) -> tuple:
        return tuple(c.midpoint() for c in self.coordinates)

    def to_params(self, vector: Sequence[float]) -> AiParams:
        values = dict(self.fixed)
        values.update(zip((c.name for c in self.coordinates), vector))
        if "combined_coeff_initial" in values:
            combined = values.pop("combined_coeff_initial")
            share = values.pop("ewaste_share", 0.3)
            values["ewaste_coeff_initial"] = combined * share
            values["carbon_coeff_initial"] = combined * (1.0 - share)
        return AiParams(**values)


@dataclass
class CalibrationReport:
    params: AiParams
    achieved_pct: tuple
    residuals: tuple
    objective: float
    start_objective: float
    accepted_objectives: tuple    # non-increasing sequence
    evaluations: int
    budget: int
    target: CalibrationTarget
    corpus_checksum: str = CORPUS_SHA256

    def max_abs_residual(self) -> float:
        return max(abs(r) for r in self.residuals)

    def summary_lines(self) -> list:
        lines = [
            f"objective: {self.objective:.6g} (start {self.start_objective:.6g})",
            f"evaluations: {self.evaluations} / budget {self.budget}",
            f"corpus: sha256 {self.corpus_checksum}",
            f"{'year':>6} {'target%':>9} {'achieved%':>10} {'residual':>9}",
        ]
        for year, tgt, got, res in zip(self.target.years, self.target.target_pct,
                                       self.achieved_pct, self.residuals):
            lines.append(f"{year:>6} {tgt:>9.2f} {got:>10.2f} {res:>+9.2f}")
        return lines


class Objective:
    """Weighted squared error of achieved vs target percent deltas.

    The unaugmented baseline run and the compiled augmented model are both
    prepared once; each candidate is evaluated by overriding the AI
    constants, so one call costs a single simulation.
    """

    def __init__(self, target: CalibrationTarget,
                 spec: ModelSpec | None = None,
                 config: SimConfig | None = None):
        self.target = target
        self.config = config or SimConfig()
        self.spec = spec if spec is not None else load_world3_corpus()
        base = integrate_run(self.spec, self.config)
        if target.variable not in base.series:
            raise ModelError(f"unknown target variable {target.variable!r}")
        self._indices = []
        for year in target.years:
            idx = round((year - self.config.t_start) / self.config.dt)
            if not 0 <= idx < len(base.times) or base.times[idx] != year:
                raise ModelError(f"target year {year} not on the simulation grid")
            self._indices.append(idx)
        self._base_values = [base.series[target.variable][i] for i in self._indices]
        placeholder = AiParams(fioai=0.0, carbon_coeff_initial=0.0,
                               ewaste_coeff_initial=0.0, carbon_decline_rate=0.0,
                               ewaste_decline_rate=0.0, coeff_floor=0.5,
                               conversion_const=1.0)
        self._aug_spec = augment_model(self.spec, placeholder)
        self._compiled = CompiledModel(self._aug_spec)
        self.evaluations = 0

    def achieved_deltas(self, p: AiParams) -> tuple:
        overrides = dict(self.config.overrides)
        overrides.update({
            "ai_fioai": p.fioai,
            "ai_carbon_coeff_initial": p.carbon_coeff_initial,
            "ai_ewaste_coeff_initial": p.ewaste_coeff_initial,
            "ai_carbon_decline_rate": p.carbon_decline_rate,
            "ai_ewaste_decline_rate": p.ewaste_decline_rate,
            "ai_coeff_floor": p.coeff_floor,
            "ai_conversion_const": p.conversion_const,
            "ai_activation_year": p.activation_year,
        })
        cfg = SimConfig(t_start=self.config.t_start, t_end=self.config.t_end,
                        dt=self.config.dt, overrides=overrides,
                        record_all=self.config.record_all)
        run = integrate_run(self._aug_spec, cfg, compiled=self._compiled)
        series = run.series[self.target.variable]
        return tuple(100.0 * (series[i] - b) / b
                     for i, b in zip(self._indices, self._base_values))

    def __call__(self, p: AiParams) -> float:
        self.evaluations += 1
        try:
            achieved = self.achieved_deltas(p)
        except ModelError:
            return math.inf
        weights = self.target.effective_weights()
        return sum(w * (a - t) ** 2
                   for w, a, t in zip(weights, achieved, self.target.target_pct))


def _golden_section(fn, lo: float, hi: float, budget: int, tol: float = 1e-6):
    """Golden-section minimization on [lo, hi] within an evaluation budget.

    Returns (best_x, best_f, evals_used). Deterministic; never evaluates
    outside the interval.
    """
    evals = 0
    if budget <= 0 or hi - lo <= tol:
        return None, math.inf, 0
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = fn(c); evals += 1
    if evals >= budget:
        return c, fc, evals
    fd = fn(d); evals += 1
    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    while evals < budget and (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c); evals += 1
            if fc < best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d); evals += 1
            if fd < best_f:
                best_x, best_f = d, fd
    return best_x, best_f, evals


def _solve_linear(matrix, rhs):
    """Solve a small dense linear system by Gaussian elimination."""
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[pivot][col]) < 1e-300:
            raise ZeroDivisionError("singular system")
        a[col], a[pivot] = a[pivot], a[col]
        inv = 1.0 / a[col][col]
        for r in range(n):
            if r == col:
                continue
            factor = a[r][col] * inv
            for c in range(col, n + 1):
                a[r][c] -= factor * a[col][c]
    return [a[i][n] / a[i][i] for i in range(n)]


def calibrate_ai_params(target: CalibrationTarget | None = None,
                        bounds: ParamBounds | None = None,
                        budget: int = 500,
                        objective: Objective | None = None,
                        line_search_budget: int = 10,
                        sweep_tol: float = 1e-9,
                        window_shrink: float = 0.5,
                        window_min: float = 1e-7) -> CalibrationReport:
    """Fit AiParams to percent-delta targets within an evaluation budget.

    Deterministic throughout. A low-discrepancy scan of the bounds box
    picks the starting basin (the residual surface is multimodal), then
    the optimizer alternates two phases until a full cycle stops
    improving: coordinate descent with golden-section line searches
    inside geometrically shrinking trust windows, plus a pattern move
    along each sweep's net displacement (diagonal valleys defeat pure
    coordinate steps); and, when the objective exposes residual vectors,
    a damped Gauss-Newton (Levenberg-Marquardt) refinement with
    finite-difference Jacobians. Every phase only accepts improvements,
    so the accepted-objective sequence is non-increasing, and the total
    model-evaluation count never exceeds ``budget``.
    """
    target = target or CalibrationTarget()
    bounds = bounds or ParamBounds()
    if objective is None:
        objective = Objective(target)

    def spend_limit():
        return budget - objective.evaluations

    vector = list(bounds.start_vector())
    accepted = []
    start_obj = math.inf
    if spend_limit() > 0:
        start_obj = objective(bounds.to_params(vector))
        accepted.append(start_obj)
    best_obj = start_obj
    improved_ever = False

    def to_internal_vec(vec):
        return [c.to_internal(x) for c, x in zip(bounds.coordinates, vec)]

    def from_internal_vec(u):
        return [c.from_internal(x) for c, x in zip(bounds.coordinates, u)]

    def pattern_move(before, after):
        """Line search along the sweep displacement (Powell-style)."""
        u0 = to_internal_vec(before)
        u1 = to_internal_vec(after)
        direction = [b - a for a, b in zip(u0, u1)]
        if all(d == 0.0 for d in direction):
            return None, math.inf
        s_max = 3.0
        for (a, d, coord) in zip(u1, direction, bounds.coordinates):
            lo = coord.to_internal(coord.lower)
            hi = coord.to_internal(coord.upper)
            if d > 0:
                s_max = min(s_max, (hi - a) / d)
            elif d < 0:
                s_max = min(s_max, (lo - a) / d)
        if s_max <= 0:
            return None, math.inf

        def along(s):
            return objective(bounds.to_params(from_internal_vec(
                [a + s * d for a, d in zip(u1, direction)])))

        s, fs, _ = _golden_section(
            along, 0.0, s_max, min(line_search_budget, spend_limit()))
        if s is None:
            return None, math.inf
        return from_internal_vec(
            [a + s * d for a, d in zip(u1, direction)]), fs

    spans = [coord.to_internal(coord.upper) - coord.to_internal(coord.lower)
             for coord in bounds.coordinates]
    refine_reserve = (len(bounds.coordinates) + 2) * 8 \
        if isinstance(objective, Objective) else 0

    def descend(width_scale):
        """One round of shrinking-window coordinate sweeps; True if improved."""
        nonlocal vector, best_obj, improved_ever
        improved_round = False
        widths = [s * width_scale for s in spans]
        while spend_limit() > refine_reserve and any(
                w > window_min * s for w, s in zip(widths, spans)):
            improved_this_sweep = False
            sweep_start = list(vector)
            for ci, coord in enumerate(bounds.coordinates):
                remaining = spend_limit() - refine_reserve
                if remaining <= 0:
                    break
                full_lo = coord.to_internal(coord.lower)
                full_hi = coord.to_internal(coord.upper)
                center = coord.to_internal(vector[ci])
                lo = max(full_lo, center - widths[ci] / 2)
                hi = min(full_hi, center + widths[ci] / 2)

                def line_fn(u, _ci=ci, _coord=coord):
                    trial = list(vector)
                    trial[_ci] = _coord.from_internal(u)
                    return objective(bounds.to_params(trial))

                x, fx, _ = _golden_section(
                    line_fn, lo, hi, min(line_search_budget, remaining))
                if x is not None and fx < best_obj - sweep_tol:
                    vector[ci] = coord.from_internal(x)
                    best_obj = fx
                    accepted.append(fx)
                    improved_this_sweep = True
                    improved_ever = True
                    improved_round = True
            if improved_this_sweep and spend_limit() > refine_reserve:
                moved, fm = pattern_move(sweep_start, vector)
                if moved is not None and fm < best_obj - sweep_tol:
                    vector = moved
                    best_obj = fm
                    accepted.append(fm)
            if improved_this_sweep:
                widths = [w * window_shrink for w in widths]
            else:
                widths = [w * window_shrink ** 2 for w in widths]
            if not improved_this_sweep and not any(
                    w > window_min * s for w, s in zip(widths, spans)):
                break
        return improved_round

    # phase 0: deterministic low-discrepancy scan (Kronecker sequence) to
    # pick the starting basin; the residual surface is multimodal
    if math.isfinite(best_obj):
        n_scan = min(64, budget // 8)
        primes = (2, 3, 5, 7, 11, 13, 17, 19)[:len(bounds.coordinates)]
        internal_lo = [c.to_internal(c.lower) for c in bounds.coordinates]
        for k in range(1, n_scan):
            if spend_limit() <= refine_reserve:
                break
            z = [(0.5 + k * math.sqrt(p)) % 1.0 for p in primes]
            trial = [c.from_internal(lo + zj * s) for c, lo, zj, s in
                     zip(bounds.coordinates, internal_lo, z, spans)]
            ftrial = objective(bounds.to_params(trial))
            if ftrial < best_obj - sweep_tol:
                vector = trial
                best_obj = ftrial
                accepted.append(ftrial)
                improved_ever = True

    # alternate descent and refinement until a full cycle stops helping
    if math.isfinite(best_obj):
        cycle = 0
        while spend_limit() > 0:
            improved_cycle = descend(1.0 if cycle == 0 else 0.0625)
            if isinstance(objective, Objective):
                vector, best_obj, extra, lm_improved = _lm_refine(
                    objective, bounds, target, vector, best_obj,
                    spend_limit, sweep_tol)
                accepted.extend(extra)
                improved_ever = improved_ever or lm_improved
                improved_cycle = improved_cycle or lm_improved
            if not improved_cycle:
                break
            cycle += 1

    params = bounds.to_params(vector)
    if math.isfinite(best_obj):
        achieved = objective.achieved_deltas(params)
    else:
        achieved = tuple(math.nan for _ in target.years)
    residuals = tuple(a - t for a, t in zip(achieved, target.target_pct))
    report = CalibrationReport(
        params=params, achieved_pct=achieved, residuals=residuals,
        objective=best_obj, start_objective=start_obj,
        accepted_objectives=tuple(accepted),
        evaluations=objective.evaluations, budget=budget, target=target)
    if not improved_ever:
        raise BudgetExhaustedWithoutImprovement(
            f"no improvement within {budget} evaluations", report)
    return report


def _lm_refine(objective: Objective, bounds: ParamBounds,
               target: CalibrationTarget, vector, best_obj,
               spend_limit, tol):
    """Damped Gauss-Newton polish using finite-difference Jacobians.

    Works in internal (log-aware) coordinates clipped to the bounds box.
    Residual evaluations are charged against the shared budget. Returns
    (vector, objective value, accepted improvements, improved flag).
    """
    coords = bounds.coordinates
    n = len(coords)
    weights = target.effective_weights()
    los = [c.to_internal(c.lower) for c in coords]
    his = [c.to_internal(c.upper) for c in coords]

    def clip(u):
        return [min(hi, max(lo, x)) for x, lo, hi in zip(u, los, his)]

    def residuals_at(u):
        objective.evaluations += 1
        params = bounds.to_params(
            [c.from_internal(x) for c, x in zip(coords, u)])
        achieved = objective.achieved_deltas(params)
        return [a - t for a, t in zip(achieved, target.target_pct)]

    def ssq(r):
        return sum(w * x * x for w, x in zip(weights, r))

    u = [c.to_internal(x) for c, x in zip(coords, vector)]
    accepted = []
    improved = False
    lam = 1e-3
    h = 1e-5
    if spend_limit() <= n + 1:
        return vector, best_obj, accepted, improved
    r0 = residuals_at(u)
    current = ssq(r0)
    if current < best_obj - tol:
        best_obj = current
        accepted.append(current)
        improved = True
    for _ in range(40):
        if spend_limit() <= n + 1:
            break
        jac = []
        for j in range(n):
            step = h * max(abs(his[j] - los[j]), 1e-12)
            probe = list(u)
            probe[j] = min(his[j], probe[j] + step)
            actual = probe[j] - u[j]
            if actual == 0.0:
                probe[j] = u[j] - step
                actual = -step
            rj = residuals_at(probe)
            jac.append([(b - a) / actual for a, b in zip(r0, rj)])
        # normal equations of the weighted least-squares step
        jtj = [[sum(w * jac[p][k] * jac[q][k]
                    for k, w in enumerate(weights)) for q in range(n)]
               for p in range(n)]
        jtr = [sum(w * jac[p][k] * r0[k] for k, w in enumerate(weights))
               for p in range(n)]
        stepped = False
        for _ in range(6):
            if spend_limit() <= 0:
                break
            damped = [[jtj[p][q] + (lam if p == q else 0.0)
                       for q in range(n)] for p in range(n)]
            try:
                delta = _solve_linear(damped, jtr)
            except ZeroDivisionError:
                lam *= 10.0
                continue
            trial = clip([a - d for a, d in zip(u, delta)])
            r_trial = residuals_at(trial)
            f_trial = ssq(r_trial)
            if f_trial < current - tol:
                u, r0, current = trial, r_trial, f_trial
                lam = max(lam * 0.3, 1e-12)
                stepped = True
                if current < best_obj - tol:
                    best_obj = current
                    accepted.append(current)
                    improved = True
                break
            lam *= 10.0
        if not stepped:
            break
    return ([c.from_internal(x) for c, x in zip(coords, u)],
            best_obj, accepted, improved)
