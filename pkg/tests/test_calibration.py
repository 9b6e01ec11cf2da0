import math

import pytest

from limits_sd.augment import AiParams
from limits_sd.calibrate import (
    DEFAULT_DELTA_TARGETS, BENCHMARK_YEARS, BudgetExhaustedWithoutImprovement,
    CalibrationTarget, Coordinate, Objective, ParamBounds,
    _golden_section, calibrate_ai_params,
)
from limits_sd.engine import ModelError
from limits_sd.world3 import load_world3_corpus


class TestGoldenSection:
    def test_quadratic_minimum_found(self):
        x, fx, evals = _golden_section(lambda x: (x - 1.7) ** 2, 0.0, 5.0, 60)
        assert x == pytest.approx(1.7, abs=1e-4)
        assert fx == pytest.approx(0.0, abs=1e-7)
        assert evals <= 60

    def test_budget_respected_exactly(self):
        calls = []
        _golden_section(lambda x: (calls.append(x), x * x)[1], -1, 1, 7)
        assert len(calls) == 7

    def test_zero_budget(self):
        x, fx, evals = _golden_section(lambda x: x, 0, 1, 0)
        assert x is None and evals == 0 and fx == math.inf

    def test_never_evaluates_outside_interval(self):
        seen = []
        _golden_section(lambda x: (seen.append(x), abs(x))[1], 2.0, 3.0, 40)
        assert all(2.0 <= x <= 3.0 for x in seen)

    def test_deterministic(self):
        f = lambda x: math.sin(3 * x) + 0.1 * x
        assert _golden_section(f, 0, 4, 30) == _golden_section(f, 0, 4, 30)


class TestCoordinate:
    def test_linear_midpoint(self):
        assert Coordinate("a", 2.0, 6.0).midpoint() == 4.0

    def test_log_midpoint_is_geometric(self):
        assert Coordinate("a", 0.01, 1.0, log=True).midpoint() == pytest.approx(0.1)

    def test_internal_round_trip(self):
        c = Coordinate("a", 1e-4, 1e-1, log=True)
        assert c.from_internal(c.to_internal(3e-3)) == pytest.approx(3e-3)

    def test_bad_bounds_rejected(self):
        with pytest.raises(ModelError):
            Coordinate("a", 2.0, 1.0)
        with pytest.raises(ModelError):
            Coordinate("a", 0.0, 1.0, log=True)


class TestParamBounds:
    def test_combined_coefficient_split(self):
        b = ParamBounds()
        vec = [1e-3, 0.3, 0.01, 0.05, 0.2]
        p = b.to_params(vec)
        assert p.fioai == 0.05  # pinned, not searched
        assert p.ewaste_coeff_initial == pytest.approx(3e-4)
        assert p.carbon_coeff_initial == pytest.approx(7e-4)
        assert p.conversion_const == 1.0
        assert p.activation_year == 2020.0

    def test_start_vector_inside_box(self):
        b = ParamBounds()
        for c, x in zip(b.coordinates, b.start_vector()):
            assert c.lower <= x <= c.upper


class TestCalibrationTarget:
    def test_defaults_are_benchmark_deltas(self):
        t = CalibrationTarget()
        assert t.years == BENCHMARK_YEARS
        assert t.target_pct == DEFAULT_DELTA_TARGETS
        assert t.effective_weights() == (1.0,) * 5

    def test_weight_length_mismatch(self):
        t = CalibrationTarget(weights=(1.0, 2.0))
        with pytest.raises(ModelError):
            t.effective_weights()


class _QuadraticObjective:
    """Deterministic stand-in: minimum at combined=2e-3, floor=0.2."""

    def __init__(self, n_years=5):
        self.evaluations = 0
        self.n_years = n_years

    def __call__(self, p: AiParams) -> float:
        self.evaluations += 1
        combined = p.carbon_coeff_initial + p.ewaste_coeff_initial
        return ((p.coeff_floor - 0.2) ** 2
                + (math.log10(combined) - math.log10(2e-3)) ** 2)

    def achieved_deltas(self, p: AiParams) -> tuple:
        return tuple(0.0 for _ in range(self.n_years))


class TestCoordinateDescent:
    def test_converges_on_quadratic(self):
        report = calibrate_ai_params(objective=_QuadraticObjective(), budget=400)
        assert report.params.coeff_floor == pytest.approx(0.2, abs=1e-3)
        combined = (report.params.carbon_coeff_initial
                    + report.params.ewaste_coeff_initial)
        assert combined == pytest.approx(2e-3, rel=1e-2)
        assert report.objective < 1e-5

    def test_accepted_objectives_non_increasing(self):
        report = calibrate_ai_params(objective=_QuadraticObjective(), budget=300)
        acc = report.accepted_objectives
        assert all(b <= a for a, b in zip(acc, acc[1:]))
        assert report.objective == acc[-1]

    def test_budget_never_exceeded(self):
        obj = _QuadraticObjective()
        report = calibrate_ai_params(objective=obj, budget=37)
        assert obj.evaluations <= 37
        assert report.evaluations == obj.evaluations

    def test_zero_budget_raises_with_report(self):
        with pytest.raises(BudgetExhaustedWithoutImprovement) as exc:
            calibrate_ai_params(objective=_QuadraticObjective(), budget=0)
        report = exc.value.report
        assert report.evaluations == 0
        assert math.isinf(report.objective)

    def test_deterministic(self):
        a = calibrate_ai_params(objective=_QuadraticObjective(), budget=200)
        b = calibrate_ai_params(objective=_QuadraticObjective(), budget=200)
        assert a.params == b.params
        assert a.accepted_objectives == b.accepted_objectives


@pytest.fixture(scope="module")
def corpus():
    return load_world3_corpus()


class TestModelObjective:
    def test_target_year_off_grid_rejected(self, corpus):
        with pytest.raises(ModelError):
            Objective(CalibrationTarget(years=(2020.25,), target_pct=(1.0,)),
                      spec=corpus)

    def test_unknown_variable_rejected(self, corpus):
        with pytest.raises(ModelError):
            Objective(CalibrationTarget(variable="nope"), spec=corpus)

    def test_null_params_give_zero_deltas(self, corpus):
        obj = Objective(CalibrationTarget(), spec=corpus)
        null = AiParams(fioai=0.0, carbon_coeff_initial=0.0,
                        ewaste_coeff_initial=0.0, carbon_decline_rate=0.0,
                        ewaste_decline_rate=0.0, coeff_floor=0.5,
                        conversion_const=1.0)
        assert obj.achieved_deltas(null) == (0.0,) * 5
        assert obj(null) == pytest.approx(
            sum(t ** 2 for t in DEFAULT_DELTA_TARGETS))

    def test_repeated_evaluation_is_stable(self, corpus):
        obj = Objective(CalibrationTarget(), spec=corpus)
        p = AiParams(fioai=0.05, carbon_coeff_initial=7e-4,
                     ewaste_coeff_initial=3e-4, carbon_decline_rate=0.01,
                     ewaste_decline_rate=0.1, coeff_floor=0.5,
                     conversion_const=1.0)
        assert obj.achieved_deltas(p) == obj.achieved_deltas(p)

    def test_synthetic_round_trip_two_coordinates(self, corpus):
        # recover known fioai/combined from targets they generated, with the
        # remaining parameters pinned at the truth
        truth = AiParams(fioai=0.08, carbon_coeff_initial=1.4e-3,
                         ewaste_coeff_initial=6e-4, carbon_decline_rate=0.02,
                         ewaste_decline_rate=0.08, coeff_floor=0.3,
                         conversion_const=1.0)
        probe = Objective(CalibrationTarget(), spec=corpus)
        synthetic = probe.achieved_deltas(truth)
        target = CalibrationTarget(target_pct=synthetic)
        bounds = ParamBounds(
            coordinates=(
                Coordinate("fioai", 0.005, 0.5, log=True),
                Coordinate("combined_coeff_initial", 1e-5, 3e-2, log=True),
            ),
            fixed={"ewaste_share": 0.3, "carbon_decline_rate": 0.02,
                   "ewaste_decline_rate": 0.08, "coeff_floor": 0.3,
                   "conversion_const": 1.0, "activation_year": 2020.0})
        report = calibrate_ai_params(
            target=target, bounds=bounds, budget=200,
            objective=Objective(target, spec=corpus))
        assert report.max_abs_residual() <= 0.1

    def test_summary_lines_mention_each_year(self, corpus):
        obj = Objective(CalibrationTarget(), spec=corpus)
        report = calibrate_ai_params(objective=obj, budget=40)
        text = "\n".join(report.summary_lines())
        for year in BENCHMARK_YEARS:
            assert str(year) in text
