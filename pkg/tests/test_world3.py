import hashlib
import math

import pytest

from limits_sd.engine import SimConfig, integrate_run
from limits_sd.world3 import (
    CORPUS_ENV_VAR, CORPUS_SHA256, CorpusCorrupt, FootprintBindings,
    NegativeComponent, PollutionSectorBindings, corpus_path,
    human_ecological_footprint, load_world3_corpus, pp_generation_agriculture,
    pp_generation_industry,
)


@pytest.fixture(scope="module")
def corpus():
    return load_world3_corpus()


@pytest.fixture(scope="module")
def bau(corpus):
    return integrate_run(corpus, SimConfig())


def sign_changes(values):
    diffs = [b - a for a, b in zip(values, values[1:])]
    diffs = [d for d in diffs if d != 0.0]
    return sum(1 for a, b in zip(diffs, diffs[1:]) if (a > 0) != (b > 0))


class TestCorpusLoading:
    def test_checksum_matches_bundled_file(self):
        digest = hashlib.sha256(corpus_path().read_bytes()).hexdigest()
        assert digest == CORPUS_SHA256

    def test_corrupt_corpus_detected(self, tmp_path):
        mutated = corpus_path().read_text().replace("0.05", "0.06", 1)
        bad = tmp_path / "w3.sdm"
        bad.write_text(mutated)
        with pytest.raises(CorpusCorrupt):
            load_world3_corpus(bad, verify_checksum=True)

    def test_env_override_skips_checksum(self, tmp_path, monkeypatch):
        copy = tmp_path / "w3.sdm"
        copy.write_text(corpus_path().read_text() + "# extra comment\n")
        monkeypatch.setenv(CORPUS_ENV_VAR, str(copy))
        spec = load_world3_corpus()
        assert "persistent_pollution" in spec.elements

    def test_required_hooks_present(self, corpus):
        for name in (
            "persistent_pollution_generation_rate",
            "industrial_output",
            "persistent_pollution",
            "persistent_pollution_index",
            "human_ecological_footprint",
            "population",
            "nonrenewable_resources",
            "arable_land",
        ):
            assert name in corpus.elements, name

    def test_sectors_assigned(self, corpus):
        sectors = {e.sector for e in corpus.elements.values()}
        for s in ("population", "capital", "resources", "agriculture",
                  "pollution", "footprint"):
            assert s in sectors


class TestStandaloneEquations:
    def test_industry_term_matches_simulation(self, corpus, bau):
        i = 200
        b = PollutionSectorBindings(
            population=bau.series["population"][i],
            per_capita_resource_use_multiplier=bau.series["per_capita_resource_use_multiplier"][i],
            fraction_resources_persistent=bau.series["fraction_resources_persistent"][i],
            industrial_materials_emission_factor=bau.series["industrial_materials_emission_factor"][i],
            industrial_materials_toxicity_index=bau.series["industrial_materials_toxicity_index"][i],
            arable_land=bau.series["arable_land"][i],
            agricultural_inputs_per_hectare=bau.series["agricultural_inputs_per_hectare"][i],
            fraction_agricultural_inputs_persistent=bau.series["fraction_agricultural_inputs_persistent"][i],
            agricultural_materials_toxicity_index=bau.series["agricultural_materials_toxicity_index"][i],
        )
        total = pp_generation_industry(b) + pp_generation_agriculture(b)
        assert total == pytest.approx(
            bau.series["persistent_pollution_generation_rate"][i], rel=1e-12)

    def test_footprint_matches_simulation(self, corpus, bau):
        i = 240
        k = corpus.element("pollution_absorption_land_factor").value
        # the corpus works in gigahectares; the standalone function in hectares
        norm = corpus.element("land_normalization_gha").value * 1e9
        f = FootprintBindings(
            arable_land_footprint=bau.series["arable_land"][i],
            urban_land_footprint=bau.series["urban_industrial_land"][i],
            persistent_pollution_generation_rate=bau.series["persistent_pollution_generation_rate"][i],
            k_absorption=k,
            normalization=norm,
        )
        assert human_ecological_footprint(f) == pytest.approx(
            bau.series["human_ecological_footprint"][i], rel=1e-12)

    def test_footprint_negative_component_rejected(self):
        f = FootprintBindings(
            arable_land_footprint=-1.0, urban_land_footprint=0.0,
            persistent_pollution_generation_rate=0.0,
            k_absorption=1.0, normalization=1e9)
        with pytest.raises(NegativeComponent):
            human_ecological_footprint(f)

    def test_footprint_increases_with_generation(self):
        def hef(rate):
            return human_ecological_footprint(FootprintBindings(
                arable_land_footprint=1e9, urban_land_footprint=1e8,
                persistent_pollution_generation_rate=rate,
                k_absorption=2.0, normalization=1.91e9))
        assert hef(2e8) > hef(1e8) > hef(0.0)


class TestReferenceBehavior:
    def test_all_series_finite_and_nonnegative(self, bau):
        for name, values in bau.series.items():
            assert all(math.isfinite(v) for v in values), name
        for name in ("population", "industrial_output", "persistent_pollution",
                     "nonrenewable_resources", "food", "arable_land"):
            assert all(v >= 0.0 for v in bau.series[name]), name

    def test_population_rises_then_declines(self, bau):
        pop = bau.series["population"]
        peak = max(range(len(pop)), key=pop.__getitem__)
        assert 2000 < bau.times[peak] < 2100
        assert pop[peak] > pop[0] and pop[-1] < pop[peak]
        assert 5e9 < max(pop) < 12e9

    def test_industrial_output_rises_then_declines(self, bau):
        io = bau.series["industrial_output"]
        peak = max(range(len(io)), key=io.__getitem__)
        assert 0 < peak < len(io) - 1
        assert bau.times[peak] < 2100
        assert io[-1] < io[peak]

    def test_resources_monotonically_depleted(self, bau):
        nr = bau.series["nonrenewable_resources"]
        assert all(b <= a for a, b in zip(nr, nr[1:]))
        assert nr[-1] < nr[0]

    def test_pollution_unimodal_with_21st_century_peak(self, bau):
        pp = bau.series["persistent_pollution"]
        peak = max(range(len(pp)), key=pp.__getitem__)
        assert 2000 < bau.times[peak] < 2100
        assert sign_changes(pp) <= 1

    def test_footprint_crosses_one_before_2000(self, bau):
        hef = bau.series["human_ecological_footprint"]
        crossing = next(t for t, v in zip(bau.times, hef) if v >= 1.0)
        assert crossing < 2000
        assert hef[0] < 1.0

    def test_run_is_deterministic(self, corpus):
        a = integrate_run(corpus, SimConfig())
        b = integrate_run(corpus, SimConfig())
        assert a.series == b.series

    def test_warnings_only_lookup_bounds(self, bau):
        assert all(kind == "LOOKUP_BOUNDS" for _, _, kind, _ in bau.warnings)
