"""Tests for domain types, trial bookkeeping, and scenario generation."""

import json

import numpy as np
import pytest
from scipy.special import expit

from simlab.core import (
    CovariateProfile,
    CovariateSpec,
    ScenarioSpec,
    TreatmentArm,
    TrialState,
    apply_assignment,
    design_matrix,
    generate_covariates,
    response_probability,
    simulate_response,
)
from simlab.covadaptive import default_discretizer
from simlab.errors import InvalidParameterError, ScenarioError
from simlab.rng import RngStream

from conftest import random_profile


def make_scenario(**overrides):
    doc = {
        "name": "toy",
        "n": 40,
        "covariates": [
            {"kind": "bernoulli", "p": 0.5},
            {"kind": "discrete_uniform", "low": 30, "high": 75},
            {"kind": "normal", "mean": 200.0, "sd": 20.0},
        ],
        "theta_a": [-1.652, -0.810, 0.038, 0.001],
        "theta_b": [-1.652, -0.810, 0.038, 0.001],
        "burn_in": 10,
        "seed": 1,
    }
    doc.update(overrides)
    return ScenarioSpec.from_dict(doc)


class TestTreatmentArm:
    def test_signs(self):
        assert TreatmentArm.A.sign == 1
        assert TreatmentArm.B.sign == -1
        assert TreatmentArm.from_sign(1) is TreatmentArm.A
        assert TreatmentArm.from_sign(-1) is TreatmentArm.B

    def test_bad_sign(self):
        with pytest.raises(InvalidParameterError):
            TreatmentArm.from_sign(0)


class TestCovariateProfile:
    def test_design_row(self):
        profile = CovariateProfile(1, 44, 190.5)
        assert np.array_equal(profile.design_row(), [1.0, 1.0, 44.0, 190.5])

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            CovariateProfile(2, 44, 190.5)
        with pytest.raises(InvalidParameterError):
            CovariateProfile(0, 20, 190.5)
        with pytest.raises(InvalidParameterError):
            CovariateProfile(0, 44, float("nan"))


class TestTrialState:
    def test_incremental_counts_match_recount(self):
        rng = np.random.default_rng(5)
        state = TrialState(default_discretizer())
        for _ in range(60):
            profile = random_profile(rng)
            arm = TreatmentArm.A if rng.random() < 0.5 else TreatmentArm.B
            apply_assignment(state, profile, arm, int(rng.random() < 0.4))
        assert state.n_assigned == 60
        assert state.counts_equal(state.recount())

    def test_margin_counts_track_levels(self):
        d = default_discretizer()
        state = TrialState(d)
        profile = CovariateProfile(1, 60, 210.0)  # levels (1, 1, 1)
        apply_assignment(state, profile, TreatmentArm.A)
        assert state.margin_counts[0][1] == [1, 0]
        assert state.margin_counts[1][1] == [1, 0]
        assert state.margin_counts[2][1] == [1, 0]
        assert state.margin_counts[0][0] == [0, 0]

    def test_failure_count_only_on_zero_response(self):
        state = TrialState(None)
        profile = CovariateProfile(0, 40, 180.0)
        apply_assignment(state, profile, TreatmentArm.A, response=0)
        apply_assignment(state, profile, TreatmentArm.B, response=1)
        apply_assignment(state, profile, TreatmentArm.B, response=None)
        assert state.failures == 1
        assert state.n_a == 1 and state.n_b == 2


class TestScenarioSpec:
    def test_roundtrip(self):
        scenario = make_scenario()
        again = ScenarioSpec.from_json(json.dumps(scenario.to_dict()))
        assert again == scenario

    def test_missing_keys(self):
        with pytest.raises(ScenarioError):
            ScenarioSpec.from_dict({"name": "x", "n": 10})

    def test_burn_in_bounds(self):
        with pytest.raises(ScenarioError):
            make_scenario(burn_in=40)
        with pytest.raises(ScenarioError):
            make_scenario(burn_in=-1)

    def test_theta_length(self):
        with pytest.raises(ScenarioError):
            make_scenario(theta_a=[0.0, 1.0])

    def test_covariate_kind_order(self):
        with pytest.raises(ScenarioError):
            make_scenario(
                covariates=[
                    {"kind": "normal", "mean": 0.0, "sd": 1.0},
                    {"kind": "discrete_uniform", "low": 30, "high": 75},
                    {"kind": "normal", "mean": 200.0, "sd": 20.0},
                ]
            )

    def test_covariate_param_validation(self):
        with pytest.raises(ScenarioError):
            CovariateSpec("bernoulli", {"p": 1.5})
        with pytest.raises(ScenarioError):
            CovariateSpec("discrete_uniform", {"low": 10, "high": 5})
        with pytest.raises(ScenarioError):
            CovariateSpec("normal", {"mean": 0.0, "sd": 0.0})
        with pytest.raises(ScenarioError):
            CovariateSpec("poisson", {"lam": 3.0})


class TestGeneration:
    def test_generate_covariates_reproducible(self):
        scenario = make_scenario()
        a = generate_covariates(scenario, RngStream(1, 0))
        b = generate_covariates(scenario, RngStream(1, 0))
        assert a == b
        assert len(a) == scenario.n

    def test_generated_values_in_domain(self):
        scenario = make_scenario(n=500)
        profiles = generate_covariates(scenario, RngStream(9, 0))
        assert all(p.z1 in (0, 1) for p in profiles)
        assert all(30 <= p.z2 <= 75 for p in profiles)
        # both binary levels occur at n=500, p=1/2
        assert {p.z1 for p in profiles} == {0, 1}

    def test_design_matrix_layout(self):
        profiles = [CovariateProfile(0, 30, 150.0), CovariateProfile(1, 75, 250.0)]
        X = design_matrix(profiles)
        assert X.shape == (2, 4)
        assert np.array_equal(X[:, 0], [1.0, 1.0])
        assert np.array_equal(X[1], [1.0, 1.0, 75.0, 250.0])

    def test_response_probability_matches_expit(self):
        theta = (-1.402, -0.810, 0.038, 0.001)
        profile = CovariateProfile(1, 52, 205.0)
        expected = expit(np.array([1.0, 1.0, 52.0, 205.0]) @ np.array(theta))
        assert response_probability(theta, profile) == pytest.approx(expected, abs=1e-15)

    def test_response_probability_validates_theta(self):
        profile = CovariateProfile(0, 40, 200.0)
        with pytest.raises(InvalidParameterError):
            response_probability((0.0, 1.0), profile)
        with pytest.raises(InvalidParameterError):
            response_probability((0.0, 1.0, float("inf"), 0.0), profile)

    def test_simulate_response_consumes_one_uniform(self):
        profile = CovariateProfile(0, 40, 200.0)
        theta = (0.25, 0.0, 0.0, 0.0)
        stream = RngStream(3, 1)
        y = simulate_response(theta, profile, stream)
        # the next draw must equal the second draw of a fresh stream
        fresh = RngStream(3, 1)
        fresh.random()
        assert stream.random() == fresh.random()
        assert y in (0, 1)

    def test_simulate_response_threshold(self):
        profile = CovariateProfile(0, 40, 200.0)
        # certain success / certain failure
        assert simulate_response((50.0, 0, 0, 0), profile, RngStream(0, 1)) == 1
        assert simulate_response((-50.0, 0, 0, 0), profile, RngStream(0, 1)) == 0
