"""Shared helpers for the test suite."""

import numpy as np

from simlab.core import CovariateProfile, ScenarioSpec, TreatmentArm


def make_scenario(**overrides) -> ScenarioSpec:
    """A small scenario document with the standard covariate family."""
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


def random_profile(rng) -> CovariateProfile:
    """One covariate profile drawn from the default generator family."""
    return CovariateProfile(
        int(rng.integers(0, 2)),
        int(rng.integers(30, 76)),
        float(rng.normal(200.0, 20.0)),
    )


def feed_history(procedure, rng, length, response_rate=0.5):
    """Push a random assignment history through a procedure.

    Arms are drawn from the procedure's own probabilities so the history is
    reachable; responses are Bernoulli(response_rate).  Returns the history
    as (profile, arm, response) triples.
    """
    history = []
    for _ in range(length):
        profile = random_profile(rng)
        p = procedure.probability_of_a(profile)
        arm = TreatmentArm.A if rng.random() < p else TreatmentArm.B
        response = int(rng.random() < response_rate)
        procedure.record(profile, arm, response)
        history.append((profile, arm, response))
    return history


def replay_swapped(procedure, history):
    """Feed a mirrored history (arms flipped, responses kept) into a fresh
    procedure instance."""
    for profile, arm, response in history:
        flipped = TreatmentArm.B if arm is TreatmentArm.A else TreatmentArm.A
        procedure.record(profile, flipped, response)
    return procedure
