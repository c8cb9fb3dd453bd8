"""Tests for restricted randomization: fair coin, biased coin, permuted
blocks (plain and stratified), and the power-law allocation rule."""

import math

import numpy as np
import pytest

from simlab.core import CovariateProfile, TreatmentArm
from simlab.covadaptive import default_discretizer
from simlab.errors import InvalidParameterError
from simlab.restricted import (
    BlockState,
    CompleteRandomization,
    EfronBiasedCoin,
    PermutedBlocks,
    SmithPowerRule,
    SmithRule,
    StratifiedPermutedBlocks,
    crd_assign,
    efron_bcd_assign,
    permuted_block_assign,
    smith_assign,
)
from simlab.rng import RngStream

from conftest import random_profile


PROFILE = CovariateProfile(0, 40, 180.0)


class TestCompleteRandomization:
    def test_always_half(self):
        assert crd_assign() == 0.5
        proc = CompleteRandomization()
        rng = np.random.default_rng(0)
        for _ in range(10):
            assert proc.probability_of_a(random_profile(rng)) == 0.5
            proc.record(PROFILE, TreatmentArm.A)


class TestEfronBiasedCoin:
    def test_three_cases(self):
        assert efron_bcd_assign(0, 2 / 3) == 0.5
        assert efron_bcd_assign(-3, 2 / 3) == 2 / 3
        assert efron_bcd_assign(4, 2 / 3) == pytest.approx(1 / 3)

    def test_p_validation(self):
        with pytest.raises(InvalidParameterError):
            efron_bcd_assign(0, 0.4)
        with pytest.raises(InvalidParameterError):
            efron_bcd_assign(0, 1.01)
        assert efron_bcd_assign(1, 1.0) == 0.0  # deterministic boundary
        assert efron_bcd_assign(0, 0.5) == 0.5

    def test_procedure_tracks_imbalance(self):
        proc = EfronBiasedCoin(p=0.75)
        assert proc.probability_of_a(PROFILE) == 0.5
        proc.record(PROFILE, TreatmentArm.A)
        assert proc.probability_of_a(PROFILE) == 0.25
        proc.record(PROFILE, TreatmentArm.B)
        assert proc.probability_of_a(PROFILE) == 0.5
        proc.record(PROFILE, TreatmentArm.B)
        assert proc.probability_of_a(PROFILE) == 0.75


class TestPermutedBlocks:
    def test_block_probabilities_are_uniform_over_remaining(self):
        block = BlockState(m=4)
        assert block.prob_a() == 0.5  # 2 of 4 remaining are A
        block.push(TreatmentArm.A)
        assert block.prob_a() == pytest.approx(1 / 3)
        block.push(TreatmentArm.A)
        assert block.prob_a() == 0.0  # A slots exhausted
        block.push(TreatmentArm.B)
        assert block.prob_a() == 0.0
        block.push(TreatmentArm.B)
        # block is full and resets
        assert block.prob_a() == 0.5

    def test_block_closure_forces_balance(self):
        rng = RngStream(11, 1)
        block = BlockState(m=6)
        counts = []
        for _ in range(60):
            arm, block = permuted_block_assign(block, rng)
            counts.append(arm)
        arr = np.array([a is TreatmentArm.A for a in counts])
        # every completed block of 6 holds exactly 3 A's
        for start in range(0, 60, 6):
            assert arr[start : start + 6].sum() == 3

    def test_m_validation(self):
        with pytest.raises(InvalidParameterError):
            BlockState(m=5)
        with pytest.raises(InvalidParameterError):
            BlockState(m=0)
        with pytest.raises(InvalidParameterError):
            PermutedBlocks(m=-2)

    def test_procedure_prob_matches_block_state(self):
        proc = PermutedBlocks(m=10)
        assert proc.probability_of_a(PROFILE) == 0.5
        for _ in range(5):
            proc.record(PROFILE, TreatmentArm.A)
        assert proc.probability_of_a(PROFILE) == 0.0


class TestStratifiedPermutedBlocks:
    def test_strata_are_independent(self):
        proc = StratifiedPermutedBlocks(m=4)
        male = CovariateProfile(0, 40, 180.0)
        female = CovariateProfile(1, 40, 180.0)
        proc.record(male, TreatmentArm.A)
        proc.record(male, TreatmentArm.A)
        # male stratum block is forced to B; female stratum untouched
        assert proc.probability_of_a(male) == 0.0
        assert proc.probability_of_a(female) == 0.5

    def test_eight_strata_under_default_discretizer(self):
        proc = StratifiedPermutedBlocks(m=2)
        rng = np.random.default_rng(3)
        for _ in range(200):
            profile = random_profile(rng)
            arm = TreatmentArm.A if rng.random() < proc.probability_of_a(profile) else TreatmentArm.B
            proc.record(profile, arm)
        assert len(proc.blocks) <= 8
        assert len(proc.blocks) >= 4  # all common strata seen at n=200


class TestSmithPowerRule:
    def test_closed_form_cases(self):
        square = SmithRule(rho=2.0)
        assert smith_assign(0, 0, square) == 0.5
        assert smith_assign(3, 3, square) == 0.5
        assert smith_assign(5, 2, SmithRule(rho=0.0)) == 0.5  # rho = 0 is a fair coin
        assert smith_assign(0, 4, square) == 1.0
        assert smith_assign(4, 0, square) == 0.0
        # nB^rho / (nA^rho + nB^rho)
        assert smith_assign(2, 1, square) == pytest.approx(1 / 5)
        assert smith_assign(1, 2, square) == pytest.approx(4 / 5)
        assert smith_assign(1, 3, SmithRule(rho=1.0)) == pytest.approx(3 / 4)

    def test_complement_symmetry(self):
        square = SmithRule(rho=2.0)
        for na, nb in [(1, 4), (7, 2), (3, 3)]:
            assert smith_assign(na, nb, square) == pytest.approx(
                1.0 - smith_assign(nb, na, square)
            )

    def test_rho_validation(self):
        with pytest.raises(InvalidParameterError):
            SmithRule(rho=-0.5)
        with pytest.raises(InvalidParameterError):
            SmithPowerRule(rho=-1.0)

    def test_procedure_counts(self):
        proc = SmithPowerRule(rho=2.0)
        proc.record(PROFILE, TreatmentArm.A)
        proc.record(PROFILE, TreatmentArm.A)
        proc.record(PROFILE, TreatmentArm.B)
        assert proc.probability_of_a(PROFILE) == pytest.approx(1 / 5)
