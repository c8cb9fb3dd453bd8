"""Allocation procedures that ignore covariates: complete randomization,
Efron's biased coin, permuted blocks (plain and stratified), and Smith's
generalized power rule."""

from __future__ import annotations

from dataclasses import dataclass

from .core import AllocationProcedure, CovariateProfile, TreatmentArm
from .errors import InvalidParameterError
from .rng import RngStream


def crd_assign() -> float:
    """Complete randomization: always a fair coin."""
    return 0.5


def efron_bcd_assign(imbalance: int, p: float) -> float:
    """Efron-style biased coin on a signed imbalance D = N_A - N_B.

    Returns 1/2 when balanced, p when arm A is behind (D < 0), and 1 - p
    when ahead.  ``p`` must lie in [1/2, 1].
    """
    if not 0.5 <= p <= 1.0:
        raise InvalidParameterError(f"biasing probability must be in [1/2, 1], got {p}")
    if imbalance == 0:
        return 0.5
    return p if imbalance < 0 else 1.0 - p


@dataclass
class BlockState:
    """The open permuted block: even block size m and the arm counts
    accumulated so far in the current block."""

    m: int
    count_a: int = 0
    count_b: int = 0

    def __post_init__(self):
        if self.m <= 0 or self.m % 2:
            raise InvalidParameterError(f"block size must be even and positive, got {self.m}")

    @property
    def filled(self) -> int:
        return self.count_a + self.count_b

    def prob_a(self) -> float:
        """P(next slot is A) = remaining A slots / remaining slots."""
        half = self.m // 2
        return (half - self.count_a) / (self.m - self.filled)

    def push(self, arm: TreatmentArm):
        if arm is TreatmentArm.A:
            self.count_a += 1
        else:
            self.count_b += 1
        if self.filled == self.m:
            self.count_a = 0
            self.count_b = 0


def permuted_block_assign(block: BlockState, rng: RngStream):
    """Draw the next arm uniformly over the open block's remaining slots.

    Equivalent to pre-shuffling a block of m/2 A's and m/2 B's; each
    completed block is exactly balanced.  Returns (arm, block).
    """
    arm = TreatmentArm.A if rng.random() < block.prob_a() else TreatmentArm.B
    block.push(arm)
    return arm, block


def stratified_pbd_assign(state_by_stratum: dict, stratum_key, rng: RngStream, m: int = 10):
    """Delegate to the permuted block open in the patient's stratum,
    creating the stratum's first block on demand."""
    block = state_by_stratum.get(stratum_key)
    if block is None:
        block = state_by_stratum[stratum_key] = BlockState(m)
    arm, _ = permuted_block_assign(block, rng)
    return arm


@dataclass(frozen=True)
class SmithRule:
    """Power-rule exponent rho >= 0; rho = 2 reproduces the no-covariate
    model-based biased coin, rho = 0 complete randomization."""

    rho: float = 2.0

    def __post_init__(self):
        if self.rho < 0:
            raise InvalidParameterError(f"rho must be nonnegative, got {self.rho}")


def smith_assign(n_a: int, n_b: int, rule: SmithRule) -> float:
    """P(A) = n_B^rho / (n_A^rho + n_B^rho), with ties (including the empty
    trial) mapping to 1/2 by continuity."""
    if n_a == n_b or rule.rho == 0.0:
        return 0.5
    if n_a == 0:
        return 1.0
    if n_b == 0:
        return 0.0
    t = (n_b / n_a) ** rule.rho
    return t / (1.0 + t)


# ---------------------------------------------------------------------------
# Engine-facing procedure objects


class CompleteRandomization(AllocationProcedure):
    name = "crd"

    def probability_of_a(self, profile: CovariateProfile) -> float:
        return crd_assign()


class EfronBiasedCoin(AllocationProcedure):
    """Biased coin on the overall arm imbalance."""

    name = "efron"

    def __init__(self, p: float = 2.0 / 3.0):
        efron_bcd_assign(0, p)  # validate eagerly
        self.p = p
        self.n_a = 0
        self.n_b = 0

    def probability_of_a(self, profile):
        return efron_bcd_assign(self.n_a - self.n_b, self.p)

    def record(self, profile, arm, response=None):
        if arm is TreatmentArm.A:
            self.n_a += 1
        else:
            self.n_b += 1


class PermutedBlocks(AllocationProcedure):
    """A single sequence of permuted blocks, no stratification."""

    name = "pbd"

    def __init__(self, m: int = 10):
        self.block = BlockState(m)

    def probability_of_a(self, profile):
        return self.block.prob_a()

    def record(self, profile, arm, response=None):
        self.block.push(arm)


class StratifiedPermutedBlocks(AllocationProcedure):
    """Independent permuted-block sequences within each stratum defined by
    the discretized covariate combination."""

    name = "spbd"

    def __init__(self, m: int = 10, level_map=None):
        if level_map is None:
            from .covadaptive import default_discretizer

            level_map = default_discretizer()
        self.m = m
        self.level_map = level_map
        self.blocks: dict[tuple, BlockState] = {}

    def _block(self, profile) -> BlockState:
        key = tuple(self.level_map(profile))
        block = self.blocks.get(key)
        if block is None:
            block = self.blocks[key] = BlockState(self.m)
        return block

    def probability_of_a(self, profile):
        return self._block(profile).prob_a()

    def record(self, profile, arm, response=None):
        self._block(profile).push(arm)


class SmithPowerRule(AllocationProcedure):
    name = "smith"

    def __init__(self, rho: float = 2.0):
        self.rule = SmithRule(rho)
        self.n_a = 0
        self.n_b = 0

    def probability_of_a(self, profile):
        return smith_assign(self.n_a, self.n_b, self.rule)

    def record(self, profile, arm, response=None):
        if arm is TreatmentArm.A:
            self.n_a += 1
        else:
            self.n_b += 1
