"""Covariate-adaptive allocation: marginal minimization (Pocock-Simon and
Taves), Wei's marginal urn, Raghavarao's distance rule, and the
model-based D-optimal biased coin for the linear model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import (
    AllocationProcedure,
    CovariateProfile,
    TreatmentArm,
    TrialState,
    apply_assignment,
)
from .errors import InvalidParameterError, NotReadyError
from .rng import RngStream


@dataclass(frozen=True)
class Discretizer:
    """Maps a profile to one two-level index per covariate.

    The binary covariate passes through; the integer and continuous
    covariates are cut strictly above ``z2_cutpoint`` and ``z3_cutpoint``
    (defaults are the generator medians of the bundled scenarios).
    """

    z2_cutpoint: float = 52.5
    z3_cutpoint: float = 200.0

    def __call__(self, profile: CovariateProfile) -> tuple[int, int, int]:
        return (
            profile.z1,
            1 if profile.z2 > self.z2_cutpoint else 0,
            1 if profile.z3 > self.z3_cutpoint else 0,
        )


def default_discretizer() -> Discretizer:
    return Discretizer()


def discretize(profile: CovariateProfile, d: Discretizer) -> tuple[int, int, int]:
    """Level vector of the profile under discretizer ``d``."""
    return d(profile)


@dataclass(frozen=True)
class MarginalImbalance:
    """Signed per-covariate imbalances D_i = N_A - N_B at the incoming
    patient's levels, their weights, and the weighted total D."""

    per_covariate: tuple[float, ...]
    weights: tuple[float, ...]
    total: float


def compute_marginal_imbalance(state: TrialState, levels, weights) -> MarginalImbalance:
    per = tuple(
        float(state.margin_counts[i][lv][0] - state.margin_counts[i][lv][1])
        for i, lv in enumerate(levels)
    )
    total = float(sum(w * d for w, d in zip(weights, per)))
    return MarginalImbalance(per, tuple(float(w) for w in weights), total)


def pocock_simon_assign(state: TrialState, levels, weights, p: float) -> float:
    """Marginal-minimization biased coin.

    Computes the weighted sum D of signed margin imbalances at the
    patient's levels and returns 1/2 at D = 0, ``p`` when arm A is behind
    (D < 0), 1 - p when ahead.  ``p`` = 1 gives deterministic minimization.
    """
    if not 0.5 <= p <= 1.0:
        raise InvalidParameterError(f"biasing probability must be in [1/2, 1], got {p}")
    for w in weights:
        if w <= 0:
            raise InvalidParameterError("weights must be positive")
    counts = state.margin_counts
    d = 0.0
    for i, lv in enumerate(levels):
        pair = counts[i][lv]
        d += weights[i] * (pair[0] - pair[1])
    if d == 0.0:
        return 0.5
    return p if d < 0.0 else 1.0 - p


class UrnBank:
    """One urn per covariate margin (i, j) holding ball counts for the two
    types; type 1 balls vote for arm A, type 2 for arm B.

    ``alpha1``/``alpha2`` set the initial balls of each type in every urn;
    after each assignment every urn observed by the patient gains
    ``alpha_k`` balls of the drawn type k plus ``beta`` of the opposite
    type.
    """

    def __init__(self, alpha1: int = 1, alpha2: int = 1, beta: int = 1,
                 n_covariates: int = 3, n_levels: int = 2):
        if alpha1 < 1 or alpha2 < 1 or beta < 0:
            raise InvalidParameterError("urn parameters need alpha >= 1, beta >= 0")
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.beta = beta
        self.counts = [
            [[alpha1, alpha2] for _ in range(n_levels)] for _ in range(n_covariates)
        ]

    def imbalance(self, i: int, j: int) -> float:
        y1, y2 = self.counts[i][j]
        return (y1 - y2) / (y1 + y2)

    def select(self, levels) -> tuple[int, int]:
        """The observed urn with maximum absolute imbalance; ties break
        toward the lowest covariate index."""
        best = (0, levels[0])
        best_val = abs(self.imbalance(0, levels[0]))
        for i in range(1, len(levels)):
            val = abs(self.imbalance(i, levels[i]))
            if val > best_val:
                best, best_val = (i, levels[i]), val
        return best

    def prob_a(self, levels) -> float:
        i, j = self.select(levels)
        y1, y2 = self.counts[i][j]
        return y1 / (y1 + y2)

    def update(self, levels, arm: TreatmentArm):
        add1, add2 = (
            (self.alpha1, self.beta) if arm is TreatmentArm.A else (self.beta, self.alpha2)
        )
        for i, j in enumerate(levels):
            pair = self.counts[i][j]
            pair[0] += add1
            pair[1] += add2


def wei_urn_assign(bank: UrnBank, levels, rng: RngStream):
    """Draw a ball from the most imbalanced observed urn, assign the ball's
    arm, and replenish every observed urn.  Returns (arm, bank)."""
    arm = TreatmentArm.A if rng.random() < bank.prob_a(levels) else TreatmentArm.B
    bank.update(levels, arm)
    return arm, bank


def _arm_covariate_matrix(state: TrialState, arm: TreatmentArm) -> np.ndarray:
    rows = [
        (r.profile.z1, r.profile.z2, r.profile.z3)
        for r in state.records
        if r.arm is arm
    ]
    return np.array(rows, dtype=float).reshape(len(rows), 3)


def raghavarao_assign(state: TrialState, profile: CovariateProfile) -> tuple[float, float]:
    """Distance-based allocation: the arm whose mean covariate vector lies
    FARTHER from the incoming patient is favored, pulling that arm's mean
    toward the patient.

    Returns (P(A), P(B)) with P(k) = d_k / (d_A + d_B) where d_k is the
    Mahalanobis distance from the profile to arm k's mean under the pooled
    sample covariance (ridge-regularized by 1e-8 on the diagonal).
    """
    za = _arm_covariate_matrix(state, TreatmentArm.A)
    zb = _arm_covariate_matrix(state, TreatmentArm.B)
    if len(za) < 2 or len(zb) < 2:
        raise NotReadyError("each arm needs at least two prior patients")
    mean_a = za.mean(axis=0)
    mean_b = zb.mean(axis=0)
    ca = za - mean_a
    cb = zb - mean_b
    pooled = (ca.T @ ca + cb.T @ cb) / (len(za) + len(zb) - 2)
    pooled[np.diag_indices_from(pooled)] += 1e-8
    try:
        factor = cho_factor(pooled)
    except np.linalg.LinAlgError as exc:
        raise NotReadyError("pooled covariance is singular") from exc
    z = np.array([profile.z1, profile.z2, profile.z3], dtype=float)
    da = float(np.sqrt((z - mean_a) @ cho_solve(factor, z - mean_a)))
    db = float(np.sqrt((z - mean_b) @ cho_solve(factor, z - mean_b)))
    if da + db == 0.0:
        return 0.5, 0.5
    return da / (da + db), db / (da + db)


def _psi_weights(c: float, psi: str, gamma: float) -> tuple[float, float]:
    wa = (1.0 - c) ** 2
    wb = (1.0 + c) ** 2
    if psi == "identity":
        return wa, wb
    if psi == "power":
        if gamma <= 0:
            raise InvalidParameterError(f"gamma must be positive, got {gamma}")
        return (1.0 + wa) ** (1.0 / gamma), (1.0 + wb) ** (1.0 / gamma)
    raise InvalidParameterError(f"unknown psi {psi!r}; expected 'identity' or 'power'")


def atkinson_da_assign(Z: np.ndarray, t: np.ndarray, z_new: np.ndarray,
                       psi: str = "identity", gamma: float = 2.0) -> float:
    """Model-based biased coin minimizing the variance of the fitted
    treatment contrast in the linear model.

    With c = z_new'(Z'Z)^{-1}Z't, assigns the +1 arm with probability
    psi((1-c)^2) / (psi((1-c)^2) + psi((1+c)^2)).  Raises when Z'Z is
    singular (callers fall back to a fair coin during burn-in).
    """
    Z = np.asarray(Z, dtype=float)
    t = np.asarray(t, dtype=float)
    z_new = np.asarray(z_new, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != t.shape[0]:
        raise InvalidParameterError("design and assignment history sizes differ")
    m = Z.T @ Z
    try:
        factor = cho_factor(m)
    except np.linalg.LinAlgError as exc:
        raise NotReadyError("normal matrix Z'Z is singular") from exc
    c = float(z_new @ cho_solve(factor, Z.T @ t))
    wa, wb = _psi_weights(c, psi, gamma)
    return wa / (wa + wb)


# ---------------------------------------------------------------------------
# Engine-facing procedure objects


class PocockSimonMinimization(AllocationProcedure):
    """Marginal minimization with a biased coin (deterministic at p = 1,
    which is Taves's method)."""

    name = "pocock-simon"

    def __init__(self, p: float = 0.75, weights=(1.0, 1.0, 1.0), level_map=None):
        if level_map is None:
            level_map = default_discretizer()
        self.p = p
        self.weights = tuple(weights)
        self.level_map = level_map
        self.state = TrialState(level_map, n_covariates=len(self.weights))
        pocock_simon_assign(self.state, (0,) * len(self.weights), self.weights, p)

    def probability_of_a(self, profile):
        return pocock_simon_assign(
            self.state, self.level_map(profile), self.weights, self.p
        )

    def record(self, profile, arm, response=None):
        apply_assignment(self.state, profile, arm, response)


class TavesMinimization(PocockSimonMinimization):
    name = "taves"

    def __init__(self, weights=(1.0, 1.0, 1.0), level_map=None):
        super().__init__(p=1.0, weights=weights, level_map=level_map)


class WeiMarginalUrn(AllocationProcedure):
    """Marginal urn composition: each covariate margin keeps an urn, the
    most imbalanced observed urn decides the coin."""

    name = "wei-urn"

    def __init__(self, alpha1: int = 1, alpha2: int = 1, beta: int = 1, level_map=None):
        if level_map is None:
            level_map = default_discretizer()
        self.level_map = level_map
        self.bank = UrnBank(alpha1, alpha2, beta)

    def probability_of_a(self, profile):
        return self.bank.prob_a(self.level_map(profile))

    def record(self, profile, arm, response=None):
        self.bank.update(self.level_map(profile), arm)


class RaghavaraoDistance(AllocationProcedure):
    """Mahalanobis-distance allocation; falls back to a fair coin until
    both arms carry enough history."""

    name = "raghavarao"

    def __init__(self):
        self.state = TrialState(level_map=None)

    def probability_of_a(self, profile):
        try:
            pa, _ = raghavarao_assign(self.state, profile)
        except NotReadyError:
            return crd_fallback()
        return pa

    def record(self, profile, arm, response=None):
        apply_assignment(self.state, profile, arm, response)


class AtkinsonDOptimal(AllocationProcedure):
    """Sequential D-optimal biased coin on the intercept + raw covariates
    design, maintained through running normal equations."""

    name = "atkinson-da"

    def __init__(self, psi: str = "identity", gamma: float = 2.0):
        _psi_weights(0.0, psi, gamma)  # validate eagerly
        self.psi = psi
        self.gamma = gamma
        self.m = np.zeros((4, 4))
        self.v = np.zeros(4)
        self.n = 0

    def probability_of_a(self, profile):
        if self.n < 4:
            return crd_fallback()
        z = profile.design_row()
        try:
            factor = cho_factor(self.m)
        except np.linalg.LinAlgError:
            return crd_fallback()
        c = float(z @ cho_solve(factor, self.v))
        wa, wb = _psi_weights(c, self.psi, self.gamma)
        return wa / (wa + wb)

    def record(self, profile, arm, response=None):
        z = profile.design_row()
        self.m += np.outer(z, z)
        self.v += arm.sign * z
        self.n += 1


def crd_fallback() -> float:
    """Fair-coin probability used while a model-based rule is not ready."""
    return 0.5
