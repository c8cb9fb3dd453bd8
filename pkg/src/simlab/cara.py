"""Response-adaptive and covariate-adjusted response-adaptive allocation:
closed-form target allocations, sequential CARA rules driven by running
logistic fits, the doubly adaptive biased coin (DBCD), and the
normal-c.d.f. play-the-winner-style rule for adjusted mean differences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, ndtr

from .core import AllocationProcedure, CovariateProfile, TreatmentArm
from .covadaptive import PocockSimonMinimization
from .errors import BoundaryError, InvalidParameterError, NotEstimableError
from .estimation import FittedLogisticModel, fit_logistic

#: probabilities entering target formulas are clamped this far inside (0,1)
_INTERIOR = 1e-12


class TargetKind(str, Enum):
    """Closed-form allocation targets as functions of the per-arm success
    probabilities (pA, pB)."""

    BALANCED = "balanced"
    NEYMAN_LOGOR = "neyman-logor"
    FAILURE_OPTIMAL_LOGOR = "failure-optimal-logor"
    RVA_ODDS = "rva-odds"
    SQRT_RSIHR = "sqrt-rsihr"
    NEYMAN_CARA = "neyman-cara"
    OPTIMAL_CARA = "optimal-cara"


def target_allocation(kind: TargetKind, p_a: float, p_b: float) -> float:
    """Proportion of patients the target sends to arm A.

    NEYMAN_LOGOR minimizes the variance of the log-odds-ratio estimator;
    FAILURE_OPTIMAL_LOGOR minimizes expected failures at fixed estimator
    variance; RVA_ODDS allocates by the odds ratio; SQRT_RSIHR by root
    success probabilities; NEYMAN_CARA and OPTIMAL_CARA are the
    covariate-adjusted Neyman and failure-optimal forms.
    """
    kind = TargetKind(kind)
    if not (0.0 < p_a < 1.0 and 0.0 < p_b < 1.0):
        raise BoundaryError(
            f"success probabilities must be interior to (0, 1), got ({p_a}, {p_b})"
        )
    if kind is TargetKind.BALANCED:
        return 0.5
    q_a = 1.0 - p_a
    q_b = 1.0 - p_b
    if kind is TargetKind.NEYMAN_LOGOR:
        inv_a = 1.0 / math.sqrt(p_a * q_a)
        inv_b = 1.0 / math.sqrt(p_b * q_b)
        return inv_a / (inv_a + inv_b)
    if kind is TargetKind.FAILURE_OPTIMAL_LOGOR:
        inv_a = 1.0 / math.sqrt(p_a * q_a * q_a)
        inv_b = 1.0 / math.sqrt(p_b * q_b * q_b)
        return inv_a / (inv_a + inv_b)
    if kind is TargetKind.RVA_ODDS:
        odds_a = p_a / q_a
        odds_b = p_b / q_b
        return odds_a / (odds_a + odds_b)
    if kind is TargetKind.SQRT_RSIHR:
        root_a = math.sqrt(p_a)
        root_b = math.sqrt(p_b)
        return root_a / (root_a + root_b)
    if kind is TargetKind.NEYMAN_CARA:
        s_a = math.sqrt(p_a * q_a)
        s_b = math.sqrt(p_b * q_b)
        return s_b / (s_b + s_a)
    # OPTIMAL_CARA
    s_a = math.sqrt(p_a) * q_a
    s_b = math.sqrt(p_b) * q_b
    return s_b / (s_b + s_a)


def expected_failures(target_props, success_probs, stratum_sizes) -> float:
    """Expected failure count of a fixed design.

    Args:
        target_props: per-stratum proportion sent to arm A.
        success_probs: per-stratum (pA, pB) pairs.
        stratum_sizes: per-stratum patient counts.
    """
    if not (len(target_props) == len(success_probs) == len(stratum_sizes)):
        raise InvalidParameterError("per-stratum inputs must have equal length")
    total = 0.0
    for pi, (p_a, p_b), n in zip(target_props, success_probs, stratum_sizes):
        if not 0.0 <= pi <= 1.0:
            raise InvalidParameterError(f"proportion {pi} outside [0, 1]")
        if n < 0:
            raise InvalidParameterError("stratum sizes must be nonnegative")
        total += n * (pi * (1.0 - p_a) + (1.0 - pi) * (1.0 - p_b))
    return total


# ---------------------------------------------------------------------------
# Sequential CARA rules


@dataclass
class CaraState:
    """Running state of a CARA rule: the burn-in procedure (also the
    fallback whenever model-based assignment is unavailable), the current
    per-arm logistic fits, and the design rows behind each fit."""

    burn_in: AllocationProcedure
    fit_a: Optional[FittedLogisticModel] = None
    fit_b: Optional[FittedLogisticModel] = None
    design_a: Optional[np.ndarray] = None
    design_b: Optional[np.ndarray] = None

    @property
    def fits_ready(self) -> bool:
        return (
            self.fit_a is not None
            and self.fit_b is not None
            and self.fit_a.converged
            and self.fit_b.converged
        )


def _clamped_probability(fit: FittedLogisticModel, ztilde: np.ndarray) -> float:
    p = float(expit(fit.theta @ ztilde))
    return min(max(p, _INTERIOR), 1.0 - _INTERIOR)


def cara_assign(state: CaraState, kind: TargetKind, profile: CovariateProfile) -> float:
    """Assignment probability of a closed-form CARA target given current
    fits; burn-in probability when fits are absent or failed."""
    if not state.fits_ready:
        return state.burn_in.probability_of_a(profile)
    z = profile.design_row()
    p_a = _clamped_probability(state.fit_a, z)
    p_b = _clamped_probability(state.fit_b, z)
    return target_allocation(kind, p_a, p_b)


def _da_weight(fit: FittedLogisticModel, design: np.ndarray, ztilde: np.ndarray) -> float:
    """Directional-derivative factor d(k) = z'(Z_k' W_k Z_k)^{-1} z * p q,
    with the weights W_k evaluated at the current fit."""
    prob = expit(design @ fit.theta)
    w = prob * (1.0 - prob)
    info = (design * w[:, None]).T @ design
    factor = cho_factor(info)
    quad = float(ztilde @ cho_solve(factor, ztilde))
    p = _clamped_probability(fit, ztilde)
    return quad * p * (1.0 - p)


def cara5_assign(state: CaraState, profile: CovariateProfile) -> float:
    """Information-weighted CARA rule: assigns proportionally to
    f_k * d(k) where f_k = p_k(z)/q_k(z) is the desired odds weight and
    d(k) the directional derivative of the design criterion."""
    if not state.fits_ready or state.design_a is None or state.design_b is None:
        return state.burn_in.probability_of_a(profile)
    z = profile.design_row()
    try:
        d_a = _da_weight(state.fit_a, state.design_a, z)
        d_b = _da_weight(state.fit_b, state.design_b, z)
    except np.linalg.LinAlgError:
        return state.burn_in.probability_of_a(profile)
    p_a = _clamped_probability(state.fit_a, z)
    p_b = _clamped_probability(state.fit_b, z)
    f_a = p_a / (1.0 - p_a)
    f_b = p_b / (1.0 - p_b)
    score_a = f_a * d_a
    score_b = f_b * d_b
    return score_a / (score_a + score_b)


class _ArmBuffer:
    """Growable per-arm design/response storage feeding warm-started refits."""

    __slots__ = ("x", "y", "count")

    def __init__(self, capacity: int = 64):
        self.x = np.empty((capacity, 4))
        self.y = np.empty(capacity)
        self.count = 0

    def append(self, row: np.ndarray, response: float):
        if self.count == self.x.shape[0]:
            self.x = np.concatenate([self.x, np.empty_like(self.x)])
            self.y = np.concatenate([self.y, np.empty_like(self.y)])
        self.x[self.count] = row
        self.y[self.count] = response
        self.count += 1

    def design(self) -> np.ndarray:
        return self.x[: self.count]

    def responses(self) -> np.ndarray:
        return self.y[: self.count]


class CaraLogistic(AllocationProcedure):
    """Sequential CARA allocation: burn-in by a covariate-adaptive rule,
    then per-arm logistic fits refreshed after every response drive the
    chosen closed-form target."""

    uses_responses = True

    def __init__(self, kind: TargetKind, burn_in_size: int = 80,
                 burn_in: Optional[AllocationProcedure] = None,
                 epsilon: Optional[float] = None):
        if burn_in is None:
            burn_in = PocockSimonMinimization(p=0.75)
        if epsilon is not None and not 0.0 < epsilon < 0.5:
            raise InvalidParameterError("epsilon clamp must lie in (0, 0.5)")
        if burn_in_size < 0:
            raise InvalidParameterError("burn-in size must be nonnegative")
        self.kind = TargetKind(kind)
        self.name = f"cara-{self.kind.value}"
        self.burn_in_size = burn_in_size
        self.epsilon = epsilon
        self.state = CaraState(burn_in)
        self._buffers = (_ArmBuffer(), _ArmBuffer())
        self._n = 0
        self._initialized = False
        self.diagnostics = {"fit_attempts": 0, "fit_failures": 0, "fallbacks": 0}

    # -- fits ---------------------------------------------------------------

    @property
    def fit_a(self):
        return self.state.fit_a

    @property
    def fit_b(self):
        return self.state.fit_b

    def _store_fit(self, arm_index: int, fit: FittedLogisticModel, design: np.ndarray):
        if arm_index == 0:
            self.state.fit_a = fit
            self.state.design_a = design
        else:
            self.state.fit_b = fit
            self.state.design_b = design

    def _refit(self, arm_index: int):
        buf = self._buffers[arm_index]
        previous = self.state.fit_a if arm_index == 0 else self.state.fit_b
        start = previous.theta if previous is not None and previous.converged else None
        self.diagnostics["fit_attempts"] += 1
        design = buf.design()
        try:
            fit = fit_logistic(design, buf.responses(), start=start)
        except NotEstimableError:
            self.diagnostics["fit_failures"] += 1
            return
        if fit.converged:
            # the slice view pins the rows behind this fit, so information-
            # based rules evaluate their weights on exactly the fitted data
            self._store_fit(arm_index, fit, design)
        else:
            self.diagnostics["fit_failures"] += 1

    # -- procedure interface --------------------------------------------------

    def _model_probability(self, profile) -> Optional[float]:
        if not self.state.fits_ready:
            return None
        z = profile.design_row()
        p_a = _clamped_probability(self.state.fit_a, z)
        p_b = _clamped_probability(self.state.fit_b, z)
        return target_allocation(self.kind, p_a, p_b)

    def probability_of_a(self, profile):
        if self._n < self.burn_in_size:
            return self.state.burn_in.probability_of_a(profile)
        phi = self._model_probability(profile)
        if phi is None:
            self.diagnostics["fallbacks"] += 1
            return self.state.burn_in.probability_of_a(profile)
        if self.epsilon is not None:
            phi = min(max(phi, self.epsilon), 1.0 - self.epsilon)
        return phi

    def record(self, profile, arm, response=None):
        if response is None:
            raise InvalidParameterError("response-adaptive procedures need responses")
        self.state.burn_in.record(profile, arm, response)
        arm_index = 0 if arm is TreatmentArm.A else 1
        self._buffers[arm_index].append(profile.design_row(), response)
        self._n += 1
        if self._n < self.burn_in_size:
            return
        if not self._initialized:
            self._refit(0)
            self._refit(1)
            self._initialized = True
        else:
            self._refit(arm_index)


class CaraDaOptimal(CaraLogistic):
    """CARA rule weighting each arm by its desired odds times the
    directional derivative of the design criterion at the incoming
    patient's covariates."""

    def __init__(self, burn_in_size: int = 80, burn_in=None, epsilon=None):
        super().__init__(TargetKind.RVA_ODDS, burn_in_size, burn_in, epsilon)
        self.name = "cara-da-optimal"

    def _model_probability(self, profile):
        if not self.state.fits_ready or self.state.design_a is None or self.state.design_b is None:
            return None
        z = profile.design_row()
        try:
            d_a = _da_weight(self.state.fit_a, self.state.design_a, z)
            d_b = _da_weight(self.state.fit_b, self.state.design_b, z)
        except np.linalg.LinAlgError:
            return None
        p_a = _clamped_probability(self.state.fit_a, z)
        p_b = _clamped_probability(self.state.fit_b, z)
        score_a = p_a / (1.0 - p_a) * d_a
        score_b = p_b / (1.0 - p_b) * d_b
        return score_a / (score_a + score_b)


# ---------------------------------------------------------------------------
# Doubly adaptive biased coin


def dbcd_assign(current_prop_a: float, target_a: float, gamma: float = 2.0) -> float:
    """Allocation function g(x, y) steering the observed proportion x
    toward the target y; larger gamma corrects harder.  Inputs are clamped
    to [1e-6, 1 - 1e-6] before use."""
    if gamma < 0:
        raise InvalidParameterError(f"gamma must be nonnegative, got {gamma}")
    x = min(max(current_prop_a, 1e-6), 1.0 - 1e-6)
    y = min(max(target_a, 1e-6), 1.0 - 1e-6)
    log_a = math.log(y) + gamma * (math.log(y) - math.log(x))
    log_b = math.log(1.0 - y) + gamma * (math.log(1.0 - y) - math.log(1.0 - x))
    return float(expit(log_a - log_b))


def stratified_dbcd_assign(stratum_data: dict, stratum_key, gamma: float,
                           target: TargetKind) -> float:
    """DBCD run independently inside each stratum.

    ``stratum_data`` maps a stratum key to accrued counts
    (n_A, successes_A, n_B, successes_B); success rates are smoothed as
    (successes + 0.5)/(count + 1) to stay interior.
    """
    n_a, s_a, n_b, s_b = stratum_data.get(stratum_key, (0, 0, 0, 0))
    total = n_a + n_b
    if total == 0:
        return 0.5
    p_a = (s_a + 0.5) / (n_a + 1.0)
    p_b = (s_b + 0.5) / (n_b + 1.0)
    y = target_allocation(target, p_a, p_b)
    return dbcd_assign(n_a / total, y, gamma)


class StratifiedDbcd(AllocationProcedure):
    """Doubly adaptive biased coin within strata of one discretized
    covariate (the binary covariate by default)."""

    uses_responses = True
    name = "dbcd"

    def __init__(self, target: TargetKind = TargetKind.NEYMAN_LOGOR,
                 gamma: float = 2.0, stratum_covariate: int = 0, level_map=None):
        if level_map is None:
            from .covadaptive import default_discretizer

            level_map = default_discretizer()
        dbcd_assign(0.5, 0.5, gamma)  # validate eagerly
        self.target = TargetKind(target)
        self.gamma = gamma
        self.stratum_covariate = stratum_covariate
        self.level_map = level_map
        self.data: dict = {}

    def _key(self, profile):
        return self.level_map(profile)[self.stratum_covariate]

    def probability_of_a(self, profile):
        return stratified_dbcd_assign(self.data, self._key(profile), self.gamma, self.target)

    def record(self, profile, arm, response=None):
        if response is None:
            raise InvalidParameterError("response-adaptive procedures need responses")
        key = self._key(profile)
        counts = self.data.setdefault(key, [0, 0, 0, 0])
        if arm is TreatmentArm.A:
            counts[0] += 1
            counts[1] += response
        else:
            counts[2] += 1
            counts[3] += response


# ---------------------------------------------------------------------------
# Normal-c.d.f. rule on the covariate-adjusted mean difference


def bb_normal_assign(dj: float, T: float) -> float:
    """Probability Phi(dj / T) of assigning the currently better-looking
    arm, where dj is the covariate-adjusted difference of treatment means."""
    if T <= 0:
        raise InvalidParameterError(f"scaling constant T must be positive, got {T}")
    return float(ndtr(dj / T))


class BandyopadhyayBiswas(AllocationProcedure):
    """Normal-c.d.f. response-adaptive rule: a least-squares fit of the
    response on (treatment sign, intercept, covariates) estimates the
    adjusted treatment-mean difference, which biases the next coin."""

    uses_responses = True
    name = "bb-normal"

    def __init__(self, T: float = 1.0):
        bb_normal_assign(0.0, T)  # validate eagerly
        self.T = T
        self._rows: list[list[float]] = []
        self._y: list[float] = []
        self._n_a = 0
        self._n_b = 0

    def probability_of_a(self, profile):
        if self._n_a < 2 or self._n_b < 2 or len(self._rows) < 6:
            return 0.5
        X = np.asarray(self._rows)
        y = np.asarray(self._y)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        dj = 2.0 * float(coef[0])
        return bb_normal_assign(dj, self.T)

    def record(self, profile, arm, response=None):
        if response is None:
            raise InvalidParameterError("response-adaptive procedures need responses")
        self._rows.append(
            [float(arm.sign), 1.0, float(profile.z1), float(profile.z2), float(profile.z3)]
        )
        self._y.append(float(response))
        if arm is TreatmentArm.A:
            self._n_a += 1
        else:
            self._n_b += 1
