"""Statistical machinery: logistic MLE via Newton-scored IRLS, log-odds
ratio estimation and stratified tests, a Wald test at a reference
covariate point, Kolmogorov-Smirnov balance distance, and the
rerandomization test."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import chi2, norm

from .core import CovariateProfile, TreatmentArm
from .errors import (
    InvalidParameterError,
    NotEstimableError,
    UnsupportedProcedureError,
)
from .rng import RngStream


@dataclass
class FittedLogisticModel:
    """Coefficients, inverse observed information, and convergence state of
    one logistic fit."""

    theta: np.ndarray
    covariance: Optional[np.ndarray]
    converged: bool
    iterations: int
    n_obs: int = 0

    def predict(self, x) -> float:
        """Fitted success probability at design row x."""
        return float(expit(np.asarray(x, dtype=float) @ self.theta))


def fit_logistic(X, y, start=None, tol: float = 1e-8, max_iter: int = 50) -> FittedLogisticModel:
    """Maximum-likelihood logistic regression by Newton iterations.

    Args:
        X: (n, p) design matrix (include the intercept column yourself).
        y: length-n 0/1 responses.
        start: optional warm-start coefficients (useful when refitting
            after each new observation).
        tol: convergence threshold on the Euclidean norm of the score.
        max_iter: Newton step budget before flagging nonconvergence.

    Raises NotEstimableError when there are fewer than five rows or only
    one outcome class.  Separation or a singular information matrix shows
    up as ``converged=False`` rather than an exception: when the data are
    perfectly separated the likelihood has no finite maximizer, the score
    underflows while the coefficients diverge, and the resulting perfect
    fit is flagged instead of accepted.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    successes = y.sum()
    if n < 5 or successes == 0 or successes == n:
        raise NotEstimableError(
            f"need >= 5 observations with both outcomes (n={n}, successes={int(successes)})"
        )
    theta = np.zeros(p) if start is None else np.array(start, dtype=float)

    converged = False
    iterations = 0
    info = None
    for it in range(max_iter + 1):
        prob = expit(X @ theta)
        score = X.T @ (y - prob)
        w = prob * (1.0 - prob)
        info = (X * w[:, None]).T @ X
        if np.linalg.norm(score) < tol:
            iterations = it
            # a vanished score with every response fitted exactly means the
            # classes are separated and the true maximizer is at infinity
            converged = bool(np.max(np.abs(y - prob)) > 1e-6)
            break
        if it == max_iter:
            iterations = it
            break
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            iterations = it
            break
        theta = theta + step
        if not np.all(np.isfinite(theta)):
            converged = False
            iterations = it + 1
            theta = np.full(p, np.nan)
            break

    covariance = None
    if converged:
        try:
            covariance = np.linalg.inv(info)
            covariance = (covariance + covariance.T) / 2.0
        except np.linalg.LinAlgError:
            converged = False
    return FittedLogisticModel(theta, covariance, converged, iterations, n_obs=n)


def log_odds_ratio(x_a: int, n_a: int, x_b: int, n_b: int) -> tuple[float, float]:
    """Log odds ratio of arm A versus arm B from one stratum's 2x2 cells,
    with its large-sample variance.

    Any zero cell triggers the 0.5 continuity correction applied to all
    four cells, keeping both the estimate and the variance finite.
    """
    if n_a <= 0 or n_b <= 0:
        raise InvalidParameterError("both arms need at least one patient")
    if not (0 <= x_a <= n_a and 0 <= x_b <= n_b):
        raise InvalidParameterError("successes must lie between 0 and the arm size")
    cells = [x_a, n_a - x_a, x_b, n_b - x_b]
    if 0 in cells:
        cells = [c + 0.5 for c in cells]
    sa, fa, sb, fb = cells
    estimate = float(np.log((sa / fa) / (sb / fb)))
    variance = 1.0 / sa + 1.0 / fa + 1.0 / sb + 1.0 / fb
    return estimate, float(variance)


@dataclass(frozen=True)
class StratifiedTable:
    """Per-stratum success counts and sizes: tuples (x_A, n_A, x_B, n_B)."""

    strata: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        for cells in self.strata:
            x_a, n_a, x_b, n_b = cells
            if not (0 <= x_a <= n_a and 0 <= x_b <= n_b):
                raise InvalidParameterError(f"malformed stratum cells {cells}")


def combine_stratum_statistics(ts: Sequence[float], alpha: float = 0.05):
    """Omnibus combination Q = sum of squared stratum z-statistics against
    chi-square with one degree of freedom per stratum.

    A joint null across strata can hide opposite-signed effects from any
    pooled estimate, so the squares are summed instead of the statistics.
    """
    q = float(sum(t * t for t in ts))
    p_value = float(chi2.sf(q, df=len(ts)))
    return q, p_value, p_value <= alpha


def stratified_logor_test(table: StratifiedTable, alpha: float = 0.05):
    """Test of zero log-odds ratio in every stratum simultaneously.

    Returns (statistic, p_value, reject).  Raises NotEstimableError when a
    stratum has an empty arm.
    """
    ts = []
    for x_a, n_a, x_b, n_b in table.strata:
        if n_a == 0 or n_b == 0:
            raise NotEstimableError("every stratum needs patients on both arms")
        est, var = log_odds_ratio(x_a, n_a, x_b, n_b)
        ts.append(est / np.sqrt(var))
    return combine_stratum_statistics(ts, alpha)


def wald_test_at_z0(fit_a: FittedLogisticModel, fit_b: FittedLogisticModel,
                    z0, alpha: float = 0.05):
    """Two-sided Wald test of equal success log-odds at covariate point z0.

    z0 is the covariate vector (without intercept).  The tested contrast
    is (theta_A - theta_B)' z0~ with z0~ = (1, z0); its variance adds the
    two fitted covariance quadratic forms.  Returns (statistic, p_value,
    reject).
    """
    if not (fit_a.converged and fit_b.converged):
        raise NotEstimableError("both logistic fits must have converged")
    z = np.concatenate(([1.0], np.asarray(z0, dtype=float)))
    delta = float((fit_a.theta - fit_b.theta) @ z)
    variance = float(z @ (fit_a.covariance + fit_b.covariance) @ z)
    if variance <= 0:
        raise NotEstimableError("nonpositive contrast variance")
    statistic = delta / np.sqrt(variance)
    p_value = float(2.0 * norm.sf(abs(statistic)))
    return float(statistic), p_value, p_value <= alpha


def ks_distance(sample_a, sample_b) -> float:
    """Kolmogorov-Smirnov distance between two empirical distributions:
    the largest gap between the two empirical c.d.f.s over the pooled
    sample points."""
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise InvalidParameterError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def difference_in_means(arms, responses) -> float:
    """Default rerandomization statistic: |mean response on A - mean on B|,
    zero when an arm is empty."""
    arms = np.asarray(arms)
    responses = np.asarray(responses, dtype=float)
    on_a = arms == TreatmentArm.A
    if not on_a.any() or on_a.all():
        return 0.0
    return float(abs(responses[on_a].mean() - responses[~on_a].mean()))


def rerandomization_test(
    procedure_factory: Callable[[], object],
    profiles: Sequence[CovariateProfile],
    responses: Sequence[int],
    statistic: Callable[[np.ndarray, np.ndarray], float],
    observed: float,
    resamples: int,
    rng: RngStream,
) -> float:
    """Monte-Carlo randomization p-value for a response-independent procedure.

    Holding the covariate sequence and each patient's response fixed, the
    procedure is rerun ``resamples`` times to regenerate assignment
    sequences; the p-value is (1 + #{resampled statistic >= observed}) /
    (resamples + 1).  Response-adaptive procedures are rejected: rerunning
    them would need counterfactual responses.
    """
    probe = procedure_factory()
    if getattr(probe, "uses_responses", False):
        raise UnsupportedProcedureError(
            "rerandomization inference requires a response-independent procedure"
        )
    if resamples < 1:
        raise InvalidParameterError("resamples must be >= 1")
    n = len(profiles)
    responses = np.asarray(responses)
    exceed = 0
    arms = np.empty(n, dtype=np.int64)
    for _ in range(resamples):
        proc = procedure_factory()
        u = rng.random(n)
        for i in range(n):
            arm = TreatmentArm.A if u[i] < proc.probability_of_a(profiles[i]) else TreatmentArm.B
            arms[i] = arm
            proc.record(profiles[i], arm, int(responses[i]))
        if statistic(arms, responses) >= observed:
            exceed += 1
    return (1 + exceed) / (resamples + 1)
