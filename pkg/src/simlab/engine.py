"""Monte-Carlo study runner: replications of a scenario under a chosen
procedure, metric collection, summary aggregation, and the closed-form
fixed-design calculator."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .cara import TargetKind, expected_failures, target_allocation
from .core import (
    CovariateProfile,
    ScenarioSpec,
    TreatmentArm,
    design_matrix,
    generate_covariates,
)
from .errors import InvalidParameterError, NotEstimableError
from .estimation import (
    StratifiedTable,
    fit_logistic,
    ks_distance,
    stratified_logor_test,
    wald_test_at_z0,
)
from .rng import RngStream

#: default reference covariate point for the Wald test: the generator
#: means of the bundled scenarios (binary mean, age mean, cholesterol mean)
DEFAULT_Z0 = (0.5, 52.5, 200.0)


@dataclass
class TrialResult:
    """Metrics of one simulated trial."""

    prop_a: float
    prop_a_stratum0: float
    ks_age: float
    failures: int
    rejected: bool
    diagnostics: dict = field(default_factory=dict)
    records: Optional[list] = None


@dataclass
class StudySummary:
    """Aggregated metrics of one (scenario, procedure) study."""

    procedure: str
    n: int
    reps: int
    seed: int
    prop_a_mean: float
    prop_a_sd: float
    prop_a_s0_mean: float
    prop_a_s0_sd: float
    ks_age_mean: float
    ks_age_sd: float
    reject_rate: float
    failures_mean: float
    failures_sd: float
    fit_failure_rate: float
    warnings: tuple[str, ...] = ()


CSV_COLUMNS = (
    "procedure", "n", "reps", "seed",
    "prop_a_mean", "prop_a_sd", "prop_a_s0_mean", "prop_a_s0_sd",
    "ks_age_mean", "ks_age_sd", "reject_rate",
    "failures_mean", "failures_sd", "fit_failure_rate",
)


def run_replication(
    scenario: ScenarioSpec,
    procedure,
    covariates: Optional[Sequence[CovariateProfile]],
    stream: RngStream,
    *,
    z0=DEFAULT_Z0,
    alpha: float = 0.05,
    test: Optional[str] = "wald",
    keep_records: bool = False,
) -> TrialResult:
    """Simulate one complete trial.

    Per patient the procedure emits P(A), one uniform decides the arm, a
    second uniform draws the response from the true model of that arm, and
    the procedure records the outcome.  When ``covariates`` is None the
    profile list is drawn from ``stream`` first (covariate draws precede
    all assignment draws).
    """
    if covariates is None:
        covariates = generate_covariates(scenario, stream)
    n = scenario.n
    X = design_matrix(covariates)
    p_true_a = expit(X @ np.asarray(scenario.theta_a)).tolist()
    p_true_b = expit(X @ np.asarray(scenario.theta_b)).tolist()
    u = stream.random((n, 2)).tolist()

    arm_of = np.empty(n, dtype=np.int8)
    response_of = np.empty(n, dtype=np.int8)
    failures = 0
    arm_a, arm_b = TreatmentArm.A, TreatmentArm.B
    records = [] if keep_records else None
    for i in range(n):
        profile = covariates[i]
        u_arm, u_resp = u[i]
        to_a = u_arm < procedure.probability_of_a(profile)
        arm = arm_a if to_a else arm_b
        y = 1 if u_resp < (p_true_a[i] if to_a else p_true_b[i]) else 0
        failures += 1 - y
        arm_of[i] = 0 if to_a else 1
        response_of[i] = y
        procedure.record(profile, arm, y)
        if keep_records:
            records.append((profile, arm, y))

    on_a = arm_of == 0
    prop_a = float(on_a.mean())
    males = X[:, 1] == 0.0
    n_males = int(males.sum())
    prop_a_s0 = float((on_a & males).sum() / n_males) if n_males else float("nan")
    ages = X[:, 2]
    if 0 < on_a.sum() < n:
        ks_age = ks_distance(ages[on_a], ages[~on_a])
    else:
        ks_age = float("nan")

    rejected, fit_failed = _run_test(
        test, X, on_a, response_of, z0, alpha, procedure
    )
    diagnostics = dict(getattr(procedure, "diagnostics", {}))
    diagnostics["test_fit_failed"] = fit_failed
    return TrialResult(
        prop_a, prop_a_s0, ks_age, failures, rejected, diagnostics, records
    )


def _run_test(test, X, on_a, responses, z0, alpha, procedure):
    """Final-analysis hypothesis test; returns (rejected, fit_failed)."""
    if test is None:
        return False, False
    y = responses.astype(float)
    if test == "wald":
        try:
            fit_a = fit_logistic(
                X[on_a], y[on_a], start=_warm_theta(procedure, "fit_a")
            )
            fit_b = fit_logistic(
                X[~on_a], y[~on_a], start=_warm_theta(procedure, "fit_b")
            )
            _, _, reject = wald_test_at_z0(fit_a, fit_b, z0, alpha)
        except NotEstimableError:
            return False, True
        return reject, False
    if test == "stratified":
        strata = []
        for level in (0.0, 1.0):
            in_level = X[:, 1] == level
            mask_a = in_level & on_a
            mask_b = in_level & ~on_a
            strata.append(
                (
                    int(y[mask_a].sum()), int(mask_a.sum()),
                    int(y[mask_b].sum()), int(mask_b.sum()),
                )
            )
        try:
            _, _, reject = stratified_logor_test(StratifiedTable(tuple(strata)), alpha)
        except NotEstimableError:
            return False, True
        return reject, False
    raise InvalidParameterError(f"unknown test {test!r}; expected 'wald', 'stratified' or None")


def _warm_theta(procedure, attr):
    fit = getattr(procedure, attr, None)
    if fit is not None and getattr(fit, "converged", False):
        return fit.theta
    return None


def _run_block(scenario, procedure_factory, covariates, seed, start, stop,
               z0, alpha, test):
    """Run replications [start, stop) on their own streams; returns plain
    tuples so worker processes can ship results cheaply."""
    out = []
    for r in range(start, stop):
        procedure = procedure_factory()
        res = run_replication(
            scenario, procedure, covariates, RngStream(seed, r),
            z0=z0, alpha=alpha, test=test,
        )
        out.append(
            (
                res.prop_a, res.prop_a_stratum0, res.ks_age,
                res.failures, res.rejected,
                bool(res.diagnostics.get("test_fit_failed", False)),
            )
        )
    return out


def _mean_sd(values: np.ndarray) -> tuple[float, float]:
    finite = values[~np.isnan(values)]
    if finite.size == 0:
        return float("nan"), float("nan")
    mean = float(finite.mean())
    sd = float(finite.std(ddof=1)) if finite.size > 1 else 0.0
    return mean, sd


def run_study(
    scenario: ScenarioSpec,
    procedure_factory: Callable[[], object],
    reps: int,
    seed: Optional[int] = None,
    *,
    workers: int = 1,
    z0=None,
    alpha: float = 0.05,
    test: Optional[str] = "wald",
    procedure_id: Optional[str] = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> StudySummary:
    """Run ``reps`` independent replications and aggregate their metrics.

    When the scenario fixes its covariate matrix, that matrix is drawn once
    from stream 0 of the *scenario's* seed, so the patient population is a
    property of the scenario and survives reruns under a different study
    seed.  Replication r always draws from stream r of the study ``seed``,
    so the summary is a pure function of (scenario, procedure, reps, seed)
    regardless of worker count or execution order.
    """
    if reps < 1:
        raise InvalidParameterError("reps must be >= 1")
    if workers < 1:
        raise InvalidParameterError("workers must be >= 1")
    if seed is None:
        seed = scenario.seed
    if z0 is None:
        z0 = DEFAULT_Z0
    covariates = (
        generate_covariates(scenario, RngStream(scenario.seed, 0))
        if scenario.fixed_covariate_matrix
        else None
    )

    rows: list[tuple] = []
    if workers == 1:
        chunk = max(1, min(200, reps // 20))
        for start in range(1, reps + 1, chunk):
            stop = min(start + chunk, reps + 1)
            rows.extend(
                _run_block(
                    scenario, procedure_factory, covariates, seed,
                    start, stop, z0, alpha, test,
                )
            )
            if progress is not None:
                progress(len(rows), reps)
    else:
        chunk = max(1, -(-reps // (workers * 4)))
        spans = [
            (start, min(start + chunk, reps + 1))
            for start in range(1, reps + 1, chunk)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    _run_block, scenario, procedure_factory, covariates,
                    seed, a, b, z0, alpha, test,
                )
                for a, b in spans
            ]
            for fut in futures:
                rows.extend(fut.result())
                if progress is not None:
                    progress(len(rows), reps)

    data = np.array(rows, dtype=float)
    prop_mean, prop_sd = _mean_sd(data[:, 0])
    s0_mean, s0_sd = _mean_sd(data[:, 1])
    ks_mean, ks_sd = _mean_sd(data[:, 2])
    fail_mean, fail_sd = _mean_sd(data[:, 3])
    warnings = ()
    if reps == 1:
        warnings = ("single-replication study: SDs reported as 0 by convention",)
    if procedure_id is None:
        procedure_id = getattr(procedure_factory(), "name", "procedure")
    return StudySummary(
        procedure=procedure_id,
        n=scenario.n,
        reps=reps,
        seed=seed,
        prop_a_mean=prop_mean,
        prop_a_sd=prop_sd,
        prop_a_s0_mean=s0_mean,
        prop_a_s0_sd=s0_sd,
        ks_age_mean=ks_mean,
        ks_age_sd=ks_sd,
        reject_rate=float(data[:, 4].mean()),
        failures_mean=fail_mean,
        failures_sd=fail_sd,
        fit_failure_rate=float(data[:, 5].mean()),
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# Fixed-design calculator


def fixed_design_report(success_probs, stratum_sizes, rules) -> dict:
    """Closed-form comparison of fixed designs on a stratified scenario.

    Args:
        success_probs: per-stratum (pA, pB) pairs.
        stratum_sizes: per-stratum patient counts.
        rules: TargetKind values to tabulate.

    Each rule row reports the per-stratum proportions to arm A, the
    expected failure count, failures saved versus the balanced design, and
    a per-stratum variance proxy of the log-odds-ratio estimator,
    1/(n pi pA qA) + 1/(n (1-pi) pB qB).
    """
    probs = [(float(a), float(b)) for a, b in success_probs]
    sizes = [float(s) for s in stratum_sizes]
    balanced = expected_failures([0.5] * len(sizes), probs, sizes)
    report = {
        "stratum_sizes": sizes,
        "success_probs": [list(pair) for pair in probs],
        "balanced_expected_failures": balanced,
        "rules": [],
    }
    for rule in rules:
        kind = TargetKind(rule)
        props = [target_allocation(kind, pa, pb) for pa, pb in probs]
        failures = expected_failures(props, probs, sizes)
        variances = []
        for pi, (pa, pb), nj in zip(props, probs, sizes):
            va = 1.0 / (nj * pi * pa * (1.0 - pa))
            vb = 1.0 / (nj * (1.0 - pi) * pb * (1.0 - pb))
            variances.append(va + vb)
        report["rules"].append(
            {
                "target": kind.value,
                "proportions": props,
                "expected_failures": failures,
                "failures_saved_vs_balanced": balanced - failures,
                "logor_variance_by_stratum": variances,
            }
        )
    return report


# ---------------------------------------------------------------------------
# Serialization


def _format_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")


def summaries_to_csv(summaries: Sequence[StudySummary]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for s in summaries:
        lines.append(",".join(_format_value(getattr(s, col)) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def summaries_to_json(summaries: Sequence[StudySummary]) -> str:
    rows = []
    for s in summaries:
        row = {}
        for col in CSV_COLUMNS:
            value = getattr(s, col)
            if isinstance(value, (int, np.integer, str)):
                row[col] = value
            else:
                value = float(value)
                row[col] = None if np.isnan(value) else value
        rows.append(row)
    return json.dumps(rows, indent=2) + "\n"
