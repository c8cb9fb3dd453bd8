"""Domain types and generation primitives for sequential two-arm trials.

A trial allocates patients one at a time to arm A or arm B.  Each patient
arrives with a covariate profile (one binary, one integer-valued, one
continuous covariate by default), receives an arm, and produces a binary
response drawn from a true logistic model for that arm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import InvalidParameterError, ScenarioError
from .rng import RngStream


class TreatmentArm(IntEnum):
    """The two treatment arms.  A is conventionally the ``+1`` arm in
    signed encodings, B the ``-1`` arm."""

    A = 0
    B = 1

    @property
    def sign(self) -> int:
        return 1 if self is TreatmentArm.A else -1

    @classmethod
    def from_sign(cls, t: int) -> "TreatmentArm":
        if t == 1:
            return cls.A
        if t == -1:
            return cls.B
        raise InvalidParameterError(f"sign must be +1 or -1, got {t!r}")


@dataclass(frozen=True, slots=True)
class CovariateProfile:
    """One patient's covariates.

    z1 is binary (0/1), z2 is an integer in [30, 75] (age in years in the
    default scenarios), z3 is a finite real (cholesterol level in the
    default scenarios).  The intercept is the design matrix's business,
    not the profile's.
    """

    z1: int
    z2: int
    z3: float

    def __post_init__(self):
        if self.z1 not in (0, 1):
            raise InvalidParameterError(f"z1 must be 0 or 1, got {self.z1!r}")
        if not (isinstance(self.z2, (int, np.integer)) and 30 <= self.z2 <= 75):
            raise InvalidParameterError(
                f"z2 must be an integer in [30, 75], got {self.z2!r}"
            )
        if not math.isfinite(self.z3):
            raise InvalidParameterError(f"z3 must be finite, got {self.z3!r}")

    def design_row(self) -> np.ndarray:
        """Return (1, z1, z2, z3) as a float vector."""
        return np.array([1.0, self.z1, self.z2, self.z3])


@dataclass(slots=True)
class PatientRecord:
    """Entry-order index (1-based), profile, assigned arm, and the binary
    response once observed (1 success, 0 failure)."""

    index: int
    profile: CovariateProfile
    arm: TreatmentArm
    response: Optional[int] = None


class TrialState:
    """Incremental bookkeeping over a sequence of assignments.

    Tracks the record list, per-arm totals, the failure count, and -- when
    a ``level_map`` is supplied -- per-covariate, per-level, per-arm margin
    counts used by marginal balancing procedures.  ``level_map`` maps a
    profile to a tuple of small nonnegative level indices (one entry per
    covariate); binary covariates pass through, continuous ones arrive
    already discretized.
    """

    __slots__ = ("records", "margin_counts", "n_a", "n_b", "failures", "level_map")

    def __init__(
        self,
        level_map: Optional[Callable[[CovariateProfile], tuple]] = None,
        n_covariates: int = 3,
        n_levels: int = 2,
    ):
        self.records: list[PatientRecord] = []
        self.margin_counts = [
            [[0, 0] for _ in range(n_levels)] for _ in range(n_covariates)
        ]
        self.n_a = 0
        self.n_b = 0
        self.failures = 0
        self.level_map = level_map

    @property
    def n_assigned(self) -> int:
        return self.n_a + self.n_b

    def recount(self) -> "TrialState":
        """Recompute all counts from scratch off the record list.

        Used to check that incremental updates never drift from the ground
        truth; the returned state's counts must equal this state's.
        """
        fresh = TrialState(
            self.level_map,
            n_covariates=len(self.margin_counts),
            n_levels=len(self.margin_counts[0]) if self.margin_counts else 0,
        )
        for rec in self.records:
            apply_assignment(fresh, rec.profile, rec.arm, rec.response)
        return fresh

    def counts_equal(self, other: "TrialState") -> bool:
        return (
            self.n_a == other.n_a
            and self.n_b == other.n_b
            and self.failures == other.failures
            and self.margin_counts == other.margin_counts
        )


def apply_assignment(
    state: TrialState,
    profile: CovariateProfile,
    arm: TreatmentArm,
    response: Optional[int] = None,
) -> TrialState:
    """Append one assignment to ``state`` and update all running counts."""
    state.records.append(
        PatientRecord(len(state.records) + 1, profile, arm, response)
    )
    col = 0 if arm is TreatmentArm.A else 1
    if col == 0:
        state.n_a += 1
    else:
        state.n_b += 1
    if response == 0:
        state.failures += 1
    if state.level_map is not None:
        for i, level in enumerate(state.level_map(profile)):
            state.margin_counts[i][level][col] += 1
    return state


class AllocationProcedure:
    """Base interface for sequential allocation strategies.

    The engine asks ``probability_of_a`` for the incoming patient, draws
    the arm itself (one uniform variate), observes the response, and then
    calls ``record``.  Procedures therefore never consume randomness; they
    are deterministic state machines emitting probabilities.
    """

    #: whether assignment probabilities depend on past responses (response-
    #: adaptive and CARA procedures); such procedures are excluded from
    #: rerandomization inference.
    uses_responses = False
    name = "procedure"

    def probability_of_a(self, profile: CovariateProfile) -> float:
        raise NotImplementedError

    def record(self, profile: CovariateProfile, arm: TreatmentArm, response=None):
        """Incorporate one completed assignment into procedure state."""


# ---------------------------------------------------------------------------
# Scenario specification


_GENERATOR_KINDS = ("bernoulli", "discrete_uniform", "normal")


@dataclass(frozen=True)
class CovariateSpec:
    """Distribution of one covariate: ``bernoulli`` (p), ``discrete_uniform``
    (integer low..high inclusive), or ``normal`` (mean, sd; unclipped)."""

    kind: str
    params: dict
    name: str = ""

    def __post_init__(self):
        if self.kind not in _GENERATOR_KINDS:
            raise ScenarioError(
                f"unknown covariate kind {self.kind!r}; expected one of {_GENERATOR_KINDS}"
            )
        p = self.params
        if self.kind == "bernoulli":
            if not 0.0 <= p.get("p", -1) <= 1.0:
                raise ScenarioError("bernoulli covariate needs p in [0, 1]")
        elif self.kind == "discrete_uniform":
            low, high = p.get("low"), p.get("high")
            if not (isinstance(low, int) and isinstance(high, int) and low <= high):
                raise ScenarioError(
                    "discrete_uniform covariate needs integer low <= high"
                )
        else:
            if p.get("sd", -1.0) <= 0 or "mean" not in p:
                raise ScenarioError("normal covariate needs mean and sd > 0")


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to simulate one trial configuration.

    ``theta_a``/``theta_b`` are the true logistic coefficient vectors
    (intercept first) for the two arms; ``burn_in`` is the number of
    initial patients allocated by the burn-in procedure before model-based
    CARA assignment starts; ``fixed_covariate_matrix`` controls whether the
    covariate matrix is generated once per study (stream 0) or afresh in
    every replication.
    """

    name: str
    n: int
    covariates: tuple[CovariateSpec, ...]
    theta_a: tuple[float, ...]
    theta_b: tuple[float, ...]
    burn_in: int = 0
    seed: int = 0
    fixed_covariate_matrix: bool = True

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ScenarioError(f"n must be a positive integer, got {self.n!r}")
        if not (isinstance(self.burn_in, int) and 0 <= self.burn_in < self.n):
            raise ScenarioError("burn_in must satisfy 0 <= burn_in < n")
        if len(self.covariates) != 3:
            raise ScenarioError("exactly three covariates are supported")
        if self.covariates[0].kind != "bernoulli":
            raise ScenarioError("covariate 1 must be bernoulli (binary)")
        if self.covariates[1].kind != "discrete_uniform":
            raise ScenarioError("covariate 2 must be discrete_uniform (integer)")
        if self.covariates[2].kind != "normal":
            raise ScenarioError("covariate 3 must be normal (continuous)")
        k = len(self.covariates) + 1
        for label, theta in (("theta_a", self.theta_a), ("theta_b", self.theta_b)):
            if len(theta) != k:
                raise ScenarioError(f"{label} must have length {k}")
            if not all(math.isfinite(v) for v in theta):
                raise ScenarioError(f"{label} must be finite")
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("seed must be an integer in [0, 2**64)")

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be a JSON object")
        required = {"name", "n", "covariates", "theta_a", "theta_b"}
        missing = required - doc.keys()
        if missing:
            raise ScenarioError(f"scenario missing required keys: {sorted(missing)}")
        covs = []
        for i, c in enumerate(doc["covariates"]):
            if not isinstance(c, dict) or "kind" not in c:
                raise ScenarioError(f"covariate {i + 1} must be an object with a kind")
            params = {k: v for k, v in c.items() if k not in ("kind", "name")}
            covs.append(CovariateSpec(c["kind"], params, c.get("name", "")))
        try:
            return cls(
                name=str(doc["name"]),
                n=doc["n"],
                covariates=tuple(covs),
                theta_a=tuple(float(v) for v in doc["theta_a"]),
                theta_b=tuple(float(v) for v in doc["theta_b"]),
                burn_in=doc.get("burn_in", 0),
                seed=doc.get("seed", 0),
                fixed_covariate_matrix=bool(doc.get("fixed_covariate_matrix", True)),
            )
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc

    def to_dict(self) -> dict:
        covs = []
        for c in self.covariates:
            d = {"kind": c.kind, **c.params}
            if c.name:
                d["name"] = c.name
            covs.append(d)
        return {
            "name": self.name,
            "n": self.n,
            "covariates": covs,
            "theta_a": list(self.theta_a),
            "theta_b": list(self.theta_b),
            "burn_in": self.burn_in,
            "seed": self.seed,
            "fixed_covariate_matrix": self.fixed_covariate_matrix,
        }

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


# ---------------------------------------------------------------------------
# Generation


def generate_covariates(spec: ScenarioSpec, rng: RngStream) -> list[CovariateProfile]:
    """Draw the full ordered covariate list for one trial.

    Draws are covariate-major (all z1, then all z2, then all z3) so that
    the consumed stream positions are independent of patient order.
    """
    n = spec.n
    b = spec.covariates[0].params["p"]
    z1 = (rng.random(n) < b).astype(int)
    low, high = spec.covariates[1].params["low"], spec.covariates[1].params["high"]
    z2 = rng.integers(low, high + 1, size=n)
    mean, sd = spec.covariates[2].params["mean"], spec.covariates[2].params["sd"]
    z3 = rng.normal(mean, sd, size=n)
    return [
        CovariateProfile(int(z1[i]), int(z2[i]), float(z3[i])) for i in range(n)
    ]


def design_matrix(profiles: Sequence[CovariateProfile]) -> np.ndarray:
    """Stack profiles into the (n, 4) design matrix with a leading 1 column."""
    out = np.empty((len(profiles), 4))
    for i, pr in enumerate(profiles):
        out[i, 0] = 1.0
        out[i, 1] = pr.z1
        out[i, 2] = pr.z2
        out[i, 3] = pr.z3
    return out


def response_probability(theta, profile: CovariateProfile) -> float:
    """Success probability 1/(1 + exp(-(alpha + sum_j beta_j z_j)))."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (4,):
        raise InvalidParameterError(f"theta must have length 4, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise InvalidParameterError("theta entries must be finite")
    eta = theta[0] + theta[1] * profile.z1 + theta[2] * profile.z2 + theta[3] * profile.z3
    return float(expit(eta))


def simulate_response(theta, profile: CovariateProfile, rng: RngStream) -> int:
    """Bernoulli response draw; consumes exactly one uniform variate."""
    p = response_probability(theta, profile)
    return int(rng.random() < p)
