"""Procedure id registry: builds engine-ready procedure factories from
plain key-value parameter maps (the CLI's --param surface)."""

from __future__ import annotations

import json
from importlib import resources

from .cara import (
    BandyopadhyayBiswas,
    CaraDaOptimal,
    CaraLogistic,
    StratifiedDbcd,
    TargetKind,
)
from .covadaptive import (
    AtkinsonDOptimal,
    Discretizer,
    PocockSimonMinimization,
    RaghavaraoDistance,
    TavesMinimization,
    WeiMarginalUrn,
)
from .errors import InvalidParameterError
from .restricted import (
    CompleteRandomization,
    EfronBiasedCoin,
    PermutedBlocks,
    SmithPowerRule,
    StratifiedPermutedBlocks,
)


def load_defaults() -> dict:
    """Shipped default parameters (cutpoints, coin biases, block size, ...)."""
    text = resources.files("simlab.data").joinpath("defaults.json").read_text()
    return json.loads(text)


_DEFAULTS = load_defaults()


def _float(raw):
    return float(raw)


def _int(raw):
    value = float(raw)
    if value != int(value):
        raise ValueError(f"expected an integer, got {raw!r}")
    return int(value)


def _str(raw):
    return str(raw)


def _take(params: dict, key: str, default, conv):
    if key not in params:
        return default
    raw = params.pop(key)
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(f"bad value for parameter {key!r}: {exc}") from exc


def _discretizer(params: dict) -> Discretizer:
    cuts = _DEFAULTS["discretizer"]
    return Discretizer(
        z2_cutpoint=_take(params, "z2_cutpoint", cuts["z2_cutpoint"], _float),
        z3_cutpoint=_take(params, "z3_cutpoint", cuts["z3_cutpoint"], _float),
    )


def _weights(params: dict):
    base = _DEFAULTS["pocock_simon"]["weights"]
    return tuple(
        _take(params, key, default, _float)
        for key, default in zip(("w1", "w2", "w3"), base)
    )


def _burn_in(params: dict, scenario):
    size = scenario.burn_in if scenario is not None else 80
    size = _take(params, "burn_in", size, _int)
    p = _take(params, "burn_in_p", _DEFAULTS["cara"]["burn_in_p"], _float)
    burn = PocockSimonMinimization(p=p, level_map=_discretizer(params))
    return size, burn


def _epsilon(params: dict):
    if "epsilon" not in params:
        return _DEFAULTS["cara"]["epsilon"]
    return _take(params, "epsilon", None, _float)


def _build_crd(params, scenario):
    return CompleteRandomization()


def _build_efron(params, scenario):
    return EfronBiasedCoin(p=_take(params, "p", _DEFAULTS["efron"]["p"], _float))


def _build_pbd(params, scenario):
    return PermutedBlocks(m=_take(params, "m", _DEFAULTS["blocks"]["m"], _int))


def _build_spbd(params, scenario):
    m = _take(params, "m", _DEFAULTS["blocks"]["m"], _int)
    return StratifiedPermutedBlocks(m=m, level_map=_discretizer(params))


def _build_smith(params, scenario):
    return SmithPowerRule(rho=_take(params, "rho", _DEFAULTS["smith"]["rho"], _float))


def _build_pocock_simon(params, scenario):
    weights = _weights(params)
    p = _take(params, "p", _DEFAULTS["pocock_simon"]["p"], _float)
    return PocockSimonMinimization(p=p, weights=weights, level_map=_discretizer(params))


def _build_taves(params, scenario):
    return TavesMinimization(weights=_weights(params), level_map=_discretizer(params))


def _build_wei_urn(params, scenario):
    urn = _DEFAULTS["wei_urn"]
    return WeiMarginalUrn(
        alpha1=_take(params, "alpha1", urn["alpha1"], _int),
        alpha2=_take(params, "alpha2", urn["alpha2"], _int),
        beta=_take(params, "beta", urn["beta"], _int),
        level_map=_discretizer(params),
    )


def _build_raghavarao(params, scenario):
    return RaghavaraoDistance()


def _build_atkinson(params, scenario):
    atk = _DEFAULTS["atkinson"]
    return AtkinsonDOptimal(
        psi=_take(params, "psi", atk["psi"], _str),
        gamma=_take(params, "gamma", atk["gamma"], _float),
    )


def _build_dbcd(params, scenario):
    cfg = _DEFAULTS["dbcd"]
    target = _take(params, "target", TargetKind(cfg["target"]), TargetKind)
    return StratifiedDbcd(
        target=target,
        gamma=_take(params, "gamma", cfg["gamma"], _float),
        stratum_covariate=_take(params, "stratum_covariate", cfg["stratum_covariate"], _int),
        level_map=_discretizer(params),
    )


_CARA_KINDS = {
    "cara1": TargetKind.RVA_ODDS,
    "cara2": TargetKind.SQRT_RSIHR,
    "cara3": TargetKind.NEYMAN_CARA,
    "cara4": TargetKind.OPTIMAL_CARA,
}


def _make_cara_builder(kind: TargetKind):
    def _build(params, scenario):
        size, burn = _burn_in(params, scenario)
        return CaraLogistic(kind, burn_in_size=size, burn_in=burn, epsilon=_epsilon(params))

    return _build


def _build_cara5(params, scenario):
    size, burn = _burn_in(params, scenario)
    return CaraDaOptimal(burn_in_size=size, burn_in=burn, epsilon=_epsilon(params))


def _build_bb_normal(params, scenario):
    return BandyopadhyayBiswas(T=_take(params, "T", _DEFAULTS["bb_normal"]["T"], _float))


_BUILDERS = {
    "crd": _build_crd,
    "efron": _build_efron,
    "pbd": _build_pbd,
    "spbd": _build_spbd,
    "smith": _build_smith,
    "pocock-simon": _build_pocock_simon,
    "taves": _build_taves,
    "wei-urn": _build_wei_urn,
    "raghavarao": _build_raghavarao,
    "atkinson-da": _build_atkinson,
    "dbcd": _build_dbcd,
    "cara1": _make_cara_builder(_CARA_KINDS["cara1"]),
    "cara2": _make_cara_builder(_CARA_KINDS["cara2"]),
    "cara3": _make_cara_builder(_CARA_KINDS["cara3"]),
    "cara4": _make_cara_builder(_CARA_KINDS["cara4"]),
    "cara5": _build_cara5,
    "bb-normal": _build_bb_normal,
}

PROCEDURE_IDS = tuple(sorted(_BUILDERS))


def build_procedure(proc_id: str, params=None, scenario=None):
    """Instantiate a fresh procedure from its id and a parameter map.

    Raises InvalidParameterError on unknown ids, unknown parameter keys,
    or out-of-range values.
    """
    if proc_id not in _BUILDERS:
        raise InvalidParameterError(
            f"unknown procedure {proc_id!r}; valid ids: {', '.join(PROCEDURE_IDS)}"
        )
    working = dict(params or {})
    procedure = _BUILDERS[proc_id](working, scenario)
    if working:
        raise InvalidParameterError(
            f"unknown parameters for {proc_id!r}: {', '.join(sorted(working))}"
        )
    procedure.name = proc_id
    return procedure
