# Allocation strategies compared by the experiment harness
from typing import Dict, List

from allocation import (
    EqualCriterion,
    ErrorCriterion,
    ExtentCriterion,
    FoxCriterion,
    GrassbergerCriterion,
    MillerMadowCriterion,
    SissonCriterion,
    SplitJsdCriterion,
)
from errors import ConfigurationError
from samplers import INTENSITY, NEAREST


def _sisson(which):
    def build(sampler, options):
        return SissonCriterion(
            evaluate=lambda sample: sampler.reference_values(sample, which),
            reference_count=len(sampler.reference_points),
        )

    return build


STRATEGY_ROSTER: Dict[str, dict] = {
    "equal": {
        "name": "Equal",
        "description": "Fixed split of the budget, budget / m samples per target",
        "targets": "any",
        "build": lambda sampler, options: EqualCriterion(),
    },
    "grassberger": {
        "name": "Grassberger",
        "description": "Grassberger entropy-bias estimate of the Monte Carlo divergence error",
        "targets": "any",
        "build": lambda sampler, options: GrassbergerCriterion(second_order=options.get("second_order", False)),
    },
    "fox": {
        "name": "Fox",
        "description": "Chi-square goodness-of-fit bound on the divergence, driven by the nonempty-bin count",
        "targets": "any",
        "build": lambda sampler, options: FoxCriterion(
            delta=options.get("delta", 0.05), window=options.get("fox_window")
        ),
    },
    "miller-madow": {
        "name": "Miller-Madow",
        "description": "Miller-Madow entropy bias (K - 1) / (2n)",
        "targets": "any",
        "build": lambda sampler, options: MillerMadowCriterion(window=options.get("fox_window")),
    },
    "extent": {
        "name": "Extent",
        "description": "Sample sizes proportional to the squared extent exp(2H)",
        "targets": "any",
        "build": lambda sampler, options: ExtentCriterion(),
    },
    "jsd": {
        "name": "JSD",
        "description": "Jensen-Shannon divergence between the odd and even halves of the sample",
        "targets": "any",
        "build": lambda sampler, options: SplitJsdCriterion(),
    },
    "sisson-i": {
        "name": "Sisson-i",
        "description": "Summed Monte Carlo variance of the intensity at the reference points",
        "targets": "changepoint",
        "build": _sisson(INTENSITY),
    },
    "sisson-n": {
        "name": "Sisson-n",
        "description": "Summed Monte Carlo variance of the nearest-changepoint distance at the reference points",
        "targets": "changepoint",
        "build": _sisson(NEAREST),
    },
}


def validate_strategy(strategy_id: str, target_kinds: List[str]):
    """Rejects unknown strategies and reference-point strategies on non-changepoint targets"""
    if strategy_id not in STRATEGY_ROSTER:
        raise ConfigurationError(f"Unknown strategy {strategy_id!r}; choose from {sorted(STRATEGY_ROSTER)}")
    required = STRATEGY_ROSTER[strategy_id]["targets"]
    if required != "any" and any(kind != required for kind in target_kinds):
        raise ConfigurationError(f"Strategy {strategy_id!r} needs every target to be a {required} target")


def build_criteria(strategy_id: str, samplers: list, options: dict) -> List[ErrorCriterion]:
    build = STRATEGY_ROSTER[strategy_id]["build"]
    return [build(sampler, options) for sampler in samplers]


def display_name(strategy_id: str) -> str:
    return STRATEGY_ROSTER[strategy_id]["name"]
