"""Per-decision ask/no-ask rules.

Four kinds: probability thresholding (ask when the chosen option's
probability falls below p*), perturbation-stddev thresholding (ask when
the spread across randomized passes exceeds s*), ask-everything, and off.
Both thresholds use strict inequalities, so equality never asks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from statistics import pstdev
from typing import Optional

from .parser import Decision, PerturbationConfig

DETECTOR_KINDS = ("prob", "dropout", "unlimit", "off")


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "off"
    p_star: Optional[float] = None
    s_star: Optional[float] = None
    perturbation: Optional[PerturbationConfig] = None

    def __post_init__(self) -> None:
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.kind == "prob":
            if self.p_star is None or not (0.0 < self.p_star <= 1.0):
                raise ValueError("prob detector requires p_star in (0, 1]")
        elif self.p_star is not None:
            raise ValueError(f"p_star is only valid for kind=prob, not {self.kind}")
        if self.kind == "dropout":
            if self.s_star is None or self.s_star <= 0.0:
                raise ValueError("dropout detector requires s_star > 0")
            if self.perturbation is None:
                object.__setattr__(self, "perturbation", PerturbationConfig())
        elif self.s_star is not None:
            raise ValueError(f"s_star is only valid for kind=dropout, not {self.kind}")


def should_ask_prob(decision: Decision, p_star: float) -> bool:
    return decision.chosen_prob < p_star


def should_ask_dropout(passes: list, s_star: float) -> tuple:
    """Returns (ask, score) where score is the population stddev of passes."""
    if not passes:
        raise ValueError("dropout detection requires at least one pass")
    score = pstdev(passes)
    return score > s_star, score


@dataclass
class Detector:
    """Dispatches the configured rule; non-askable slots are never asked."""

    config: DetectorConfig

    def should_ask(self, decision: Decision, passes: Optional[list] = None) -> tuple:
        """Returns (ask, uncertainty score or None)."""
        if not decision.slot.askable:
            return False, None
        kind = self.config.kind
        if kind == "off":
            return False, None
        if kind == "unlimit":
            return True, None
        if kind == "prob":
            return should_ask_prob(decision, self.config.p_star), decision.chosen_prob
        if kind == "dropout":
            if passes is None:
                raise ValueError("dropout detector requires perturbation passes")
            return should_ask_dropout(passes, self.config.s_star)
        raise ValueError(f"unknown detector kind {kind!r}")

    @property
    def needs_passes(self) -> bool:
        return self.config.kind == "dropout"
