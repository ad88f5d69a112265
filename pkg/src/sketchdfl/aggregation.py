"""Neighbor screening rules and robust aggregation.

Four working aggregators share one calling convention: a time-decaying
distance filter run on full models (balance) or on sketches
(sketchfilter), coordinate-free averaging (dfedavg), and nearest-cluster
selection (krum). "ubar" is recognized so configs naming it fail with a
clear message instead of a typo error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError
from .sketch import Sketch, sketch_distance

AGGREGATOR_KINDS = ("dfedavg", "krum", "balance", "sketchfilter", "ubar")
SKETCH_KINDS = ("sketchfilter",)


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "sketchfilter"
    gamma: float = 2.0            # screening threshold scale
    kappa: float = 1.0            # threshold decay rate
    alpha: float = 0.5            # self weight in mixing
    krum_f: int | None = None     # assumed compromised count; None derives from byz fraction
    sketch_size: int = 0          # 0 resolves to default_sketch_width(dim)
    sketch_seed: int | None = None  # None resolves to the run's sketch seed
    rel_tol: float = 1e-5         # sketch verification tolerance

    def __post_init__(self) -> None:
        if self.kind not in AGGREGATOR_KINDS:
            raise ConfigurationError(
                f"unknown aggregator {self.kind!r}, expected one of {AGGREGATOR_KINDS}"
            )
        if self.kind == "ubar":
            raise ConfigurationError(
                "aggregator 'ubar' is recognized but not implemented; "
                "choose dfedavg, krum, balance, or sketchfilter"
            )
        if self.gamma <= 0:
            raise ConfigurationError(f"gamma must be > 0, got {self.gamma}")
        if self.kappa < 0:
            raise ConfigurationError(f"kappa must be >= 0, got {self.kappa}")
        if not 0 <= self.alpha <= 1:
            raise ConfigurationError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.krum_f is not None and self.krum_f < 0:
            raise ConfigurationError(f"krum_f must be >= 0, got {self.krum_f}")
        if self.sketch_size < 0:
            raise ConfigurationError(f"sketch_size must be >= 0, got {self.sketch_size}")
        if self.rel_tol < 0:
            raise ConfigurationError(f"rel_tol must be >= 0, got {self.rel_tol}")


@dataclass
class FilterOutcome:
    """Screening result for one node: who passed, and the evidence."""

    accepted: list[int]
    fallback_used: bool
    threshold: float
    distances: dict[int, float]
    verify_failed: list[int] = field(default_factory=list)


def adaptive_threshold(gamma: float, kappa: float, t: int, rounds: int, ref_norm: float) -> float:
    """gamma * exp(-kappa * t / rounds) * ref_norm, shrinking as training
    settles so late-round screening is strict."""
    if rounds < 1:
        raise ConfigurationError(f"rounds must be >= 1, got {rounds}")
    if t < 0:
        raise ConfigurationError(f"round index must be >= 0, got {t}")
    return gamma * math.exp(-kappa * t / rounds) * ref_norm


def gamma_eff(gamma: float, eps: float) -> float:
    """Threshold scale after accounting for sketch distance distortion."""
    if not 0 <= eps < 1:
        raise ConfigurationError(f"distortion must be in [0, 1), got {eps}")
    return gamma * math.sqrt((1 + eps) / (1 - eps))


def _filter_by_distance(distances: dict[int, float], threshold: float) -> tuple[list[int], bool]:
    accepted = sorted(j for j, d in distances.items() if d <= threshold)
    if accepted or not distances:
        return accepted, False
    # nothing under threshold: fall back to the single closest neighbor
    best = min(sorted(distances), key=distances.__getitem__)
    return [best], True


def balance_filter(
    self_model: np.ndarray,
    neighbor_models: Mapping[int, np.ndarray],
    gamma: float,
    kappa: float,
    t: int,
    rounds: int,
) -> FilterOutcome:
    """Full-precision distance screening against the node's own model."""
    threshold = adaptive_threshold(gamma, kappa, t, rounds, float(np.linalg.norm(self_model)))
    distances = {
        j: float(np.linalg.norm(self_model - w)) for j, w in neighbor_models.items()
    }
    accepted, fallback = _filter_by_distance(distances, threshold)
    return FilterOutcome(accepted, fallback, threshold, distances)


def sketch_filter(
    self_sketch: Sketch,
    neighbor_sketches: Mapping[int, Sketch],
    gamma: float,
    kappa: float,
    t: int,
    rounds: int,
) -> FilterOutcome:
    """Same screening rule computed entirely in sketch space."""
    threshold = adaptive_threshold(gamma, kappa, t, rounds, self_sketch.norm())
    distances = {
        j: sketch_distance(self_sketch, s) for j, s in neighbor_sketches.items()
    }
    accepted, fallback = _filter_by_distance(distances, threshold)
    return FilterOutcome(accepted, fallback, threshold, distances)


def aggregate_mixed(
    self_model: np.ndarray,
    accepted_models: Mapping[int, np.ndarray],
    alpha: float,
) -> np.ndarray:
    """alpha * self + (1 - alpha) * mean(accepted), summing in ascending
    node-id order so results are bit-reproducible."""
    if not 0 <= alpha <= 1:
        raise ConfigurationError(f"alpha must be in [0, 1], got {alpha}")
    if not accepted_models:
        if alpha == 1.0:
            return self_model.copy()
        raise ConfigurationError("empty accepted set needs alpha = 1")
    acc = np.zeros_like(self_model)
    for j in sorted(accepted_models):
        acc += accepted_models[j]
    return alpha * self_model + (1 - alpha) / len(accepted_models) * acc


def dfedavg_aggregate(
    self_model: np.ndarray, neighbor_models: Mapping[int, np.ndarray]
) -> np.ndarray:
    """Uniform mean over self and every neighbor, no screening."""
    acc = self_model.copy()
    for j in sorted(neighbor_models):
        acc += neighbor_models[j]
    return acc / (1 + len(neighbor_models))


def krum_select_index(models: Sequence[np.ndarray], f: int) -> int:
    """Index of the model whose summed squared distance to its n-f-2
    nearest peers is smallest (first index on ties)."""
    n = len(models)
    if f < 0:
        raise ConfigurationError(f"f must be >= 0, got {f}")
    if n < f + 3:
        raise ConfigurationError(
            f"krum needs at least f+3 = {f + 3} models, got {n}"
        )
    stack = np.stack(models)
    sq = ((stack[:, None, :] - stack[None, :, :]) ** 2).sum(axis=2)
    keep = n - f - 2
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(sq[i], i)
        others.sort()
        scores[i] = others[:keep].sum()
    return int(np.argmin(scores))


def krum_select(models: Sequence[np.ndarray], f: int) -> np.ndarray:
    return models[krum_select_index(models, f)].copy()
