"""Byzantine transmission attacks.

Attacks corrupt only what a compromised node sends; its own training and
aggregation stay honest. With kind="none" and consistent_sketch=True a
compromised node is therefore indistinguishable from an honest one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .sketch import Sketch, SketchParams, compute_sketch

ATTACK_KINDS = ("none", "gaussian", "directed-deviation")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    sigma: float = 1.0            # gaussian: noise std per coordinate
    lam: float = 2.0              # directed-deviation: step against the honest direction
    consistent_sketch: bool = True  # False: send the sketch of the pre-attack model

    def __post_init__(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError(
                f"unknown attack kind {self.kind!r}, expected one of {ATTACK_KINDS}"
            )
        if self.kind == "gaussian" and self.sigma <= 0:
            raise ConfigurationError(f"gaussian sigma must be > 0, got {self.sigma}")
        if self.kind == "directed-deviation" and self.lam <= 0:
            raise ConfigurationError(f"deviation scale must be > 0, got {self.lam}")


@dataclass
class AttackContext:
    """Round-level collusion state shared by all attackers."""

    round: int
    honest_mean: np.ndarray       # mean of honest post-training models
    honest_direction: np.ndarray  # honest_mean minus the honest mean at round start


def apply_attack(
    spec: AttackSpec,
    honest_update: np.ndarray,
    ctx: AttackContext,
    rng: np.random.Generator,
) -> np.ndarray:
    """Model an attacker transmits in place of its honest update.

    gaussian: independent noise per attacker. directed-deviation: all
    attackers collude on one vector pushing against the honest mean's
    movement, so it ignores both the honest update and the rng.
    """
    if spec.kind == "none":
        return honest_update
    if spec.kind == "gaussian":
        return honest_update + spec.sigma * rng.standard_normal(honest_update.shape)
    return ctx.honest_mean - spec.lam * np.sign(ctx.honest_direction)


def attacker_message(
    spec: AttackSpec,
    params: SketchParams,
    transmitted_model: np.ndarray,
    pre_attack_model: np.ndarray,
) -> tuple[Sketch, np.ndarray]:
    """(sketch, model) pair an attacker sends under a sketch protocol.

    consistent_sketch sends the true sketch of the corrupted model, which
    beats verification and must be caught by distance screening instead;
    otherwise the attacker advertises the sketch of its innocent-looking
    pre-attack model and relies on stale trust.
    """
    source = transmitted_model if spec.consistent_sketch else pre_attack_model
    return compute_sketch(params, source), transmitted_model
