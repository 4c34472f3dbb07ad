"""Online temperature-ladder adaptation: equal-mass respacing of the betas
from the measured particle-flow fractions, and chain spawning to keep the
average swap rate above a floor.

Respacing inverts the monotone piecewise-linear interpolant of f_up as a
function of beta at equally spaced levels, which is the ladder that makes
f_up linear in the chain index; the betas then take a relaxation step of
size `beta_learning_rate` toward those targets. Both endpoints stay pinned
at 1 and 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .tempering import Ensemble, f_up

logger = logging.getLogger(__name__)

# Smallest allowed gap between adjacent betas after an adaptation step.
MIN_BETA_GAP = 1e-6

# Tie-break applied to measured f_up values so the interpolant is invertible.
_STRICT_EPS = 1e-12


@dataclass
class AdaptationConfig:
    """Knobs for ladder respacing and chain spawning."""

    beta_learning_rate: float = 1e-4
    min_avg_swap_rate: float = 0.4
    spawn_check_interval: int = 1000
    burn_in_sweeps: int = 100
    max_chains: int = 100

    def __post_init__(self):
        # zero rates are the documented degenerate settings that reduce the
        # adaptive sampler to a fixed ladder
        if self.beta_learning_rate < 0:
            raise ValueError("beta_learning_rate must be nonnegative")
        if not 0.0 <= self.min_avg_swap_rate < 1.0:
            raise ValueError("min_avg_swap_rate must lie in [0, 1)")
        for name in ("spawn_check_interval", "burn_in_sweeps", "max_chains"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")


@dataclass
class SpawnEvent:
    """Record of one chain insertion."""

    update_index: int
    slot: int
    new_beta: float
    num_chains: int


def optimal_betas(betas: np.ndarray, fup: np.ndarray) -> np.ndarray:
    """Equal-mass ladder: betas at which the f_up interpolant hits the levels
    1 - i/(M-1), so that f_up becomes linear in the chain index.

    The measured f_up is clamped to be strictly decreasing (running-minimum
    isotonic clamp with an epsilon tie-break) before inversion; endpoints are
    returned unchanged.
    """
    betas = np.asarray(betas, dtype=np.float64)
    fup = np.asarray(fup, dtype=np.float64)
    if not np.isfinite(fup).all():
        raise ValueError("f_up contains non-finite entries")
    m = betas.shape[0]
    if m <= 2:
        return betas.copy()
    f = fup.copy()
    f[0] = 1.0
    f[-1] = 0.0
    for i in range(1, m):
        f[i] = min(f[i], f[i - 1] - _STRICT_EPS)
    levels = 1.0 - np.arange(m) / (m - 1)
    targets = betas.copy()
    targets[1:-1] = np.interp(levels[1:-1], f[::-1], betas[::-1])
    return targets


def adapt_betas(ensemble: Ensemble, config: AdaptationConfig) -> None:
    """Move interior betas one relaxation step toward the equal-mass targets.

    Endpoints never move. A convex step between two strictly decreasing
    ladders stays strictly decreasing; a minimal-gap projection guards
    against floating-point ties.
    """
    m = ensemble.num_chains
    if m <= 2:
        return
    targets = optimal_betas(ensemble.betas, f_up(ensemble))
    mu = config.beta_learning_rate
    betas = ensemble.betas
    betas[1:-1] += mu * (targets[1:-1] - betas[1:-1])
    for i in range(1, m - 1):
        betas[i] = min(betas[i], betas[i - 1] - MIN_BETA_GAP)
    for i in range(m - 2, 0, -1):
        betas[i] = max(betas[i], betas[i + 1] + MIN_BETA_GAP)


def average_swap_rate(ensemble: Ensemble) -> float:
    """Mean of the per-pair swap-rate estimates; 1.0 for a single chain."""
    if ensemble.num_chains == 1:
        return 1.0
    return float(ensemble.swap_rate_ema.mean())


def maybe_spawn(
    ensemble: Ensemble, config: AdaptationConfig, update_index: int = 0
) -> SpawnEvent | None:
    """Spawn one chain if the average swap rate has dropped below the floor.

    The new chain splits the pair with the largest f_up jump, sits at the
    midpoint beta, and copies the state of its lower-beta neighbour. A fixed
    burn-in window follows, during which respacing and further spawning are
    suspended. Returns None (and changes nothing) when the rate is healthy,
    during burn-in, or when the chain budget is exhausted.
    """
    if ensemble.burn_in_remaining > 0:
        return None
    if average_swap_rate(ensemble) >= config.min_avg_swap_rate:
        return None
    if ensemble.num_chains >= config.max_chains:
        logger.warning(
            "swap rate %.3f below %.3f but chain budget (%d) is saturated",
            average_swap_rate(ensemble),
            config.min_avg_swap_rate,
            config.max_chains,
        )
        return None
    frac = f_up(ensemble)
    gap = int(np.argmax(np.abs(np.diff(frac))))
    new_beta = 0.5 * (ensemble.betas[gap] + ensemble.betas[gap + 1])
    ensemble.insert_chain(gap + 1, new_beta, source_slot=gap + 1)
    ensemble.burn_in_remaining = config.burn_in_sweeps
    return SpawnEvent(update_index, gap + 1, float(new_beta), ensemble.num_chains)
