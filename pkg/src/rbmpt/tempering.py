"""Ensemble of tempered persistent chains with deterministic even/odd swap
rounds, particle flow labels, and return-time tracking.

Temperatures own the slots: an accepted swap exchanges the particles
(configuration, flow label, return counter) between two adjacent beta slots,
never the betas themselves. A particle becomes "up" when it occupies the
beta = 1 slot and "down" when, already up, it reaches the beta = 0 slot;
a down particle reaching beta = 1 completes one round trip.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import rbm

# Horizon ~100 proposals for the per-pair swap-rate estimate.
SWAP_RATE_EMA_DECAY = 0.99

# Smoothing of the return-time estimate over completed round trips.
RETURN_TIME_EMA_DECAY = 0.9


class Label(IntEnum):
    UNSET = 0
    UP = 1
    DOWN = 2


# plain ints for the sweep hot path; enum attribute lookups are surprisingly
# expensive at one call per sweep
_UNSET, _UP, _DOWN = int(Label.UNSET), int(Label.UP), int(Label.DOWN)

# (parity, num_chains) -> indices of that parity's pair left ends
_PAIR_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _pair_indices(parity: int, num_chains: int) -> np.ndarray:
    key = (parity, num_chains)
    cached = _PAIR_CACHE.get(key)
    if cached is None:
        cached = np.arange(parity, num_chains - 1, 2)
        cached.setflags(write=False)
        _PAIR_CACHE[key] = cached
    return cached


@dataclass
class Particle:
    """One chain's joint state plus its flow label and return-time counter."""

    state: rbm.JointState
    label: Label
    return_counter: int


@dataclass
class SweepReport:
    """Outcome of one DEO sweep: proposed pairs, accepts, completed trips."""

    pair_indices: np.ndarray
    accepts: np.ndarray
    round_trips: list[int]
    tau_hat: float


def linear_ladder(num_chains: int) -> np.ndarray:
    """Betas equally spaced on [1, 0]."""
    if num_chains == 1:
        return np.array([1.0])
    return np.linspace(1.0, 0.0, num_chains)


def geometric_ladder(num_chains: int, beta_floor: float = 0.01) -> np.ndarray:
    """Betas geometric in temperature from 1 down to `beta_floor`, then 0."""
    if num_chains == 1:
        return np.array([1.0])
    if num_chains == 2:
        return np.array([1.0, 0.0])
    body = np.geomspace(1.0, beta_floor, num_chains - 1)
    return np.concatenate([body, [0.0]])


class Ensemble:
    """Ordered beta ladder with one persistent particle per slot.

    Also carries the flow histograms n_up/n_down (EMA-smoothed), per-pair
    swap-rate estimates, the return-time estimate tau_hat, the DEO parity,
    and the post-spawn burn-in countdown.
    """

    def __init__(
        self,
        betas: np.ndarray,
        visible: np.ndarray,
        hidden: np.ndarray,
    ):
        betas = np.asarray(betas, dtype=np.float64)
        m = betas.shape[0]
        if betas[0] != 1.0:
            raise ValueError("ladder must start at beta = 1")
        if m > 1:
            if betas[-1] != 0.0:
                raise ValueError("ladder must end at beta = 0")
            if not (np.diff(betas) < 0).all():
                raise ValueError("betas must be strictly decreasing")
        if visible.shape[0] != m or hidden.shape[0] != m:
            raise ValueError("one particle required per beta slot")
        self.betas = betas
        self.visible = np.asarray(visible, dtype=np.float64)
        self.hidden = np.asarray(hidden, dtype=np.float64)
        self.labels = np.full(m, Label.UNSET, dtype=np.int64)
        self.counters = np.zeros(m, dtype=np.int64)
        self.n_up = np.zeros(m)
        self.n_down = np.zeros(m)
        self.swap_rate_ema = np.ones(max(m - 1, 0))
        self.tau_hat = 1.0
        self.sweep_parity = 0
        self.burn_in_remaining = 0
        self.round_trip_ema: float | None = None

    @classmethod
    def create(
        cls,
        betas: np.ndarray,
        num_visible: int,
        num_hidden: int,
        rng: np.random.Generator,
    ) -> "Ensemble":
        """Fresh ensemble with uniform random binary particle states."""
        m = len(betas)
        visible = (rng.random((m, num_visible)) < 0.5).astype(np.float64)
        hidden = (rng.random((m, num_hidden)) < 0.5).astype(np.float64)
        return cls(np.asarray(betas, dtype=np.float64), visible, hidden)

    @property
    def num_chains(self) -> int:
        return self.betas.shape[0]

    def particle(self, slot: int) -> Particle:
        """Copy of the particle currently occupying `slot`."""
        state = rbm.JointState(self.visible[slot].copy(), self.hidden[slot].copy())
        return Particle(state, Label(self.labels[slot]), int(self.counters[slot]))

    def insert_chain(self, slot: int, beta: float, source_slot: int) -> None:
        """Insert a fresh chain at `slot`, state copied from `source_slot`.

        The new particle is unlabeled with a zero counter; its flow histogram
        entries start at the mean of the neighbouring slots, and the two swap
        pairs created by the split inherit the split pair's rate estimate.
        """
        self.betas = np.insert(self.betas, slot, beta)
        self.visible = np.insert(self.visible, slot, self.visible[source_slot], axis=0)
        self.hidden = np.insert(self.hidden, slot, self.hidden[source_slot], axis=0)
        self.labels = np.insert(self.labels, slot, Label.UNSET)
        self.counters = np.insert(self.counters, slot, 0)
        up_init = 0.5 * (self.n_up[slot - 1] + self.n_up[slot])
        down_init = 0.5 * (self.n_down[slot - 1] + self.n_down[slot])
        self.n_up = np.insert(self.n_up, slot, up_init)
        self.n_down = np.insert(self.n_down, slot, down_init)
        self.swap_rate_ema = np.insert(
            self.swap_rate_ema, slot - 1, self.swap_rate_ema[slot - 1]
        )


def swap_ratio(energy_i: float, energy_j: float, beta_i: float, beta_j: float) -> float:
    """Acceptance probability min(1, exp((beta_i - beta_j) (E_i - E_j))).

    Chain i is the colder of the pair (beta_i >= beta_j). Computed as
    exp(min(x, 0)) so the exponent never overflows.
    """
    if beta_i < beta_j:
        raise ValueError("expected beta_i >= beta_j")
    log_r = (beta_i - beta_j) * (energy_i - energy_j)
    return float(np.exp(min(log_r, 0.0)))


def deo_sweep(
    ensemble: Ensemble,
    params: rbm.RbmParams,
    gibbs_steps: int,
    rng: np.random.Generator,
) -> SweepReport:
    """One DEO sweep: Gibbs-advance every chain at its own beta, then propose
    swaps on all adjacent pairs of the current parity, then flip the parity.

    Accepted swaps exchange particles (state, label, counter) between slots.
    Each proposed pair consumes exactly one uniform draw. Afterwards every
    counter advances by one sweep, boundary labels are refreshed (slot 0
    mints "up" particles, the last slot turns "up" into "down"), completed
    round trips fold into the return-time estimate, and any post-spawn
    burn-in countdown ticks down.
    """
    m = ensemble.num_chains
    parity = ensemble.sweep_parity
    ensemble.visible, ensemble.hidden = rbm.gibbs_sweep_chains(
        params, ensemble.visible, ensemble.hidden, ensemble.betas, gibbs_steps, rng
    )

    pair_indices = _pair_indices(parity, m)
    if pair_indices.size:
        e = rbm.energies(params, ensemble.visible, ensemble.hidden)
        betas = ensemble.betas
        # strided views of the lo/hi members of each proposed pair
        log_r = (betas[parity : m - 1 : 2] - betas[parity + 1 : m : 2]) * (
            e[parity : m - 1 : 2] - e[parity + 1 : m : 2]
        )
        accept_prob = np.exp(np.minimum(log_r, 0.0))
        accepts = rng.random(pair_indices.shape[0]) < accept_prob
        swapped = pair_indices[accepts]
        if swapped.size:
            src = np.concatenate([swapped, swapped + 1])
            dst = np.concatenate([swapped + 1, swapped])
            for arr in (ensemble.visible, ensemble.hidden, ensemble.labels, ensemble.counters):
                arr[src] = arr[dst]
        rate_view = ensemble.swap_rate_ema[parity : m - 1 : 2]
        rate_view *= SWAP_RATE_EMA_DECAY
        rate_view += (1.0 - SWAP_RATE_EMA_DECAY) * accepts
    else:
        accepts = np.zeros(0, dtype=bool)
    ensemble.sweep_parity = parity ^ 1

    round_trips: list[int] = []
    if m >= 2:
        labels = ensemble.labels
        counters = ensemble.counters
        counters += 1
        first = labels[0]
        if first == _DOWN:
            trip = int(counters[0])
            round_trips.append(trip)
            counters[0] = 0
            labels[0] = _UP
            if ensemble.round_trip_ema is None:
                ensemble.round_trip_ema = float(trip)
            else:
                ensemble.round_trip_ema = (
                    RETURN_TIME_EMA_DECAY * ensemble.round_trip_ema
                    + (1.0 - RETURN_TIME_EMA_DECAY) * trip
                )
        elif first == _UNSET:
            labels[0] = _UP
        if labels[m - 1] == _UP:
            labels[m - 1] = _DOWN

    estimate_return_time(ensemble)
    if ensemble.burn_in_remaining > 0:
        ensemble.burn_in_remaining -= 1
    return SweepReport(pair_indices, accepts, round_trips, ensemble.tau_hat)


def estimate_return_time(ensemble: Ensemble) -> float:
    """Current return-time estimate tau_hat, floored at 1.

    The EMA over completed round-trip durations once any exist; before the
    first completion, the sum of all particle counters (a lower bound).
    """
    if ensemble.round_trip_ema is not None:
        tau = ensemble.round_trip_ema
    else:
        tau = float(ensemble.counters.sum())
    ensemble.tau_hat = max(1.0, tau)
    return ensemble.tau_hat


def update_flow_histograms(ensemble: Ensemble) -> None:
    """EMA-update n_up/n_down from each slot's occupant label.

    A slot holding an up particle moves n_up toward 1 at rate 1/tau_hat and
    decays n_down; symmetrically for down particles. Unlabeled occupants let
    both histograms decay.
    """
    rate = 1.0 / ensemble.tau_hat
    ensemble.n_up *= 1.0 - rate
    ensemble.n_down *= 1.0 - rate
    ensemble.n_up[ensemble.labels == _UP] += rate
    ensemble.n_down[ensemble.labels == _DOWN] += rate


def f_up(ensemble: Ensemble) -> np.ndarray:
    """Fraction of up-moving particles per slot, boundaries pinned to 1 and 0.

    Interior slots where neither label has been seen yet report the neutral
    value 0.5.
    """
    if ensemble.num_chains == 1:
        return np.array([1.0])
    denom = ensemble.n_up + ensemble.n_down
    safe = np.where(denom > 0.0, denom, 1.0)
    frac = np.where(denom > 0.0, ensemble.n_up / safe, 0.5)
    frac[0] = 1.0
    frac[-1] = 0.0
    return frac
