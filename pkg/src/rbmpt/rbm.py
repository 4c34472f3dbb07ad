"""Binary restricted Boltzmann machine: energy, tempered conditionals, Gibbs
transitions, sufficient statistics, and exact partition/likelihood evaluation
for models small enough to enumerate one layer.

Units live in {0, 1}. The joint energy of a configuration (v, h) is

    E(v, h) = -(h' W v + b' h + c' v)

and the tempered family is p_beta(v, h) proportional to exp(-beta * E(v, h)),
so beta = 1 is the target model and beta = 0 is uniform over all states.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

# Largest layer we are willing to enumerate exactly (2^cap states).
EXACT_LAYER_CAP = 25

# States enumerated per block when summing out a layer, to bound memory.
_ENUM_BLOCK = 4096


class IntractableModelError(ValueError):
    """Raised when exact evaluation would require enumerating too large a layer."""


@dataclass
class RbmParams:
    """Model parameters: weights (num_hidden x num_visible) plus bias vectors."""

    weights: np.ndarray
    hidden_bias: np.ndarray
    visible_bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        self.visible_bias = np.asarray(self.visible_bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a matrix")
        nh, nv = self.weights.shape
        if self.hidden_bias.shape != (nh,) or self.visible_bias.shape != (nv,):
            raise ValueError(
                f"bias shapes {self.hidden_bias.shape}/{self.visible_bias.shape} "
                f"inconsistent with weights {self.weights.shape}"
            )
        if not self.all_finite():
            raise ValueError("parameters contain non-finite entries")

    @property
    def num_hidden(self) -> int:
        return self.weights.shape[0]

    @property
    def num_visible(self) -> int:
        return self.weights.shape[1]

    def all_finite(self) -> bool:
        return bool(
            np.isfinite(self.weights).all()
            and np.isfinite(self.hidden_bias).all()
            and np.isfinite(self.visible_bias).all()
        )

    def max_abs(self) -> float:
        return float(
            max(
                np.abs(self.weights).max(initial=0.0),
                np.abs(self.hidden_bias).max(initial=0.0),
                np.abs(self.visible_bias).max(initial=0.0),
            )
        )

    def copy(self) -> "RbmParams":
        return RbmParams(
            self.weights.copy(), self.hidden_bias.copy(), self.visible_bias.copy()
        )


@dataclass
class JointState:
    """One joint configuration (v, h); every entry is 0 or 1."""

    visible: np.ndarray
    hidden: np.ndarray

    def __post_init__(self):
        self.visible = np.asarray(self.visible, dtype=np.float64)
        self.hidden = np.asarray(self.hidden, dtype=np.float64)
        for arr in (self.visible, self.hidden):
            if not np.isin(arr, (0.0, 1.0)).all():
                raise ValueError("state entries must be 0 or 1")


@dataclass
class GradStats:
    """Per-parameter sufficient statistics: (h v', h, v) evaluated at a state."""

    weight_stats: np.ndarray
    hidden_stats: np.ndarray
    visible_stats: np.ndarray


def init_params(num_visible: int, num_hidden: int, rng: np.random.Generator) -> RbmParams:
    """Small symmetric random weights, zero biases."""
    scale = 1.0 / np.sqrt(num_visible * num_hidden)
    weights = rng.uniform(-scale, scale, size=(num_hidden, num_visible))
    return RbmParams(weights, np.zeros(num_hidden), np.zeros(num_visible))


def energy(params: RbmParams, state: JointState) -> float:
    """E(v, h) = -(h' W v + b' h + c' v)."""
    v, h = state.visible, state.hidden
    if v.shape != (params.num_visible,) or h.shape != (params.num_hidden,):
        raise ValueError("state shape inconsistent with parameters")
    return float(
        -(h @ params.weights @ v + params.hidden_bias @ h + params.visible_bias @ v)
    )


def energies(params: RbmParams, visible: np.ndarray, hidden: np.ndarray) -> np.ndarray:
    """Joint energies of a batch of states; visible (m, nv), hidden (m, nh)."""
    interaction = np.einsum("mh,hv,mv->m", hidden, params.weights, visible)
    return -(interaction + hidden @ params.hidden_bias + visible @ params.visible_bias)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return beta


def hidden_conditional(params: RbmParams, visible: np.ndarray, beta: float) -> np.ndarray:
    """p_beta(h_i = 1 | v), componentwise logistic of beta * (b + W v).

    Accepts a single visible vector (nv,) or a batch (m, nv).
    """
    beta = _check_beta(beta)
    return expit(beta * (visible @ params.weights.T + params.hidden_bias))


def visible_conditional(params: RbmParams, hidden: np.ndarray, beta: float) -> np.ndarray:
    """p_beta(v_j = 1 | h), componentwise logistic of beta * (c + W' h)."""
    beta = _check_beta(beta)
    return expit(beta * (hidden @ params.weights + params.visible_bias))


def gibbs_step(
    params: RbmParams, state: JointState, beta: float, rng: np.random.Generator
) -> JointState:
    """One alternation: sample h ~ p_beta(h|v), then v ~ p_beta(v|h)."""
    ph = hidden_conditional(params, state.visible, beta)
    hidden = (rng.random(ph.shape) < ph).astype(np.float64)
    pv = visible_conditional(params, hidden, beta)
    visible = (rng.random(pv.shape) < pv).astype(np.float64)
    return JointState(visible, hidden)


def gibbs_sweep_chains(
    params: RbmParams,
    visible: np.ndarray,
    hidden: np.ndarray,
    betas: np.ndarray,
    steps: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance m chains by `steps` Gibbs alternations, chain i at betas[i].

    Same transition kernel as `gibbs_step`, batched across chains; draw order
    is hidden then visible, one uniform block per phase.
    """
    b = betas[:, None]
    weights = params.weights
    weights_t = weights.T
    hidden_bias = params.hidden_bias
    visible_bias = params.visible_bias
    for _ in range(steps):
        ph = expit(b * (visible @ weights_t + hidden_bias))
        hidden = (rng.random(ph.shape) < ph).astype(np.float64)
        pv = expit(b * (hidden @ weights + visible_bias))
        visible = (rng.random(pv.shape) < pv).astype(np.float64)
    return visible, hidden


def sufficient_stats(visible: np.ndarray, hidden_probs: np.ndarray) -> GradStats:
    """phi(v, h~) with mean-field hidden: (outer(h~, v), h~, v)."""
    visible = np.asarray(visible, dtype=np.float64)
    hidden_probs = np.asarray(hidden_probs, dtype=np.float64)
    return GradStats(np.outer(hidden_probs, visible), hidden_probs.copy(), visible.copy())


def mean_sufficient_stats(visible: np.ndarray, hidden_probs: np.ndarray) -> GradStats:
    """Minibatch mean of phi(v, h~); visible (m, nv), hidden_probs (m, nh)."""
    m = visible.shape[0]
    return GradStats(
        hidden_probs.T @ visible / m, hidden_probs.mean(axis=0), visible.mean(axis=0)
    )


def _bit_patterns(n: int, start: int, stop: int) -> np.ndarray:
    """Rows `start:stop` of the 2^n enumeration of n-bit vectors."""
    idx = np.arange(start, stop, dtype=np.int64)[:, None]
    return ((idx >> np.arange(n)) & 1).astype(np.float64)


def exact_log_partition(
    params: RbmParams, beta: float = 1.0, layer_cap: int = EXACT_LAYER_CAP
) -> float:
    """log Z(beta) by summing out the smaller layer analytically.

    Enumerates the smaller of the two layers and uses
    Z(beta) = sum_h exp(beta b'h) prod_j (1 + exp(beta (c_j + (W'h)_j)))
    (or the visible-side mirror image), entirely in log space.
    """
    beta = _check_beta(beta)
    nh, nv = params.num_hidden, params.num_visible
    if min(nh, nv) > layer_cap:
        raise IntractableModelError(
            f"exact evaluation needs min(num_hidden, num_visible) <= {layer_cap}, "
            f"got {nh} hidden / {nv} visible"
        )
    if nh <= nv:
        n_enum = nh
        bias_enum, bias_other = params.hidden_bias, params.visible_bias
        cross = params.weights.T  # (nv, nh): activation of the kept layer
    else:
        n_enum = nv
        bias_enum, bias_other = params.visible_bias, params.hidden_bias
        cross = params.weights  # (nh, nv)
    total = 1 << n_enum
    chunk_logs = []
    for start in range(0, total, _ENUM_BLOCK):
        states = _bit_patterns(n_enum, start, min(start + _ENUM_BLOCK, total))
        act = beta * (states @ cross.T + bias_other)
        terms = beta * (states @ bias_enum) + np.logaddexp(0.0, act).sum(axis=1)
        chunk_logs.append(logsumexp(terms))
    return float(logsumexp(np.array(chunk_logs)))


def free_energy(params: RbmParams, visible: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """F_beta(v) = -log sum_h exp(-beta E(v, h)), hidden layer summed analytically.

    Accepts a single vector (nv,) or a batch (m, nv).
    """
    beta = _check_beta(beta)
    act = beta * (visible @ params.weights.T + params.hidden_bias)
    return -(
        beta * (visible @ params.visible_bias) + np.logaddexp(0.0, act).sum(axis=-1)
    )


def exact_log_likelihood(
    params: RbmParams, data: np.ndarray, layer_cap: int = EXACT_LAYER_CAP
) -> float:
    """Mean log p(v) over the rows of `data`, using the exact partition function."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    log_z = exact_log_partition(params, 1.0, layer_cap=layer_cap)
    return float(np.mean(-free_energy(params, data) - log_z))


def save_params(params: RbmParams, path) -> None:
    """Flat binary snapshot: '<II' dims header (num_visible, num_hidden), then
    row-major weights, hidden_bias, visible_bias as little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", params.num_visible, params.num_hidden))
        fh.write(np.ascontiguousarray(params.weights, dtype="<f8").tobytes())
        fh.write(params.hidden_bias.astype("<f8").tobytes())
        fh.write(params.visible_bias.astype("<f8").tobytes())


def load_params(path) -> RbmParams:
    with open(path, "rb") as fh:
        nv, nh = struct.unpack("<II", fh.read(8))
        weights = np.frombuffer(fh.read(8 * nh * nv), dtype="<f8").reshape(nh, nv)
        hidden_bias = np.frombuffer(fh.read(8 * nh), dtype="<f8")
        visible_bias = np.frombuffer(fh.read(8 * nv), dtype="<f8")
    return RbmParams(weights.copy(), hidden_bias.copy(), visible_bias.copy())
