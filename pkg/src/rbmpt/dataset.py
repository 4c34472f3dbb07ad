"""Synthetic benchmark generator: a mixture of noisy binary prototype images.

Each example picks a mixture component and returns its prototype with every
pixel independently flipped with that component's flip probability. The
default component weights and flip probabilities pair heavy, nearly
noise-free modes (hard for a Gibbs sampler to escape) with a heavy noisy
mode (prone to intercepting down-moving tempered particles).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

# Benchmark mixture constants: component weights and per-pixel flip
# probabilities of the five-mode mixture.
MIXTURE_WEIGHTS = (0.3314, 0.2262, 0.0812, 0.0254, 0.3358)
MIXTURE_FLIP_PROBS = (0.0001, 0.0137, 0.0215, 0.0223, 0.0544)

_SNAPSHOT_MAGIC = b"RBMS"


@dataclass
class MixtureSpec:
    """Mixture of noisy binary prototypes.

    prototypes: (m, d) array of 0/1 rows; weights: (m,) mixing weights
    summing to one; flip_probs: (m,) per-component pixel flip probabilities
    in [0, 0.5]. image_side is a reshape hint for square image data.
    """

    prototypes: np.ndarray
    weights: np.ndarray
    flip_probs: np.ndarray
    image_side: int = 28

    def __post_init__(self):
        self.prototypes = np.atleast_2d(np.asarray(self.prototypes, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.flip_probs = np.asarray(self.flip_probs, dtype=np.float64)
        m = self.prototypes.shape[0]
        if self.weights.shape != (m,) or self.flip_probs.shape != (m,):
            raise ValueError("weights/flip_probs must have one entry per prototype")
        if not np.isin(self.prototypes, (0.0, 1.0)).all():
            raise ValueError("prototypes must be binary")
        if (self.weights < 0).any() or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if (self.flip_probs < 0).any() or (self.flip_probs > 0.5).any():
            raise ValueError("flip probabilities must lie in [0, 0.5]")

    @property
    def num_components(self) -> int:
        return self.prototypes.shape[0]

    @property
    def num_pixels(self) -> int:
        return self.prototypes.shape[1]


def default_spec(rng: np.random.Generator, image_side: int = 28) -> MixtureSpec:
    """The default five-component benchmark with seed-derived prototypes.

    Prototypes are i.i.d. fair-coin binary images of `image_side` squared
    pixels; weights are renormalized defensively (a no-op for the default
    constants).
    """
    weights = np.array(MIXTURE_WEIGHTS)
    weights = weights / weights.sum()
    d = image_side * image_side
    prototypes = (rng.random((len(weights), d)) < 0.5).astype(np.float64)
    return MixtureSpec(prototypes, weights, np.array(MIXTURE_FLIP_PROBS), image_side)


def sample(spec: MixtureSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw: pick a component, flip each prototype pixel with its p_m."""
    m = rng.choice(spec.num_components, p=spec.weights)
    flips = rng.random(spec.num_pixels) < spec.flip_probs[m]
    return np.abs(spec.prototypes[m] - flips.astype(np.float64))


def sample_batch(spec: MixtureSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, d) batch of independent draws."""
    comps = rng.choice(spec.num_components, size=n, p=spec.weights)
    flips = rng.random((n, spec.num_pixels)) < spec.flip_probs[comps, None]
    return np.abs(spec.prototypes[comps] - flips.astype(np.float64))


class BatchSampler:
    """Callable (rng, n) -> batch; exposes num_visible for model sizing."""

    def __init__(self, spec: MixtureSpec):
        self.spec = spec
        self.num_visible = spec.num_pixels

    def __call__(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return sample_batch(self.spec, rng, n)


def mixture_log_likelihood(spec: MixtureSpec, v: np.ndarray) -> float:
    """Exact log-density of one binary vector under the mixture.

    Computed in log space; a zero flip probability contributes -inf for a
    component with any mismatched pixel and drops out of the mixture sum.
    """
    v = np.asarray(v, dtype=np.float64)
    mismatches = np.abs(spec.prototypes - v).sum(axis=1)
    matches = spec.num_pixels - mismatches
    with np.errstate(divide="ignore"):
        log_p = np.log(spec.flip_probs)
        log_w = np.log(spec.weights)
    # a zero mismatch count must contribute exactly 0, not 0 * -inf
    terms = matches * np.log1p(-spec.flip_probs)
    hit = mismatches > 0
    terms[hit] += mismatches[hit] * log_p[hit]
    return float(logsumexp(log_w + terms))


def spec_to_json(spec: MixtureSpec, seed: int | None = None) -> str:
    """JSON record with prototypes encoded as '01' bit-strings."""
    record = {
        "weights": spec.weights.tolist(),
        "flip_probs": spec.flip_probs.tolist(),
        "prototypes": [
            "".join(str(int(b)) for b in row) for row in spec.prototypes
        ],
        "image_side": spec.image_side,
        "seed": seed,
    }
    return json.dumps(record, indent=2)


def spec_from_json(text: str) -> MixtureSpec:
    record = json.loads(text)
    prototypes = np.array(
        [[float(ch) for ch in row] for row in record["prototypes"]]
    )
    return MixtureSpec(
        prototypes,
        np.array(record["weights"]),
        np.array(record["flip_probs"]),
        int(record["image_side"]),
    )


def save_snapshot(path, data: np.ndarray) -> None:
    """Packed-bit binary snapshot: magic, '<II' (count, width), then each row
    bit-packed to a byte boundary."""
    data = np.atleast_2d(np.asarray(data))
    count, width = data.shape
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_MAGIC)
        fh.write(struct.pack("<II", count, width))
        fh.write(np.packbits(data.astype(np.uint8), axis=1).tobytes())


def load_snapshot(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a dataset snapshot")
        count, width = struct.unpack("<II", fh.read(8))
        row_bytes = (width + 7) // 8
        packed = np.frombuffer(fh.read(count * row_bytes), dtype=np.uint8)
    bits = np.unpackbits(packed.reshape(count, row_bytes), axis=1)[:, :width]
    return bits.astype(np.float64)
