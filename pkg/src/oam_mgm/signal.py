"""
Waveform container, Gray-labelled square QAM and seed handling.

Gray convention
---------------
A symbol's label is read MSB first.  The first half of the label selects the
in-phase level and the second half the quadrature level.  On each axis the
Gray-decoded index ``i`` maps to amplitude ``(L - 1) - 2 i`` with ``L`` levels,
so a 0 bit is the positive side:

* QPSK:  ``00 -> (+1+1j)/sqrt(2)``, ``10 -> (-1+1j)/sqrt(2)``,
  ``01 -> (+1-1j)/sqrt(2)``, ``11 -> (-1-1j)/sqrt(2)``
* 16QAM, per axis: ``00 -> +3``, ``01 -> +1``, ``11 -> -1``, ``10 -> -3``
  (before scaling by ``1/sqrt(10)``)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

SUPPORTED_ORDERS = (4, 16)

# Stable integer tags used in seed spawn keys; never renumber.
SEED_TAGS = {
    "bits": 1,
    "pilots": 2,
    "channel": 3,
    "noise": 4,
    "calibration": 5,
}


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    The splitting function is ``SeedSequence(seed, spawn_key=keys)``; string
    keys are translated through ``SEED_TAGS``.  Streams for different key
    tuples are statistically independent and do not depend on the order in
    which they are requested, so serial and parallel runs agree bit for bit.
    """
    spawn = tuple(SEED_TAGS[k] if isinstance(k, str) else int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn))


@dataclass(frozen=True)
class ComplexWaveform:
    """Uniformly sampled complex baseband sequence."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=complex))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def mean_power(w: ComplexWaveform | np.ndarray) -> float:
    """Mean of ``|x|**2`` over the samples; raises on an empty waveform."""
    x = w.samples if isinstance(w, ComplexWaveform) else np.asarray(w)
    if x.size == 0:
        raise ValueError("mean power of an empty waveform is undefined")
    return float(np.mean(np.abs(x) ** 2))


def _axis_amplitudes(bits_per_axis: int) -> np.ndarray:
    """Unit-power-normalized amplitude for each per-axis label value (index = label)."""
    n = 1 << bits_per_axis
    labels = np.arange(n)
    # gray -> binary
    index = labels.copy()
    shift = labels >> 1
    while shift.any():
        index ^= shift
        shift >>= 1
    levels = (n - 1) - 2.0 * index
    # two axes share the average power
    return levels / np.sqrt(2 * np.mean(levels**2))


@dataclass(frozen=True)
class QamConstellation:
    """Gray-labelled square QAM with unit average power (orders 4 and 16)."""

    order: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order not in SUPPORTED_ORDERS:
            raise ValueError(f"unsupported QAM order {self.order}; choose from {SUPPORTED_ORDERS}")
        levels = _axis_amplitudes(self.bits_per_axis)
        labels = np.arange(self.order)
        pts = levels[labels >> self.bits_per_axis] + 1j * levels[labels & (len(levels) - 1)]
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def bits_per_axis(self) -> int:
        return self.bits_per_symbol // 2

    @cached_property
    def axis_levels(self) -> np.ndarray:
        return _axis_amplitudes(self.bits_per_axis)


def qam_map(bits: Sequence[int] | np.ndarray, c: QamConstellation) -> np.ndarray:
    """Map a bit stream onto constellation points, ``log2(order)`` bits per symbol."""
    b = np.asarray(bits, dtype=np.int64).ravel()
    k = c.bits_per_symbol
    if b.size % k:
        raise ValueError(f"bit count {b.size} is not a multiple of {k} bits per symbol")
    if b.size and (b.min() < 0 or b.max() > 1):
        raise ValueError("bits must be 0 or 1")
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = b.reshape(-1, k) @ weights
    return c.points[labels]


def qam_demap(symbols: Sequence[complex] | np.ndarray, c: QamConstellation) -> np.ndarray:
    """Hard-decision demapping to the Euclidean-nearest point.

    The grid is separable, so each axis is sliced on its own.  Ties go to the
    smaller label, which on each axis means the smaller per-axis label value.
    """
    z = np.asarray(symbols, dtype=complex).ravel()
    levels = c.axis_levels
    m = c.bits_per_axis

    def slice_axis(x):
        # argmin returns the first minimum, and levels are ordered by label
        return np.argmin(np.abs(x[:, None] - levels[None, :]), axis=1)

    labels = (slice_axis(z.real) << m) | slice_axis(z.imag)
    k = c.bits_per_symbol
    shifts = np.arange(k - 1, -1, -1)
    return ((labels[:, None] >> shifts[None, :]) & 1).astype(np.int8).ravel()
