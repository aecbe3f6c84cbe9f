"""Error counting, EVM and sensitivity read-off at a BER threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.special import erfc

from .rxdsp import CombinerMode

FEC_THRESHOLD = 3.8e-3


def qfunc(x):
    return 0.5 * erfc(np.asarray(x) / math.sqrt(2))


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else math.inf


@dataclass
class LinkReport:
    """BER/EVM summary for one (group, ROP, combiner) point.

    ``errors`` is kept alongside ``ber`` so reports from separate shards can be
    merged exactly with ``+``.
    """

    mg: int
    combiner: CombinerMode
    rop_dbm: float
    errors: int = 0
    bit_count: int = 0
    signal_power: np.ndarray = field(default_factory=lambda: np.zeros(0))
    error_power: np.ndarray = field(default_factory=lambda: np.zeros(0))
    subcarrier_errors: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    subcarrier_bits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def ber(self) -> float:
        return self.errors / self.bit_count if self.bit_count else math.nan

    @property
    def evm_rms(self) -> float:
        return math.sqrt(self.error_power.sum() / self.signal_power.sum())

    @property
    def mean_snr_db(self) -> float:
        """Data-aided SNR over the whole band (total reference over total error power)."""
        return 10 * math.log10(self.signal_power.sum() / self.error_power.sum())

    @property
    def per_subcarrier(self) -> list[tuple[float, float]]:
        snr_db = 10 * np.log10(self.signal_power / self.error_power)
        ber = self.subcarrier_errors / np.maximum(self.subcarrier_bits, 1)
        return list(zip(snr_db.tolist(), ber.tolist()))

    def __add__(self, other: "LinkReport") -> "LinkReport":
        if (self.mg, self.combiner, self.rop_dbm) != (other.mg, other.combiner, other.rop_dbm):
            raise ValueError("can only merge reports for the same point")

        def add(a, b):
            if a.size == 0:
                return b.copy()
            if b.size == 0:
                return a.copy()
            return a + b

        return LinkReport(
            self.mg, self.combiner, self.rop_dbm,
            self.errors + other.errors, self.bit_count + other.bit_count,
            add(self.signal_power, other.signal_power), add(self.error_power, other.error_power),
            add(self.subcarrier_errors, other.subcarrier_errors), add(self.subcarrier_bits, other.subcarrier_bits),
        )


def count_ber(tx, rx) -> tuple[int, float]:
    """Hamming distance between two bit streams and its rate."""
    tx = np.asarray(tx).ravel()
    rx = np.asarray(rx).ravel()
    if tx.size != rx.size:
        raise ValueError(f"bit streams differ in length: {tx.size} vs {rx.size}")
    if tx.size == 0:
        return 0, 0.0
    errors = int(np.count_nonzero(tx != rx))
    return errors, errors / tx.size


def evm(rx_symbols, ref_symbols) -> float:
    """RMS error vector magnitude relative to the reference power."""
    rx = np.asarray(rx_symbols, dtype=complex).ravel()
    ref = np.asarray(ref_symbols, dtype=complex).ravel()
    if rx.size == 0:
        raise ValueError("EVM of an empty sequence is undefined")
    if rx.size != ref.size:
        raise ValueError("rx and reference lengths differ")
    ref_power = np.mean(np.abs(ref) ** 2)
    if ref_power <= 0:
        raise ValueError("reference has zero power")
    return float(np.sqrt(np.mean(np.abs(rx - ref) ** 2) / ref_power))


def sensitivity_at_threshold(curve: Sequence[tuple[float, float]], threshold: float = FEC_THRESHOLD,
                             isotonic: bool = True) -> float | None:
    """ROP at which a BER-vs-ROP curve crosses ``threshold``.

    Points with zero BER are dropped.  With ``isotonic`` the remaining
    ``log10(BER)`` values are first projected onto a non-increasing sequence,
    then the crossing is found by linear interpolation of ``log10(BER)`` over
    ROP.  Returns ``None`` when the threshold lies outside the curve's BER
    range (the link never reaches it, or is already below it everywhere).
    """
    pts = sorted((float(r), float(b)) for r, b in curve if b > 0)
    if not pts:
        return None
    rop = np.array([p[0] for p in pts])
    logb = np.log10([p[1] for p in pts])
    if isotonic:
        logb = isotonic_regression(logb, increasing=False).x
    t = math.log10(threshold)
    if t > logb.max() or t < logb.min():
        return None
    if len(rop) == 1:
        return float(rop[0])
    for i in range(len(rop) - 1):
        a, b = logb[i], logb[i + 1]
        if a >= t >= b:
            if a == b:
                return float(rop[i])
            return float(rop[i] + (a - t) / (a - b) * (rop[i + 1] - rop[i]))
    # not reachable after the isotonic projection; raw curves may go back up
    return None
