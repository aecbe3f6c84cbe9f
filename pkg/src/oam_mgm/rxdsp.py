"""Receiver DSP: resampling, frame sync, one-tap equalization and diversity combining."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .signal import ComplexWaveform

SNR_FLOOR = 1e-6
SNR_CAP = 1e12
SYNC_THRESHOLD = 0.5
RESAMPLER_HALF_TAPS = 64  # per phase, on each side of the centre tap
RESAMPLER_KAISER_BETA = 10.0


class FrameSyncError(RuntimeError):
    """Raised when no correlation peak clears the detection threshold."""

    def __init__(self, peak: float, index: int):
        super().__init__(f"no sync peak above {SYNC_THRESHOLD} (best {peak:.3f} at sample {index})")
        self.peak = peak
        self.index = index


class CombinerMode(str, enum.Enum):
    SINGLE_PLUS = "single_plus"
    SINGLE_MINUS = "single_minus"
    ERC = "erc"
    MRC = "mrc"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ChannelEstimate:
    h: np.ndarray
    snr: np.ndarray

    @property
    def snr_db(self) -> np.ndarray:
        return 10 * np.log10(self.snr)


def resampling_filter(p: int, q: int) -> np.ndarray:
    """Kaiser-windowed sinc prototype for an up-by-``p``, down-by-``q`` polyphase resampler.

    Cutoff sits at the lower of the two Nyquist rates and every polyphase
    branch gets ``2 * RESAMPLER_HALF_TAPS`` taps or more.
    """
    m = max(p, q)
    n_taps = 2 * RESAMPLER_HALF_TAPS * m + 1
    t = np.arange(n_taps) - (n_taps - 1) / 2
    h = np.sinc(t / m) * np.kaiser(n_taps, RESAMPLER_KAISER_BETA)
    return h / h.sum()


def resample_rational(w: ComplexWaveform, p: int, q: int) -> ComplexWaveform:
    """Change the sample rate by ``p/q`` with band-limited interpolation."""
    if p < 1 or q < 1 or int(p) != p or int(q) != q:
        raise ValueError("p and q must be positive integers")
    if math.gcd(p, q) != 1:
        raise ValueError(f"p={p} and q={q} are not coprime")
    if p == q == 1:
        return w
    x = w.samples
    real = not np.any(x.imag)
    y = sps.resample_poly(x.real if real else x, p, q, window=resampling_filter(p, q))
    return ComplexWaveform(y, w.sample_rate * p / q)


def normalized_correlation(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """``|sum x[n+tau] conj(ref[n])| / (||x window|| ||ref||)`` for every full-overlap lag."""
    x = np.asarray(x)
    ref = np.asarray(ref)
    m = len(ref)
    if len(x) < m:
        raise ValueError("waveform shorter than the sync reference")
    num = np.abs(sps.correlate(x, ref, mode="valid", method="fft"))
    energy = np.concatenate([[0.0], np.cumsum(np.abs(x) ** 2)])
    win = np.sqrt(np.maximum(energy[m:] - energy[:-m], 0.0))
    den = win * np.linalg.norm(ref)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 1e-300)


def synchronize(w: ComplexWaveform | np.ndarray, sync_ref: np.ndarray, threshold: float = SYNC_THRESHOLD) -> int:
    """Index of the best normalized-correlation match of ``sync_ref`` in ``w``.

    Raises ``FrameSyncError`` if the best match falls below ``threshold``;
    the exception carries the best candidate for callers that decode anyway.
    """
    x = w.samples if isinstance(w, ComplexWaveform) else np.asarray(w)
    if np.isrealobj(sync_ref) or not np.any(np.imag(sync_ref)):
        sync_ref = np.real(sync_ref)
        if not np.any(np.imag(x)):
            x = np.real(x)
    rho = normalized_correlation(x, sync_ref)
    idx = int(np.argmax(rho))
    if rho[idx] < threshold:
        raise FrameSyncError(float(rho[idx]), idx)
    return idx


def estimate_channel(train_rx, train_tx) -> ChannelEstimate:
    """Least-squares one-tap estimate and residual-variance SNR from training symbols.

    Both inputs have shape ``(T, K)`` with ``T >= 2``.
    """
    y = np.asarray(train_rx, dtype=complex)
    x = np.asarray(train_tx, dtype=complex)
    if y.shape != x.shape:
        raise ValueError(f"rx {y.shape} and tx {x.shape} training blocks differ in shape")
    if y.ndim != 2 or y.shape[0] < 2:
        raise ValueError("need at least two training symbols")
    h = np.mean(y * np.conj(x) / np.abs(x) ** 2, axis=0)
    resid = y - h * x
    var = np.sum(np.abs(resid) ** 2, axis=0) / (y.shape[0] - 1)
    sig = np.abs(h) ** 2 * np.mean(np.abs(x) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(var > 0, sig / var, np.where(sig > 0, SNR_CAP, SNR_FLOOR))
    return ChannelEstimate(h=h, snr=np.clip(snr, SNR_FLOOR, SNR_CAP))


def equalize(rx, est: ChannelEstimate) -> np.ndarray:
    """Divide every subcarrier by its estimated gain; zero-gain bins come out as 0.

    A zero-gain bin has zero estimated SNR, which ``estimate_channel`` already
    clamps to the floor, so combining effectively ignores it.
    """
    rx = np.asarray(rx, dtype=complex)
    if rx.shape[-1] != est.h.shape[-1]:
        raise ValueError("estimate does not cover the received subcarriers")
    return np.divide(rx, est.h, out=np.zeros_like(rx), where=est.h != 0)


def mrc_weights(est_plus: ChannelEstimate, est_minus: ChannelEstimate) -> tuple[np.ndarray, np.ndarray]:
    total = est_plus.snr + est_minus.snr
    return est_plus.snr / total, est_minus.snr / total


def combine(y_plus, y_minus, est_plus: ChannelEstimate, est_minus: ChannelEstimate,
            mode: CombinerMode | str) -> np.ndarray:
    """Merge two equalized branches per subcarrier."""
    mode = CombinerMode(mode)
    y_plus = np.asarray(y_plus)
    y_minus = np.asarray(y_minus)
    if y_plus.shape != y_minus.shape:
        raise ValueError(f"branch shapes differ: {y_plus.shape} vs {y_minus.shape}")
    if mode is CombinerMode.SINGLE_PLUS:
        return y_plus
    if mode is CombinerMode.SINGLE_MINUS:
        return y_minus
    if mode is CombinerMode.ERC:
        return 0.5 * (y_plus + y_minus)
    if est_plus.snr.shape[-1] != y_plus.shape[-1] or est_minus.snr.shape[-1] != y_plus.shape[-1]:
        raise ValueError("SNR estimates do not match the subcarrier count")
    w_plus, w_minus = mrc_weights(est_plus, est_minus)
    return w_plus * y_plus + w_minus * y_minus
