"""
DMT (real-valued OFDM) framing.

A frame is ``n_sync`` synchronization symbols, ``n_train`` channel-estimation
symbols and ``n_data`` payload symbols, each ``fft_size + cp_len`` samples
long.  Payload subcarriers ``k_lo..k_hi`` carry the QAM values and bins
``N - k`` their conjugates, so the inverse transform is real.

Transforms are unitary (``1/sqrt(N)`` both ways).  ``build_frame`` further
multiplies every symbol by the fixed factor ``DmtConfig.power_scale`` so that a
unit-power constellation yields a unit-RMS waveform on average; the receiver
divides the same factor back out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signal import ComplexWaveform, QamConstellation, derive_rng, qam_map

REALNESS_TOL = 1e-9


@dataclass(frozen=True)
class DmtConfig:
    fft_size: int = 2048
    k_lo: int = 9
    k_hi: int = 264
    cp_len: int = 48
    clip_ratio: float = 3.5
    n_sync: int = 1
    n_train: int = 10
    n_data: int = 20
    constellation: QamConstellation = field(default_factory=lambda: QamConstellation(4))
    dac_rate: float = 60e9

    def __post_init__(self):
        n = self.fft_size
        if n <= 0 or n % 2:
            raise ValueError(f"fft_size must be a positive even integer, got {n}")
        if not 1 <= self.k_lo <= self.k_hi < n // 2:
            raise ValueError(f"payload band [{self.k_lo}, {self.k_hi}] must satisfy 1 <= k_lo <= k_hi < {n // 2}")
        if not 0 <= self.cp_len < n:
            raise ValueError(f"cp_len must be in [0, {n}), got {self.cp_len}")
        if not self.clip_ratio > 0:
            raise ValueError("clip_ratio must be positive (use inf to disable)")
        if self.n_sync < 1:
            raise ValueError("at least one synchronization symbol is required")
        if self.n_train < 2:
            raise ValueError("at least two training symbols are required")
        if self.n_data < 0:
            raise ValueError("n_data must be non-negative")
        if not self.dac_rate > 0:
            raise ValueError("dac_rate must be positive")

    @property
    def band(self) -> np.ndarray:
        return np.arange(self.k_lo, self.k_hi + 1)

    @property
    def band_size(self) -> int:
        return self.k_hi - self.k_lo + 1

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def n_symbols(self) -> int:
        return self.n_sync + self.n_train + self.n_data

    @property
    def frame_len(self) -> int:
        return self.n_symbols * self.symbol_len

    @property
    def bits_per_frame(self) -> int:
        return self.n_data * self.band_size * self.constellation.bits_per_symbol

    @property
    def power_scale(self) -> float:
        """Amplitude factor giving unit mean waveform power for unit-power symbols."""
        return math.sqrt(self.fft_size / (2 * self.band_size))


@dataclass(frozen=True)
class DmtFrame:
    """A framed DMT signal.

    ``tx_symbols`` has shape ``(n_symbols, band_size)``: sync symbols first,
    then training, then data.  ``waveform`` holds the real samples.
    """

    tx_bits: np.ndarray
    tx_symbols: np.ndarray
    waveform: ComplexWaveform
    config: DmtConfig

    @property
    def sync_reference(self) -> np.ndarray:
        """Samples of the first synchronization symbol, CP included."""
        return self.waveform.samples[: self.config.symbol_len].real

    @property
    def training_symbols(self) -> np.ndarray:
        c = self.config
        return self.tx_symbols[c.n_sync : c.n_sync + c.n_train]

    @property
    def data_symbols(self) -> np.ndarray:
        c = self.config
        return self.tx_symbols[c.n_sync + c.n_train :]


def hermitian_load(payload, cfg: DmtConfig) -> np.ndarray:
    """Place ``payload`` on bins ``k_lo..k_hi`` and its conjugate on ``N - k``.

    Works on a single symbol (1-D) or a stack of symbols (last axis = band).
    """
    payload = np.asarray(payload, dtype=complex)
    if payload.shape[-1] != cfg.band_size:
        raise ValueError(f"payload has {payload.shape[-1]} values, band needs {cfg.band_size}")
    spec = np.zeros(payload.shape[:-1] + (cfg.fft_size,), dtype=complex)
    k = cfg.band
    spec[..., k] = payload
    spec[..., cfg.fft_size - k] = np.conj(payload)
    return spec


def dmt_symbol(spectrum, cfg: DmtConfig) -> np.ndarray:
    """Unitary IFFT of a Hermitian spectrum, with the cyclic prefix prepended.

    Accepts a stack of spectra along the leading axes and returns real samples
    of length ``N + cp_len`` per symbol.
    """
    spectrum = np.asarray(spectrum, dtype=complex)
    n = cfg.fft_size
    if spectrum.shape[-1] != n:
        raise ValueError(f"spectrum length {spectrum.shape[-1]} != fft_size {n}")
    mirrored = np.conj(np.roll(spectrum[..., ::-1], 1, axis=-1))
    scale = max(1.0, float(np.max(np.abs(spectrum), initial=0.0)))
    if np.max(np.abs(spectrum - mirrored), initial=0.0) > 1e-12 * scale:
        raise ValueError("spectrum is not Hermitian-symmetric")
    body = np.fft.ifft(spectrum, axis=-1, norm="ortho")
    if np.max(np.abs(body.imag), initial=0.0) > REALNESS_TOL * scale:
        raise ArithmeticError("inverse transform of a Hermitian spectrum is not real")
    body = body.real
    if cfg.cp_len:
        body = np.concatenate([body[..., n - cfg.cp_len :], body], axis=-1)
    return body


def clip(w: ComplexWaveform, ratio: float) -> ComplexWaveform:
    """Hard-clip the real part to ``+-ratio * RMS(w)``; ``inf`` disables clipping."""
    if not ratio > 0:
        raise ValueError("clip ratio must be positive")
    if math.isinf(ratio) or len(w) == 0:
        return w
    x = w.samples.real
    limit = ratio * math.sqrt(np.mean(x**2))
    return ComplexWaveform(np.clip(x, -limit, limit).astype(complex), w.sample_rate)


def random_qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    return qam_map(rng.integers(0, 2, size=int(np.prod(shape)) * 2), QamConstellation(4)).reshape(shape)


def pilot_symbols(cfg: DmtConfig, seed: int) -> np.ndarray:
    """Sync and training symbols for ``seed``: pseudo-random QPSK on every payload bin."""
    rng = derive_rng(seed, "pilots")
    return random_qpsk(rng, (cfg.n_sync + cfg.n_train, cfg.band_size))


def build_frame(bits, cfg: DmtConfig, seed: int) -> DmtFrame:
    """Map ``bits`` and assemble a complete frame (pilots first, then data)."""
    bits = np.asarray(bits, dtype=np.int8).ravel()
    if bits.size != cfg.bits_per_frame:
        raise ValueError(f"frame carries {cfg.bits_per_frame} bits, got {bits.size}")
    data = qam_map(bits, cfg.constellation).reshape(cfg.n_data, cfg.band_size)
    symbols = np.concatenate([pilot_symbols(cfg, seed), data])
    samples = dmt_symbol(hermitian_load(symbols * cfg.power_scale, cfg), cfg).ravel()
    wf = clip(ComplexWaveform(samples, cfg.dac_rate), cfg.clip_ratio)
    return DmtFrame(tx_bits=bits, tx_symbols=symbols, waveform=wf, config=cfg)


def extract_subcarriers(w: ComplexWaveform | np.ndarray, cfg: DmtConfig, frame_start: int = 0,
                        n_symbols: int | None = None) -> np.ndarray:
    """Strip the CP, apply the unitary DFT and return the payload bins per symbol.

    Returns shape ``(n_symbols, band_size)`` with the transmitter's
    ``power_scale`` removed, so an ideal channel returns ``tx_symbols``.
    """
    x = w.samples if isinstance(w, ComplexWaveform) else np.asarray(w)
    if n_symbols is None:
        n_symbols = cfg.n_symbols
    stop = frame_start + n_symbols * cfg.symbol_len
    if frame_start < 0 or stop > len(x):
        raise IndexError(f"frame [{frame_start}, {stop}) does not fit in {len(x)} samples")
    blocks = x[frame_start:stop].reshape(n_symbols, cfg.symbol_len)[:, cfg.cp_len :]
    if np.isrealobj(blocks):
        spec = np.fft.rfft(blocks, axis=-1, norm="ortho")
    else:
        spec = np.fft.fft(blocks, axis=-1, norm="ortho")
    return spec[:, cfg.k_lo : cfg.k_hi + 1] / cfg.power_scale
