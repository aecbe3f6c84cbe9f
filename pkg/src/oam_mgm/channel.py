"""
Optical channel: launch, ring-core fiber propagation and two-branch detection.

Mode order inside a group is fixed as ``(+l,+s), (+l,-s), (-l,+s), (-l,-s)``.
The ``+l`` receive branch sees modes 0 and 1, the ``-l`` branch modes 2 and 3.

Propagation applies, per group and in this order:

1. fiber loss as an amplitude factor,
2. intra-group coupling by a random 4x4 unitary (quasi-static over a frame),
3. inter-group crosstalk as a field-level additive term,
4. the differential delay of the ``-l`` branch.

Detection squares each branch, scales the group's total optical power to the
received-power setpoint (a VOA), optionally low-pass filters the photocurrent
and adds Gaussian noise of variance ``sigma0_sq + kappa * <P_branch>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .signal import ComplexWaveform, derive_rng

N_MODES = 4
PLUS_MODES = (0, 1)
MINUS_MODES = (2, 3)
MODE_LABELS = ("+l,+s", "+l,-s", "-l,+s", "-l,-s")
INTRA_COUPLING_LAWS = ("none", "haar_per_frame", "haar_sections")
DEFAULT_DGD_PS_PER_KM = 5.0

# spawn-key sub-tags under the "channel" tag
_INTRA, _XT = 1, 2


@dataclass(frozen=True)
class ModeGroupField:
    """Complex envelopes of the four degenerate modes of one mode group."""

    envelopes: np.ndarray
    sample_rate: float
    group_order: int

    def __post_init__(self):
        env = np.asarray(self.envelopes, dtype=complex)
        if env.ndim != 2 or env.shape[0] != N_MODES:
            raise ValueError(f"expected envelopes of shape (4, L), got {env.shape}")
        object.__setattr__(self, "envelopes", env)

    def __len__(self) -> int:
        return self.envelopes.shape[1]

    def total_power(self) -> np.ndarray:
        return np.sum(np.abs(self.envelopes) ** 2, axis=0)

    def branch_power(self, sign: int) -> np.ndarray:
        modes = PLUS_MODES if sign > 0 else MINUS_MODES
        return np.sum(np.abs(self.envelopes[list(modes)]) ** 2, axis=0)


@dataclass(frozen=True)
class LaunchConfig:
    """Intensity-modulated transmitter: power ``alpha * (bias + modulation_index * bias * v)``."""

    bias: float = 1.0
    modulation_index: float = 0.25
    alpha: float = 1.0
    launched_mode: int = 0

    def __post_init__(self):
        if self.bias < 0:
            raise ValueError("bias must be non-negative")
        if not 0 < self.modulation_index <= 1:
            raise ValueError("modulation_index must be in (0, 1]")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.launched_mode not in range(N_MODES):
            raise ValueError(f"launched_mode must be one of 0..3 ({', '.join(MODE_LABELS)})")


@dataclass(frozen=True)
class NoiseModel:
    sigma0_sq: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.sigma0_sq < 0 or self.kappa < 0:
            raise ValueError("noise variances must be non-negative")

    @property
    def is_noiseless(self) -> bool:
        return self.sigma0_sq == 0 and self.kappa == 0


def _tuple_matrix(m) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in m)


@dataclass(frozen=True)
class ChannelScenario:
    """Everything the channel needs besides the transmitted fields.

    ``crosstalk_db[a][b]`` is the power leaking from ``groups[a]`` into
    ``groups[b]``; ``-inf`` disables a path.  ``branch_dgd`` is in seconds and
    defaults to 5 ps/km times the fiber length.  ``rx_lowpass_hz`` enables a
    Gaussian electrical response (3 dB amplitude bandwidth) on each branch.
    """

    groups: tuple[int, ...] = (3, 4)
    crosstalk_db: tuple[tuple[float, ...], ...] | None = None
    intra_coupling: str = "haar_per_frame"
    n_sections: int = 1
    branch_dgd: float | None = None
    fiber_loss_db_per_km: float = 0.75
    length_km: float = 1.0
    responsivity: Mapping[int, tuple[float, float]] = field(default_factory=dict)
    noise: NoiseModel = field(default_factory=NoiseModel)
    rop_dbm: float = 0.0
    decorrelation_delay: int = 0
    rx_lowpass_hz: float | None = None

    def __post_init__(self):
        groups = tuple(int(g) for g in self.groups)
        if len(set(groups)) != len(groups) or not groups:
            raise ValueError("groups must be a non-empty list of distinct mode-group orders")
        object.__setattr__(self, "groups", groups)
        n = len(groups)
        xt = self.crosstalk_db
        xt = tuple(tuple(0.0 if a == b else -math.inf for b in range(n)) for a in range(n)) if xt is None else _tuple_matrix(xt)
        if len(xt) != n or any(len(row) != n for row in xt):
            raise ValueError(f"crosstalk matrix must be {n}x{n} for groups {groups}")
        for a in range(n):
            if xt[a][a] != 0:
                raise ValueError("crosstalk diagonal must be 0 dB")
            if any(xt[a][b] > 0 for b in range(n) if b != a):
                raise ValueError("off-diagonal crosstalk must be <= 0 dB")
        object.__setattr__(self, "crosstalk_db", xt)
        resp = {int(g): (float(m[0]), float(m[1])) for g, m in dict(self.responsivity).items()}
        for g in groups:
            resp.setdefault(g, (1.0, 1.0))
        if set(resp) - set(groups):
            raise ValueError(f"responsivity given for inactive groups {sorted(set(resp) - set(groups))}")
        if any(m <= 0 for pair in resp.values() for m in pair):
            raise ValueError("responsivities must be positive")
        object.__setattr__(self, "responsivity", dict(sorted(resp.items())))
        if self.intra_coupling not in INTRA_COUPLING_LAWS:
            raise ValueError(f"intra_coupling must be one of {INTRA_COUPLING_LAWS}")
        if self.n_sections < 1:
            raise ValueError("n_sections must be >= 1")
        if self.length_km < 0 or self.fiber_loss_db_per_km < 0:
            raise ValueError("length and loss must be non-negative")
        if self.decorrelation_delay < 0:
            raise ValueError("decorrelation_delay must be non-negative")
        if self.rx_lowpass_hz is not None and not self.rx_lowpass_hz > 0:
            raise ValueError("rx_lowpass_hz must be positive")

    @property
    def dgd_seconds(self) -> float:
        if self.branch_dgd is not None:
            return self.branch_dgd
        return DEFAULT_DGD_PS_PER_KM * 1e-12 * self.length_km

    def xt_db(self, source: int, destination: int) -> float:
        try:
            a, b = self.groups.index(source), self.groups.index(destination)
        except ValueError:
            raise KeyError(f"group pair ({source}, {destination}) not in scenario groups {self.groups}") from None
        return self.crosstalk_db[a][b]

    def with_rop(self, rop_dbm: float) -> "ChannelScenario":
        return replace(self, rop_dbm=float(rop_dbm))


@dataclass(frozen=True)
class BranchCurrents:
    """Photocurrents of the two receive branches of every group."""

    plus: dict[int, np.ndarray]
    minus: dict[int, np.ndarray]
    sample_rate: float

    def branch(self, group: int, sign: int) -> np.ndarray:
        return self.plus[group] if sign > 0 else self.minus[group]


def launch(v: ComplexWaveform, lc: LaunchConfig, group_order: int = 0) -> ModeGroupField:
    """Put the drive waveform ``v`` onto the launched mode as ``sqrt(alpha (V0 + V(t)))``."""
    drive = lc.modulation_index * lc.bias * np.asarray(v.samples).real
    arg = lc.bias + drive
    if np.min(arg, initial=0.0) < -1e-12:
        raise ValueError(f"bias too small: V0 + V(t) reaches {np.min(arg):.3g}")
    env = np.zeros((N_MODES, len(arg)), dtype=complex)
    env[lc.launched_mode] = np.sqrt(lc.alpha * np.maximum(arg, 0.0))
    return ModeGroupField(env, v.sample_rate, group_order)


def haar_unitary_4(seed: int | np.random.Generator) -> np.ndarray:
    """Haar-distributed 4x4 unitary (QR of a Ginibre matrix, diagonal phases fixed)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = (rng.standard_normal((N_MODES, N_MODES)) + 1j * rng.standard_normal((N_MODES, N_MODES))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _mix(u: np.ndarray, env: np.ndarray) -> np.ndarray:
    # einsum keeps the 4xL product off BLAS so results don't depend on thread count
    return np.einsum("ij,jt->it", u, env, optimize=False)


def fractional_delay(x: np.ndarray, delay_s: float, sample_rate: float) -> np.ndarray:
    """Circular delay by a linear phase ramp along the last axis."""
    if delay_s == 0:
        return x
    f = np.fft.fftfreq(x.shape[-1], d=1.0 / sample_rate)
    return np.fft.ifft(np.fft.fft(x, axis=-1) * np.exp(-2j * np.pi * f * delay_s), axis=-1)


def propagate(fields: Mapping[int, ModeGroupField], sc: ChannelScenario, seed: int) -> dict[int, ModeGroupField]:
    """Send every group through the fiber; returns new fields keyed by group."""
    if set(fields) != set(sc.groups):
        raise KeyError(f"fields for groups {sorted(fields)} do not match scenario groups {sc.groups}")
    lengths = {len(f) for f in fields.values()}
    rates = {f.sample_rate for f in fields.values()}
    if len(lengths) != 1 or len(rates) != 1:
        raise ValueError("all groups must share length and sample rate")
    rate = rates.pop()
    amp = 10 ** (-sc.fiber_loss_db_per_km * sc.length_km / 20)
    dgd = sc.dgd_seconds

    coupled = {}
    for g in sc.groups:
        env = fields[g].envelopes * amp
        rng = derive_rng(seed, "channel", _INTRA, g)
        if sc.intra_coupling == "haar_per_frame":
            env = _mix(haar_unitary_4(rng), env)
        elif sc.intra_coupling == "haar_sections":
            env = env.copy()
            for _ in range(sc.n_sections):
                env = _mix(haar_unitary_4(rng), env)
                env[2:] = fractional_delay(env[2:], dgd / sc.n_sections, rate)
        coupled[g] = env

    out = {}
    for dst in sc.groups:
        env = coupled[dst].copy()
        for src in sc.groups:
            xt = sc.xt_db(src, dst)
            if src == dst or not np.isfinite(xt):
                continue
            v = haar_unitary_4(derive_rng(seed, "channel", _XT, src, dst))
            leak = np.roll(coupled[src], sc.decorrelation_delay, axis=-1)
            env += math.sqrt(10 ** (xt / 10)) * _mix(v, leak)
        if sc.intra_coupling != "haar_sections":
            env[2:] = fractional_delay(env[2:], dgd, rate)
        out[dst] = ModeGroupField(env, rate, dst)
    return out


def gaussian_lowpass(x: np.ndarray, bandwidth_hz: float, sample_rate: float) -> np.ndarray:
    """Zero-phase Gaussian response with ``|H(bandwidth)| = 1/sqrt(2)``."""
    f = np.fft.rfftfreq(len(x), d=1.0 / sample_rate)
    h = np.exp(-0.5 * math.log(2) * (f / bandwidth_hz) ** 2)
    return np.fft.irfft(np.fft.rfft(x) * h, n=len(x))


def detect(fields: Mapping[int, ModeGroupField], sc: ChannelScenario, seed: int) -> BranchCurrents:
    """Square-law detection of the ``+l`` and ``-l`` branches of every group."""
    rop_mw = 10 ** (sc.rop_dbm / 10)
    plus, minus = {}, {}
    rate = None
    for g in sc.groups:
        fld = fields[g]
        rate = fld.sample_rate
        p_plus, p_minus = fld.branch_power(+1), fld.branch_power(-1)
        total = float(np.mean(p_plus + p_minus))
        gain = rop_mw / total if total > 0 else 0.0
        mu_plus, mu_minus = sc.responsivity[g]
        for sign, p, mu, store in ((+1, p_plus, mu_plus, plus), (-1, p_minus, mu_minus, minus)):
            p = gain * p
            current = mu * p
            if sc.rx_lowpass_hz is not None:
                current = gaussian_lowpass(current, sc.rx_lowpass_hz, rate)
            var = sc.noise.sigma0_sq + sc.noise.kappa * float(np.mean(p))
            if var > 0:
                rng = derive_rng(seed, "noise", g, 0 if sign > 0 else 1)
                current = current + rng.normal(0.0, math.sqrt(var), size=current.shape)
            store[g] = current
    return BranchCurrents(plus, minus, rate)
