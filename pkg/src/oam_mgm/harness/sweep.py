"""Seeded BER-vs-ROP sweeps and noise calibration.

Every frame is simulated once through launch and propagation; the noiseless
fields are then detected at each ROP of the grid with fresh noise, and all
combiner modes are evaluated on the same detected currents.  Random streams
come from ``derive_rng(seed, tag, ...)`` keyed by group, ROP index and frame
index, so the result of a frame does not depend on which worker ran it.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..channel import ChannelScenario, LaunchConfig, NoiseModel, detect, launch, propagate
from ..dmt import DmtConfig, DmtFrame, build_frame, extract_subcarriers
from ..metrics import LinkReport
from ..rxdsp import (
    CombinerMode,
    FrameSyncError,
    combine,
    equalize,
    estimate_channel,
    resample_rational,
    synchronize,
)
from ..signal import ComplexWaveform, QamConstellation, derive_rng, qam_demap

log = logging.getLogger(__name__)

SWEEP_HEADER = ("mg", "combiner", "rop_dbm", "ber", "errors", "bit_count", "mean_snr_db")
ALL_COMBINERS = tuple(CombinerMode)


@dataclass(frozen=True)
class CalibrationTarget:
    """Operating point that ``calibrate_noise`` pins: BER ``ber`` at ``rop_dbm`` for ``mg``/``combiner``."""

    rop_dbm: float = -14.0
    ber: float = 3.8e-3
    mg: int = 3
    combiner: CombinerMode = CombinerMode.MRC
    kappa_min: float = 1e-8
    kappa_max: float = 1e-2
    rel_tol: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "combiner", CombinerMode(self.combiner))
        if not 0 < self.ber < 0.5:
            raise ValueError("target BER must lie in (0, 0.5)")
        if not 0 < self.kappa_min < self.kappa_max:
            raise ValueError("need 0 < kappa_min < kappa_max")
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")


@dataclass(frozen=True)
class SweepSpec:
    scenario: ChannelScenario
    dmt: DmtConfig = field(default_factory=DmtConfig)
    launch: LaunchConfig = field(default_factory=LaunchConfig)
    formats: dict[int, int] = field(default_factory=dict)
    rop_grid_dbm: tuple[float, ...] = (-20.0, -15.0, -10.0)
    combiners: tuple[CombinerMode, ...] = ALL_COMBINERS
    frames_per_point: int = 200
    seed: int = 1
    output_dir: str = "out"
    name: str = "custom"
    guard: int = 256
    adc_rate: float | None = None
    constellation_cap: int = 4096
    write_subcarriers: bool = True
    calibration: CalibrationTarget | None = None

    def __post_init__(self):
        rops = tuple(float(r) for r in self.rop_grid_dbm)
        if not rops:
            raise ValueError("rop_grid_dbm must not be empty")
        if any(b <= a for a, b in zip(rops, rops[1:])):
            raise ValueError("rop_grid_dbm must be strictly increasing")
        object.__setattr__(self, "rop_grid_dbm", rops)
        combiners = tuple(CombinerMode(c) for c in self.combiners)
        if not combiners or len(set(combiners)) != len(combiners):
            raise ValueError("combiners must be a non-empty list without repeats")
        object.__setattr__(self, "combiners", combiners)
        if self.frames_per_point < 1:
            raise ValueError("frames_per_point must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.guard < 0 or self.constellation_cap < 0:
            raise ValueError("guard and constellation_cap must be non-negative")
        if self.adc_rate is not None and not self.adc_rate > 0:
            raise ValueError("adc_rate must be positive")
        fmts = {int(g): int(o) for g, o in dict(self.formats).items()}
        if set(fmts) - set(self.scenario.groups):
            raise ValueError(f"formats given for inactive groups {sorted(set(fmts) - set(self.scenario.groups))}")
        for g in self.scenario.groups:
            fmts.setdefault(g, self.dmt.constellation.order)
        for o in fmts.values():
            QamConstellation(o)
        object.__setattr__(self, "formats", dict(sorted(fmts.items())))
        cal = self.calibration
        if cal is not None and cal.mg not in self.scenario.groups:
            raise ValueError(f"calibration group {cal.mg} is not an active group")

    def dmt_for(self, group: int) -> DmtConfig:
        return replace(self.dmt, constellation=QamConstellation(self.formats[group]))


@dataclass
class SweepReport:
    """Per-point link reports in a fixed (mg, combiner, rop) order."""

    reports: dict[tuple[int, CombinerMode, float], LinkReport]
    constellations: dict[tuple[int, float, CombinerMode], np.ndarray] = field(default_factory=dict)

    def rows(self):
        for key in sorted(self.reports, key=lambda k: (k[0], ALL_COMBINERS.index(k[1]), k[2])):
            r = self.reports[key]
            yield r

    def curve(self, mg: int, combiner: CombinerMode | str) -> list[tuple[float, float]]:
        c = CombinerMode(combiner)
        return [(r.rop_dbm, r.ber) for r in self.rows() if r.mg == mg and r.combiner is c]

    def get(self, mg: int, combiner: CombinerMode | str, rop_dbm: float) -> LinkReport:
        return self.reports[(mg, CombinerMode(combiner), float(rop_dbm))]

    def merge(self, other: "SweepReport") -> "SweepReport":
        keys = set(self.reports) | set(other.reports)
        merged = {}
        for k in keys:
            if k in self.reports and k in other.reports:
                merged[k] = self.reports[k] + other.reports[k]
            else:
                merged[k] = self.reports.get(k) or other.reports[k]
        return SweepReport(merged, {**other.constellations, **self.constellations})

    def sweep_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in self.rows():
            snr = r.mean_snr_db if r.bit_count else math.nan
            w.writerow([r.mg, r.combiner.value, _fmt(r.rop_dbm), _fmt(r.ber), r.errors, r.bit_count, _fmt(snr)])
        return buf.getvalue()

    def subcarrier_csv(self, mg: int, rop_dbm: float) -> str:
        reps = [r for r in self.rows() if r.mg == mg and r.rop_dbm == rop_dbm]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["subcarrier"]
        for r in reps:
            header += [f"snr_db_{r.combiner.value}", f"ber_{r.combiner.value}"]
        w.writerow(header)
        cols = [r.per_subcarrier for r in reps]
        for i in range(len(cols[0]) if cols else 0):
            row = [i]
            for c in cols:
                row += [_fmt(c[i][0]), _fmt(c[i][1])]
            w.writerow(row)
        return buf.getvalue()

    def write(self, out_dir: str | Path, spec: SweepSpec, first_subcarrier: int = 0) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "sweep.csv"]
        written[0].write_text(self.sweep_csv())
        if spec.write_subcarriers:
            for mg in spec.scenario.groups:
                for rop in spec.rop_grid_dbm:
                    p = out / f"subcarriers_{mg}_{_fmt(rop)}.csv"
                    p.write_text(self.subcarrier_csv(mg, rop))
                    written.append(p)
        for (mg, rop, comb), z in sorted(self.constellations.items(), key=lambda kv: (kv[0][0], kv[0][1], ALL_COMBINERS.index(kv[0][2]))):
            p = out / f"constellation_{mg}_{_fmt(rop)}_{comb.value}.csv"
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["re", "im", "ref_re", "ref_im"])
            for rx, ref in z:
                w.writerow([_fmt(rx.real), _fmt(rx.imag), _fmt(ref.real), _fmt(ref.imag)])
            p.write_text(buf.getvalue())
            written.append(p)
        return written


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _stream(frame: DmtFrame, guard: int) -> ComplexWaveform:
    pad = np.zeros(guard)
    x = np.concatenate([pad, frame.waveform.samples.real, pad])
    return ComplexWaveform(x, frame.waveform.sample_rate)


def receive_branch(current: np.ndarray, frame: DmtFrame, sample_rate: float, adc_rate: float | None = None):
    """Per-branch DSP: (resample), normalize, sync, FFT, estimate, equalize.

    Returns the equalized data subcarriers and the channel estimate.
    """
    cfg = frame.config
    x = np.asarray(current, dtype=float)
    if adc_rate is not None and adc_rate != sample_rate:
        ratio = Fraction(sample_rate / adc_rate).limit_denominator(1000)
        x = resample_rational(ComplexWaveform(x, adc_rate), ratio.numerator, ratio.denominator).samples.real
    x = x - x.mean()
    rms = math.sqrt(np.mean(x**2))
    if rms > 0:
        x = x / rms
    try:
        start = synchronize(x, frame.sync_reference)
    except FrameSyncError as e:
        # decode at the best candidate anyway; a wrong guess shows up as errors
        log.debug("frame sync below threshold: %s", e)
        start = e.index
    start = min(start, len(x) - cfg.frame_len)
    rx = extract_subcarriers(x, cfg, start)
    n0 = cfg.n_sync
    est = estimate_channel(rx[n0 : n0 + cfg.n_train], frame.training_symbols)
    return equalize(rx[n0 + cfg.n_train :], est), est


def _oversample(current: np.ndarray, rate: float, adc_rate: float) -> np.ndarray:
    ratio = Fraction(adc_rate / rate).limit_denominator(1000)
    return resample_rational(ComplexWaveform(current, rate), ratio.numerator, ratio.denominator).samples.real


def transmit(spec: SweepSpec, frame_idx: int) -> tuple[dict[int, DmtFrame], dict]:
    """Build this frame's DMT frames and propagate them; returns (frames, fields)."""
    frames, launched = {}, {}
    for g in spec.scenario.groups:
        cfg = spec.dmt_for(g)
        bits = derive_rng(spec.seed, "bits", g, frame_idx).integers(0, 2, cfg.bits_per_frame, dtype=np.int8)
        # pilots are fixed per group and known to the receiver
        pilot_seed = int(derive_rng(spec.seed, "pilots", g).integers(2**63))
        frames[g] = build_frame(bits, cfg, seed=pilot_seed)
        launched[g] = launch(_stream(frames[g], spec.guard), spec.launch, g)
    fields = propagate(launched, spec.scenario, seed=int(derive_rng(spec.seed, "channel", frame_idx).integers(2**63)))
    return frames, fields


def simulate_frame(spec: SweepSpec, frame_idx: int) -> SweepReport:
    """All (mg, rop, combiner) points for one frame."""
    frames, fields = transmit(spec, frame_idx)
    reports: dict = {}
    constellations: dict = {}
    for ri, rop in enumerate(spec.rop_grid_dbm):
        noise_seed = int(derive_rng(spec.seed, "noise", ri, frame_idx).integers(2**63))
        currents = detect(fields, spec.scenario.with_rop(rop), seed=noise_seed)
        for g in spec.scenario.groups:
            frame = frames[g]
            cfg = frame.config
            branches = {}
            for sign in (+1, -1):
                cur = currents.branch(g, sign)
                if spec.adc_rate is not None:
                    cur = _oversample(cur, currents.sample_rate, spec.adc_rate)
                branches[sign] = receive_branch(cur, frame, currents.sample_rate, spec.adc_rate)
            (y_p, est_p), (y_m, est_m) = branches[+1], branches[-1]
            tx = frame.data_symbols
            tx_bits = frame.tx_bits.reshape(cfg.n_data, cfg.band_size, -1)
            for comb in spec.combiners:
                z = combine(y_p, y_m, est_p, est_m, comb)
                rx_bits = qam_demap(z, cfg.constellation).reshape(tx_bits.shape)
                wrong = np.count_nonzero(rx_bits != tx_bits, axis=(0, 2))
                reports[(g, comb, rop)] = LinkReport(
                    mg=g, combiner=comb, rop_dbm=rop,
                    errors=int(wrong.sum()), bit_count=int(tx_bits.size),
                    signal_power=np.sum(np.abs(tx) ** 2, axis=0),
                    error_power=np.sum(np.abs(z - tx) ** 2, axis=0),
                    subcarrier_errors=wrong.astype(np.int64),
                    subcarrier_bits=np.full(cfg.band_size, cfg.n_data * tx_bits.shape[2], dtype=np.int64),
                )
                per_frame = tx.size
                if frame_idx * per_frame < spec.constellation_cap:
                    take = min(per_frame, spec.constellation_cap - frame_idx * per_frame)
                    constellations[(g, rop, comb)] = np.stack([z.ravel()[:take], tx.ravel()[:take]], axis=1)
    return SweepReport(reports, constellations)


def _simulate_chunk(args) -> list[SweepReport]:
    spec, idxs = args
    return [simulate_frame(spec, i) for i in idxs]


def _reduce(parts: list[SweepReport]) -> SweepReport:
    """Fold frame results in frame order; constellation samples concatenate in order."""
    reports: dict = {}
    consts: dict = {}
    for part in parts:
        for k, r in part.reports.items():
            reports[k] = reports[k] + r if k in reports else r
        for k, z in part.constellations.items():
            consts[k] = np.concatenate([consts[k], z]) if k in consts else z
    return SweepReport(reports, consts)


def run_sweep(spec: SweepSpec, jobs: int = 1, frames: range | None = None) -> SweepReport:
    """Simulate ``frames_per_point`` frames (or the given frame indices) and aggregate."""
    idx = list(frames if frames is not None else range(spec.frames_per_point))
    if jobs <= 1 or len(idx) <= 1:
        parts = [simulate_frame(spec, i) for i in idx]
    else:
        n_chunks = min(len(idx), jobs * 4)
        chunks = [idx[c::n_chunks] for c in range(n_chunks)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_simulate_chunk, [(spec, ch) for ch in chunks]))
        by_frame = {}
        for ch, res in zip(chunks, done):
            by_frame.update(zip(ch, res))
        parts = [by_frame[i] for i in idx]
    return _reduce(parts)


def point_ber(spec: SweepSpec, kappa: float, rop_dbm: float, mg: int, combiner: CombinerMode | str,
              jobs: int = 1) -> tuple[float, int]:
    """BER and bit count of one (mg, rop, combiner) point at noise level ``kappa``."""
    comb = CombinerMode(combiner)
    sc = replace(spec.scenario, noise=replace(spec.scenario.noise, kappa=kappa))
    s = replace(spec, scenario=sc, rop_grid_dbm=(rop_dbm,), combiners=(comb,),
                constellation_cap=0, write_subcarriers=False)
    r = run_sweep(s, jobs=jobs).get(mg, comb, rop_dbm)
    return r.ber, r.bit_count


def calibrate_spec(spec: SweepSpec, jobs: int = 1) -> float:
    """Run ``calibrate_noise`` on the spec's own ``calibration`` target."""
    cal = spec.calibration
    if cal is None:
        raise ValueError("spec has no calibration target")
    return calibrate_noise(spec, (cal.rop_dbm, cal.ber), cal.mg, cal.combiner,
                           bracket=(cal.kappa_min, cal.kappa_max), rel_tol=cal.rel_tol, jobs=jobs)


def calibrate_noise(spec: SweepSpec, target: tuple[float, float], mg: int,
                    combiner: CombinerMode | str = CombinerMode.MRC, bracket: tuple[float, float] = (1e-9, 1e-1),
                    rel_tol: float = 0.2, max_iter: int = 60, jobs: int = 1) -> float:
    """Bisect ``kappa`` (in log scale) until the point BER is within ``rel_tol`` of the target.

    Uses the spec's seed for every evaluation, so the comparison across
    ``kappa`` values is paired.
    """
    rop, ber_target = target
    if not 0 < ber_target < 0.5:
        raise ValueError("target BER must lie in (0, 0.5)")
    lo, hi = bracket
    ber_lo, _ = point_ber(spec, lo, rop, mg, combiner, jobs)
    ber_hi, _ = point_ber(spec, hi, rop, mg, combiner, jobs)
    if ber_lo > ber_hi:
        raise ArithmeticError("BER decreased with more noise; monotonicity assumption violated")
    if not ber_lo <= ber_target <= ber_hi:
        raise ValueError(f"kappa range {bracket} does not bracket BER {ber_target:g} "
                         f"(got {ber_lo:g} .. {ber_hi:g})")
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        ber, _ = point_ber(spec, mid, rop, mg, combiner, jobs)
        log.info("kappa=%.4g  BER=%.4g", mid, ber)
        if abs(ber - ber_target) <= rel_tol * ber_target:
            return mid
        if ber < ber_target:
            lo = mid
        else:
            hi = mid
    raise ArithmeticError(f"calibration did not converge within {max_iter} steps")
