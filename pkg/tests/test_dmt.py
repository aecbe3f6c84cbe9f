import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oam_mgm.dmt import (
    DmtConfig,
    build_frame,
    clip,
    dmt_symbol,
    extract_subcarriers,
    hermitian_load,
)
from oam_mgm.signal import ComplexWaveform, QamConstellation

from .conftest import qfunc

CFG = DmtConfig()


def random_bits(rng, cfg):
    return rng.integers(0, 2, cfg.bits_per_frame)


def test_defaults():
    assert (CFG.fft_size, CFG.k_lo, CFG.k_hi, CFG.cp_len, CFG.n_sync, CFG.n_train) == (2048, 9, 264, 48, 1, 10)
    assert CFG.band_size == 256


@pytest.mark.parametrize("kw", [dict(fft_size=2047), dict(k_lo=0), dict(k_hi=1024), dict(cp_len=2048), dict(n_train=1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DmtConfig(**kw)


def test_hermitian_load_zero():
    assert not hermitian_load(np.zeros(256), CFG).any()


def test_hermitian_load_real_value_at_first_bin():
    p = np.zeros(256, complex)
    p[0] = 1
    s = hermitian_load(p, CFG)
    assert np.flatnonzero(s).tolist() == [9, 2039]
    assert s[9] == s[2039] == 1


def test_hermitian_load_conjugates():
    p = np.zeros(256, complex)
    p[1] = 1j
    s = hermitian_load(p, CFG)
    assert s[10] == 1j and s[2038] == -1j


def test_hermitian_load_length_mismatch():
    with pytest.raises(ValueError):
        hermitian_load(np.zeros(255), CFG)


def test_dmt_symbol_cosine_against_direct_dft():
    n = CFG.fft_size
    spec = np.zeros(n, complex)
    spec[1] = spec[n - 1] = 1
    out = dmt_symbol(spec, CFG)
    # direct inverse DFT sum, no FFT
    k = np.array([1, n - 1])
    t = np.arange(n)
    direct = (np.exp(2j * np.pi * np.outer(t, k) / n).sum(axis=1) / math.sqrt(n)).real
    np.testing.assert_allclose(direct, 2 / math.sqrt(n) * np.cos(2 * np.pi * t / n), atol=1e-12)
    np.testing.assert_allclose(out[CFG.cp_len :], direct, atol=1e-12)


def test_dmt_symbol_zero_and_cp():
    assert not dmt_symbol(np.zeros(CFG.fft_size), CFG).any()
    rng = np.random.default_rng(1)
    out = dmt_symbol(hermitian_load(rng.standard_normal(256) + 1j * rng.standard_normal(256), CFG), CFG)
    assert len(out) == CFG.fft_size + CFG.cp_len
    np.testing.assert_array_equal(out[: CFG.cp_len], out[-CFG.cp_len :])


def test_dmt_symbol_rejects_non_hermitian():
    spec = np.zeros(CFG.fft_size, complex)
    spec[5] = 1
    with pytest.raises(ValueError):
        dmt_symbol(spec, CFG)


def test_parseval_unitary():
    rng = np.random.default_rng(2)
    spec = hermitian_load(rng.standard_normal(256) + 1j * rng.standard_normal(256), CFG)
    body = dmt_symbol(spec, CFG)[CFG.cp_len :]
    assert abs(np.mean(body**2) - np.mean(np.abs(spec) ** 2)) < 1e-9


def test_clip_disabled_and_constant():
    w = ComplexWaveform(np.array([3.0, -3.0, 3.0]), 1.0)
    assert clip(w, math.inf) is w
    np.testing.assert_allclose(clip(w, 0.5).samples.real, [1.5, -1.5, 1.5])


def test_clip_fraction_matches_gaussian_tail():
    cfg = DmtConfig(n_data=200, clip_ratio=math.inf)
    rng = np.random.default_rng(3)
    x = build_frame(random_bits(rng, cfg), cfg, seed=1).waveform
    clipped = clip(x, 3.5).samples.real
    frac = np.mean(clipped != x.samples.real)
    n = len(x)
    p = 2 * qfunc(3.5)
    assert p == pytest.approx(4.65e-4, rel=0.01)
    assert abs(frac - p) < 3 * math.sqrt(p / n)


def test_frame_geometry_and_capacity():
    cfg = DmtConfig(n_data=20)
    assert cfg.bits_per_frame == 20 * 256 * 2 == 10240
    f0 = build_frame([], DmtConfig(n_data=0), seed=5)
    assert len(f0.waveform) == 11 * (2048 + 48)
    f = build_frame(np.zeros(cfg.bits_per_frame, int), cfg, seed=5)
    assert len(f.waveform) == cfg.n_symbols * cfg.symbol_len
    assert f.tx_symbols.shape == (31, 256)


def test_frame_bit_length_mismatch():
    with pytest.raises(ValueError):
        build_frame(np.zeros(10), CFG, seed=0)


def test_frame_determinism(rng):
    bits = random_bits(rng, CFG)
    a, b = build_frame(bits, CFG, seed=9), build_frame(bits, CFG, seed=9)
    np.testing.assert_array_equal(a.waveform.samples, b.waveform.samples)
    c = build_frame(bits, CFG, seed=10)
    assert not np.array_equal(a.training_symbols, c.training_symbols)


def test_frame_unit_rms_on_average(rng):
    cfg = DmtConfig(n_data=50)
    f = build_frame(random_bits(rng, cfg), cfg, seed=1)
    assert np.sqrt(np.mean(f.waveform.samples.real**2)) == pytest.approx(1.0, abs=0.02)


def test_round_trip_identity_channel(rng):
    cfg = DmtConfig(n_data=8, clip_ratio=math.inf, constellation=QamConstellation(16))
    f = build_frame(random_bits(rng, cfg), cfg, seed=4)
    assert np.max(np.abs(f.waveform.samples.imag)) == 0
    rx = extract_subcarriers(f.waveform, cfg, 0)
    assert np.max(np.abs(rx - f.tx_symbols)) < 1e-9


def test_non_power_of_two_fft_size(rng):
    # the conjugate band 2029..1774 corresponds to N = 2038
    cfg = DmtConfig(fft_size=2038, n_data=2, clip_ratio=math.inf)
    s = hermitian_load(np.ones(cfg.band_size, complex), cfg)
    assert np.flatnonzero(s)[[0, -1]].tolist() == [9, 2029] and s[1774] == 1
    f = build_frame(random_bits(rng, cfg), cfg, seed=2)
    assert np.max(np.abs(extract_subcarriers(f.waveform, cfg, 0) - f.tx_symbols)) < 1e-9


def test_shift_theorem_phase_ramp(rng):
    cfg = DmtConfig(n_data=2, clip_ratio=math.inf)
    f = build_frame(random_bits(rng, cfg), cfg, seed=4)
    x = f.waveform.samples.real
    d = 17
    delayed = np.concatenate([np.zeros(d), x])
    # start where the delayed frame's CP ends up d samples early: keep start at 0
    rx = extract_subcarriers(delayed[: len(x)], cfg, 0, n_symbols=cfg.n_symbols - 1)
    ref = f.tx_symbols[: cfg.n_symbols - 1]
    k = cfg.band
    ramp = np.exp(-2j * np.pi * k * d / cfg.fft_size)
    # symbol 0 picks up the idle prefix only inside its CP, which is dropped
    np.testing.assert_allclose(rx, ref * ramp, atol=1e-9)
    np.testing.assert_allclose(np.abs(rx), np.abs(ref), atol=1e-9)


def test_extract_zero_and_range():
    z = np.zeros(CFG.frame_len)
    assert not extract_subcarriers(z, CFG, 0).any()
    with pytest.raises(IndexError):
        extract_subcarriers(z, CFG, 1)


@settings(max_examples=20, deadline=None)
@given(taps=st.lists(st.floats(-1, 1), min_size=1, max_size=49), seed=st.integers(0, 2**32 - 1))
def test_cp_absorbs_short_lti_channel(taps, seed):
    h = np.array(taps)
    if np.all(h == 0):
        h[0] = 1.0
    cfg = DmtConfig(n_data=2, clip_ratio=math.inf)
    rng = np.random.default_rng(seed)
    f = build_frame(random_bits(rng, cfg), cfg, seed=seed)
    y = np.convolve(f.waveform.samples.real, h)[: cfg.frame_len]
    rx = extract_subcarriers(y, cfg, 0)
    hk = np.fft.fft(h, cfg.fft_size)[cfg.band]
    # first symbol sees the zero-state start, but its CP covers the channel memory
    np.testing.assert_allclose(rx, f.tx_symbols * hk, atol=1e-9)
