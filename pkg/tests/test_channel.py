import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oam_mgm.channel import (
    ChannelScenario,
    LaunchConfig,
    ModeGroupField,
    NoiseModel,
    detect,
    fractional_delay,
    haar_unitary_4,
    launch,
    propagate,
)
from oam_mgm.signal import ComplexWaveform
from oam_mgm.xtalk import table_1km

RATE = 60e9


def drive(rng, n=4096):
    return ComplexWaveform(np.clip(rng.standard_normal(n) / 3.5, -1, 1), RATE)


def cw_fields(groups, powers, n=1024):
    out = {}
    for g in groups:
        env = np.zeros((4, n), complex)
        env[0] = math.sqrt(powers.get(g, 0.0))
        out[g] = ModeGroupField(env, RATE, g)
    return out


class TestLaunch:
    def test_zero_drive(self):
        f = launch(ComplexWaveform(np.zeros(8), RATE), LaunchConfig(bias=1, alpha=1))
        np.testing.assert_allclose(f.envelopes[0], 1)
        assert not f.envelopes[1:].any()
        np.testing.assert_allclose(f.total_power(), 1)

    def test_single_sample(self):
        v = np.zeros(4)
        v[2] = 0.5
        f = launch(ComplexWaveform(v, RATE), LaunchConfig(bias=1, alpha=2, modulation_index=1))
        assert f.total_power()[2] == pytest.approx(3.0)

    def test_affine_in_drive(self, rng):
        lc = LaunchConfig(bias=1.5, alpha=0.7, modulation_index=0.4)
        v = drive(rng)
        f = launch(v, lc)
        np.testing.assert_allclose(f.total_power() - lc.alpha * lc.bias,
                                   lc.alpha * lc.modulation_index * lc.bias * v.samples.real, atol=1e-12)

    def test_launched_mode(self):
        f = launch(ComplexWaveform(np.zeros(4), RATE), LaunchConfig(launched_mode=2))
        assert np.flatnonzero(np.abs(f.envelopes).sum(axis=1)).tolist() == [2]

    def test_bias_too_small(self):
        with pytest.raises(ValueError, match="bias"):
            launch(ComplexWaveform(np.array([0.0, -2.0]), RATE), LaunchConfig(modulation_index=1))

    @pytest.mark.parametrize("kw", [dict(bias=-1), dict(modulation_index=0), dict(alpha=0), dict(launched_mode=4)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            LaunchConfig(**kw)


class TestHaar:
    @given(st.integers(0, 2**32))
    @settings(max_examples=50, deadline=None)
    def test_unitary(self, seed):
        u = haar_unitary_4(seed)
        assert np.max(np.abs(u.conj().T @ u - np.eye(4))) < 1e-12
        np.testing.assert_allclose(np.linalg.norm(u, axis=0), 1, atol=1e-12)

    def test_second_moment(self):
        n = 10_000
        x = np.array([abs(haar_unitary_4(s)[0, 0]) ** 2 for s in range(n)])
        # |U11|^2 ~ Beta(1, 3): mean 1/4, variance 3/80
        assert abs(x.mean() - 0.25) < 3 * math.sqrt(3 / 80 / n)

    def test_deterministic(self):
        np.testing.assert_array_equal(haar_unitary_4(7), haar_unitary_4(7))
        assert not np.allclose(haar_unitary_4(7), haar_unitary_4(8))


class TestPropagate:
    def test_identity(self, rng):
        sc = ChannelScenario(groups=(3, 4), intra_coupling="none", fiber_loss_db_per_km=0, branch_dgd=0)
        fields = {g: launch(drive(rng), LaunchConfig(), g) for g in sc.groups}
        out = propagate(fields, sc, seed=1)
        for g in sc.groups:
            np.testing.assert_array_equal(out[g].envelopes, fields[g].envelopes)

    @pytest.mark.parametrize("law", ["haar_per_frame", "haar_sections"])
    def test_power_conserved(self, rng, law):
        sc = ChannelScenario(groups=(2,), intra_coupling=law, n_sections=5, fiber_loss_db_per_km=0, branch_dgd=0)
        lc = LaunchConfig(alpha=1.3)
        v = drive(rng)
        f = launch(v, lc, 2)
        out = propagate({2: f}, sc, seed=3)[2]
        expected = lc.alpha * (lc.bias + lc.modulation_index * lc.bias * v.samples.real)
        np.testing.assert_allclose(out.total_power(), expected, rtol=1e-9)
        assert np.ptp(out.branch_power(+1) / out.total_power()) < 1e-9

    def test_loss(self):
        sc = ChannelScenario(groups=(3,), intra_coupling="none", fiber_loss_db_per_km=0.75, length_km=4, branch_dgd=0)
        out = propagate(cw_fields((3,), {3: 1.0}), sc, seed=0)[3]
        np.testing.assert_allclose(out.total_power(), 10 ** (-0.3), rtol=1e-12)

    def test_table1_leak(self):
        groups = (1, 2, 3, 4)
        sc = ChannelScenario(groups=groups, crosstalk_db=table_1km().subset(groups),
                             fiber_loss_db_per_km=0, branch_dgd=0)
        out = propagate(cw_fields(groups, {2: 1.0}), sc, seed=11)
        assert np.mean(out[3].total_power()) == pytest.approx(0.0748, abs=1e-3)
        assert np.mean(out[1].total_power()) == pytest.approx(10 ** -0.509, abs=1e-3)

    def test_crosstalk_linear_in_source_power(self):
        sc = ChannelScenario(groups=(3, 4), crosstalk_db=((0, -10), (-12, 0)), fiber_loss_db_per_km=0)
        p1 = propagate(cw_fields((3, 4), {3: 1.0}), sc, seed=5)[4].total_power().mean()
        p2 = propagate(cw_fields((3, 4), {3: 2.0}), sc, seed=5)[4].total_power().mean()
        assert p2 / p1 == pytest.approx(2.0, rel=1e-12)
        assert p1 == pytest.approx(0.1, rel=1e-12)

    def test_decorrelation_delay_rolls_leak(self, rng):
        sc = ChannelScenario(groups=(3, 4), crosstalk_db=((0, -10), (-80, 0)), intra_coupling="none",
                             fiber_loss_db_per_km=0, branch_dgd=0)
        f3 = launch(drive(rng), LaunchConfig(), 3)
        silent = ModeGroupField(np.zeros_like(f3.envelopes), RATE, 4)
        fields = {3: f3, 4: silent}
        a = propagate(fields, sc, seed=2)[4].total_power()
        b = propagate(fields, replace(sc, decorrelation_delay=100), seed=2)[4].total_power()
        np.testing.assert_allclose(np.roll(a, 100), b, rtol=1e-9)

    def test_branch_delay_spectrum(self, rng):
        x = rng.standard_normal((2, 2048)) + 1j * rng.standard_normal((2, 2048))
        y = fractional_delay(x, 3.37 / RATE, RATE)
        np.testing.assert_allclose(np.abs(np.fft.fft(y)), np.abs(np.fft.fft(x)), rtol=1e-9)

    def test_integer_delay_is_roll(self, rng):
        x = rng.standard_normal(512).astype(complex)
        np.testing.assert_allclose(fractional_delay(x, 5 / RATE, RATE), np.roll(x, 5), atol=1e-12)

    def test_deterministic(self, rng):
        sc = ChannelScenario(groups=(3, 4), crosstalk_db=((0, -8), (-9, 0)))
        fields = {g: launch(drive(rng), LaunchConfig(), g) for g in sc.groups}
        a, b = propagate(fields, sc, 9), propagate(fields, sc, 9)
        for g in sc.groups:
            np.testing.assert_array_equal(a[g].envelopes, b[g].envelopes)

    def test_group_mismatch(self):
        sc = ChannelScenario(groups=(3, 4))
        with pytest.raises(KeyError):
            propagate(cw_fields((3,), {3: 1.0}), sc, 0)

    def test_length_mismatch(self):
        sc = ChannelScenario(groups=(3, 4))
        fields = cw_fields((3,), {3: 1.0}) | cw_fields((4,), {4: 1.0}, n=10)
        with pytest.raises(ValueError):
            propagate(fields, sc, 0)


class TestScenario:
    def test_default_dgd(self):
        assert ChannelScenario(length_km=18.4).dgd_seconds == pytest.approx(92e-12)

    def test_unknown_group(self):
        with pytest.raises(KeyError):
            ChannelScenario(groups=(3, 4)).xt_db(2, 3)

    @pytest.mark.parametrize("kw", [
        dict(crosstalk_db=((0, 1), (-1, 0))),
        dict(crosstalk_db=((0, -1),)),
        dict(responsivity={3: (1.0, 0.0)}),
        dict(responsivity={2: (1.0, 1.0)}),
        dict(intra_coupling="random"),
        dict(groups=(3, 3)),
    ])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            ChannelScenario(**kw)


class TestDetect:
    def _one(self, env, **kw):
        sc = ChannelScenario(groups=(3,), **kw)
        return detect({3: ModeGroupField(env, RATE, 3)}, sc, seed=0)

    def test_cw_both_polarizations(self):
        a = 0.3
        env = np.zeros((4, 16), complex)
        env[0] = env[1] = a
        # rop chosen so that the VOA gain is 1
        cur = self._one(env, rop_dbm=10 * math.log10(2 * a * a))
        np.testing.assert_allclose(cur.plus[3], 2 * a * a)
        np.testing.assert_allclose(cur.minus[3], 0)

    def test_responsivity_ratio(self):
        env = np.full((4, 16), 0.5, complex)
        cur = self._one(env, responsivity={3: (2.0, 1.0)})
        np.testing.assert_allclose(cur.plus[3] / cur.minus[3], 2.0)

    def test_rop_setpoint(self, rng):
        f = launch(drive(rng), LaunchConfig(), 3)
        sc = ChannelScenario(groups=(3,), rop_dbm=-17.0)
        cur = detect(propagate({3: f}, sc, 4), sc, 0)
        assert np.mean(cur.plus[3] + cur.minus[3]) == pytest.approx(10 ** -1.7, rel=1e-12)

    def test_noise_variance(self):
        env = np.full((4, 200_000), 0.5, complex)
        kappa, s0 = 2e-3, 1e-4
        cur = self._one(env, noise=NoiseModel(sigma0_sq=s0, kappa=kappa), rop_dbm=0.0)
        # each branch carries half of 1 mW
        expected = s0 + kappa * 0.5
        n = cur.plus[3] - 0.5
        assert np.var(n) == pytest.approx(expected, rel=0.02)
        assert abs(np.corrcoef(cur.plus[3], cur.minus[3])[0, 1]) < 0.01

    def test_lowpass_3db_point(self):
        n = 4096
        t = np.arange(n)
        f0 = 5e9
        k = round(f0 * n / RATE)
        env = np.zeros((4, n), complex)
        env[0] = np.sqrt(1 + 0.5 * np.cos(2 * np.pi * k * t / n))
        cur = self._one(env, rx_lowpass_hz=k * RATE / n, rop_dbm=0.0)
        spec = np.abs(np.fft.rfft(cur.plus[3]))
        assert spec[k] / (0.25 * n) == pytest.approx(1 / math.sqrt(2), rel=1e-9)
        assert spec[0] / n == pytest.approx(1.0, rel=1e-12)

    def test_noiseless_nonnegative(self, rng):
        sc = ChannelScenario(groups=(3, 4), crosstalk_db=((0, -8), (-9, 0)))
        fields = {g: launch(drive(rng), LaunchConfig(), g) for g in sc.groups}
        cur = detect(propagate(fields, sc, 1), sc, 0)
        for g in sc.groups:
            assert cur.plus[g].min() >= 0 and cur.minus[g].min() >= 0

    def test_deterministic(self, rng):
        sc = ChannelScenario(groups=(3,), noise=NoiseModel(kappa=1e-3))
        fields = {3: launch(drive(rng), LaunchConfig(), 3)}
        a, b = detect(fields, sc, 5), detect(fields, sc, 5)
        np.testing.assert_array_equal(a.plus[3], b.plus[3])


def test_mode_partition_noise_eliminated(rng):
    """Branch currents fluctuate from frame to frame; their responsivity-corrected sum does not."""
    lc = LaunchConfig()
    v = drive(rng, 2048)
    sc = ChannelScenario(groups=(3,), responsivity={3: (1.0, 0.6)}, fiber_loss_db_per_km=0, branch_dgd=0,
                         rop_dbm=0.0)
    f = launch(v, lc, 3)
    mu_p, mu_m = sc.responsivity[3]
    plus_means, sums = [], []
    for k in range(100):
        cur = detect(propagate({3: f}, sc, seed=k), sc, seed=k)
        plus_means.append(np.mean(cur.plus[3]) / mu_p)
        sums.append(cur.plus[3] / mu_p + cur.minus[3] / mu_m)
    sums = np.array(sums)
    assert np.var(plus_means) / np.mean(plus_means) ** 2 > 1e-3
    assert np.max(np.var(sums, axis=0) / np.mean(sums, axis=0) ** 2) < 1e-12
    # the sum is affine in the drive waveform
    p = f.total_power()
    np.testing.assert_allclose(sums[0], p / p.mean() * 1.0, rtol=1e-9)
