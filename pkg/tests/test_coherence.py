import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from penningtrap import coherence as co
from penningtrap import constants as const

OU = co.OUNoise(const.TWO_PI * 200, 1e-3)


def _filter_oracle(seq, u):
    """u^2 |int_0^1 y(s) exp(i u s) ds|^2 by piecewise quadrature of the switching function."""
    tau = np.concatenate([[0.0], seq.fractions, [1.0]])
    re = im = 0.0
    for k, (a, b) in enumerate(zip(tau[:-1], tau[1:])):
        sgn = (-1) ** k
        re += sgn * integrate.quad(lambda s: math.cos(u * s), a, b, epsabs=1e-14)[0]
        im += sgn * integrate.quad(lambda s: math.sin(u * s), a, b, epsabs=1e-14)[0]
    return u * u * (re * re + im * im)


def test_uhrig_times():
    assert co.uhrig_times(1).tolist() == [0.5]
    np.testing.assert_allclose(co.uhrig_times(3), [0.1464466, 0.5, 0.8535534], atol=1e-7)
    np.testing.assert_allclose(co.uhrig_times(2, t_wait=3.0), 3.0 * np.array([0.25, 0.75]))
    with pytest.raises(ValueError):
        co.uhrig_times(0)


@given(n=st.integers(1, 40))
def test_uhrig_symmetric_and_inside(n):
    t = co.uhrig_times(n)
    np.testing.assert_allclose(t + t[::-1], 1.0, atol=1e-12)
    co.PulseSequence(tuple(t))


def test_sequence_validation():
    with pytest.raises(ValueError):
        co.PulseSequence((0.0, 0.5))
    with pytest.raises(ValueError):
        co.PulseSequence((0.6, 0.4))
    with pytest.raises(ValueError):
        co.sequence("cpmg-4")
    assert co.sequence("uhrig-3").n_pulses == 3
    assert co.sequence("echo").fractions == (0.5,)


@pytest.mark.parametrize("name", ["ramsey", "echo", "uhrig-3", "uhrig-5"])
@pytest.mark.parametrize("u", [0.3, 2.0, 17.0, 150.0])
def test_filter_function_matches_time_domain(name, u):
    seq = co.sequence(name)
    assert co.filter_function(seq, u / 2e-3, 2e-3) == pytest.approx(_filter_oracle(seq, u), rel=1e-8, abs=1e-14)


def test_ramsey_filter_is_sinc_squared():
    u = np.linspace(0.01, 30, 200)
    np.testing.assert_allclose(co.filter_function(co.ramsey(), u, 1.0), 4 * np.sin(u / 2) ** 2, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_uhrig_flatness_at_dc(n):
    seq = co.uhrig(n)
    u = np.array([0.08, 0.04, 0.02])
    f = co.filter_function(seq, u, 1.0)
    ratio = f / u ** (2 * (n + 1))
    assert np.ptp(ratio) < 0.1 * ratio.max()
    assert co.filter_function(seq, 1e-6, 1.0) < 1e-20


def test_quasi_static_chi():
    qs = co.QuasiStaticNoise(3e3)
    for t in (1e-4, 1e-3):
        assert co.chi(qs, co.ramsey(), t) == pytest.approx(0.5 * (3e3 * t) ** 2)
    assert co.chi(qs, co.echo(), 1e-3) == pytest.approx(0.0, abs=1e-20)
    qs = co.QuasiStaticNoise.from_ramsey_time(1.9e-3)
    assert co.one_over_e_time(qs, "ramsey") == pytest.approx(1.9e-3, rel=1e-6)


@pytest.mark.parametrize("engine", ["grid", "quad"])
def test_ou_ramsey_matches_closed_form(engine):
    for t in (2e-4, 1e-3, 4e-3):
        assert co.chi(OU, co.ramsey(), t, engine) == pytest.approx(float(OU.ramsey_chi(t)), rel=1e-6)


def test_engines_agree_for_uhrig():
    for name in ("echo", "uhrig-3"):
        seq = co.sequence(name)
        assert co.chi(OU, seq, 3e-3, "grid") == pytest.approx(co.chi(OU, seq, 3e-3, "quad"), rel=1e-5)


def test_zero_noise_flat():
    t = np.linspace(1e-4, 1e-2, 7)
    for noise in (co.QuasiStaticNoise(0.0), co.OUNoise(0.0, 1e-3), co.WhiteNoise(0.0)):
        np.testing.assert_array_equal(co.coherence_decay(noise, "uhrig-3", t).contrast, 1.0)
        np.testing.assert_array_equal(co.motional_ramsey(noise, t, echo_pulse=True).contrast, 1.0)


@settings(max_examples=15, deadline=None)
@given(sigma=st.floats(10, 1e4), tau_c=st.floats(1e-5, 1e-1), seq=st.sampled_from(["ramsey", "echo", "uhrig-3"]))
def test_contrast_bounded_and_monotone(sigma, tau_c, seq):
    t = np.geomspace(1e-5, 1e-1, 8)
    w = co.coherence_decay(co.OUNoise(sigma, tau_c), seq, t).contrast
    assert np.all(w > 0) or np.all(w >= 0)
    assert np.all(w <= 1)
    assert np.all(np.diff(w) <= 1e-12)


def test_bad_grid_rejected():
    with pytest.raises(ValueError):
        co.coherence_decay(OU, "ramsey", [1e-3, 5e-4])
    with pytest.raises(ValueError):
        co.coherence_decay(OU, "ramsey", [0.0, 5e-4])


class _RisingNoise:
    def psd(self, w):
        return np.asarray(w, dtype=float)


def test_divergent_spectrum_reported():
    with pytest.raises(co.SpectralIntegralError, match="cutoff"):
        co.chi(_RisingNoise(), co.ramsey(), 1e-3)


def test_flat_spectrum_is_white():
    flat = co.PowerLawNoise(7.0, 0.0, 1.0)
    assert co.chi(flat, co.echo(), 1e-3) == pytest.approx(co.chi(co.WhiteNoise(7.0), co.echo(), 1e-3), rel=1e-3)


def test_noise_validation():
    with pytest.raises(ValueError):
        co.PowerLawNoise(1.0, 1.0, 10.0, 5.0)
    with pytest.raises(ValueError):
        co.PowerLawNoise(1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        co.QuasiStaticNoise(-1.0)
    with pytest.raises(ValueError):
        co.OUNoise(1.0, 0.0)


def test_uhrig_order_extends_coherence_for_slow_noise():
    times = [co.one_over_e_time(OU, co.uhrig(n)) for n in (0, 1, 3, 5)]
    assert all(a < b for a, b in zip(times, times[1:]))


def test_monte_carlo_matches_filter_function_white_echo():
    n = co.WhiteNoise(2 / 0.066)
    t = np.linspace(10e-3, 100e-3, 5)
    mc = co.monte_carlo_decay(n, co.echo(), t, n_paths=20_000, n_steps=200, seed=3)
    ff = co.coherence_decay(n, "echo", t).contrast
    assert np.all(np.abs(mc.contrast - ff) <= 4 * mc.stderr + 1e-3)


def test_monte_carlo_reproducible():
    t = np.array([1e-3, 2e-3])
    a = co.monte_carlo_decay(OU, co.echo(), t, n_paths=1000, seed=5)
    b = co.monte_carlo_decay(OU, co.echo(), t, n_paths=1000, seed=5)
    assert np.array_equal(a.contrast, b.contrast)


def test_fit_recovers_gaussian_66ms():
    t = np.linspace(5e-3, 150e-3, 25)
    curve = co.CoherenceCurve(t, np.exp(-(t / 66e-3) ** 2))
    fit = co.fit_coherence(curve, "gaussian")
    assert fit.tau == pytest.approx(66e-3, rel=1e-2)
    assert fit.decaying
    assert co.fit_coherence(curve, "exponential").rss > 10 * max(fit.rss, 1e-20)


def test_quasi_static_curve_is_gaussian():
    qs = co.QuasiStaticNoise.from_ramsey_time(1.9e-3)
    curve = co.coherence_decay(qs, "ramsey", np.linspace(0.2e-3, 5e-3, 20))
    g = co.fit_coherence(curve, "gaussian")
    e = co.fit_coherence(curve, "exponential")
    assert g.tau == pytest.approx(1.9e-3, rel=1e-6)
    assert g.rss < 1e-12 < e.rss


def test_fit_constant_is_non_decaying():
    fit = co.fit_coherence(co.CoherenceCurve(np.linspace(1, 5, 6), np.full(6, 0.9)), "exponential")
    assert math.isinf(fit.tau) and not fit.decaying


def test_fit_input_errors():
    with pytest.raises(ValueError):
        co.fit_coherence(co.CoherenceCurve([1, 2, 3], [1, 0.5, 0.2]))
    with pytest.raises(ValueError):
        co.fit_coherence(co.CoherenceCurve([1, 2, 3, 4], [1, 0.5, 0.2, 0.1]), "lorentzian")


def test_motional_echo_helps_slow_noise():
    t = np.linspace(2e-3, 0.3, 30)
    slow = co.OUNoise(30.0, 0.1)
    r = co.fit_coherence(co.motional_ramsey(slow, t), "gaussian").tau
    e = co.fit_coherence(co.motional_ramsey(slow, t, echo_pulse=True), "gaussian").tau
    assert e / r > 1


def test_curve_csv():
    text = co.coherence_decay(OU, "echo", [1e-3, 2e-3]).to_csv()
    assert text.splitlines()[0] == "t_wait_s,contrast,stderr"
    assert len(text.splitlines()) == 3


def test_field_to_detuning():
    assert float(co.field_to_detuning(1e-6)) == pytest.approx(const.TWO_PI * 28e3, rel=1e-12)
    assert float(co.field_to_detuning(0.0)) == 0.0
    assert float(co.field_to_detuning(3e-7) + co.field_to_detuning(4e-7)) == pytest.approx(
        float(co.field_to_detuning(7e-7)), rel=1e-14)


def test_voltage_to_frequency_noise():
    assert co.voltage_to_frequency_noise(1e-6, 1e7) == pytest.approx(5.0)
