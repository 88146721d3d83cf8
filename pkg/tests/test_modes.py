import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penningtrap import constants as const
from penningtrap import modes as m

MHZ = 1e6
TWO_PI = const.TWO_PI


def test_cyclotron_frequency_be9_at_3T(trap):
    assert m.cyclotron_frequency(trap) / TWO_PI / MHZ == pytest.approx(5.12, rel=5e-3)


def test_cyclotron_frequency_zero_field():
    assert m.cyclotron_frequency(m.TrapParams(0.0)) == 0.0


def test_cyclotron_frequency_proton_independent_arithmetic():
    proton = 1.67262192369e-27
    e = 1.602176634e-19
    assert m.cyclotron_frequency(m.TrapParams(1.0, proton, e)) == pytest.approx(e / proton, rel=1e-9)


def test_radial_frequencies_reference_point(modeset):
    assert modeset.omega_plus / TWO_PI / MHZ == pytest.approx(4.41, rel=1e-2)
    assert modeset.omega_minus / TWO_PI / MHZ == pytest.approx(0.71, rel=1e-2)


def test_radial_frequencies_zero_axial():
    assert m.radial_frequencies(0.0, 7.0) == (7.0, 0.0)


def test_radial_frequencies_at_limit(trap):
    wc = m.cyclotron_frequency(trap)
    wp, wm = m.radial_frequencies(m.stability_limit(wc), wc)
    assert wp == pytest.approx(wc / 2, rel=1e-7)
    assert wm == pytest.approx(wc / 2, rel=1e-7)
    assert wp / TWO_PI / MHZ == pytest.approx(2.56, rel=5e-3)


def test_beyond_limit_raises(trap):
    wc = m.cyclotron_frequency(trap)
    with pytest.raises(m.StabilityError):
        m.radial_frequencies(1.01 * m.stability_limit(wc), wc)


def test_stability_limit(trap):
    wc = m.cyclotron_frequency(trap)
    assert m.stability_limit(wc) / TWO_PI / MHZ == pytest.approx(3.62, rel=5e-3)
    assert m.stability_limit(0.0) == 0.0
    assert 2 * m.stability_limit(wc) ** 2 == pytest.approx(wc**2, rel=1e-14)


@settings(max_examples=300, deadline=None)
@given(wc=st.floats(1e5, 1e9), frac=st.floats(0.0, 1.0))
def test_brown_gabrielse_identities(wc, frac):
    wz = frac * wc / math.sqrt(2)
    wp, wm = m.radial_frequencies(wz, wc)
    assert abs(wp + wm - wc) <= 1e-12 * wc
    assert abs(wp**2 + wm**2 + wz**2 - wc**2) <= 1e-12 * wc**2
    assert wp * wm == pytest.approx(wz**2 / 2, rel=1e-9, abs=1e-12 * wc**2)
    assert wp >= wm >= 0


def test_invalid_trap_params():
    with pytest.raises(ValueError):
        m.TrapParams(3.0, mass=-1.0)


def test_for_species():
    p = m.TrapParams.for_species("Be9", 3.0)
    assert p.mass == const.BE9_MASS and p.B == 3.0


def test_total_energy_signs(modeset):
    hb = const.HBAR
    assert m.total_energy(modeset, m.ModeAmplitudes()) == 0.0
    assert m.total_energy(modeset, m.ModeAmplitudes(J_minus=hb)) < 0
    assert m.total_energy(modeset, m.ModeAmplitudes(J_plus=hb)) > 0


@settings(max_examples=100, deadline=None)
@given(j=st.tuples(*[st.floats(0, 1e3)] * 3), dj=st.floats(1e-3, 1e3))
def test_total_energy_monotone_in_actions(j, dj):
    hb = const.HBAR
    wc = const.E_CHARGE * 3.0 / const.BE9_MASS
    wp, wm = m.radial_frequencies(TWO_PI * 2.5e6, wc)
    ms = m.ModeSet(TWO_PI * 2.5e6, wp, wm, wc)
    base = m.total_energy(ms, m.ModeAmplitudes(*(x * hb for x in j)))
    jp, jm, jz = (x * hb for x in j)
    d = dj * hb
    assert m.total_energy(ms, m.ModeAmplitudes(jp, jm + d, jz)) < base
    assert m.total_energy(ms, m.ModeAmplitudes(jp + d, jm, jz)) > base
    assert m.total_energy(ms, m.ModeAmplitudes(jp, jm, jz + d)) > base


def test_total_energy_matches_trajectory_energy(modeset):
    mass = const.BE9_MASS
    amps = m.ModeAmplitudes(2e3 * const.HBAR, 5e3 * const.HBAR, 1e3 * const.HBAR, 0.4, 1.3, 2.2)
    # one common period of all three modes is not available; average over many magnetron periods
    t = np.linspace(0, 50 * TWO_PI / modeset.omega_minus, 400_001)
    r, v = m.epicycle_trajectory(modeset, amps, t, mass, with_velocity=True)
    curv = m.quadrupole_curvature(modeset.omega_z, mass)
    pot = const.E_CHARGE * 0.5 * curv * (r[:, 2] ** 2 - 0.5 * (r[:, 0] ** 2 + r[:, 1] ** 2))
    kin = 0.5 * mass * np.sum(v**2, axis=1)
    # canonical energy: kinetic + potential is conserved exactly for the analytic motion
    e = kin + pot
    assert np.ptp(e) <= 1e-9 * np.abs(e).max()
    assert e.mean() == pytest.approx(m.total_energy(modeset, amps), rel=1e-6)


def test_epicycle_single_mode_circle(modeset):
    amps = m.ModeAmplitudes(J_plus=1e3 * const.HBAR)
    t = np.linspace(0, 3e-6, 500)
    r = m.epicycle_trajectory(modeset, amps, t)
    rp, _, _ = m.radii(modeset, amps, const.BE9_MASS)
    assert np.allclose(np.hypot(r[:, 0], r[:, 1]), rp, rtol=1e-12)
    assert np.allclose(r[:, 2], 0)


def test_epicycle_zero_phase_along_x(modeset):
    amps = m.ModeAmplitudes(1e3 * const.HBAR, 2e3 * const.HBAR, 3e3 * const.HBAR)
    r = m.epicycle_trajectory(modeset, amps, 0.0)
    rp, rm, az = m.radii(modeset, amps, const.BE9_MASS)
    assert r == pytest.approx([rp + rm, 0.0, az], abs=1e-18)


def test_epicycle_fft_peaks(modeset):
    from penningtrap.dynamics import spectral_peaks
    amps = m.ModeAmplitudes(1e3 * const.HBAR, 1e3 * const.HBAR, 1e3 * const.HBAR, 0.1, 0.5, 0.9)
    t = np.arange(2**16) * (TWO_PI / modeset.omega_plus / 20)
    r = m.epicycle_trajectory(modeset, amps, t)
    wp, wm = spectral_peaks(t, r[:, 0], 2)
    (wz,) = spectral_peaks(t, r[:, 2], 1)
    assert wp == pytest.approx(modeset.omega_plus, rel=1e-5)
    assert wm == pytest.approx(modeset.omega_minus, rel=1e-4)
    assert wz == pytest.approx(modeset.omega_z, rel=1e-5)


def test_both_radial_modes_clockwise(modeset):
    # positive charge in B along +z: both circular modes rotate clockwise seen from +z
    for amps in (m.ModeAmplitudes(J_plus=const.HBAR), m.ModeAmplitudes(J_minus=const.HBAR)):
        r, v = m.epicycle_trajectory(modeset, amps, 0.0, with_velocity=True)
        assert r[0] * v[1] - r[1] * v[0] < 0


def test_as_hz(modeset):
    hz = modeset.as_hz()
    assert hz["cyclotron"] == pytest.approx(modeset.omega_plus / TWO_PI)
    assert modeset.frequency("-") == modeset.omega_minus
