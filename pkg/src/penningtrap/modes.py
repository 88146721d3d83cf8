"""Closed-form eigenmodes of a single ion in an ideal Penning trap.

Conventions: B along +z, positive charge, internal frequencies in rad/s.
Both radial modes rotate clockwise seen from +z, so the complex radial
coordinate is ``x + iy = a+ exp(-i w+ t) + a- exp(-i w- t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constants as const


class StabilityError(ValueError):
    """Axial frequency beyond the radial stability limit."""


@dataclass(frozen=True)
class TrapParams:
    B: float
    mass: float = const.BE9_MASS
    charge: float = const.E_CHARGE

    def __post_init__(self):
        if self.B < 0 or self.mass <= 0 or self.charge <= 0:
            raise ValueError("B must be >= 0 and mass, charge > 0")

    @classmethod
    def for_species(cls, species="Be9", B=3.0):
        return cls(B=B, mass=const.species_mass(species))


@dataclass(frozen=True)
class ModeSet:
    omega_z: float
    omega_plus: float
    omega_minus: float
    omega_c: float

    @property
    def stable(self):
        return self.omega_minus > 0 or self.omega_z == 0

    def as_hz(self):
        """Mode frequencies in Hz, keyed by mode name."""
        return {
            "axial": self.omega_z / const.TWO_PI,
            "cyclotron": self.omega_plus / const.TWO_PI,
            "magnetron": self.omega_minus / const.TWO_PI,
            "bare_cyclotron": self.omega_c / const.TWO_PI,
        }

    def frequency(self, mode):
        return {"z": self.omega_z, "+": self.omega_plus, "-": self.omega_minus}[mode]


@dataclass(frozen=True)
class ModeAmplitudes:
    """Mode actions (J s) and phases (rad) at t = 0.

    Radial radii follow from ``J = m (w+ - w-) r^2 / 2`` and the axial
    amplitude from ``J = m wz A^2 / 2``.
    """

    J_plus: float = 0.0
    J_minus: float = 0.0
    J_z: float = 0.0
    phi_plus: float = 0.0
    phi_minus: float = 0.0
    phi_z: float = 0.0

    def __post_init__(self):
        if min(self.J_plus, self.J_minus, self.J_z) < 0:
            raise ValueError("actions must be non-negative")

    def quanta(self):
        return (self.J_plus / const.HBAR, self.J_minus / const.HBAR, self.J_z / const.HBAR)


def cyclotron_frequency(p: TrapParams) -> float:
    return p.charge * p.B / p.mass


def stability_limit(omega_c: float) -> float:
    return omega_c / math.sqrt(2.0)


def radial_frequencies(omega_z: float, omega_c: float) -> tuple[float, float]:
    disc = omega_c**2 - 2.0 * omega_z**2
    if disc < 0:
        # tolerate roundoff exactly at the limit
        if disc > -1e-12 * omega_c**2:
            disc = 0.0
        else:
            raise StabilityError(
                f"omega_z = {omega_z:.6g} rad/s exceeds the stability limit "
                f"{stability_limit(omega_c):.6g} rad/s"
            )
    big_omega = 0.5 * math.sqrt(disc)
    return 0.5 * omega_c + big_omega, 0.5 * omega_c - big_omega


def mode_set(p: TrapParams, omega_z: float) -> ModeSet:
    wc = cyclotron_frequency(p)
    wp, wm = radial_frequencies(omega_z, wc)
    return ModeSet(omega_z=omega_z, omega_plus=wp, omega_minus=wm, omega_c=wc)


def _require_stable(modes: ModeSet):
    if not modes.omega_plus > modes.omega_minus >= 0:
        raise StabilityError("mode set is not stable (w+ must exceed w- >= 0)")


def total_energy(modes: ModeSet, amps: ModeAmplitudes) -> float:
    """Motional energy; the magnetron term enters with a negative sign."""
    _require_stable(modes)
    return (
        modes.omega_plus * amps.J_plus
        - modes.omega_minus * amps.J_minus
        + modes.omega_z * amps.J_z
    )


def radii(modes: ModeSet, amps: ModeAmplitudes, mass: float):
    """(r+, r-, A_z) in metres."""
    _require_stable(modes)
    dw = modes.omega_plus - modes.omega_minus
    r_p = math.sqrt(2 * amps.J_plus / (mass * dw))
    r_m = math.sqrt(2 * amps.J_minus / (mass * dw))
    a_z = math.sqrt(2 * amps.J_z / (mass * modes.omega_z)) if modes.omega_z > 0 else 0.0
    return r_p, r_m, a_z


def epicycle_trajectory(modes: ModeSet, amps: ModeAmplitudes, t, mass: float = const.BE9_MASS,
                        center=(0.0, 0.0, 0.0), with_velocity=False):
    """Analytic position (and optionally velocity) at time(s) ``t``.

    Returns an array of shape ``t.shape + (3,)``; with ``with_velocity`` a
    pair ``(position, velocity)``.
    """
    t = np.asarray(t, dtype=float)
    r_p, r_m, a_z = radii(modes, amps, mass)
    ph_p = modes.omega_plus * t + amps.phi_plus
    ph_m = modes.omega_minus * t + amps.phi_minus
    ph_z = modes.omega_z * t + amps.phi_z
    u = r_p * np.exp(-1j * ph_p) + r_m * np.exp(-1j * ph_m)
    pos = np.stack([u.real, u.imag, a_z * np.cos(ph_z)], axis=-1) + np.asarray(center)
    if not with_velocity:
        return pos
    du = -1j * (modes.omega_plus * r_p * np.exp(-1j * ph_p)
                + modes.omega_minus * r_m * np.exp(-1j * ph_m))
    vel = np.stack([du.real, du.imag, -a_z * modes.omega_z * np.sin(ph_z)], axis=-1)
    return pos, vel


def quadrupole_curvature(omega_z: float, mass: float = const.BE9_MASS,
                         charge: float = const.E_CHARGE) -> float:
    """d2V/dz2 (V/m^2) of the radially symmetric trap with axial frequency omega_z."""
    return mass * omega_z**2 / charge


def axial_frequency_from_curvature(hzz: float, mass: float = const.BE9_MASS,
                                   charge: float = const.E_CHARGE) -> float:
    if hzz <= 0:
        raise StabilityError("no axial confinement (d2V/dz2 <= 0)")
    return math.sqrt(charge * hzz / mass)
