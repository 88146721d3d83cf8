"""Quantized motion: Lamb-Dicke factors, Fock-resolved Rabi couplings, sideband cooling and thermometry.

Two labels are in play.  Low-level functions (``rabi_coupling``,
``apply_pulse``) take ``s`` as the Fock-level change n -> n + s.  Schedules
and probes use sideband colours: the spin starts in the bright state, which
lies above the dark state, so on a positive-energy mode the blue sideband
removes a quantum and the red one adds one.  The magnetron mode has negative
energy and the roles swap.  ``fock_change`` maps colour to level change.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply
from scipy.special import eval_genlaguerre, gammaln

from . import constants as const
from . import modes as modes_mod

logger = logging.getLogger(__name__)

HBAR = const.HBAR
DEFAULT_TRUNCATION = 128
TAIL_TOL = 1e-6

# energy sign of each mode: '+' cyclotron, '-' magnetron, 'z' axial
MODE_SIGN = {"+": 1, "-": -1, "z": 1}


def raman_delta_k(wavelength=const.COOLING_WAVELENGTH, angle=math.pi / 2):
    """|k1 - k2| for two beams of equal wavelength crossing at ``angle``."""
    k = 2 * math.pi / wavelength
    return 2 * k * math.sin(angle / 2)


def lamb_dicke(delta_k, mass, modes: modes_mod.ModeSet, which="z"):
    """Lamb-Dicke parameter of one mode.

    Axial: delta_k * sqrt(hbar / (2 m wz)).  Both radial modes use the
    length sqrt(hbar / (2 m (w+ - w-))).
    """
    if not modes.omega_plus > modes.omega_minus >= 0 or modes.omega_z <= 0:
        raise modes_mod.StabilityError("Lamb-Dicke parameter needs a stable mode set")
    if which == "z":
        return delta_k * math.sqrt(HBAR / (2 * mass * modes.omega_z))
    if which in ("+", "-"):
        return delta_k * math.sqrt(HBAR / (2 * mass * (modes.omega_plus - modes.omega_minus)))
    raise ValueError(f"unknown mode {which!r}")


def rabi_coupling(n, s, eta, omega_0):
    """Rabi frequency between Fock states n and n + s (rad/s); zero below the ground state.

    Vectorized over ``n``.
    """
    n = np.asarray(n)
    m = n + s
    lo = np.minimum(n, m)
    hi = np.maximum(n, m)
    valid = lo >= 0
    lo_c = np.where(valid, lo, 0)
    hi_c = np.where(valid, hi, 0)
    a = abs(s)
    ratio = np.exp(0.5 * (gammaln(lo_c + 1) - gammaln(hi_c + 1)))
    lag = eval_genlaguerre(lo_c, a, eta * eta)
    val = omega_0 * math.exp(-eta * eta / 2) * eta**a * ratio * lag
    val = np.where(valid, np.abs(val), 0.0)
    return val if val.ndim else float(val)


def pi_time(n, s, eta, omega_0):
    return math.pi / rabi_coupling(n, s, eta, omega_0)


COLOURS = {"blue": 1, "red": -1}


def fock_change(colour, order=1, mode_sign=1):
    """Fock-level change when a bright-state ion is transferred on a coloured sideband."""
    return -COLOURS[colour] * order * mode_sign


@dataclass
class FockDistribution:
    p: np.ndarray
    spin_up: float = 1.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.p < -1e-15) or abs(self.p.sum() - 1) > 1e-9:
            raise ValueError("Fock probabilities must be non-negative and sum to 1")
        self.p = np.clip(self.p, 0.0, None)

    @property
    def truncation(self):
        return len(self.p) - 1

    @property
    def nbar(self):
        return float(np.arange(len(self.p)) @ self.p)

    @classmethod
    def thermal(cls, nbar, truncation=DEFAULT_TRUNCATION):
        """Thermal state, truncated where the remaining tail mass is negligible and renormalized."""
        N = truncation
        if nbar > 0:
            q = nbar / (nbar + 1)
            while q ** (N + 1) > 1e-13:
                N *= 2
            n = np.arange(N + 1)
            p = (1 - q) * q**n
        else:
            p = np.zeros(N + 1)
            p[0] = 1.0
        return cls(p / p.sum())

    @classmethod
    def fock(cls, n, truncation=DEFAULT_TRUNCATION):
        p = np.zeros(max(truncation, 2 * n) + 1)
        p[n] = 1.0
        return cls(p)

    def extended(self, size):
        if size <= len(self.p):
            return self
        return replace(self, p=np.concatenate([self.p, np.zeros(size - len(self.p))]))

    def checked(self):
        """Auto-extend (x2) if the top level holds more than the tail tolerance."""
        d = self
        while d.p[-1] > TAIL_TOL:
            logger.warning("Fock truncation %d too small (tail %.2e); extending", d.truncation, d.p[-1])
            d = d.extended(2 * len(d.p))
        return d


@dataclass
class Pulse:
    mode: str          # '+', '-' or 'z'
    colour: str        # 'blue' or 'red'
    order: int         # 1 or 3
    duration: float

    @property
    def fock_change(self):
        return fock_change(self.colour, self.order, MODE_SIGN[self.mode])


@dataclass
class CoolingSchedule:
    pulses: list = field(default_factory=list)

    def validate(self):
        for i, pl in enumerate(self.pulses):
            if pl.mode not in MODE_SIGN:
                raise ValueError(f"pulse {i}: unknown mode {pl.mode!r}")
            if pl.colour not in COLOURS or pl.order not in (1, 3):
                raise ValueError(f"pulse {i}: sideband must be blue/red of order 1 or 3")
            if pl.duration < 0:
                raise ValueError(f"pulse {i}: negative duration")
            if pl.fock_change >= 0:
                right = "blue" if MODE_SIGN[pl.mode] > 0 else "red"
                raise ValueError(f"pulse {i}: mode {pl.mode!r} is cooled on {right} sidebands")
        return self

    @property
    def total_time(self):
        return sum(p.duration for p in self.pulses)

    def to_yaml(self):
        import yaml
        return yaml.safe_dump({"pulses": [{"mode": p.mode, "colour": p.colour, "order": p.order,
                                           "duration_s": p.duration} for p in self.pulses]},
                              sort_keys=False)

    @classmethod
    def from_yaml(cls, text):
        import yaml
        data = yaml.safe_load(text) or {}
        def one(p):
            return Pulse(str(p["mode"]), str(p["colour"]), int(p.get("order", 1)),
                         float(p["duration_s"]))

        pulses = []
        for block in data.get("blocks", []):
            for _ in range(int(block.get("repeat", 1))):
                pulses += [one(p) for p in block["pulses"]]
        pulses += [one(p) for p in data.get("pulses", [])]
        return cls(pulses).validate()


def transition_probability(dist: FockDistribution, s, duration, eta, omega_0):
    """Per-level transferred fraction sin^2(Omega_{n,n+s} t / 2)."""
    n = np.arange(len(dist.p))
    return np.sin(0.5 * rabi_coupling(n, s, eta, omega_0) * duration) ** 2


def excitation(dist: FockDistribution, s, duration, eta, omega_0):
    """Probability of leaving the bright state after a pulse coupling n -> n + s (no repump)."""
    return float(transition_probability(dist, s, duration, eta, omega_0) @ dist.p) * dist.spin_up


def probe_excitation(dist: FockDistribution, colour, duration, eta, omega_0, mode="z", order=1):
    """Bright-state depletion after a ``colour`` sideband probe on ``mode``."""
    return excitation(dist, fock_change(colour, order, MODE_SIGN[mode]), duration, eta, omega_0)


def apply_pulse(dist: FockDistribution, s, duration, eta, omega_0, repump=True):
    """Incoherent pulse coupling n -> n + s on each Fock level, then optional repump.

    The transferred fraction sin^2(Omega_{n,n+s} t / 2) keeps its motional
    change after the spin is reset to the bright state.  Without repump the
    transferred fraction shows up as reduced ``spin_up``.
    """
    if duration == 0:
        return dist
    dn = int(s)
    d = dist.extended(len(dist.p) + dn) if dn > 0 else dist
    P = transition_probability(d, dn, duration, eta, omega_0)
    moved = d.p * P
    new = d.p - moved
    if dn > 0:
        new[dn:] += moved[:len(moved) - dn]
    else:
        new[:len(moved) + dn] += moved[-dn:]
    spin = d.spin_up if repump else d.spin_up * (1 - float(moved.sum()) / max(d.p.sum(), 1e-300))
    out = FockDistribution(new / new.sum(), 1.0 if repump else spin)
    return out.checked()


def heating_generator(size, rate):
    """Rate matrix for heating at ``rate`` quanta/s by coupling to a hot bath (up = down rates)."""
    n = np.arange(size, dtype=float)
    up = rate * (n + 1)
    down = rate * n
    diag = -(up + down)
    diag[-1] = -down[-1]      # no transitions out of the truncation
    return sparse.diags([up[:-1], diag, down[1:]], [-1, 0, 1], format="csc")


def apply_heating(dist: FockDistribution, rate, duration):
    """Evolve the distribution under heating; n-bar grows by rate * duration (until truncation)."""
    if rate == 0 or duration == 0:
        return dist
    d = dist
    # make room for diffusion: a few standard deviations of the added quanta
    extra = rate * duration
    need = int(d.nbar + 10 * extra + 20 * math.sqrt(extra + 1)) + 10
    d = d.extended(max(len(d.p), need))
    p = expm_multiply(heating_generator(len(d.p), rate) * duration, d.p)
    p = np.clip(p, 0.0, None)
    return FockDistribution(p / p.sum(), d.spin_up).checked()


@dataclass
class CoolingTrace:
    times: np.ndarray
    nbar: np.ndarray
    final: FockDistribution


def sideband_cool(dist: FockDistribution, schedule: CoolingSchedule, eta, omega_0, heating=0.0,
                  total_time=None, mode="z"):
    """Apply the schedule's pulses for ``mode`` with heating in between.

    Pulses for other modes only consume time (heating still acts).  Stops
    once ``total_time`` is reached; any time left afterwards is spent heating.
    """
    schedule.validate()
    t = 0.0
    times = [0.0]
    nb = [dist.nbar]
    for pl in schedule.pulses:
        dur = pl.duration
        if total_time is not None and t + dur > total_time:
            break
        if pl.mode == mode:
            dist = apply_pulse(dist, pl.fock_change, dur, eta, omega_0)
        dist = apply_heating(dist, heating, dur)
        t += dur
        times.append(t)
        nb.append(dist.nbar)
    if total_time is not None and total_time > t:
        dist = apply_heating(dist, heating, total_time - t)
        times.append(total_time)
        nb.append(dist.nbar)
    return CoolingTrace(np.array(times), np.array(nb), dist)


def default_schedule(eta, omega_0, mode="z", n_cycles=40, total=None, orders=(3, 1)):
    """Alternating third- and first-sideband pulses with durations swept down the Fock ladder.

    Each cycle holds one pulse per entry of ``orders``, timed to the pi-time
    of a level that decreases from cycle to cycle and ends at the lowest
    level the sideband can act on.  If ``total`` is given the final cycle is
    repeated until the schedule fills that time.
    """
    colour = "blue" if MODE_SIGN[mode] > 0 else "red"
    top = {1: 12, 3: 20}
    ladders = {k: np.geomspace(top[k], k, n_cycles).round().astype(int) for k in orders}
    pulses = []
    for c in range(n_cycles):
        for k in orders:
            pulses.append(Pulse(mode, colour, k, pi_time(ladders[k][c], -k, eta, omega_0)))
    if total is not None:
        last = pulses[-len(orders):]
        t = sum(p.duration for p in pulses)
        while t + sum(p.duration for p in last) <= total:
            pulses += [replace(p) for p in last]
            t += sum(p.duration for p in last)
    return CoolingSchedule(pulses).validate()


# -- thermometry ---------------------------------------------------------------

class ThermometryError(ValueError):
    pass


def sideband_ratio_thermometry(p_red, p_blue, mode="z"):
    """Mean occupation n = r / (1 - r) from red and blue sideband excitation probabilities.

    ``r`` is the excitation on the quantum-removing sideband over that on the
    quantum-adding one: blue/red for positive-energy modes, red/blue for the
    magnetron.
    """
    for p in (p_red, p_blue):
        if not 0 <= p <= 1:
            raise ThermometryError("excitation probabilities must lie in [0, 1]")
    remove, add = (p_blue, p_red) if MODE_SIGN[mode] > 0 else (p_red, p_blue)
    if add == 0:
        raise ThermometryError("no excitation on the quantum-adding sideband")
    r = remove / add
    if r >= 1:
        raise ThermometryError(f"sideband ratio {r:.3f} >= 1: state is not thermal or heated during the probe")
    return r / (1 - r)


def probe_thermal(nbar, eta, omega_0, duration, mode="z"):
    """Red and blue first-sideband excitations of a thermal state."""
    dist = FockDistribution.thermal(nbar)
    return (probe_excitation(dist, "red", duration, eta, omega_0, mode),
            probe_excitation(dist, "blue", duration, eta, omega_0, mode))


# -- heating rates ----------------------------------------------------------------

@dataclass
class LinearFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float


def heating_fit(t_wait, nbar, sigma=None):
    """Weighted linear least squares of n-bar against wait time.

    With ``sigma`` the errors are absolute; without, they are scaled by the
    residual variance.
    """
    t = np.asarray(t_wait, dtype=float)
    y = np.asarray(nbar, dtype=float)
    if len(t) < 3:
        raise ValueError("need at least 3 points for a heating-rate fit")
    if np.ptp(t) == 0:
        raise ValueError("wait times are all equal; slope undefined")
    w = np.ones_like(t) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    X = np.column_stack([t, np.ones_like(t)])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    if sigma is None:
        resid = y - X @ beta
        dof = len(t) - 2
        cov = cov * (float(resid @ resid) / dof if dof > 0 else 0.0)
    return LinearFit(float(beta[0]), float(beta[1]), float(math.sqrt(cov[0, 0])),
                     float(math.sqrt(cov[1, 1])))


def electric_field_noise(n_dot, omega, mass=const.BE9_MASS, charge=const.E_CHARGE):
    """Electric-field noise spectral density 4 hbar m w n_dot / q^2 (V^2 m^-2 Hz^-1)."""
    if n_dot < 0 or omega <= 0:
        raise ValueError("heating rate must be >= 0 and frequency > 0")
    return 4 * HBAR * mass * omega * n_dot / charge**2
