"""Classical single-ion dynamics in static E, uniform B and an axialization drive.

The integrator is a symmetric splitting

    half magnetic rotation, half electric kick, drift, half kick, half rotation

with the magnetic rotation applied exactly (Rodrigues formula with angle
omega_c * dt), so pure cyclotron motion is reproduced at exactly omega_c and
|v| is conserved to roundoff.  For quadratic potentials the quantity

    m |v|^2 / 2 + U(r) - m dt^2 |a|^2 / 8

is an exact invariant of the map (see ``shadow_energy``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import constants as const
from . import geometry as geo
from . import modes as modes_mod
from ._kernels import combined_gradient

HBAR = const.HBAR


class IntegrationError(RuntimeError):
    def __init__(self, msg, t, position, velocity):
        super().__init__(msg)
        self.t = t
        self.position = position
        self.velocity = velocity


@dataclass
class IonState:
    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("ion state must be finite")

    @classmethod
    def at_rest(cls, position, time=0.0):
        return cls(np.asarray(position, dtype=float), np.zeros(3), time)


@dataclass
class Trajectory:
    t: np.ndarray
    r: np.ndarray
    v: np.ndarray

    @property
    def final(self):
        return IonState(self.r[-1].copy(), self.v[-1].copy(), float(self.t[-1]))

    def to_csv(self, path=None):
        header = "t,x,y,z,vx,vy,vz"
        rows = np.column_stack([self.t, self.r, self.v])
        text = header + "\n" + "\n".join(",".join(f"{x:.12e}" for x in row) for row in rows) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# -- field models ---------------------------------------------------------

class QuadrupoleField:
    """Ideal radially symmetric trap ``V = m wz^2 (z^2 - (x^2+y^2)/2) / (2e)`` plus uniform B along z.

    ``uniform_E`` adds a constant field (V/m); the potential stays quadratic.
    """

    def __init__(self, omega_z, B=3.0, center=(0.0, 0.0, 0.0), mass=const.BE9_MASS,
                 charge=const.E_CHARGE, uniform_E=(0.0, 0.0, 0.0)):
        self.omega_z = omega_z
        self.center = np.asarray(center, dtype=float)
        self.mass = mass
        self.charge = charge
        self.curv = modes_mod.quadrupole_curvature(omega_z, mass, charge)
        self.hessian = np.diag([-self.curv / 2, -self.curv / 2, self.curv])
        self.E0 = np.asarray(uniform_E, dtype=float)
        self.B = np.array([0.0, 0.0, B])

    def __call__(self, t, r):
        d = r - self.center
        return self.E0 - self.hessian @ d, self.B

    def potential(self, r):
        d = np.asarray(r) - self.center
        return 0.5 * np.einsum("...i,ij,...j->...", d, self.hessian, d) - d @ self.E0


class UniformField:
    def __init__(self, E=(0.0, 0.0, 0.0), B=(0.0, 0.0, 0.0)):
        self.E = np.asarray(E, dtype=float)
        self.B = np.asarray(B, dtype=float)

    def __call__(self, t, r):
        return self.E, self.B

    def potential(self, r):
        return -np.asarray(r) @ self.E


@dataclass
class AxializationDrive:
    """Rf voltage ``amplitude * cos(frequency t + phase)`` times the electrode pattern weights."""

    amplitude: float
    frequency: float
    phase: float = 0.0
    pattern: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("drive amplitude must be >= 0")
        if isinstance(self.pattern, geo.VoltageSet):
            self.pattern = dict(self.pattern.values)

    def validate(self, geom):
        rf = set(geom.rf_labels)
        bad = [l for l, w in self.pattern.items() if w != 0 and l not in rf]
        if bad:
            raise ValueError(f"axialization pattern uses non-rf electrodes: {bad}")


class GeometryField:
    """Exact field of an electrode layout with static, scheduled and rf voltages, plus uniform B.

    ``dc`` is a VoltageSet/mapping or a callable ``t -> dense voltage vector``.
    """

    def __init__(self, geom, dc, B=3.0, drive: AxializationDrive | None = None):
        self.geom = geom
        self._corners = np.ascontiguousarray(geom._corners)
        self._work = np.empty((len(geom), 3))
        if callable(dc):
            self._dc_fn = dc
            self._dc = None
        else:
            self._dc_fn = None
            self._dc = geom.vector(dc)
        self.drive = drive
        if drive is not None:
            drive.validate(geom)
            self._rf = geom.vector(drive.pattern)
        self.B = np.array([0.0, 0.0, B])

    def weights(self, t):
        w = self._dc_fn(t) if self._dc_fn is not None else self._dc
        if self.drive is not None and self.drive.amplitude:
            w = w + (self.drive.amplitude * math.cos(self.drive.frequency * t + self.drive.phase)) * self._rf
        return w

    def __call__(self, t, r):
        gx, gy, gz = combined_gradient(self._corners, self.weights(t), r[0], r[1], r[2], self._work)
        return np.array([-gx, -gy, -gz]), self.B


# -- integrator -------------------------------------------------------------

def _rotate(v, k, c, s):
    """Rodrigues rotation of v about unit k with cos c and sin s."""
    kx, ky, kz = k
    vx, vy, vz = v
    dot = kx * vx + ky * vy + kz * vz
    cx = ky * vz - kz * vy
    cy = kz * vx - kx * vz
    cz = kx * vy - ky * vx
    one_c = 1.0 - c
    return (vx * c + cx * s + kx * dot * one_c,
            vy * c + cy * s + ky * dot * one_c,
            vz * c + cz * s + kz * dot * one_c)


class _Stepper:
    def __init__(self, fields, dt, q_over_m):
        self.fields = fields
        self.dt = dt
        self.qm = q_over_m
        self._rot_cache = None

    def _rotation(self, B):
        key = (B[0], B[1], B[2])
        if self._rot_cache is not None and self._rot_cache[0] == key:
            return self._rot_cache[1]
        # dv/dt = Omega x v with Omega = -(q/m) B
        om = (-self.qm * B[0], -self.qm * B[1], -self.qm * B[2])
        w = math.sqrt(om[0] ** 2 + om[1] ** 2 + om[2] ** 2)
        if w == 0:
            rot = None
        else:
            half = 0.5 * w * self.dt
            rot = ((om[0] / w, om[1] / w, om[2] / w), math.cos(half), math.sin(half))
        self._rot_cache = (key, rot)
        return rot

    def accel(self, t, r):
        E, B = self.fields(t, np.asarray(r))
        qm = self.qm
        return (qm * E[0], qm * E[1], qm * E[2]), B

    def step(self, t, r, v, a, B):
        """Advance (r, v) from t to t + dt; ``a``, ``B`` are evaluated at (t, r)."""
        dt = self.dt
        h = 0.5 * dt
        rot = self._rotation(B)
        if rot is not None:
            v = _rotate(v, *rot)
        v = (v[0] + a[0] * h, v[1] + a[1] * h, v[2] + a[2] * h)
        r = (r[0] + v[0] * dt, r[1] + v[1] * dt, r[2] + v[2] * dt)
        a, B = self.accel(t + dt, r)
        v = (v[0] + a[0] * h, v[1] + a[1] * h, v[2] + a[2] * h)
        rot = self._rotation(B)
        if rot is not None:
            v = _rotate(v, *rot)
        return r, v, a, B


def max_stable_dt(fields, state, mass=const.BE9_MASS, charge=const.E_CHARGE):
    """Largest step resolving the fastest radial mode with 20 steps per period."""
    _, B = fields(state.time, state.position)
    wc = abs(charge) * np.linalg.norm(B) / mass
    return math.inf if wc == 0 else 2 * math.pi / (20 * wc)


def integrate(state: IonState, fields, dt, duration, mass=const.BE9_MASS, charge=const.E_CHARGE,
              sample_every=1, check_dt=True, on_step=None):
    """Integrate the Lorentz-force equation of motion.

    ``fields(t, r) -> (E, B)``.  Returns a Trajectory sampled every
    ``sample_every`` steps (first and last states always included).
    ``on_step(t, r, v) -> v`` may modify the velocity after every step.
    """
    if dt <= 0 or duration < 0:
        raise ValueError("dt must be positive and duration non-negative")
    if check_dt and dt > max_stable_dt(fields, state, mass, charge) * (1 + 1e-12):
        raise ValueError("dt does not resolve the fastest mode (need dt <= 2 pi / (20 omega_c))")
    n_steps = int(round(duration / dt))
    stepper = _Stepper(fields, dt, charge / mass)
    t0 = state.time
    r = tuple(state.position)
    v = tuple(state.velocity)
    a, B = stepper.accel(t0, r)

    n_out = n_steps // sample_every + 1 + (1 if n_steps % sample_every else 0)
    ts = np.empty(n_out)
    rs = np.empty((n_out, 3))
    vs = np.empty((n_out, 3))
    ts[0], rs[0], vs[0] = t0, r, v
    k = 1
    for n in range(1, n_steps + 1):
        t = t0 + (n - 1) * dt
        r, v, a, B = stepper.step(t, r, v, a, B)
        if on_step is not None:
            v = on_step(t + dt, r, v)
        if n % sample_every == 0 or n == n_steps:
            if not (math.isfinite(r[0] + r[1] + r[2] + v[0] + v[1] + v[2])):
                raise IntegrationError(f"non-finite state at t = {t + dt:.6g} s", t + dt, r, v)
            ts[k], rs[k], vs[k] = t0 + n * dt, r, v
            k += 1
    if not np.all(np.isfinite(rs[:k])):
        raise IntegrationError("trajectory diverged", ts[k - 1], rs[k - 1], vs[k - 1])
    return Trajectory(ts[:k], rs[:k], vs[:k])


def shadow_energy(traj: Trajectory, fields, dt, mass=const.BE9_MASS, charge=const.E_CHARGE):
    """Discrete energy invariant of the integrator for quadratic potentials (J)."""
    pot = np.array([fields.potential(r) for r in traj.r])
    acc = np.array([charge / mass * fields(t, r)[0] for t, r in zip(traj.t, traj.r)])
    return (0.5 * mass * np.sum(traj.v**2, axis=1) + charge * pot
            - mass * dt**2 / 8 * np.sum(acc**2, axis=1))


def kinetic_plus_potential(traj: Trajectory, fields, mass=const.BE9_MASS, charge=const.E_CHARGE):
    pot = np.array([fields.potential(r) for r in traj.r])
    return 0.5 * mass * np.sum(traj.v**2, axis=1) + charge * pot


# -- mode decomposition -------------------------------------------------------

def _mode_arrays(t, r, v, modes, center):
    d = r - np.asarray(center)
    wp, wm, wz = modes.omega_plus, modes.omega_minus, modes.omega_z
    u = d[..., 0] + 1j * d[..., 1]
    du = v[..., 0] + 1j * v[..., 1]
    dw = wp - wm
    a_p = 1j * (du + 1j * wm * u) / dw
    a_m = -1j * (du + 1j * wp * u) / dw
    az2 = d[..., 2] ** 2 + (v[..., 2] / wz) ** 2
    return a_p, a_m, az2, d, v


def mode_actions(state, modes: modes_mod.ModeSet, mass=const.BE9_MASS, center=(0.0, 0.0, 0.0)):
    """Actions and t = 0 phases of the three eigenmodes for a state near ``center``."""
    if not modes.omega_plus > modes.omega_minus > 0 or modes.omega_z <= 0:
        raise modes_mod.StabilityError("mode decomposition needs a stable mode set")
    t = state.time
    a_p, a_m, az2, d, v = _mode_arrays(t, state.position, state.velocity, modes, center)
    dw = modes.omega_plus - modes.omega_minus
    Jp = 0.5 * mass * dw * abs(a_p) ** 2
    Jm = 0.5 * mass * dw * abs(a_m) ** 2
    Jz = 0.5 * mass * modes.omega_z * az2
    phi_p = (-np.angle(a_p) - modes.omega_plus * t) % (2 * math.pi)
    phi_m = (-np.angle(a_m) - modes.omega_minus * t) % (2 * math.pi)
    # z = A cos(wz t + phi), vz = -A wz sin(wz t + phi)
    phi_z = (math.atan2(-v[2] / modes.omega_z, d[2]) - modes.omega_z * t) % (2 * math.pi)
    return modes_mod.ModeAmplitudes(float(Jp), float(Jm), float(Jz), float(phi_p), float(phi_m),
                                    float(phi_z))


def action_series(traj: Trajectory, modes, mass=const.BE9_MASS, center=(0.0, 0.0, 0.0)):
    """(J+, J-, Jz) arrays along a trajectory."""
    a_p, a_m, az2, _, _ = _mode_arrays(traj.t, traj.r, traj.v, modes, center)
    dw = modes.omega_plus - modes.omega_minus
    return (0.5 * mass * dw * np.abs(a_p) ** 2, 0.5 * mass * dw * np.abs(a_m) ** 2,
            0.5 * mass * modes.omega_z * az2)


def state_from_amplitudes(modes, amps, mass=const.BE9_MASS, center=(0.0, 0.0, 0.0), t=0.0):
    r, v = modes_mod.epicycle_trajectory(modes, amps, t, mass, center, with_velocity=True)
    return IonState(r, v, t)


def thermal_amplitudes(modes, nbar, rng):
    """Random actions from thermal (exponential) distributions with mean ``nbar`` quanta per mode."""
    nbp, nbm, nbz = nbar
    J = rng.exponential(1.0, 3) * np.array([nbp, nbm, nbz]) * HBAR
    ph = rng.uniform(0, 2 * math.pi, 3)
    return modes_mod.ModeAmplitudes(*J, *ph)


# -- axialization -----------------------------------------------------------

@dataclass
class ExchangeResult:
    trajectory: Trajectory
    J_plus: np.ndarray
    J_minus: np.ndarray
    J_z: np.ndarray

    @property
    def t(self):
        return self.trajectory.t

    def plus_fraction(self):
        return self.J_plus / (self.J_plus + self.J_minus)

    def max_transfer(self):
        """Largest fractional change of the initially occupied radial mode."""
        f = self.plus_fraction()
        return float(np.max(np.abs(f - f[0])))

    def swap_time(self):
        """Time of the first full exchange, from a sinusoidal fit of the radial fraction."""
        from scipy import optimize

        t = self.t - self.t[0]
        f = self.plus_fraction()
        start = f[0]
        target = 1.0 - start
        # initial guess: first crossing of the midpoint
        mid = 0.5 * (start + target)
        idx = np.nonzero((f - mid) * (start - mid) < 0)[0]
        if len(idx) == 0:
            raise RuntimeError("no exchange observed within the simulated time")
        guess = 2 * t[idx[0]]

        def model(tt, ts, amp):
            return start + (target - start) * amp * np.sin(0.5 * np.pi * tt / ts) ** 2

        (ts, amp), _ = optimize.curve_fit(model, t, f, p0=[guess, 1.0])
        return float(ts)


def axialization_exchange(state: IonState, geom, dc, drive: AxializationDrive, duration,
                          trap: modes_mod.TrapParams, modes: modes_mod.ModeSet, center, dt=None,
                          sample_every=10):
    """Integrate with the rf drive on and return the mode-action time series."""
    fields = GeometryField(geom, dc, trap.B, drive)
    if dt is None:
        dt = 2 * math.pi / (40 * modes.omega_plus)
    traj = integrate(state, fields, dt, duration, trap.mass, trap.charge, sample_every=sample_every)
    Jp, Jm, Jz = action_series(traj, modes, trap.mass, center)
    return ExchangeResult(traj, Jp, Jm, Jz)


def coupling_rate(swap_time):
    """Resonant exchange rate g (rad/s) with full swap at g t = pi."""
    return math.pi / swap_time


def detuned_max_transfer(g, detuning):
    """Peak transfer of the two-mode exchange detuned by ``detuning`` (rad/s)."""
    return g**2 / (g**2 + detuning**2)


# -- Doppler cooling -----------------------------------------------------------

@dataclass
class CoolingLaser:
    direction: tuple
    detuning: float
    saturation: float = 1.0
    wavelength: float = const.COOLING_WAVELENGTH
    linewidth: float = const.BE9_LINEWIDTH

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(d) - 1) > 1e-9:
            raise ValueError("laser direction must be a unit vector")
        if self.saturation < 0:
            raise ValueError("saturation parameter must be >= 0")
        self.direction = tuple(d)

    @property
    def k(self):
        return 2 * math.pi / self.wavelength

    def scattering_rate(self, v):
        kv = self.k * float(np.dot(self.direction, v))
        d = self.detuning - kv
        g = self.linewidth
        return 0.5 * g * self.saturation / (1 + self.saturation + (2 * d / g) ** 2)

    @classmethod
    def detection_beam(cls, detuning=None, saturation=0.5):
        """Beam in the x-z plane at 45 degrees to B, red detuned by half a linewidth by default."""
        s = 1 / math.sqrt(2)
        if detuning is None:
            detuning = -0.5 * const.BE9_LINEWIDTH
        return cls((s, 0.0, s), detuning, saturation)


@dataclass
class CoolingResult:
    t: np.ndarray
    # (repeats, samples) arrays of actions in J s
    J_plus: np.ndarray
    J_minus: np.ndarray
    J_z: np.ndarray
    photons: np.ndarray

    def mean_quanta(self):
        return (self.J_plus.mean(0) / HBAR, self.J_minus.mean(0) / HBAR, self.J_z.mean(0) / HBAR)

    def final_mean_quanta(self, window=0.2):
        """Mean quanta over the last ``window`` fraction of the run and over repeats."""
        n = max(1, int(len(self.t) * window))
        return tuple(float(q[-n:].mean()) for q in self.mean_quanta())


class _Scatterer:
    """Stochastic absorption/emission kicks; each absorption adds one recoil along k and one isotropic."""

    def __init__(self, laser: CoolingLaser, dt, mass, rng, block=4096):
        self.laser = laser
        self.dt = dt
        self.rng = rng
        self.recoil = HBAR * laser.k / mass
        self.dir = laser.direction
        self.block = block
        self._refill()
        self.count = 0
        g = laser.linewidth
        self._c0 = 0.5 * g * laser.saturation * dt
        self._c1 = 1 + laser.saturation
        self._kk = laser.k
        self._inv = 2.0 / g

    def _refill(self):
        self._u = self.rng.random(self.block)
        self._iso = self.rng.normal(size=(self.block, 3))
        self._i = 0

    def __call__(self, t, r, v):
        if self._i >= self.block:
            self._refill()
        u = self._u[self._i]
        dx, dy, dz = self.dir
        kv = self._kk * (dx * v[0] + dy * v[1] + dz * v[2])
        det = (self.laser.detuning - kv) * self._inv
        p = self._c0 / (self._c1 + det * det)
        if u < p:
            n = self._iso[self._i]
            norm = math.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2)
            rc = self.recoil
            v = (v[0] + rc * (dx + n[0] / norm), v[1] + rc * (dy + n[1] / norm),
                 v[2] + rc * (dz + n[2] / norm))
            self.count += 1
        self._i += 1
        return v


def doppler_cool(state_or_amps, laser: CoolingLaser | None, geom, dc, trap, modes, center,
                 duration, drive: AxializationDrive | None = None, seed=0, repeats=4, dt=None,
                 sample_every=50, initial_nbar=None):
    """Monte-Carlo Doppler cooling with optional axialization.

    Each repeat uses an independent RNG stream spawned from ``seed``.  If
    ``initial_nbar`` is given, each repeat draws thermal initial actions
    (the first argument then only fixes the start time); otherwise every
    repeat starts from the given IonState.  ``laser=None`` switches the
    light off.
    """
    fields = GeometryField(geom, dc, trap.B, drive)
    if dt is None:
        dt = 2 * math.pi / (40 * modes.omega_plus)
    streams = np.random.SeedSequence(seed).spawn(repeats)
    Js = []
    photons = []
    t_out = None
    for ss in streams:
        rng = np.random.default_rng(ss)
        if initial_nbar is not None:
            amps = thermal_amplitudes(modes, initial_nbar, rng)
            st = state_from_amplitudes(modes, amps, trap.mass, center)
        else:
            st = state_or_amps
        kick = _Scatterer(laser, dt, trap.mass, rng) if laser is not None else None
        traj = integrate(st, fields, dt, duration, trap.mass, trap.charge, sample_every=sample_every,
                         on_step=kick)
        Js.append(action_series(traj, modes, trap.mass, center))
        photons.append(kick.count if kick is not None else 0)
        t_out = traj.t
    Js = np.array(Js)
    return CoolingResult(t_out, Js[:, 0], Js[:, 1], Js[:, 2], np.array(photons))


# -- spectral analysis ---------------------------------------------------------

def spectral_peaks(t, signal, n_peaks):
    """Angular frequencies of the ``n_peaks`` strongest spectral lines, sorted descending.

    Coarse location from a Hann-windowed FFT, refined by maximizing the
    windowed discrete-time Fourier transform between neighbouring bins.
    """
    from scipy import optimize, signal as sps

    t = np.asarray(t, dtype=float)
    x = np.asarray(signal, dtype=float)
    x = x - x.mean()
    dt = t[1] - t[0]
    w = np.hanning(len(x))
    xw = x * w
    spec = np.abs(np.fft.rfft(xw))
    freqs = np.fft.rfftfreq(len(x), dt) * 2 * math.pi
    idx, _ = sps.find_peaks(spec)
    idx = idx[np.argsort(spec[idx])[::-1][:n_peaks]]
    tt = t - t[0]
    out = []
    dw = freqs[1] - freqs[0]
    for i in idx:
        def neg(om):
            return -abs(np.sum(xw * np.exp(-1j * om * tt)))
        res = optimize.minimize_scalar(neg, bounds=(freqs[i] - dw, freqs[i] + dw), method="bounded",
                                       options={"xatol": 1e-9 * freqs[i]})
        out.append(float(res.x))
    return sorted(out, reverse=True)
