"""Transport waveforms: per-knot voltage solutions along a smooth null path, and raster schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import interpolate

from . import constants as const
from . import dynamics as dyn
from . import geometry as geo
from . import modes as modes_mod

UM = 1e-6
NULL_TRACKING_TOL = 0.5 * UM


class TransportError(RuntimeError):
    pass


def profile(u, kind="sin2"):
    """Fraction of the move completed at normalized time u in [0, 1]."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    if kind == "sin2":
        return np.sin(0.5 * np.pi * u) ** 2
    if kind in ("min-jerk", "minjerk"):
        return u**3 * (10 - 15 * u + 6 * u**2)
    if kind == "linear":
        return u
    raise ValueError(f"unknown transport profile {kind!r}")


@dataclass
class TransportWaveform:
    times: np.ndarray          # (K,)
    voltages: np.ndarray       # (K, n_electrodes)
    labels: list
    path: np.ndarray           # (K, 3) intended null positions
    rule: str = "cubic"        # cubic | linear | step

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.voltages = np.atleast_2d(np.asarray(self.voltages, dtype=float))
        self.path = np.atleast_2d(np.asarray(self.path, dtype=float))
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("knot times must be strictly increasing")
        if self.voltages.shape != (len(self.times), len(self.labels)):
            raise ValueError("voltage table does not match knots x electrodes")
        if self.rule not in ("cubic", "linear", "step"):
            raise ValueError(f"unknown interpolation rule {self.rule!r}")
        self._interp = None

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def voltages_at(self, t):
        """Dense voltages at time(s) t; held constant outside the knot range."""
        t = np.clip(np.asarray(t, dtype=float), self.times[0], self.times[-1])
        if len(self.times) == 1:
            return np.broadcast_to(self.voltages[0], t.shape + self.voltages.shape[1:]).copy()
        if self.rule == "step":
            idx = np.searchsorted(self.times, t, side="right") - 1
            return self.voltages[idx]
        if self._interp is None:
            if self.rule == "cubic" and len(self.times) >= 3:
                self._interp = interpolate.CubicSpline(self.times, self.voltages, axis=0,
                                                       bc_type="clamped")
            else:
                self._interp = interpolate.interp1d(self.times, self.voltages, axis=0)
        return self._interp(t)

    def to_text(self):
        lines = [f"# interpolation: {self.rule}",
                 "# t_s " + " ".join(self.labels) + "  | null_x_um null_y_um null_z_um"]
        for t, v, p in zip(self.times, self.voltages, self.path):
            lines.append(f"{t:.9e} " + " ".join(f"{x:.9f}" for x in v) + " | "
                         + " ".join(f"{x / UM:.6f}" for x in p))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rule = "cubic"
        labels = None
        times, volts, path = [], [], []
        for raw in text.splitlines():
            if raw.startswith("# interpolation:"):
                rule = raw.split(":", 1)[1].strip()
                continue
            if raw.startswith("# t_s"):
                labels = raw[5:].split("|")[0].split()
                continue
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            left, right = line.split("|")
            vals = [float(x) for x in left.split()]
            times.append(vals[0])
            volts.append(vals[1:])
            path.append([float(x) * UM for x in right.split()])
        if labels is None:
            raise ValueError("waveform file lacks the '# t_s' header")
        return cls(np.array(times), np.array(volts), labels, np.array(path), rule)

    def save(self, path):
        Path(path).write_text(self.to_text())


def make_transport_waveform(geom, start, end, duration, profile_kind="sin2", knots=61,
                            omega_z=const.TWO_PI * 2.5e6, hessian=None, v_max=20.0,
                            mass=const.BE9_MASS, charge=const.E_CHARGE, rule="cubic", check=True):
    """Solve voltages at each knot of a smooth null path from ``start`` to ``end``."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if hessian is None:
        hessian = geo.symmetric_target_hessian(omega_z, mass, charge)
    times = np.linspace(0.0, duration, knots) if duration > 0 else np.array([0.0])
    frac = profile(times / duration, profile_kind) if duration > 0 else np.array([0.0])
    path = start + frac[:, None] * (end - start)
    volts = []
    for k, p in enumerate(path):
        try:
            res = geo.solve_voltages(geom, p, hessian, v_max=v_max)
        except geo.InfeasibleBoundsError as exc:
            raise TransportError(f"knot {k} (t = {times[k]:.3e} s) infeasible: {exc}") from exc
        volts.append(geom.vector(res.voltages))
    wf = TransportWaveform(times, np.array(volts), geom.labels, path, rule)
    if check:
        check_null_tracking(wf, geom)
    return wf


def check_null_tracking(wf, geom, tol=NULL_TRACKING_TOL):
    for k, (v, p) in enumerate(zip(wf.voltages, wf.path)):
        null = geo.find_null(geom, dict(zip(wf.labels, v)), p)
        err = np.linalg.norm(null - p)
        if err > tol:
            raise TransportError(f"knot {k}: null {err / UM:.3f} um from the intended path")


def displaced_oscillator_quanta(displacement, omega, mass=const.BE9_MASS):
    """Quanta gained by a sudden displacement of a harmonic well: m w^2 d^2 / (2 hbar w)."""
    return 0.5 * mass * omega**2 * displacement**2 / (const.HBAR * omega)


@dataclass
class TransportGain:
    plus: float
    minus: float
    axial: float
    final_null: np.ndarray
    modes: modes_mod.ModeSet

    def as_dict(self):
        return {"cyclotron": self.plus, "magnetron": self.minus, "axial": self.axial}


def transport_energy_gain(wf: TransportWaveform, geom, trap: modes_mod.TrapParams, extra_time=None,
                          dt=None, initial=None):
    """Integrate an ion through the waveform and return the motional quanta gained per mode.

    The ion starts at rest at the first knot's null unless ``initial`` is
    given; actions are evaluated about the final null with the final
    curvature's mode frequencies.
    """
    v0 = dict(zip(wf.labels, wf.voltages[0]))
    v1 = dict(zip(wf.labels, wf.voltages[-1]))
    null0 = geo.find_null(geom, v0, wf.path[0])
    null1 = geo.find_null(geom, v1, wf.path[-1])
    fs = geo.total_field(geom, v1, null1)
    wz = modes_mod.axial_frequency_from_curvature(fs.hessian[2, 2], trap.mass, trap.charge)
    ms = modes_mod.mode_set(trap, wz)
    if dt is None:
        dt = 2 * math.pi / (40 * ms.omega_plus)
    if extra_time is None:
        extra_time = 20 * 2 * math.pi / ms.omega_minus
    t0 = float(wf.times[0])
    total = wf.duration + extra_time
    n = int(round(total / dt)) + 2
    grid = wf.voltages_at(t0 + dt * np.arange(n))

    def dc(t):
        return grid[min(int(round((t - t0) / dt)), n - 1)]

    fields = dyn.GeometryField(geom, dc, trap.B)
    state = initial if initial is not None else dyn.IonState.at_rest(null0, t0)
    traj = dyn.integrate(state, fields, dt, total, trap.mass, trap.charge, sample_every=1000)
    amps = dyn.mode_actions(traj.final, ms, trap.mass, null1)
    qp, qm, qz = amps.quanta()
    return TransportGain(qp, qm, qz, null1, ms)


# -- raster ----------------------------------------------------------------

@dataclass
class RasterSchedule:
    waypoints: np.ndarray      # (N, 3) absolute positions
    home: np.ndarray
    transport_time: float
    dwell: float
    repeats: int

    @property
    def cycle_time(self):
        return len(self.waypoints) * (2 * self.transport_time + self.dwell)

    def rows(self):
        """(index, x_um, z_um, t_depart, t_arrive, t_dwell_end, t_home) per waypoint."""
        out = []
        t = 0.0
        for i, p in enumerate(self.waypoints):
            arrive = t + self.transport_time
            leave = arrive + self.dwell
            back = leave + self.transport_time
            out.append((i, (p[0] - self.home[0]) / UM, (p[2] - self.home[2]) / UM, t, arrive, leave, back))
            t = back
        return out

    def to_csv(self):
        head = [f"# repeats: {self.repeats}", f"# dwell_s: {self.dwell:.6e}",
                f"# transport_s: {self.transport_time:.6e}", f"# waypoints: {len(self.waypoints)}",
                "index,x_um,z_um,t_depart_s,t_arrive_s,t_dwell_end_s,t_home_s"]
        body = [f"{i},{x:.3f},{z:.3f},{a:.6e},{b:.6e},{c:.6e},{d:.6e}"
                for i, x, z, a, b, c, d in self.rows()]
        return "\n".join(head + body) + "\n"

    def extent(self):
        rel = self.waypoints - self.home
        return float(np.ptp(rel[:, 0])), float(np.ptp(rel[:, 2]))


def load_waypoints(path=None):
    """Waypoints file: one ``x_um z_um`` pair per line, relative to the home position."""
    if path is None:
        text = (resources.files("penningtrap") / "data" / "raster_waypoints.txt").read_text()
    else:
        text = Path(path).read_text()
    pts = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            x, z = (float(v) for v in line.replace(",", " ").split())
            pts.append((x, z))
    return np.array(pts) * UM


def raster_schedule(waypoints_xz, home=geo.REFERENCE_NULL, transport_time=4e-3, dwell=500e-6,
                    repeats=172):
    home = np.asarray(home, dtype=float)
    wp = np.array([home + np.array([x, 0.0, z]) for x, z in waypoints_xz])
    return RasterSchedule(wp, home, transport_time, dwell, repeats)


def validate_raster(schedule: RasterSchedule, geom=None, n_points=58, extent_um=(40.0, 75.0),
                    extent_tol_um=1.0, dwell=500e-6, omega_z=const.TWO_PI * 2.5e6, v_max=20.0):
    """Check the schedule's structure and that every waypoint is reachable; returns a list of problems."""
    problems = []
    if len(schedule.waypoints) != n_points:
        problems.append(f"expected {n_points} waypoints, found {len(schedule.waypoints)}")
    if abs(schedule.dwell - dwell) > 1e-12:
        problems.append(f"dwell {schedule.dwell:.3e} s differs from {dwell:.3e} s")
    ex, ez = schedule.extent()
    if abs(ex / UM - extent_um[0]) > extent_tol_um or abs(ez / UM - extent_um[1]) > extent_tol_um:
        problems.append(f"region {ex / UM:.1f} x {ez / UM:.1f} um, expected {extent_um[0]} x {extent_um[1]} um")
    if geom is not None:
        hess = geo.symmetric_target_hessian(omega_z)
        for i, p in enumerate(schedule.waypoints):
            try:
                geo.solve_voltages(geom, p, hess, v_max=v_max)
            except geo.InfeasibleBoundsError as exc:
                problems.append(f"waypoint {i} unreachable: {exc}")
    return problems
