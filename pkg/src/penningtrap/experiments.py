"""Experiment runners behind the command-line tool.

Each runner takes a validated Scenario and returns a RunOutput: named text
files (CSV or structured text) plus a short human-readable summary.  Output
bodies contain no timestamps so identical scenarios give identical bytes.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import coherence as co
from . import constants as const
from . import dynamics as dyn
from . import electronics as el
from . import geometry as geo
from . import modes as modes_mod
from . import sideband as sb
from . import transport as tr
from .scenario import ScenarioError

UM = 1e-6


@dataclass
class RunOutput:
    files: dict = field(default_factory=dict)      # name -> text
    summary: list = field(default_factory=list)


def _csv(header, rows, fmt="{:.9e}"):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt.format(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def trap_of(sc):
    return modes_mod.TrapParams(sc["B"], const.species_mass(sc["species"]))


def load_geometry(sc, ref):
    if ref == "default":
        return geo.default_geometry()
    path = sc.resolve(ref)
    if not path.exists():
        raise ScenarioError(f"geometry file not found: {path}")
    return geo.ElectrodeGeometry.load(path)


@dataclass
class TrapSetup:
    geom: geo.ElectrodeGeometry
    dc: geo.VoltageSet
    center: np.ndarray
    trap: modes_mod.TrapParams
    modes: modes_mod.ModeSet


def reference_setup(trap, omega_z, geom=None, null=geo.REFERENCE_NULL, v_max=20.0):
    """Default layout with voltages for ``omega_z`` at the reference null and the achieved mode set."""
    geom = geo.default_geometry() if geom is None else geom
    hess = geo.symmetric_target_hessian(omega_z, trap.mass, trap.charge)
    res = geo.solve_voltages(geom, null, hess, v_max=v_max)
    center = geo.find_null(geom, res.voltages, null)
    fs = geo.total_field(geom, res.voltages, center)
    wz = modes_mod.axial_frequency_from_curvature(fs.hessian[2, 2], trap.mass, trap.charge)
    return TrapSetup(geom, res.voltages, center, trap, modes_mod.mode_set(trap, wz))


# -- runners ------------------------------------------------------------------

def run_modes(sc):
    trap = trap_of(sc)
    ms = modes_mod.mode_set(trap, sc["omega_z"])
    rows = [("omega_c", ms.omega_c), ("omega_plus", ms.omega_plus), ("omega_minus", ms.omega_minus),
            ("omega_z", ms.omega_z), ("stability_limit", modes_mod.stability_limit(ms.omega_c))]
    text = _csv(["quantity", "rad_per_s", "hz"], [(k, v, v / const.TWO_PI) for k, v in rows])
    summary = [f"{k:16s} 2pi x {v / const.TWO_PI / 1e6:.4f} MHz" for k, v in rows]
    return RunOutput({"modes.csv": text}, summary)


def run_solve(sc):
    trap = trap_of(sc)
    geom = load_geometry(sc, sc["geometry"])
    hess = geo.symmetric_target_hessian(sc["omega_z"], trap.mass, trap.charge)
    res = geo.solve_voltages(geom, sc["null"], hess, v_max=sc["v_max"], regularization=sc["regularization"],
                             trap=trap)
    ms = res.modes
    volts = _csv(["electrode", "volts"], [(l, res.voltages[l]) for l in geom.labels], "{:.9f}")
    summ = _csv(["quantity", "value"], [
        ("residual", res.residual), ("rank", res.rank), ("constraints", res.n_constraints),
        ("bounded", int(res.bounded)), ("omega_z_hz", ms.omega_z / const.TWO_PI),
        ("omega_plus_hz", ms.omega_plus / const.TWO_PI), ("omega_minus_hz", ms.omega_minus / const.TWO_PI)])
    out = RunOutput({"voltages.csv": volts, "voltages.yaml": res.voltages.to_yaml(), "solve.csv": summ})
    out.summary = [f"residual {res.residual:.3e}, rank {res.rank}/{res.n_constraints}, "
                   f"max |V| {max(abs(v) for v in res.voltages.values.values()):.3f} V",
                   f"w+ = 2pi x {ms.omega_plus / const.TWO_PI / 1e6:.4f} MHz, "
                   f"w- = 2pi x {ms.omega_minus / const.TWO_PI / 1e6:.4f} MHz"]
    return out


def run_null(sc):
    trap = trap_of(sc)
    geom = load_geometry(sc, sc["geometry"])
    if sc["voltages"] == "reference":
        v = reference_setup(trap, sc["omega_z"], geom).dc
    else:
        path = sc.resolve(sc["voltages"])
        if not path.exists():
            raise ScenarioError(f"voltage file not found: {path}")
        v = geo.VoltageSet.load(path)
    dc_null = geo.find_null(geom, v, sc["guess"])
    rf_h = geo.rf_null_line(geom, geo.outer_rf_pattern(geom))
    text = _csv(["quantity", "um"], [("dc_null_x", dc_null[0] / UM), ("dc_null_y", dc_null[1] / UM),
                                     ("dc_null_z", dc_null[2] / UM), ("rf_null_height", rf_h / UM),
                                     ("dc_rf_offset", abs(dc_null[1] - rf_h) / UM)], "{:.6f}")
    return RunOutput({"null.csv": text}, [f"dc null at ({', '.join(f'{x / UM:.3f}' for x in dc_null)}) um",
                                           f"rf null height {rf_h / UM:.3f} um"])


def run_cool_doppler(sc):
    trap = trap_of(sc)
    s = reference_setup(trap, sc["omega_z"])
    laser = dyn.CoolingLaser.detection_beam(sc["detuning"], sc["saturation"])
    drive = None
    if sc["axialization"]:
        drive = dyn.AxializationDrive(sc["drive_amplitude"], s.modes.omega_c, 0.0, geo.outer_rf_pattern(s.geom))
    res = dyn.doppler_cool(dyn.IonState.at_rest(s.center), laser, s.geom, s.dc, trap, s.modes, s.center,
                           sc["duration"], drive, seed=sc.seed, repeats=sc["repeats"],
                           initial_nbar=tuple(sc["initial_nbar"]))
    qp, qm, qz = res.mean_quanta()
    text = _csv(["t_s", "nbar_plus", "nbar_minus", "nbar_z"], zip(res.t, qp, qm, qz), "{:.6e}")
    fp, fm, fz = res.final_mean_quanta()
    return RunOutput({"doppler.csv": text},
                     [f"axialization {'on' if drive else 'off'}: start ({qp[0]:.1f}, {qm[0]:.1f}, {qz[0]:.1f}) "
                      f"-> end ({fp:.1f}, {fm:.1f}, {fz:.1f}) quanta (+, -, z)",
                      f"photons per repeat: {', '.join(str(int(p)) for p in res.photons)}"])


def sideband_parameters(sc, trap=None):
    trap = trap_of(sc) if trap is None else trap
    ms = modes_mod.mode_set(trap, sc["omega_z"])
    eta = sb.lamb_dicke(sb.raman_delta_k(), trap.mass, ms, sc["mode"])
    return eta, sc["rabi_frequency"]


def run_cool_sideband(sc):
    eta, om = sideband_parameters(sc)
    mode = sc["mode"]
    if sc["schedule"] == "default":
        sched = sb.default_schedule(eta, om, mode, total=sc["total_time"])
    else:
        path = sc.resolve(sc["schedule"])
        if not path.exists():
            raise ScenarioError(f"schedule file not found: {path}")
        sched = sb.CoolingSchedule.from_yaml(path.read_text())
    trace = sb.sideband_cool(sb.FockDistribution.thermal(sc["initial_nbar"]), sched, eta, om,
                             heating=sc["heating"], total_time=sc["total_time"], mode=mode)
    text = _csv(["t_s", "nbar"], zip(trace.times, trace.nbar))
    fock = _csv(["n", "p"], enumerate(trace.final.p))
    return RunOutput({"sideband.csv": text, "final_fock.csv": fock, "schedule.yaml": sched.to_yaml()},
                     [f"eta = {eta:.4f}; {len(sched.pulses)} pulses, {sched.total_time * 1e3:.2f} ms",
                      f"nbar {sc['initial_nbar']:.3f} -> {trace.final.nbar:.5f} after {sc['total_time'] * 1e3:.1f} ms"])


def _read_table(sc, ref, needed):
    path = sc.resolve(ref)
    if not path.exists():
        raise ScenarioError(f"input file not found: {path}")
    with path.open() as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        missing = [c for c in needed if c not in (reader.fieldnames or [])]
        if missing:
            raise ScenarioError(f"{path}: missing columns {', '.join(missing)}")
        rows = []
        for i, r in enumerate(reader, start=2):
            try:
                rows.append({k: float(v) for k, v in r.items() if v not in (None, "")})
            except ValueError:
                raise ScenarioError(f"{path}: line {i}: non-numeric value") from None
    return rows


def run_thermometry(sc):
    """Sideband-ratio n-bar; P columns are bright-state populations after each probe."""
    eta, om = sideband_parameters(sc)
    mode = sc["mode"]
    rows = []
    if sc["input"]:
        for r in _read_table(sc, sc["input"], ["t_wait_s", "P_red", "P_blue"]):
            n = sb.sideband_ratio_thermometry(1 - r["P_red"], 1 - r["P_blue"], mode)
            rows.append((r["t_wait_s"], r["P_red"], r["P_blue"], n, math.nan))
    else:
        for nbar in sc["nbar"]:
            pr, pb = sb.probe_thermal(nbar, eta, om, sc["probe_time"], mode)
            rows.append((0.0, 1 - pr, 1 - pb, sb.sideband_ratio_thermometry(pr, pb, mode), nbar))
    text = _csv(["t_wait_s", "P_red", "P_blue", "nbar", "nbar_true"], rows)
    return RunOutput({"thermometry.csv": text},
                     [f"P_red {r[1]:.4f}  P_blue {r[2]:.4f}  ->  nbar {r[3]:.5f}" for r in rows])


def run_heating(sc):
    trap = trap_of(sc)
    if sc["input"]:
        data = _read_table(sc, sc["input"], ["t_wait_s", "nbar"])
        t = np.array([r["t_wait_s"] for r in data])
        n = np.array([r["nbar"] for r in data])
        sig = np.array([r["sigma"] for r in data]) if all("sigma" in r for r in data) else None
    else:
        t = np.array(sc["waits"])
        rng = np.random.default_rng(sc.seed)
        sig = np.full(len(t), sc["noise"]) if sc["noise"] > 0 else None
        n = sc["initial_nbar"] + sc["rate"] * t
        if sig is not None:
            n = n + rng.normal(0.0, sc["noise"], len(t))
    fit = sb.heating_fit(t, n, sig)
    s_e = sb.electric_field_noise(max(fit.slope, 0.0), sc["omega_z"], trap.mass, trap.charge)
    series = _csv(["t_wait_s", "nbar", "sigma"], zip(t, n, sig if sig is not None else np.zeros(len(t))))
    res = _csv(["quantity", "value"], [("slope_per_s", fit.slope), ("slope_err_per_s", fit.slope_err),
                                       ("intercept", fit.intercept), ("intercept_err", fit.intercept_err),
                                       ("S_E_V2_m-2_Hz-1", s_e)])
    return RunOutput({"heating_series.csv": series, "heating_fit.csv": res},
                     [f"heating rate {fit.slope:.5f} +- {fit.slope_err:.5f} /s",
                      f"S_E = {s_e:.3e} V^2 m^-2 Hz^-1"])


def run_coherence(sc):
    t = np.linspace(sc["t_max"] / sc["points"], sc["t_max"], sc["points"])
    qs = co.QuasiStaticNoise.from_ramsey_time(sc["ramsey_time"])
    cols = {"ramsey_quasistatic": co.coherence_decay(qs, "ramsey", t).contrast}
    files = {}
    summary = [f"quasi-static sigma = 2pi x {qs.sigma / const.TWO_PI:.2f} Hz "
               f"(Ramsey 1/e at {sc['ramsey_time'] * 1e3:.2f} ms)"]
    if sc["fit_spectrum"]:
        fit = co.fit_spectrum()
        files["spectrum_fit.txt"] = fit.report()
        summary.append(f"fitted spectrum: log-time rms residual {fit.log_residual_rms:.3f}")
        times = []
        for name in sc["sequences"]:
            seq = co.sequence(name)
            cols[name] = co.coherence_decay(fit.noise, seq, t).contrast
            tau = co.one_over_e_time(fit.noise, seq, 1e-5, 1.0)
            times.append((name, tau * 1e3))
            summary.append(f"{name:10s} 1/e time {tau * 1e3:.3f} ms")
        files["coherence_times.csv"] = _csv(["sequence", "tau_ms"], times, "{:.6f}")
    names = list(cols)
    files["coherence.csv"] = _csv(["t_wait_s"] + names, zip(t, *(cols[k] for k in names)))
    return RunOutput(files, summary)


def run_transport(sc):
    trap = trap_of(sc)
    geom = load_geometry(sc, sc["geometry"])
    wf = tr.make_transport_waveform(geom, sc["start"], sc["end"], sc["duration"], sc["profile"], sc["knots"],
                                    omega_z=sc["omega_z"], mass=trap.mass, charge=trap.charge)
    gain = tr.transport_energy_gain(wf, geom, trap)
    text = _csv(["mode", "quanta"], list(gain.as_dict().items()), "{:.6e}")
    return RunOutput({"waveform.txt": wf.to_text(), "transport.csv": text},
                     [f"{k}: {v:.3e} quanta" for k, v in gain.as_dict().items()])


def run_raster(sc):
    if sc["waypoints"] == "default":
        wp = tr.load_waypoints()
    else:
        path = sc.resolve(sc["waypoints"])
        if not path.exists():
            raise ScenarioError(f"waypoint file not found: {path}")
        wp = tr.load_waypoints(path)
    sched = tr.raster_schedule(wp, transport_time=sc["transport_time"], dwell=sc["dwell"], repeats=sc["repeats"])
    problems = tr.validate_raster(sched, geo.default_geometry() if sc["check_reachable"] else None)
    ex, ez = sched.extent()
    summary = [f"{len(sched.waypoints)} waypoints, region {ex / UM:.1f} x {ez / UM:.1f} um, "
               f"cycle {sched.cycle_time * 1e3:.1f} ms, repeats {sched.repeats}"]
    if problems:
        raise ScenarioError("raster schedule invalid: " + "; ".join(problems))
    return RunOutput({"raster.csv": sched.to_csv()}, summary)


def run_isolation(sc):
    if sc["network"] == "default":
        net = el.detachment_ladder()
    else:
        path = sc.resolve(sc["network"])
        if not path.exists():
            raise ScenarioError(f"network file not found: {path}")
        net = el.LadderNetwork.load(path)
    grid = el.default_grid(sc["points"])
    rep = el.isolation_report(net, grid)
    files = {"isolation.csv": rep.to_csv()}
    s = rep.summary()
    summary = [f"isolation {rep.isolation_db[0]:.2f} dB at dc, {rep.isolation_db[-1]:.2f} dB at "
               f"{grid[-1] / 1e6:.3f} MHz" + (" (dc value regularized)" if rep.regularized[0] else ""),
               f"minimum isolation {s['isolation_min_db']:.2f} dB at {s['f_min_isolation_hz'] / 1e6:.3f} MHz"]
    if sc["fit_parasitics"]:
        fit = el.fit_parasitics()
        files["isolation_fitted.csv"] = el.isolation_report(fit.network, grid).to_csv()
        files["parasitics.csv"] = _csv(["quantity", "value"], [
            ("switch_parasitic_C_F", fit.switch_parasitic_C), ("shunt_leak_R_ohm", fit.shunt_leak_R),
            ("switch_leak_R_ohm", fit.switch_leak_R), ("isolation_dc_db", fit.isolation_dc_db),
            ("isolation_5MHz_db", fit.isolation_hf_db)])
        summary.append(f"parasitic fit: C_p = {fit.switch_parasitic_C * 1e12:.2f} pF, "
                       f"R_leak = {fit.shunt_leak_R / 1e6:.2f} MOhm -> {fit.isolation_dc_db:.2f} / "
                       f"{fit.isolation_hf_db:.2f} dB")
    return RunOutput(files, summary)


RUNNERS = {
    "modes": run_modes, "solve": run_solve, "null": run_null, "cool-doppler": run_cool_doppler,
    "cool-sideband": run_cool_sideband, "thermometry": run_thermometry, "heating": run_heating,
    "coherence": run_coherence, "transport": run_transport, "raster": run_raster, "isolation": run_isolation,
}
