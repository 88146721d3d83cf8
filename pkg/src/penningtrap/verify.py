"""Self-check suites: reported anchors and mathematical invariants.

Constants are looked up at call time so a modified constant shows up as a
failing check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import coherence as co
from . import constants as const
from . import electronics as el
from . import geometry as geo
from . import modes as modes_mod
from . import sideband as sb
from . import transport as tr

MHZ = 1e6


@dataclass
class Check:
    criterion: str
    name: str
    target: float
    computed: float
    tolerance: str
    passed: bool

    def row(self):
        return (f"{self.criterion:>4s}  {self.name:38s} {self.target:>12.5g} {self.computed:>12.5g}  "
                f"{self.tolerance:14s} {'PASS' if self.passed else 'FAIL'}")


def _rel(criterion, name, target, computed, rtol):
    return Check(criterion, name, target, computed, f"+-{rtol:.3g} rel",
                 bool(abs(computed - target) <= rtol * abs(target)))


def _abs(criterion, name, target, computed, atol, label=None):
    return Check(criterion, name, target, computed, label or f"+-{atol:g}", bool(abs(computed - target) <= atol))


def _le(criterion, name, bound, computed):
    return Check(criterion, name, bound, computed, "<= target", bool(computed <= bound))


def paper_anchors():
    checks = []
    mass = const.BE9_MASS
    trap = modes_mod.TrapParams(3.0, mass, const.E_CHARGE)
    wc = modes_mod.cyclotron_frequency(trap)
    wp, wm = modes_mod.radial_frequencies(const.TWO_PI * 2.5 * MHZ, wc)
    checks += [
        _rel("1", "bare cyclotron frequency (MHz)", 5.12, wc / const.TWO_PI / MHZ, 0.005),
        _rel("1", "modified cyclotron at 2.5 MHz (MHz)", 4.41, wp / const.TWO_PI / MHZ, 0.01),
        _rel("1", "magnetron at 2.5 MHz (MHz)", 0.71, wm / const.TWO_PI / MHZ, 0.01),
        _rel("1", "stability limit (MHz)", 3.62, modes_mod.stability_limit(wc) / const.TWO_PI / MHZ, 0.005),
    ]
    wp_lim, _ = modes_mod.radial_frequencies(modes_mod.stability_limit(wc), wc)
    checks.append(_rel("1", "radial frequencies at the limit (MHz)", 2.56, wp_lim / const.TWO_PI / MHZ, 0.005))

    ms = modes_mod.mode_set(trap, const.TWO_PI * 2.5 * MHZ)
    checks.append(_rel("3", "S_E at 0.088/s (1e-16 V^2/m^2/Hz)", 3.4,
                       sb.electric_field_noise(0.088, ms.omega_z, mass, const.E_CHARGE) / 1e-16, 0.03))

    geom = geo.default_geometry()
    null = geo.find_null(geom, geo.reference_voltages(), geo.REFERENCE_NULL)
    checks.append(_abs("-", "dc null height (um)", 152.0, null[1] * 1e6, 1.0))
    rf_h = geo.rf_null_line(geom, geo.outer_rf_pattern(geom))
    checks.append(_abs("-", "rf null height (um)", 152.0, rf_h * 1e6, 2.0))
    hess = geo.symmetric_target_hessian(ms.omega_z, mass, const.E_CHARGE)
    sol = geo.solve_voltages(geom, geo.REFERENCE_NULL, hess, v_max=20.0, trap=trap)
    checks.append(_rel("-", "solved trap: w+ (MHz)", 4.41, sol.modes.omega_plus / const.TWO_PI / MHZ, 0.01))
    checks.append(_rel("-", "solved trap: w- (MHz)", 0.71, sol.modes.omega_minus / const.TWO_PI / MHZ, 0.01))

    eta = sb.lamb_dicke(sb.raman_delta_k(), mass, ms, "z")
    om = const.TWO_PI * 8e3
    checks.append(_abs("6", "axial Lamb-Dicke parameter", 0.43, eta, 0.02))
    for s, target in ((0, 62.0), (1, 145.0), (3, 2000.0)):
        checks.append(_rel("6", f"pi-time s={s} (us)", target, sb.pi_time(0, s, eta, om) * 1e6, 0.20))

    sched = sb.default_schedule(eta, om, total=60e-3)
    trace = sb.sideband_cool(sb.FockDistribution.thermal(4.4), sched, eta, om, heating=0.088, total_time=60e-3)
    checks.append(_le("7", "sideband-cooled axial nbar", 0.01, trace.final.nbar))
    for nbar in (0.007, 0.05, 1.0):
        pr, pb = sb.probe_thermal(nbar, eta, om, 100e-6)
        est = sb.sideband_ratio_thermometry(pr, pb)
        checks.append(_abs("7", f"thermometry round trip n={nbar}", nbar, est, max(0.005, 0.1 * nbar)))

    t = np.linspace(0, 0.2, 6)
    for rate in (0.49, 3.8, 0.088):
        fit = sb.heating_fit(t, 0.01 + rate * t)
        checks.append(_rel("8", f"noiseless heating slope {rate}/s", rate, fit.slope, 1e-9))

    qs = co.QuasiStaticNoise.from_ramsey_time(1.9e-3)
    checks.append(_rel("9", "Ramsey 1/e time (ms)", 1.9, co.one_over_e_time(qs, "ramsey") * 1e3, 1e-4))
    checks.append(_rel("-", "1 uT detuning (kHz)", 28.0, float(co.field_to_detuning(1e-6)) / const.TWO_PI / 1e3,
                       1e-9))

    sched_r = tr.raster_schedule(tr.load_waypoints())
    ex, ez = sched_r.extent()
    checks.append(_abs("10", "raster waypoints", 58, len(sched_r.waypoints), 0))
    checks.append(_abs("10", "raster region x (um)", 40.0, ex * 1e6, 1.0))
    checks.append(_abs("10", "raster region z (um)", 75.0, ez * 1e6, 1.0))
    checks.append(_abs("10", "raster dwell (us)", 500.0, sched_r.dwell * 1e6, 1e-9))
    checks.append(_abs("10", "raster repeats", 172, sched_r.repeats, 0))

    checks.append(_abs("11", "divider stage (dB)", -61.9, el.divider_db(), 0.1))
    return checks


def invariants(seed=0, n=10_000):
    rng = np.random.default_rng(seed)
    checks = []
    mass = const.BE9_MASS
    B = rng.uniform(0.5, 10.0, n)
    wc = const.E_CHARGE * B / mass
    wz = rng.uniform(0.0, 1.0, n) * wc / math.sqrt(2)
    wp, wm = np.array([modes_mod.radial_frequencies(a, b) for a, b in zip(wz, wc)]).T
    e1 = np.max(np.abs(wp + wm - wc) / wc)
    e2 = np.max(np.abs(wp**2 + wm**2 + wz**2 - wc**2) / wc**2)
    checks.append(_le("2", "max rel err w+ + w- = wc", 1e-12, e1))
    checks.append(_le("2", "max rel err w+^2 + w-^2 + wz^2 = wc^2", 1e-12, e2))

    geom = geo.default_geometry()
    worst = 0.0
    for _ in range(50):
        p = np.array([rng.uniform(-300, 300), rng.uniform(20, 400), rng.uniform(-300, 300)]) * 1e-6
        _, _, hs = geo.basis_samples(geom, p)
        for h in hs:
            worst = max(worst, abs(np.trace(h)) / np.linalg.norm(h))
    checks.append(_le("-", "Laplace: |tr H| / |H|", 1e-6, worst))

    worst = 0.0
    for _ in range(20):
        d = sb.FockDistribution.thermal(rng.uniform(0, 5))
        for _ in range(5):
            d = sb.apply_pulse(d, int(rng.choice([-3, -1, 1, 3])), rng.uniform(0, 3e-3), 0.43, const.TWO_PI * 8e3)
            d = sb.apply_heating(d, rng.uniform(0, 5), rng.uniform(0, 1e-2))
            worst = max(worst, abs(d.p.sum() - 1))
    checks.append(_le("-", "Fock probability conservation", 1e-9, worst))

    worst = 0.0
    for k in range(1, 12):
        t = co.uhrig_times(k)
        worst = max(worst, np.max(np.abs(t + t[::-1] - 1)))
    checks.append(_le("-", "Uhrig times symmetric", 1e-12, worst))

    worst = -math.inf
    mono = 0.0
    for _ in range(50):
        net = random_ladder(rng)
        grid = el.default_grid(25)
        h = el.isolation_report(net, grid).h_db
        worst = max(worst, float(h.max()))
        more = net.stage(*random_ladder(rng, stages=1).elements)
        h2 = el.isolation_report(more, grid).h_db
        mono = max(mono, float(np.max(h2 - h)))
    checks.append(_le("11", "passivity: max |H| (dB)", 1e-9, worst))
    checks.append(_le("11", "added stage never raises |H| (dB)", 1e-9, mono))
    return checks


def random_ladder(rng, stages=None):
    stages = int(rng.integers(1, 4)) if stages is None else stages
    els = []
    for _ in range(stages):
        for kind in ("series", "shunt"):
            if rng.random() < 0.5:
                e = el.Element(kind, R=10 ** rng.uniform(0, 9))
            else:
                e = el.Element(kind, C=10 ** rng.uniform(-13, -8))
            if rng.random() < 0.3:
                e = el.Element(kind, R=e.R, C=e.C, parallel_C=10 ** rng.uniform(-13, -10))
            els.append(e)
    return el.LadderNetwork(els)


SUITES = {"paper-anchors": paper_anchors, "invariants": invariants}


def run_suite(name):
    checks = SUITES[name]()
    header = f"{'crit':>4s}  {'check':38s} {'target':>12s} {'computed':>12s}  {'tolerance':14s} result"
    return checks, [header] + [c.row() for c in checks]
