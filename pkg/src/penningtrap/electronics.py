"""Two-port model of the trap-detachment switch ladder and the in-vacuum RC filter.

A ladder is an ordered list of series and shunt RC elements between a
voltage source (with source impedance) and the trap electrode (the load).
Each element is a resistor or a capacitor, optionally with parasitic R and C
in parallel.  The voltage transfer is evaluated by cascading ABCD matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml
from scipy import optimize

# component values for the detachment ladder
R_ON = 11.0
C_OFF = 0.45e-12
C_SHUNT = 560e-12
R_FILTER = 1e3
C_FILTER = 560e-12
F_MAX = 5.118e6

# complex frequency used in place of s = 0 when a series branch has no dc path
DC_EPSILON = 1e-6


@dataclass(frozen=True)
class Element:
    kind: str                 # "series" or "shunt"
    R: float = None
    C: float = None
    parallel_R: float = None
    parallel_C: float = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("series", "shunt"):
            raise ValueError(f"element kind must be 'series' or 'shunt', not {self.kind!r}")
        if (self.R is None) == (self.C is None):
            raise ValueError("element needs exactly one of R or C")
        for name in ("R", "C", "parallel_R", "parallel_C"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0")

    def admittance(self, s):
        y = 0j
        if self.R is not None:
            y += 1 / self.R
        if self.C is not None:
            y += s * self.C
        if self.parallel_R is not None:
            y += 1 / self.parallel_R
        if self.parallel_C is not None:
            y += s * self.parallel_C
        return y

    def has_dc_path(self):
        return self.R is not None or self.parallel_R is not None

    def abcd(self, s):
        y = self.admittance(s)
        if self.kind == "series":
            return np.array([[1, 1 / y], [0, 1]], dtype=complex)
        return np.array([[1, 0], [y, 1]], dtype=complex)

    def as_dict(self):
        d = {"kind": self.kind}
        for k in ("R", "C", "parallel_R", "parallel_C", "label"):
            v = getattr(self, k)
            if v not in (None, ""):
                d[k] = v
        return d


@dataclass
class LadderNetwork:
    elements: list
    source_impedance: complex = 0.0
    load_impedance: complex = None      # None: open circuit (electrode input)

    def __post_init__(self):
        if not self.elements:
            raise ValueError("ladder needs at least one element")

    def abcd(self, s):
        m = np.eye(2, dtype=complex)
        for el in self.elements:
            m = m @ el.abcd(s)
        return m

    def needs_regularization(self):
        """True if some series branch is purely capacitive, so s = 0 is singular."""
        return any(el.kind == "series" and not el.has_dc_path() for el in self.elements)

    def stage(self, *more):
        return replace(self, elements=list(self.elements) + list(more))

    def to_yaml(self):
        data = {"source_impedance_ohm": float(np.real(self.source_impedance)),
                "load_impedance_ohm": None if self.load_impedance is None else float(np.real(self.load_impedance)),
                "elements": [e.as_dict() for e in self.elements]}
        return yaml.safe_dump(data, sort_keys=False)

    @classmethod
    def from_yaml(cls, text):
        data = yaml.safe_load(text) or {}
        if "elements" not in data:
            raise ValueError("network file lacks 'elements'")
        els = [Element(**{k: (v if k in ("kind", "label") else float(v)) for k, v in e.items()})
               for e in data["elements"]]
        return cls(els, float(data.get("source_impedance_ohm", 0.0) or 0.0),
                   None if data.get("load_impedance_ohm") is None else float(data["load_impedance_ohm"]))

    @classmethod
    def load(cls, path):
        return cls.from_yaml(Path(path).read_text())


def transfer_function(net: LadderNetwork, f):
    """Complex voltage gain V_load / V_source at frequency ``f`` (Hz).

    Returns (gain, regularized).  A ladder with a purely capacitive series
    branch is singular at dc; for |s| below DC_EPSILON it is evaluated at
    s = DC_EPSILON, which is the limit reached by giving each capacitor a
    conductance DC_EPSILON * C.  The flag reports it.
    """
    if f < 0:
        raise ValueError("frequency must be >= 0")
    regularized = 2 * math.pi * f < DC_EPSILON and net.needs_regularization()
    s = DC_EPSILON if regularized else 2j * math.pi * f
    (a, b), (c, d) = net.abcd(s)
    zs = net.source_impedance
    if net.load_impedance is None:
        h = 1 / (a + zs * c)
    else:
        zl = net.load_impedance
        h = zl / (a * zl + b + zs * (c * zl + d))
    return complex(h), regularized


def gain_db(h):
    return 20 * math.log10(abs(h)) if h != 0 else -math.inf


@dataclass
class IsolationReport:
    frequencies: np.ndarray
    h_db: np.ndarray
    regularized: np.ndarray

    @property
    def isolation_db(self):
        return -self.h_db

    def summary(self):
        if len(self.frequencies) == 0:
            return {}
        iso = self.isolation_db
        return {"isolation_min_db": float(iso.min()), "f_min_isolation_hz": float(self.frequencies[iso.argmin()]),
                "isolation_max_db": float(iso.max()), "f_max_isolation_hz": float(self.frequencies[iso.argmax()]),
                "monotone_decreasing": bool(np.all(np.diff(iso) <= 1e-9))}

    def to_csv(self):
        lines = ["f_hz,h_db,isolation_db,regularized"]
        lines += [f"{f:.6e},{h:.6f},{-h:.6f},{int(r)}"
                  for f, h, r in zip(self.frequencies, self.h_db, self.regularized)]
        return "\n".join(lines) + "\n"


def isolation_report(net, grid):
    grid = np.asarray(grid, dtype=float)
    out = [transfer_function(net, f) for f in grid]
    h = np.array([gain_db(g) for g, _ in out])
    reg = np.array([r for _, r in out], dtype=bool)
    return IsolationReport(grid, h, reg)


def default_grid(n=201, f_max=F_MAX):
    """dc plus a log grid up to the highest motional frequency."""
    return np.concatenate([[0.0], np.geomspace(1.0, f_max, n - 1)])


def detachment_ladder(switches_open=True, n_switches=3, switch_parasitic_C=None, switch_leak_R=None,
                      shunt_leak_R=None, with_filter=True, source_impedance=0.0):
    """Switch ladder: (switch, shunt C) x n_switches, then the series-R shunt-C filter.

    An open switch is C_OFF; a closed one is R_ON.  Parasitics default to none.
    """
    els = []
    for k in range(n_switches):
        if switches_open:
            els.append(Element("series", C=C_OFF, parallel_C=switch_parasitic_C, parallel_R=switch_leak_R,
                               label=f"S{k + 1}"))
        else:
            els.append(Element("series", R=R_ON, label=f"S{k + 1}"))
        els.append(Element("shunt", C=C_SHUNT, parallel_R=shunt_leak_R, label=f"C{k + 1}"))
    if with_filter:
        els.append(Element("series", R=R_FILTER, label="Rf"))
        els.append(Element("shunt", C=C_FILTER, parallel_R=shunt_leak_R, label="Cf"))
    return LadderNetwork(els, source_impedance)


def divider_db(c_series=C_OFF, c_shunt=C_SHUNT):
    """High-frequency limit of a series-C into shunt-C stage."""
    return 20 * math.log10(c_series / (c_series + c_shunt))


@dataclass
class ParasiticFit:
    switch_parasitic_C: float
    shunt_leak_R: float
    switch_leak_R: float
    isolation_dc_db: float
    isolation_hf_db: float
    network: LadderNetwork


def fit_parasitics(target_dc_db=83.0, target_hf_db=77.0, f_hf=5e6, switch_leak_R=1e9, with_filter=False):
    """Find a switch bridging capacitance and a shunt leakage resistance that give both isolation targets.

    With the switch off-resistance fixed, dc isolation is set by the
    leakage divider and high-frequency isolation by the capacitive one,
    so the two parameters separate and the fit is well posed.  By default
    the RC filter is left out so its roll-off does not mask the switch
    isolation.  The values are one consistent set, not a measurement.
    """
    def build(x):
        return detachment_ladder(True, switch_parasitic_C=math.exp(x[0]), switch_leak_R=switch_leak_R,
                                 shunt_leak_R=math.exp(x[1]), with_filter=with_filter)

    def iso(net):
        return (-gain_db(transfer_function(net, 0.0)[0]), -gain_db(transfer_function(net, f_hf)[0]))

    def resid(x):
        d, h = iso(build(x))
        return [d - target_dc_db, h - target_hf_db]

    sol = optimize.least_squares(resid, x0=[math.log(10e-12), math.log(switch_leak_R * 0.05)],
                                 xtol=1e-12, ftol=1e-12)
    net = build(sol.x)
    d, h = iso(net)
    return ParasiticFit(math.exp(sol.x[0]), math.exp(sol.x[1]), switch_leak_R, d, h, net)


def discharge_time(r_leak, c=C_SHUNT + C_FILTER):
    """RC estimate for the electrode voltage decay once the trap is detached."""
    return r_leak * c
