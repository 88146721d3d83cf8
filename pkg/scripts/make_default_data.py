"""Regenerate the shipped default geometry and reference voltages."""
from pathlib import Path

import numpy as np

from penningtrap import geometry as g
from penningtrap.constants import TWO_PI

DATA = Path(__file__).resolve().parents[1] / "src" / "penningtrap" / "data"
LAYOUT = dict(strip_length=900e-6, outer_width=300e-6)


def main():
    w = g.calibrate_strip_width(g.TRAP_HEIGHT, **LAYOUT)
    geom = g.five_wire_layout(w, **LAYOUT)
    geom.save(DATA / "default_geometry.txt")
    geom = g.ElectrodeGeometry.load(DATA / "default_geometry.txt")
    hess = g.symmetric_target_hessian(TWO_PI * 2.5e6)
    res = g.solve_voltages(geom, g.REFERENCE_NULL, hess, v_max=None)
    res.voltages.save(DATA / "reference_voltages.yaml")
    print(f"strip width {w * 1e6:.4f} um, max |V| {np.abs(list(res.voltages.values.values())).max():.3f}")


if __name__ == "__main__":
    main()
