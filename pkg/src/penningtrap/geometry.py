"""Analytic electrostatics of a gapless planar electrode layout.

Electrodes are axis-aligned rectangles in the plane y = 0 with the ion at
y > 0; everything outside the rectangles is grounded.  The potential of a
rectangle held at 1 V is the solid-angle expression

    phi = 1/(2 pi) * sum_corners (+-) atan(X Z / (y R)),

with X, Z the corner offsets from the field point and R the corner
distance.  Gradients and Hessians use the closed-form derivatives of the
corner function, so every basis function satisfies Laplace's equation to
roundoff.

Frame: B along z, surface normal along y, electrode strips along z.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy import optimize

from . import constants as const
from . import modes as modes_mod

logger = logging.getLogger(__name__)

UM = 1e-6


class GeometryError(ValueError):
    pass


class DomainError(ValueError):
    """Field point on or below the electrode plane."""


class NullNotFoundError(RuntimeError):
    def __init__(self, msg, last):
        super().__init__(msg)
        self.last = last


class InfeasibleBoundsError(RuntimeError):
    def __init__(self, msg, residual, voltages):
        super().__init__(msg)
        self.residual = residual
        self.voltages = voltages


@dataclass(frozen=True)
class Electrode:
    label: str
    x0: float
    x1: float
    z0: float
    z1: float
    rf_capable: bool = False

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.z1 - self.z0)


@dataclass(frozen=True)
class ElectrodeGeometry:
    electrodes: tuple

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        labels = [e.label for e in self.electrodes]
        if len(set(labels)) != len(labels):
            raise GeometryError("duplicate electrode labels")
        for e in self.electrodes:
            if not (e.x1 > e.x0 and e.z1 > e.z0):
                raise GeometryError(f"electrode {e.label} has non-positive area")
        for i, a in enumerate(self.electrodes):
            for b in self.electrodes[i + 1:]:
                ox = min(a.x1, b.x1) - max(a.x0, b.x0)
                oz = min(a.z1, b.z1) - max(a.z0, b.z0)
                # shared edges are allowed; tolerance covers float rounding of file values
                if ox > 1e-12 and oz > 1e-12:
                    raise GeometryError(f"electrodes {a.label} and {b.label} overlap")
        arr = np.array([[e.x0, e.x1, e.z0, e.z1] for e in self.electrodes], dtype=float)
        object.__setattr__(self, "_corners", arr.reshape(-1, 4))
        object.__setattr__(self, "_index", {l: i for i, l in enumerate(labels)})

    @property
    def labels(self):
        return [e.label for e in self.electrodes]

    @property
    def rf_labels(self):
        return [e.label for e in self.electrodes if e.rf_capable]

    def __len__(self):
        return len(self.electrodes)

    def index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown electrode label {label!r}") from None

    def vector(self, voltages):
        """Dense voltage array ordered like ``labels`` from a mapping."""
        if isinstance(voltages, VoltageSet):
            voltages = voltages.values
        v = np.zeros(len(self))
        for label, val in voltages.items():
            v[self.index(label)] = val
        return v

    def voltage_set(self, vec, v_max=None):
        return VoltageSet({l: float(x) for l, x in zip(self.labels, vec)}, v_max=v_max)

    # -- file io -------------------------------------------------------
    def to_text(self):
        lines = ["# label  x0_um  x1_um  z0_um  z1_um  rf"]
        for e in self.electrodes:
            lines.append(
                f"{e.label} {e.x0 / UM:.9g} {e.x1 / UM:.9g} {e.z0 / UM:.9g} "
                f"{e.z1 / UM:.9g} {int(e.rf_capable)}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        electrodes = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise GeometryError(f"line {lineno}: expected 6 fields, got {len(parts)}")
            label = parts[0]
            try:
                x0, x1, z0, z1 = (float(p) * UM for p in parts[1:5])
                rf = parts[5].lower() in ("1", "true", "yes", "rf")
            except ValueError as exc:
                raise GeometryError(f"line {lineno}: {exc}") from None
            electrodes.append(Electrode(label, x0, x1, z0, z1, rf))
        if not electrodes:
            raise GeometryError("geometry file lists no electrodes")
        return cls(electrodes)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_text())


@dataclass(frozen=True)
class FieldSample:
    potential: float
    gradient: np.ndarray
    hessian: np.ndarray

    @property
    def field(self):
        return -self.gradient

    def __add__(self, other):
        return FieldSample(self.potential + other.potential,
                           self.gradient + other.gradient,
                           self.hessian + other.hessian)

    def __mul__(self, k):
        return FieldSample(k * self.potential, k * self.gradient, k * self.hessian)

    __rmul__ = __mul__


@dataclass
class VoltageSet:
    values: dict
    v_max: float | None = None

    def __post_init__(self):
        self.values = {str(k): float(v) for k, v in self.values.items()}
        if self.v_max is not None:
            bad = {k: v for k, v in self.values.items() if abs(v) > self.v_max * (1 + 1e-9)}
            if bad:
                raise ValueError(f"voltages outside +-{self.v_max} V: {bad}")

    def __getitem__(self, label):
        return self.values[label]

    def scaled(self, k):
        return VoltageSet({l: k * v for l, v in self.values.items()})

    def to_yaml(self):
        return yaml.safe_dump({"voltages_V": dict(self.values)}, sort_keys=False)

    @classmethod
    def from_yaml(cls, text):
        data = yaml.safe_load(text) or {}
        vals = data.get("voltages_V", data)
        if not isinstance(vals, dict):
            raise ValueError("voltage file must map electrode label -> volts")
        return cls(vals)

    @classmethod
    def load(cls, path):
        return cls.from_yaml(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_yaml())


# -- closed-form rectangle basis ------------------------------------------

def _corner_terms(corners, point, order):
    """Potential and derivatives of every rectangle at one point.

    Returns (phi[n], grad[n,3], hess[n,3,3]) up to the requested order.
    """
    x, y, z = point
    if not y > 0:
        raise DomainError(f"field point must lie above the electrode plane (y={y})")
    X = corners[:, [0, 1]] - x          # (n, 2): x0, x1
    Z = corners[:, [2, 3]] - z          # (n, 2): z0, z1
    Xc = X[:, :, None]                  # (n, 2, 1)
    Zc = Z[:, None, :]                  # (n, 1, 2)
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])  # (x0,z0)+ (x0,z1)- (x1,z0)- (x1,z1)+
    X2, Z2, y2 = Xc**2, Zc**2, y * y
    R2 = X2 + Z2 + y2
    R = np.sqrt(R2)
    k = 1.0 / (2 * math.pi)

    f = np.arctan(Xc * Zc / (y * R))
    phi = k * np.einsum("ij,nij->n", sign, f)
    if order == 0:
        return phi, None, None

    ax = X2 + y2
    az = Z2 + y2
    fX = Zc * y / (ax * R)
    fZ = Xc * y / (az * R)
    fy = -Xc * Zc * (X2 + Z2 + 2 * y2) / (ax * az * R)
    # d/dx = -d/dX, d/dz = -d/dZ
    grad = k * np.stack([
        -np.einsum("ij,nij->n", sign, fX),
        np.einsum("ij,nij->n", sign, fy),
        -np.einsum("ij,nij->n", sign, fZ),
    ], axis=-1)
    if order == 1:
        return phi, grad, None

    R3 = R2 * R
    fXX = -Xc * Zc * y * (3 * X2 + 2 * Z2 + 3 * y2) / (ax**2 * R3)
    fZZ = -Xc * Zc * y * (2 * X2 + 3 * Z2 + 3 * y2) / (az**2 * R3)
    fyy = -(fXX + fZZ)
    fXZ = y / R3
    fXy = -Zc * (-X2 * X2 - X2 * Z2 + X2 * y2 + Z2 * y2 + 2 * y2 * y2) / (ax**2 * R3)
    fZy = -Xc * (-X2 * Z2 + X2 * y2 - Z2 * Z2 + Z2 * y2 + 2 * y2 * y2) / (az**2 * R3)

    def s(a):
        return np.einsum("ij,nij->n", sign, np.broadcast_to(a, f.shape))

    hxx, hyy, hzz = s(fXX), s(fyy), s(fZZ)
    hxz = s(fXZ)           # (-1)(-1)
    hxy = -s(fXy)
    hyz = -s(fZy)
    hess = k * np.stack([
        np.stack([hxx, hxy, hxz], -1),
        np.stack([hxy, hyy, hyz], -1),
        np.stack([hxz, hyz, hzz], -1),
    ], axis=-2)
    return phi, grad, hess


def basis_samples(geom: ElectrodeGeometry, point, order=2):
    """Unit-voltage potential, gradient and Hessian of every electrode."""
    return _corner_terms(geom._corners, np.asarray(point, dtype=float), order)


def basis_potential(geom: ElectrodeGeometry, electrode: str, point) -> FieldSample:
    """Field of ``electrode`` at 1 V with all other electrodes grounded."""
    i = geom.index(electrode)
    phi, grad, hess = _corner_terms(geom._corners[i:i + 1], np.asarray(point, dtype=float), 2)
    return FieldSample(float(phi[0]), grad[0], hess[0])


def total_field(geom: ElectrodeGeometry, v, point) -> FieldSample:
    vec = geom.vector(v)
    phi, grad, hess = basis_samples(geom, point)
    return FieldSample(float(vec @ phi), vec @ grad, np.einsum("n,nij->ij", vec, hess))


def gradient_at(geom: ElectrodeGeometry, vec, point):
    """Potential gradient (V/m) for a dense voltage vector; the fast path for integrators."""
    _, grad, _ = _corner_terms(geom._corners, point, 1)
    return vec @ grad


def find_null(geom: ElectrodeGeometry, v, guess, tol=1e-6, max_iter=50, max_distance=1e-3):
    """Newton iteration on the gradient; returns the point where |E| < tol (V/m).

    The field of a finite electrode pattern decays far from it, so an
    iterate that wanders more than ``max_distance`` (m) from the guess is
    treated as a failed search rather than a null.
    """
    vec = geom.vector(v)
    p = np.asarray(guess, dtype=float).copy()
    p0 = p.copy()
    for _ in range(max_iter):
        if np.linalg.norm(p - p0) > max_distance:
            raise NullNotFoundError(
                f"null search left the {max_distance * 1e3:g} mm region around the guess", p)
        _, grad, hess = basis_samples(geom, p)
        g = vec @ grad
        if np.linalg.norm(g) < tol:
            return p
        H = np.einsum("n,nij->ij", vec, hess)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise NullNotFoundError("singular Hessian during null search", p) from None
        # keep the iterate above the plane
        while p[1] - step[1] <= 0:
            step = 0.5 * step
        p = p - step
    g = gradient_at(geom, vec, p)
    if np.linalg.norm(g) < tol:
        return p
    raise NullNotFoundError(
        f"null search did not converge in {max_iter} iterations (|E| = {np.linalg.norm(g):.3g} V/m)", p)


# -- voltage solving --------------------------------------------------------

def symmetric_target_hessian(omega_z, mass=const.BE9_MASS, charge=const.E_CHARGE, angle=0.0,
                             asymmetry=0.0):
    """Traceless curvature matrix (V/m^2) for axial frequency ``omega_z``.

    ``asymmetry`` splits the radial curvatures as -(1 -+ asymmetry)/2 of the
    axial one; ``angle`` rotates the radial principal axes about z.
    """
    c = modes_mod.quadrupole_curvature(omega_z, mass, charge)
    h = np.diag([-(1 + asymmetry) * c / 2, -(1 - asymmetry) * c / 2, c])
    ca, sa = math.cos(angle), math.sin(angle)
    rot = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1.0]])
    return rot @ h @ rot.T


@dataclass
class SolveResult:
    voltages: VoltageSet
    residual: float
    rank: int
    n_constraints: int
    achieved_hessian: np.ndarray
    achieved_gradient: np.ndarray
    modes: modes_mod.ModeSet | None = None
    bounded: bool = False

    @property
    def rank_deficient(self):
        return self.rank < self.n_constraints


_HESS_IDX = [(0, 0), (1, 1), (0, 1), (0, 2), (1, 2)]


def constraint_system(geom, null, hessian, grad_scale, hess_scale):
    """Scaled linear system A v = b for the 3 gradient + 5 curvature constraints."""
    _, grad, hess = basis_samples(geom, null)
    rows = [grad[:, i] / grad_scale for i in range(3)]
    rows += [hess[:, i, j] / hess_scale for i, j in _HESS_IDX]
    A = np.array(rows)
    b = np.concatenate([np.zeros(3), [hessian[i, j] / hess_scale for i, j in _HESS_IDX]])
    return A, b


def solve_voltages(geom: ElectrodeGeometry, null, hessian, v_max=10.0, regularization=0.0,
                   electrodes=None, trap: modes_mod.TrapParams | None = None,
                   tol=1e-9):
    """Electrode voltages placing a field null at ``null`` with curvature ``hessian``.

    Solves the scaled constraint system in the least-squares sense, adding
    ``regularization * |v|^2`` when positive.  With zero regularization the
    minimum-norm solution is returned when it respects the bounds; otherwise
    a bounded least-squares problem is solved.  ``residual`` is the norm of
    the scaled constraint mismatch (gradient in units of 1 um null shift).
    """
    hessian = np.asarray(hessian, dtype=float)
    if not np.allclose(hessian, hessian.T, atol=1e-12 * np.abs(hessian).max()):
        raise ValueError("target Hessian must be symmetric")
    scale = max(np.abs(hessian).max(), 1.0)
    if abs(np.trace(hessian)) > 1e-9 * scale:
        raise ValueError("target Hessian must be traceless (Laplace)")
    null = np.asarray(null, dtype=float)
    A_full, b = constraint_system(geom, null, hessian, grad_scale=scale * UM, hess_scale=scale)
    use = np.arange(len(geom)) if electrodes is None else np.array([geom.index(l) for l in electrodes])
    A = A_full[:, use]
    rank = int(np.linalg.matrix_rank(A, tol=1e-10 * np.abs(A).max()))
    if rank < A.shape[0]:
        logger.warning("constraint matrix is rank deficient (%d < %d); returning minimum-norm solution",
                       rank, A.shape[0])

    bounded = False
    if regularization > 0:
        lam = math.sqrt(regularization)
        A_aug = np.vstack([A, lam * np.eye(A.shape[1])])
        b_aug = np.concatenate([b, np.zeros(A.shape[1])])
        x = np.linalg.lstsq(A_aug, b_aug, rcond=None)[0]
        if v_max is not None and np.abs(x).max() > v_max:
            x = optimize.lsq_linear(A_aug, b_aug, bounds=(-v_max, v_max), tol=1e-14,
                                    method="bvls").x
            bounded = True
    else:
        x = np.linalg.lstsq(A, b, rcond=None)[0]
        free_res = np.linalg.norm(A @ x - b)
        if v_max is not None and np.abs(x).max() > v_max:
            x = optimize.lsq_linear(A, b, bounds=(-v_max, v_max), tol=1e-14, method="bvls").x
            bounded = True
            res = np.linalg.norm(A @ x - b)
            if res > max(tol, 10 * free_res):
                full = np.zeros(len(geom))
                full[use] = x
                raise InfeasibleBoundsError(
                    f"target not reachable within +-{v_max} V (best residual {res:.3g})",
                    res, geom.voltage_set(full))
    full = np.zeros(len(geom))
    full[use] = x
    residual = float(np.linalg.norm(A @ x - b))

    vs = geom.voltage_set(full)
    fs = total_field(geom, vs, null)
    ms = None
    if trap is not None:
        wz = modes_mod.axial_frequency_from_curvature(fs.hessian[2, 2], trap.mass, trap.charge)
        ms = modes_mod.mode_set(trap, wz)
    return SolveResult(vs, residual, rank, A.shape[0], fs.hessian, fs.gradient, ms, bounded)


# -- rf null ---------------------------------------------------------------

def rf_field_magnitude(geom, rf_pattern, heights, x=0.0, z=0.0):
    vec = geom.vector(rf_pattern)
    return np.array([np.linalg.norm(gradient_at(geom, vec, np.array([x, h, z]))) for h in heights])


def rf_null_line(geom: ElectrodeGeometry, rf_pattern, x=0.0, z=0.0, y_range=(5 * UM, 1000 * UM),
                 n_scan=400):
    """Height above the plane where the rf field magnitude is minimal on the vertical through (x, z)."""
    vals = rf_pattern.values if isinstance(rf_pattern, VoltageSet) else dict(rf_pattern)
    rf = set(geom.rf_labels)
    bad = [l for l, v in vals.items() if v != 0 and l not in rf]
    if bad:
        raise GeometryError(f"rf pattern drives non-rf electrodes: {bad}")
    ys = np.geomspace(*y_range, n_scan)
    mag = rf_field_magnitude(geom, vals, ys, x, z)
    i = int(np.argmin(mag))
    if i == 0 or i == len(ys) - 1:
        raise GeometryError("rf field magnitude has no interior minimum in the scanned range")
    res = optimize.minimize_scalar(
        lambda h: rf_field_magnitude(geom, vals, [h], x, z)[0],
        bounds=(ys[i - 1], ys[i + 1]), method="bounded", options={"xatol": 1e-12})
    return float(res.x)


# -- default layout -------------------------------------------------------

def five_wire_layout(strip_width, n_strips=7, strip_length=900 * UM, outer_width=200 * UM,
                     n_segments=9):
    """Seven rf-capable strips along z flanked by two rows of dc segments (25 electrodes)."""
    els = []
    half = n_strips // 2
    for k in range(-half, half + 1):
        els.append(Electrode(f"M{k + half + 1}", (k - 0.5) * strip_width, (k + 0.5) * strip_width,
                             -strip_length / 2, strip_length / 2, True))
    edge = (half + 0.5) * strip_width
    seg = strip_length / n_segments
    for side, (x0, x1) in (("L", (-edge - outer_width, -edge)), ("R", (edge, edge + outer_width))):
        for j in range(n_segments):
            z0 = -strip_length / 2 + j * seg
            els.append(Electrode(f"{side}{j + 1}", x0, x1, z0, z0 + seg, False))
    return ElectrodeGeometry(els)


def outer_rf_pattern(geom, amplitude=1.0):
    """Drive the outermost rf-capable strips in phase (the axialization wiring)."""
    rf = sorted(geom.rf_labels, key=lambda l: geom.electrodes[geom.index(l)].x0)
    return VoltageSet({rf[0]: amplitude, rf[-1]: amplitude})


def calibrate_strip_width(target_height=152 * UM, **layout_kw):
    """Strip width giving an outer-pattern rf null at ``target_height``."""
    def err(w):
        g = five_wire_layout(w, **layout_kw)
        return rf_null_line(g, outer_rf_pattern(g)) - target_height
    return optimize.brentq(err, 20 * UM, 120 * UM, xtol=1e-13)


def _data_path(name):
    return resources.files("penningtrap") / "data" / name


def default_geometry() -> ElectrodeGeometry:
    return ElectrodeGeometry.from_text(_data_path("default_geometry.txt").read_text())


def reference_voltages() -> VoltageSet:
    return VoltageSet.from_yaml(_data_path("reference_voltages.yaml").read_text())


TRAP_HEIGHT = 152 * UM
REFERENCE_NULL = np.array([0.0, TRAP_HEIGHT, 0.0])
