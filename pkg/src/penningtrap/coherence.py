"""Dephasing of spin and motional superpositions under classical frequency noise.

The detuning noise d(t) (rad/s) enters as a phase phi = int y(t) d(t) dt with
the sequence's switching function y = +-1.  For Gaussian noise the contrast
is W = exp(-chi) with

    chi = (1 / 2 pi) int_0^inf S(w) F(w T) / w^2 dw,

where S is the two-sided power spectral density and F the filter function
of the pulse sequence.  Pulses are instantaneous and perfect.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from . import constants as const


class SpectralIntegralError(RuntimeError):
    pass


class FitError(RuntimeError):
    pass


# -- noise models ----------------------------------------------------------------

@dataclass(frozen=True)
class QuasiStaticNoise:
    """Detuning constant during a shot, Gaussian from shot to shot with rms ``sigma`` (rad/s)."""
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @classmethod
    def from_ramsey_time(cls, tau):
        """Noise whose Ramsey contrast falls to 1/e at ``tau``: chi = sigma^2 t^2 / 2."""
        return cls(math.sqrt(2.0) / tau)

    def accumulate_phase(self, rng, n_paths, t, weights):
        return rng.normal(0.0, self.sigma, n_paths) * float(np.sum(weights))


@dataclass(frozen=True)
class OUNoise:
    """Ornstein-Uhlenbeck detuning: correlation sigma^2 exp(-|tau| / tau_c)."""
    sigma: float
    tau_c: float

    def __post_init__(self):
        if self.sigma < 0 or self.tau_c <= 0:
            raise ValueError("need sigma >= 0 and tau_c > 0")

    def psd(self, w):
        return 2 * self.sigma**2 * self.tau_c / (1 + (w * self.tau_c) ** 2)

    def ramsey_chi(self, t):
        """Closed form for a free-evolution interval."""
        x = np.asarray(t) / self.tau_c
        return self.sigma**2 * self.tau_c**2 * (x - 1 + np.exp(-x))

    def accumulate_phase(self, rng, n_paths, t, weights):
        """Exact AR(1) sampling of the process on ``t``; returns sum_k weights_k d(t_k)."""
        d = rng.normal(0.0, self.sigma, n_paths)
        phi = weights[0] * d
        for k in range(1, len(t)):
            a = math.exp(-(t[k] - t[k - 1]) / self.tau_c)
            d *= a
            d += self.sigma * math.sqrt(1 - a * a) * rng.standard_normal(n_paths)
            phi += weights[k] * d
        return phi


@dataclass(frozen=True)
class WhiteNoise:
    """Flat two-sided spectral density ``s0`` (rad^2/s); Ramsey chi = s0 t / 2."""
    s0: float

    def psd(self, w):
        return np.full_like(np.asarray(w, dtype=float), self.s0)

    def accumulate_phase(self, rng, n_paths, t, weights):
        """Independent bins of variance s0 / dt approximate the white process."""
        dt = float(t[1] - t[0])
        phi = np.zeros(n_paths)
        for wk in weights:
            phi += wk * rng.normal(0.0, math.sqrt(self.s0 / dt), n_paths)
        return phi


@dataclass(frozen=True)
class PowerLawNoise:
    """S(w) = A / (w^2 + w_lo^2)^(alpha/2) / (1 + (w / w_hi)^2): power law with soft cutoffs."""
    amplitude: float
    alpha: float
    w_lo: float
    w_hi: float = math.inf

    def __post_init__(self):
        if self.amplitude < 0 or self.alpha < 0:
            raise ValueError("amplitude and alpha must be >= 0")
        if not 0 < self.w_lo < self.w_hi:
            raise ValueError("cutoffs must satisfy 0 < w_lo < w_hi")

    def psd(self, w):
        w = np.asarray(w, dtype=float)
        hi = 1.0 if math.isinf(self.w_hi) else 1 / (1 + (w / self.w_hi) ** 2)
        return self.amplitude * (w * w + self.w_lo**2) ** (-self.alpha / 2) * hi


# -- pulse sequences ------------------------------------------------------------------

@dataclass(frozen=True)
class PulseSequence:
    """pi-pulse centre times as fractions of ``t_wait`` (pi/2 pulses at 0 and t_wait implied)."""
    fractions: tuple = ()
    name: str = "ramsey"
    final_phase: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=float)
        if np.any(f <= 0) or np.any(f >= 1) or np.any(np.diff(f) <= 0):
            raise ValueError("pulse times must be sorted and strictly inside (0, t_wait)")

    @property
    def n_pulses(self):
        return len(self.fractions)

    def times(self, t_wait):
        return np.asarray(self.fractions) * t_wait

    def edges(self):
        """Edge positions and weights c_j so that F(u) = |sum c_j exp(i u tau_j)|^2."""
        tau = np.concatenate([[0.0], self.fractions, [1.0]])
        n = self.n_pulses
        c = np.empty(n + 2)
        c[0] = -1.0
        c[-1] = (-1.0) ** n
        c[1:-1] = 2 * (-1.0) ** (np.arange(n))
        return tau, c

    def signed_area(self):
        """int_0^1 y(t) dt: the filter's weight for static noise."""
        tau = np.concatenate([[0.0], self.fractions, [1.0]])
        return float(np.sum(np.diff(tau) * (-1.0) ** np.arange(len(tau) - 1)))

    def switching(self, t, t_wait):
        k = np.searchsorted(self.times(t_wait), t, side="right")
        return (-1.0) ** k


def ramsey():
    return PulseSequence((), "ramsey")


def uhrig_times(n, t_wait=1.0):
    """Uhrig pulse times t_wait * sin^2(k pi / (2 (n + 1))), k = 1..n."""
    if n < 1:
        raise ValueError("Uhrig order must be >= 1")
    k = np.arange(1, n + 1)
    frac = np.sin(k * np.pi / (2 * (n + 1))) ** 2
    # mirror the first half so the times are exactly symmetric and the middle pulse is exactly 1/2
    half = n // 2
    frac[n - half:] = 1.0 - frac[:half][::-1]
    if n % 2:
        frac[half] = 0.5
    return t_wait * frac


def uhrig(n):
    if n == 0:
        return ramsey()
    return PulseSequence(tuple(uhrig_times(n)), f"uhrig-{n}")


def echo():
    return PulseSequence((0.5,), "echo")


def sequence(name):
    """'ramsey', 'echo' or 'uhrig-N'."""
    name = name.lower()
    if name == "ramsey":
        return ramsey()
    if name in ("echo", "spin-echo"):
        return echo()
    if name.startswith("uhrig-"):
        return uhrig(int(name.split("-", 1)[1]))
    raise ValueError(f"unknown sequence {name!r}")


def filter_function(seq: PulseSequence, omega, t_wait):
    """F(w) = |sum_k (-1)^k (exp(i w t_{k+1}) - exp(i w t_k))|^2 over the free-evolution intervals."""
    u = np.asarray(omega, dtype=float) * t_wait
    return _filter_u(seq, u)


def _filter_u(seq, u):
    tau, c = seq.edges()
    ph = np.multiply.outer(u, tau)
    re = np.cos(ph) @ c
    im = np.sin(ph) @ c
    return re * re + im * im


def _kernel_u(seq, u):
    """F(u)/u^2 with the small-u limit handled by series."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = u < 1e-3
    big = ~small
    out[big] = _filter_u(seq, u[big]) / u[big] ** 2
    if np.any(small):
        # F/u^2 = |sum c_j exp(i u tau_j)|^2 / u^2 = |Y(u)|^2, Y analytic: expand to second order
        tau, c = seq.edges()
        m1 = c @ tau
        m2 = c @ tau**2
        m3 = c @ tau**3
        us = u[small]
        # sum c exp(i u tau) = i u m1 - u^2 m2 / 2 - i u^3 m3 / 6 + ...
        re = -us * m2 / 2
        im = m1 - us**2 * m3 / 6
        out[small] = re * re + im * im
    return out


# -- chi engines ------------------------------------------------------------------------

U_DENSE = 2000.0
N_DENSE = 40_001


def _tail_mean(seq):
    return float(np.sum(seq.edges()[1] ** 2))


def chi(noise, seq: PulseSequence, t_wait, engine="grid", rtol=1e-6):
    """Decoherence exponent at one wait time."""
    if t_wait <= 0:
        return 0.0
    if isinstance(noise, QuasiStaticNoise):
        return 0.5 * (noise.sigma * t_wait * seq.signed_area()) ** 2
    if isinstance(noise, WhiteNoise):
        return 0.5 * noise.s0 * t_wait
    T = t_wait

    def s_u(u):
        return noise.psd(np.asarray(u) / T)

    if engine == "grid":
        lo = np.geomspace(1e-9, 1.0, 2001)[:-1]
        lin = np.linspace(1.0, U_DENSE, N_DENSE)
        u = np.concatenate([lo, lin])
        f = s_u(u) * _kernel_u(seq, u)
        dense = integrate.simpson(f[len(lo):], x=lin) + integrate.simpson(f[:len(lo) + 1], x=u[:len(lo) + 1])
        head = float(s_u(1e-9) * _kernel_u(seq, np.array([1e-9]))[0] * 1e-9)
        body = dense + head
    elif engine == "quad":
        edges = np.concatenate([[0.0], np.geomspace(1e-6, 1.0, 13), np.arange(2.0, U_DENSE + 1, 2.0)])
        # absolute tolerance per piece from a coarse estimate, so pieces where F ~ u^(2N+2) vanishes
        # do not demand an unreachable relative accuracy
        coarse = np.concatenate([np.geomspace(1e-6, 1.0, 200), np.linspace(1.0, U_DENSE, 20_001)[1:]])
        scale = abs(integrate.simpson(s_u(coarse) * _kernel_u(seq, coarse), x=coarse))
        epsabs = rtol * scale / len(edges)
        body = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, err = integrate.quad(lambda x: float(s_u(x) * _kernel_u(seq, np.array([x]))[0]), a, b,
                                      epsrel=rtol, epsabs=epsabs, limit=200)
            body += val
    else:
        raise ValueError(f"unknown engine {engine!r}")
    # int_U^inf S(u/T)/u^2 du with v = 1/u
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            tail, err = integrate.quad(lambda v: float(s_u(1.0 / v)) if v > 0 else 0.0, 0.0, 1.0 / U_DENSE,
                                       epsrel=rtol, limit=200)
        except integrate.IntegrationWarning:
            raise SpectralIntegralError(f"the spectrum above w T = {U_DENSE:g} does not converge; "
                                        "add a high-frequency cutoff") from None
    tail *= _tail_mean(seq)
    total = T / (2 * math.pi) * (body + tail)
    if not np.isfinite(total):
        raise SpectralIntegralError("spectral integral diverges; check the noise model's low-frequency cutoff")
    if tail > 0.05 * (body + tail):
        raise SpectralIntegralError(f"{tail / (body + tail):.1%} of the integral lies above w T = {U_DENSE:g}; "
                                    "the high-frequency cutoff is too weak for the grid")
    return float(total)


@dataclass
class CoherenceCurve:
    t: np.ndarray
    contrast: np.ndarray
    stderr: np.ndarray = None
    label: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.contrast = np.asarray(self.contrast, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)

    def to_csv(self):
        lines = ["t_wait_s,contrast,stderr"]
        err = self.stderr if self.stderr is not None else np.zeros_like(self.t)
        lines += [f"{t:.9e},{c:.9e},{e:.3e}" for t, c, e in zip(self.t, self.contrast, err)]
        return "\n".join(lines) + "\n"


def coherence_decay(noise, seq, t_grid, engine="grid"):
    """Contrast W(t) = exp(-chi(t)) on ``t_grid``; ``seq`` is a PulseSequence or name."""
    if isinstance(seq, str):
        seq = sequence(seq)
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be positive and ascending")
    if engine == "mc":
        return monte_carlo_decay(noise, seq, t)
    w = np.array([math.exp(-chi(noise, seq, tt, engine)) for tt in t])
    return CoherenceCurve(t, w, None, seq.name)


def monte_carlo_decay(noise, seq, t_grid, n_paths=100_000, n_steps=400, seed=0):
    """Path-sampling cross-check: contrast <cos phi> with phi accumulated on a midpoint grid."""
    rng = np.random.default_rng(seed)
    out, err = [], []
    for T in np.asarray(t_grid, dtype=float):
        dt = T / n_steps
        tm = (np.arange(n_steps) + 0.5) * dt
        w = seq.switching(tm, T) * dt
        phi = noise.accumulate_phase(rng, n_paths, tm, w)
        c = np.cos(phi)
        out.append(c.mean())
        err.append(c.std(ddof=1) / math.sqrt(n_paths))
    return CoherenceCurve(t_grid, np.array(out), np.array(err), seq.name + " (mc)")


def one_over_e_time(noise, seq, t_lo=1e-6, t_hi=10.0, engine="grid"):
    """Wait time at which chi = 1."""
    if isinstance(seq, str):
        seq = sequence(seq)
    f = lambda lt: chi(noise, seq, math.exp(lt), engine) - 1.0
    a, b = math.log(t_lo), math.log(t_hi)
    if f(a) > 0 or f(b) < 0:
        raise ValueError("1/e time outside the search bracket")
    return math.exp(optimize.brentq(f, a, b, xtol=1e-6))


# -- fits -------------------------------------------------------------------------------

@dataclass
class CoherenceFit:
    model: str
    tau: float
    stderr: float
    amplitude: float
    rss: float
    decaying: bool


NON_DECAYING = 1e-4


def fit_coherence(curve: CoherenceCurve, model="gaussian"):
    """Least-squares fit of A exp(-(t/tau)^p), p = 2 (gaussian) or 1 (exponential); returns the 1/e time.

    The decay is fitted as k (t / t_max)^p with k >= 0.  If the fitted
    decay over the sampled span is below ``NON_DECAYING`` the curve is
    reported as non-decaying: tau = inf and ``decaying`` False.
    """
    p = {"gaussian": 2, "exponential": 1}.get(model)
    if p is None:
        raise ValueError("model must be 'gaussian' or 'exponential'")
    t, y = curve.t, curve.contrast
    if len(t) < 4:
        raise ValueError("need at least 4 points to fit a coherence curve")
    sigma = curve.stderr if curve.stderr is not None and np.all(curve.stderr > 0) else None
    scale = float(t.max())

    def f(tt, a, k):
        return a * np.exp(-k * (tt / scale) ** p)

    try:
        popt, pcov = optimize.curve_fit(f, t, y, p0=(max(y[0], 1e-3), 1.0), sigma=sigma,
                                        absolute_sigma=sigma is not None,
                                        bounds=([0, 0], [np.inf, np.inf]), max_nfev=10_000)
    except RuntimeError as exc:
        rss = float(np.sum((y - y.mean()) ** 2))
        raise FitError(f"{model} fit did not converge (rss of mean model {rss:.3e})") from exc
    a, k = popt
    rss = float(np.sum((y - f(t, *popt)) ** 2))
    k_err = math.sqrt(max(pcov[1, 1], 0.0)) if np.all(np.isfinite(pcov)) else math.inf
    if k <= NON_DECAYING:
        return CoherenceFit(model, math.inf, math.inf, float(a), rss, False)
    tau = scale * k ** (-1.0 / p)
    tau_err = tau * k_err / (p * k)
    return CoherenceFit(model, float(tau), float(tau_err), float(a), rss, True)


@dataclass
class SpectrumFit:
    noise: PowerLawNoise
    orders: tuple
    measured: np.ndarray
    predicted: np.ndarray

    @property
    def log_residual_rms(self):
        return float(np.sqrt(np.mean(np.log(self.predicted / self.measured) ** 2)))

    def report(self):
        lines = [f"amplitude: {self.noise.amplitude:.6e}", f"alpha: {self.noise.alpha:.6f}",
                 f"w_lo_rad_s: {self.noise.w_lo:.6e}", f"log_residual_rms: {self.log_residual_rms:.4f}",
                 "order,measured_ms,fitted_ms"]
        lines += [f"{n},{m * 1e3:.4f},{q * 1e3:.4f}" for n, m, q in
                  zip(self.orders, self.measured, self.predicted)]
        return "\n".join(lines) + "\n"


# measured 1/e times: Ramsey and Uhrig orders 1, 3, 5
MEASURED_TIMES = {0: 1.9e-3, 1: 3.2e-3, 3: 5.8e-3, 5: 8.0e-3}
DEFAULT_ALPHA = 2.0


def _powerlaw_times(x, alpha, orders):
    noise = PowerLawNoise(math.exp(x[0]), alpha, math.exp(x[1]))
    return noise, np.array([one_over_e_time(noise, uhrig(n), 1e-5, 1.0) for n in orders])


def fit_spectrum(measured=None, alpha=DEFAULT_ALPHA, w_lo0=2 * math.pi * 100.0):
    """Fit amplitude and low cutoff of a soft-cutoff power law to measured 1/e times.

    Least squares in log time.  The exponent is held at ``alpha``; with the
    default of 2 the model is an Ornstein-Uhlenbeck spectrum whose
    correlation time is 1 / w_lo.
    """
    measured = dict(MEASURED_TIMES if measured is None else measured)
    orders = tuple(sorted(measured))
    tm = np.array([measured[n] for n in orders])

    def resid(x):
        try:
            _, tp = _powerlaw_times(x, alpha, orders)
        except ValueError:
            return np.full(len(orders), 10.0)
        return np.log(tp / tm)

    # start from the amplitude that reproduces the first measured time
    unit = PowerLawNoise(1.0, alpha, w_lo0)
    x0 = [-math.log(chi(unit, uhrig(orders[0]), tm[0])), math.log(w_lo0)]
    sol = optimize.least_squares(resid, x0=x0, diff_step=1e-4, xtol=1e-8, ftol=1e-10)
    noise, tp = _powerlaw_times(sol.x, alpha, orders)
    return SpectrumFit(noise, orders, tm, tp)


# -- motional superpositions and field noise -------------------------------------------------

def motional_ramsey(noise, t_grid, echo_pulse=False, engine="grid"):
    """Contrast of a |0> + |1> Fock superposition whose phase follows the mode-frequency noise."""
    return coherence_decay(noise, echo() if echo_pulse else ramsey(), t_grid, engine)


def voltage_to_frequency_noise(relative_sigma, omega_z):
    """Axial frequency rms from a relative trap-voltage rms: w_z scales as sqrt(V)."""
    return 0.5 * omega_z * relative_sigma


def field_to_detuning(delta_b, sensitivity=const.QUBIT_FIELD_SENSITIVITY):
    """Qubit detuning (rad/s) for a field change ``delta_b`` (T) at ``sensitivity`` Hz/T."""
    return 2 * math.pi * sensitivity * np.asarray(delta_b)
