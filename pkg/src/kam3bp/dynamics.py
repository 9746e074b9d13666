"""Integration of the full two-planet Hamiltonian and frequency analysis.

The integrator is the kick-drift-kick Yoshida-6 composition from `_kernels`
(the Hamiltonian splits exactly into impulse-only and position-only parts,
coupling included).  Frequency extraction is two-scale: the fast pair by
iterated windowed-correlation refinement of the mean-longitude phasors, the
slow block by unwrapped-phase regression of the secular complex variables,
which resolves rates far below one cycle per window.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels
from .bodies import MassParams
from .charts import (
    CartesianState,
    CollisionError,
    PeriheliaCoords,
    RpsCoords,
    g_rps,
    perihelia_from_cartesian,
    rps_from_cartesian,
    to_cartesian,
    wrap_pi,
)


@dataclass
class IntegratorConfig:
    dt: float
    t_total: float
    stride: int = 10
    scheme: str = "yoshida6"  # or "leapfrog"
    collision_factor: float = 1e-3  # of the outer semi-major axis

    def __post_init__(self):
        if self.dt == 0 or self.t_total <= 0:
            raise ValueError("need dt != 0 and t_total > 0")
        if self.scheme not in ("yoshida6", "leapfrog"):
            raise ValueError(f"unknown scheme {self.scheme}")


@dataclass
class Trajectory:
    t: np.ndarray
    samples: np.ndarray  # (n, 12) flat cartesian states
    masses: MassParams
    completed: bool
    min_separation: float

    def state(self, i):
        return CartesianState.from_flat(self.samples[i])

    def energies(self):
        E, _ = _kernels.energy_and_momentum(
            self.samples, self.masses.reduced(1), self.masses.total(1),
            self.masses.reduced(2), self.masses.total(2), self.masses.m0,
            self.masses.m1, self.masses.m2, self.masses.mu)
        return E

    def angular_momenta(self):
        _, C = _kernels.energy_and_momentum(
            self.samples, self.masses.reduced(1), self.masses.total(1),
            self.masses.reduced(2), self.masses.total(2), self.masses.m0,
            self.masses.m1, self.masses.m2, self.masses.mu)
        return C

    def to_csv(self, path, chart="cartesian"):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if chart == "cartesian":
                w.writerow(["t"] + [f"{v}{i}{c}" for v in ("y", "x")
                                    for i in (1, 2) for c in "xyz"])
                for ti, row in zip(self.t, self.samples):
                    w.writerow([ti] + list(row))
            elif chart == "rps":
                fields = ["Lambda1", "Lambda2", "lambda1", "lambda2", "eta1",
                          "xi1", "eta2", "xi2", "p", "q", "Z", "zeta"]
                w.writerow(["t"] + fields)
                for ti, row in zip(self.t, self.samples):
                    rps = rps_from_cartesian(CartesianState.from_flat(row), self.masses)
                    w.writerow([ti] + [getattr(rps, f) for f in fields])
            else:
                raise ValueError(chart)


def integrate(state, masses, cfg):
    """Integrate from a state (any chart); collision aborts raise."""
    cart = to_cartesian(state, masses)
    a2 = _outer_semi_major(cart, masses)
    n_steps = int(round(cfg.t_total / abs(cfg.dt)))
    weights = _kernels.YOSHIDA6 if cfg.scheme == "yoshida6" else _kernels.LEAPFROG
    samples, final, n_done, min_sep = _kernels.nbody_run(
        cart.flat(), cfg.dt, n_steps, cfg.stride, weights,
        masses.reduced(1), masses.total(1), masses.reduced(2), masses.total(2),
        masses.m0, masses.m1, masses.m2, masses.mu,
        cfg.collision_factor * a2)
    completed = n_done == n_steps
    t = np.arange(samples.shape[0]) * cfg.stride * cfg.dt
    traj = Trajectory(t=t, samples=samples, masses=masses, completed=completed,
                      min_separation=min_sep)
    if not completed:
        raise CollisionError(
            f"close approach at separation {min_sep:.3e} after t={n_done * cfg.dt:.3f}")
    return traj


def _outer_semi_major(cart, masses):
    from .charts import _semi_major
    return max(_semi_major(cart.y1, cart.x1, masses, 1),
               _semi_major(cart.y2, cart.x2, masses, 2))


# ----------------------------------------------------------- frequency analysis

@dataclass
class FrequencySpectrum:
    frequencies: list
    amplitudes: list
    residual: float
    method: str
    verdict: str = "quasi-periodic"
    diophantine: dict = None

    def to_json_dict(self):
        return {"frequencies": list(self.frequencies),
                "amplitudes": [[a.real, a.imag] for a in self.amplitudes],
                "residual": self.residual, "method": self.method,
                "verdict": self.verdict, "diophantine": self.diophantine}


def _window(n):
    # Hann window, mean-normalized
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))
    return w / w.mean()


def _refine_peak(t, s, w, omega_seed, half_width):
    """Golden-section maximization of |<s, w e^{i omega t}>| around a seed."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0

    def corr(omega):
        return abs(np.mean(s * w * np.exp(-1j * omega * t)))

    a, b = omega_seed - half_width, omega_seed + half_width
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = corr(c), corr(d)
    for _ in range(120):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = corr(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = corr(d)
    return 0.5 * (a + b)


def naff(t, signal, n_freq=1, sweeps=3):
    """Iterative refinement of the strongest frequencies of a complex signal.

    FFT peak as the seed, golden-section maximization of the windowed
    correlation, projection of the converged component, repeat; then a few
    re-orthogonalization sweeps (each component re-refined against the signal
    minus the others) to remove mutual window leakage.  Returns
    (freqs, amps, residual_fraction).
    """
    t = np.asarray(t, dtype=float)
    sig = np.asarray(signal, dtype=complex)
    s = sig.copy()
    n = len(t)
    dt = t[1] - t[0]
    w = _window(n)
    norm0 = np.linalg.norm(sig)
    bin_w = 2.0 * np.pi / (n * dt)
    freqs, amps = [], []
    for _ in range(n_freq):
        F = np.fft.fft(s * w)
        grid = 2.0 * np.pi * np.fft.fftfreq(n, d=dt)
        omega = _refine_peak(t, s, w, grid[int(np.argmax(np.abs(F)))], bin_w)
        amp = np.mean(s * np.exp(-1j * omega * t))
        s = s - amp * np.exp(1j * omega * t)
        freqs.append(omega)
        amps.append(amp)
    for _ in range(sweeps if n_freq > 1 else 0):
        for k in range(n_freq):
            rest = sig.copy()
            for j in range(n_freq):
                if j != k:
                    rest -= amps[j] * np.exp(1j * freqs[j] * t)
            freqs[k] = _refine_peak(t, rest, w, freqs[k], 0.5 * bin_w)
            amps[k] = np.mean(rest * np.exp(-1j * freqs[k] * t))
    s = sig.copy()
    for fq, am in zip(freqs, amps):
        s -= am * np.exp(1j * fq * t)
    residual = float(np.linalg.norm(s) / norm0) if norm0 > 0 else 0.0
    return [float(f) for f in freqs], [complex(a) for a in amps], residual


def phase_slope(t, w):
    """Mean rotation rate of a complex signal from its unwrapped phase.

    Resolves rates far below one revolution per window; fast quasi-periodic
    wiggles average out in the regression.
    """
    ph = np.unwrap(np.angle(w))
    return float(np.polyfit(t, ph, 1)[0])


def fast_frequencies(traj, masses, refine=True):
    """Mean-motion pair from the mean-longitude phasors (NAFF)."""
    lam1 = np.empty(len(traj.t))
    lam2 = np.empty(len(traj.t))
    for i, row in enumerate(traj.samples):
        rps = rps_from_cartesian(CartesianState.from_flat(row), masses)
        lam1[i] = rps.lambda1
        lam2[i] = rps.lambda2
    out = []
    res = 0.0
    for lam in (lam1, lam2):
        f, a, r = naff(traj.t, np.exp(1j * lam), n_freq=1)
        out.append(f[0])
        res = max(res, r)
    return FrequencySpectrum(frequencies=out, amplitudes=[1.0 + 0j, 1.0 + 0j],
                             residual=res, method="naff")


def secular_signals(traj, masses):
    """Complex secular variables w1, w2, w3 = (eta+i xi)_1,2, (p+iq)."""
    n = len(traj.t)
    w = np.empty((n, 3), dtype=complex)
    for i, row in enumerate(traj.samples):
        rps = rps_from_cartesian(CartesianState.from_flat(row), masses)
        w[i, 0] = rps.eta1 + 1j * rps.xi1
        w[i, 1] = rps.eta2 + 1j * rps.xi2
        w[i, 2] = rps.p + 1j * rps.q
    return w


def slow_rotation_rate(traj, masses, component=0):
    """Secular precession rate of one rps pair (unwrapped-phase slope)."""
    w = secular_signals(traj, masses)
    return phase_slope(traj.t, w[:, component])


def g_rps_drift(traj, masses):
    vals = np.empty(len(traj.t))
    for i, row in enumerate(traj.samples):
        vals[i] = g_rps(rps_from_cartesian(CartesianState.from_flat(row), masses))
    return float(np.max(np.abs(vals - vals[0])))


# --------------------------------------------------------- stability indicators

def transverse_track(traj, masses):
    """(Theta(t), vartheta(t)) along a trajectory, perihelion chart."""
    Th = np.empty(len(traj.t))
    vt = np.empty(len(traj.t))
    for i, row in enumerate(traj.samples):
        peri = perihelia_from_cartesian(CartesianState.from_flat(row), masses,
                                        strict=False)
        Th[i] = peri.Theta
        vt[i] = wrap_pi(peri.vartheta)
    return Th, vt


def stability_indicator(seed, masses, cfg, kind="auto", reference_rate=None,
                        rate_window=(3.0, 20.0)):
    """Finite-time transverse growth classification near the two manifolds.

    rps seeds: |z(t)| is tracked; bounded by twice its start -> "elliptic".
    perihelia seeds: the transverse pair norm sqrt(Theta^2/G^2 + vartheta^2)
    is tracked; exponential growth fits a rate, compared to reference_rate
    when given.  Returns a report dict; an inconclusive verdict is allowed.
    """
    if kind == "auto":
        kind = "rps" if isinstance(seed, RpsCoords) else "perihelia"
    traj = integrate(seed, masses, cfg)
    report = {"kind": kind, "t_total": cfg.t_total}
    if kind == "rps":
        w = secular_signals(traj, masses)
        znorm = np.sqrt(np.sum(np.abs(w) ** 2, axis=1))
        report["z0"] = float(znorm[0])
        report["z_max"] = float(np.max(znorm))
        bounded = report["z_max"] <= 2.0 * report["z0"]
        report["classification"] = "elliptic" if bounded else "inconclusive"
        return report
    Th, vt = transverse_track(traj, masses)
    G = perihelia_from_cartesian(traj.state(0), masses, strict=False).G
    norm = np.sqrt((Th / G) ** 2 + vt ** 2)
    report["transverse0"] = float(norm[0])
    report["transverse_max"] = float(np.max(norm))
    lo, hi = rate_window
    mask = (norm > lo * norm[0]) & (norm < hi * norm[0])
    if norm[0] == 0 or mask.sum() < 8:
        report["classification"] = "inconclusive"
        return report
    rate = float(np.polyfit(traj.t[mask], np.log(norm[mask]), 1)[0])
    report["rate"] = rate
    report["classification"] = "hyperbolic" if rate > 0 else "inconclusive"
    if reference_rate is not None:
        report["reference_rate"] = reference_rate
        report["rate_ratio"] = rate / reference_rate
    return report


def unstable_direction(hessian):
    """Unit unstable eigenvector of the transverse linearization J2 @ B."""
    J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    eig, vec = np.linalg.eig(J2 @ np.asarray(hessian, dtype=float))
    idx = int(np.argmax(eig.real))
    v = vec[:, idx].real
    return v / np.linalg.norm(v)
