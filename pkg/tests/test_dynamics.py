import math

import numpy as np
import pytest

from kam3bp.averaging import (
    QuadratureConfig,
    elliptic_equilibrium_check,
    transverse_rate_full,
    transverse_rate_g2_mean,
    _symplectic_J,
)
from kam3bp.bodies import MassParams
from kam3bp.charts import PeriheliaCoords, RpsCoords
from kam3bp.dynamics import (
    FrequencySpectrum,
    IntegratorConfig,
    fast_frequencies,
    g_rps_drift,
    integrate,
    naff,
    phase_slope,
    secular_signals,
    stability_indicator,
    transverse_track,
    unstable_direction,
)

M_BASE = dict(m0=1.0, m1=1.0, m2=0.1)


def rps_seed(masses, a1=0.2, z=None, Z_frac=0.5):
    L1 = masses.lambda_of(1, a1)
    L2 = masses.lambda_of(2, 1.0)
    z = np.zeros(6) if z is None else np.asarray(z, dtype=float)
    return RpsCoords(Lambda1=L1, Lambda2=L2, lambda1=0.3, lambda2=2.1,
                     eta1=z[0], xi1=z[1], eta2=z[2], xi2=z[3], p=z[4], q=z[5],
                     Z=Z_frac * (L1 - L2), zeta=0.2)


# ------------------------------------------------------------------------ NAFF

def test_naff_two_frequency_synthetic():
    t = np.arange(0, 1000, 0.05)
    w1, w2 = 1.2345678901, 0.3456789012
    sig = 2.0 * np.exp(1j * (w1 * t + 0.3)) + 0.7 * np.exp(1j * (w2 * t - 1.1))
    f, a, r = naff(t, sig, n_freq=2)
    assert abs(f[0] - w1) < 1e-10
    assert abs(f[1] - w2) < 1e-10
    assert abs(a[0]) == pytest.approx(2.0, rel=1e-6)
    assert abs(a[1]) == pytest.approx(0.7, rel=1e-6)


def test_phase_slope_resolves_slow_rotation():
    t = np.linspace(0, 3e4, 2 ** 12)
    rate = 3e-7
    w = np.exp(1j * (rate * t + 0.2)) + 0.001 * np.exp(1j * 5.0 * t)
    assert phase_slope(t, w) == pytest.approx(rate, rel=1e-3)


# ------------------------------------------------------------------ integrator

def test_mu_zero_keplerian_semi_major_constant():
    masses = MassParams(mu=0.0, **M_BASE)
    seed = rps_seed(masses, z=[0.03, 0.0, -0.02, 0.01, 0.02, 0.0])
    traj = integrate(seed, masses, IntegratorConfig(dt=0.004, t_total=100.0, stride=20))
    from kam3bp.charts import CartesianState, _semi_major
    a_vals = [_semi_major(traj.samples[i][0:3], traj.samples[i][6:9], masses, 1)
              for i in range(len(traj.t))]
    assert np.max(np.abs(np.array(a_vals) - a_vals[0])) < 1e-10 * a_vals[0]


def test_energy_and_momentum_conservation():
    masses = MassParams(mu=1e-3, **M_BASE)
    seed = rps_seed(masses, z=[0.05, 0.0, -0.03, 0.02, 0.04, -0.01])
    traj = integrate(seed, masses, IntegratorConfig(dt=0.005, t_total=500.0, stride=100))
    E = traj.energies()
    C = traj.angular_momenta()
    assert np.max(np.abs(E - E[0])) < 1e-8 * abs(E[0])
    assert np.max(np.abs(C - C[0])) < 1e-10


def test_g_rps_first_integral_along_flow():
    masses = MassParams(mu=1e-3, **M_BASE)
    seed = rps_seed(masses, z=[0.05, 0.0, -0.03, 0.02, 0.04, -0.01])
    traj = integrate(seed, masses, IntegratorConfig(dt=0.005, t_total=300.0, stride=200))
    assert g_rps_drift(traj, masses) < 1e-8


def test_time_reversal():
    masses = MassParams(mu=1e-3, **M_BASE)
    seed = rps_seed(masses, z=[0.05, 0.0, -0.03, 0.02, 0.04, -0.01])
    fwd = integrate(seed, masses, IntegratorConfig(dt=0.004, t_total=40.0, stride=10000))
    from kam3bp.charts import CartesianState
    back = integrate(CartesianState.from_flat(fwd.samples[-1]), masses,
                     IntegratorConfig(dt=-0.004, t_total=40.0, stride=10000))
    start = integrate(seed, masses, IntegratorConfig(dt=0.004, t_total=0.004, stride=1)).samples[0]
    assert np.max(np.abs(back.samples[-1] - start)) < 1e-8


def test_collision_abort():
    from kam3bp.charts import CollisionError, CartesianState
    masses = MassParams(mu=1e-3, **M_BASE)
    # head-on: both planets on the x-axis moving toward each other
    state = CartesianState(y1=[0.25, 0.0, 0.0], y2=[-0.05, 0.0, 0.0],
                           x1=[0.4, 0.0, 0.0], x2=[1.0, 0.0, 0.0])
    with pytest.raises(CollisionError):
        integrate(state, masses, IntegratorConfig(dt=0.005, t_total=50.0, stride=10,
                                                  collision_factor=5e-3))


# ------------------------------------------------------------ fast frequencies

def test_fast_frequencies_match_mean_motions():
    masses = MassParams(mu=0.0, **M_BASE)
    seed = rps_seed(masses, z=[0.02, 0.01, -0.02, 0.0, 0.01, -0.01])
    traj = integrate(seed, masses, IntegratorConfig(dt=0.008, t_total=600.0, stride=25))
    spec = fast_frequencies(traj, masses)
    n1 = masses.mean_motion(1, seed.Lambda1)
    n2 = masses.mean_motion(2, seed.Lambda2)
    assert abs(spec.frequencies[0] - n1) < 1e-6 * n1
    assert abs(spec.frequencies[1] - n2) < 1e-6 * n2


def test_frequency_window_consistency():
    # quasi-periodicity: two disjoint windows give the same fast frequencies
    masses = MassParams(mu=1e-4, **M_BASE)
    seed = rps_seed(masses, z=[0.03, 0.0, -0.02, 0.01, 0.02, 0.0])
    traj = integrate(seed, masses, IntegratorConfig(dt=0.008, t_total=1200.0, stride=25))
    n = len(traj.t) // 2
    from dataclasses import replace
    half1 = replace(traj, t=traj.t[:n], samples=traj.samples[:n])
    half2 = replace(traj, t=traj.t[n:] - traj.t[n], samples=traj.samples[n:])
    s1 = fast_frequencies(half1, masses)
    s2 = fast_frequencies(half2, masses)
    for f1, f2 in zip(s1.frequencies, s2.frequencies):
        assert abs(f1 - f2) < 5e-6 * abs(f1)


# ------------------------------------------------------- slow-frequency scaling

@pytest.mark.slow
def test_slow_frequency_linear_in_mu():
    cfgq = QuadratureConfig(N=32)
    masses_ref = MassParams(mu=1e-5, **M_BASE)
    L1 = masses_ref.lambda_of(1, 0.2)
    L2 = masses_ref.lambda_of(2, 1.0)
    rep = elliptic_equilibrium_check(L1, L2, masses_ref, cfgq)
    eigval, eigvec = np.linalg.eig(_symplectic_J(3) @ rep.hessian)
    v = eigvec[:, int(np.argmax(eigval.imag))].real
    v /= np.linalg.norm(v)
    comp = int(np.argmax([np.hypot(v[0], v[1]), np.hypot(v[2], v[3]),
                          np.hypot(v[4], v[5])]))
    mus = (1e-5, 2e-5, 4e-5)
    rates = []
    for mu in mus:
        masses = MassParams(mu=mu, **M_BASE)
        seed = rps_seed(masses, z=0.04 * v)
        traj = integrate(seed, masses, IntegratorConfig(dt=0.008, t_total=3e4, stride=250))
        w = secular_signals(traj, masses)
        rates.append(abs(phase_slope(traj.t, w[:, comp])))
    expo = np.polyfit(np.log(mus), np.log(rates), 1)[0]
    assert expo == pytest.approx(1.0, abs=0.1)
    # and the rate itself is the averaged-model frequency times mu
    assert rates[0] == pytest.approx(1e-5 * rep.frequencies[0], rel=0.1)


# ------------------------------------------------------- stability indicators

def test_frozen_transverse_pair_at_mu_zero():
    # Kepler flow: each ellipse is fixed, so (Theta, vartheta) stay put
    masses = MassParams(m0=1.0, m1=1.0, m2=0.3, mu=0.0)
    L1 = masses.lambda_of(1, 0.25)
    L2 = masses.lambda_of(2, 1.0)
    pt = PeriheliaCoords(Lambda1=L1, Lambda2=L2, Gamma2=0.28, Theta=0.0,
                         G=0.155, Z=0.05, ell1=0.4, ell2=2.2, g2=1.0,
                         vartheta=0.0, g=0.6, zeta=0.1)
    traj = integrate(pt, masses, IntegratorConfig(dt=0.005, t_total=50.0, stride=100))
    Th, vt = transverse_track(traj, masses)
    assert np.max(np.abs(Th)) < 1e-12
    assert np.max(np.abs(vt)) < 1e-9


def test_elliptic_seed_stays_bounded():
    masses = MassParams(mu=1e-2, **M_BASE)
    seed = rps_seed(masses, z=[0.03, 0.0, -0.02, 0.01, 0.02, -0.01])
    cfg = IntegratorConfig(dt=0.008, t_total=2.5e4, stride=500)
    rep = stability_indicator(seed, masses, cfg)
    assert rep["classification"] == "elliptic"
    assert rep["z_max"] <= 2.0 * rep["z0"]


@pytest.mark.slow
def test_hyperbolic_seed_efolds_at_reference_rate():
    masses = MassParams(m0=1.0, m1=1.0, m2=0.3, mu=0.01)
    L1 = masses.lambda_of(1, 0.25)
    L2 = masses.lambda_of(2, 1.0)
    G2v, G = 0.28, 0.155
    cfgq = QuadratureConfig(N=32)
    _, hess, _ = transverse_rate_full(L1, L2, G2v, G, masses, cfgq, g2=1.0)
    mean_rate, _ = transverse_rate_g2_mean(L1, L2, G2v, G, masses, cfgq)
    v = unstable_direction(hess)
    delta = 1e-4
    pt = PeriheliaCoords(Lambda1=L1, Lambda2=L2, Gamma2=G2v, Theta=delta * v[0],
                         G=G, Z=0.35 * G, ell1=0.4, ell2=2.2, g2=1.0,
                         vartheta=delta * v[1], g=0.6, zeta=0.1)
    mu_rate = masses.mu * mean_rate
    cfg = IntegratorConfig(dt=0.002, t_total=8.0 / mu_rate, stride=4000)
    rep = stability_indicator(pt, masses, cfg, reference_rate=mu_rate,
                              rate_window=(4.0, 60.0))
    assert rep["classification"] == "hyperbolic"
    assert rep["rate_ratio"] == pytest.approx(1.0, abs=0.2)
