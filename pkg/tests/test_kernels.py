import math
import os
import subprocess
import sys

import numpy as np
import pytest

from kam3bp import _kernels
from kam3bp.bodies import MassParams
from kam3bp.charts import cartesian_from_perihelia, cartesian_from_rps, kepler_solve, perturbing_function
from tests.test_charts import MASSES, random_retrograde_state


def test_kepler_u_matches_scalar():
    rng = np.random.default_rng(0)
    ell = rng.uniform(-10, 10, 200)
    e = rng.uniform(0, 0.9, 200)
    u = _kernels.kepler_u(ell, e)
    for i in range(200):
        assert u[i] == pytest.approx(kepler_solve(ell[i], e[i]), abs=1e-12)


def _mass_tuple(masses):
    return (masses.reduced(1), masses.total(1), masses.reduced(2), masses.total(2))


def test_rps_kernel_parity_with_chart():
    from kam3bp.charts import rps_from_cartesian
    rng = np.random.default_rng(1)
    for _ in range(10):
        state = random_retrograde_state(rng)
        rps = rps_from_cartesian(state, MASSES)
        args = [np.array([v]) for v in
                (rps.Lambda1, rps.Lambda2, rps.lambda1, rps.lambda2, rps.eta1,
                 rps.xi1, rps.eta2, rps.xi2, rps.p, rps.q, rps.Z, rps.zeta)]
        comp = _kernels.rps_state_arrays(*args, *_mass_tuple(MASSES))
        ref = cartesian_from_rps(rps, MASSES).flat()
        # kernel output order: y1, y2, x1, x2 componentwise
        got = np.array([comp[i][0] for i in range(12)])
        ref_reordered = np.concatenate([ref[0:3], ref[3:6], ref[6:9], ref[9:12]])
        assert np.max(np.abs(got - ref_reordered)) < 1e-12


def test_peri_kernel_parity_with_chart():
    from kam3bp.charts import perihelia_from_cartesian
    rng = np.random.default_rng(2)
    for _ in range(10):
        state = random_retrograde_state(rng)
        peri = perihelia_from_cartesian(state, MASSES)
        args = [np.array([v]) for v in
                (peri.Lambda1, peri.Lambda2, peri.Gamma2, peri.Theta, peri.ell1,
                 peri.ell2, peri.g2, peri.vartheta, peri.G, peri.Z, peri.g, peri.zeta)]
        comp = _kernels.peri_state_arrays(*args, *_mass_tuple(MASSES))
        ref = cartesian_from_perihelia(peri, MASSES).flat()
        got = np.array([comp[i][0] for i in range(12)])
        assert np.max(np.abs(got - ref)) < 1e-12


def test_perturbing_parity():
    rng = np.random.default_rng(3)
    state = random_retrograde_state(rng)
    flat = state.flat()
    val = _kernels.perturbing_from_arrays(
        *[np.array([x]) for x in flat], MASSES.m0, MASSES.m1, MASSES.m2)
    assert val[0] == pytest.approx(perturbing_function(state, MASSES), rel=1e-14)


def test_nbody_two_body_circle():
    # mu = 0: planet 1 on an exact circular orbit, radius preserved to 1e-10
    masses = MassParams(m0=1.0, m1=1.0, m2=0.2, mu=0.0)
    mr, Mt = masses.reduced(1), masses.total(1)
    a = 0.5
    v = math.sqrt(Mt / a)
    state0 = np.array([0.0, mr * v, 0.0, 0.0, 0.0, mr * 0.5,
                       a, 0.0, 0.0, 2.0, 0.0, 0.0])
    period = 2 * math.pi * math.sqrt(a ** 3 / Mt)
    n_steps = 4000
    dt = 3 * period / n_steps
    samples, s, n_done, min_sep = _kernels.nbody_run(
        state0, dt, n_steps, 40, _kernels.YOSHIDA6,
        masses.reduced(1), masses.total(1), masses.reduced(2), masses.total(2),
        masses.m0, masses.m1, masses.m2, masses.mu, 1e-6)
    assert n_done == n_steps
    radii = np.sqrt(samples[:, 6] ** 2 + samples[:, 7] ** 2 + samples[:, 8] ** 2)
    assert np.max(np.abs(radii - a)) < 1e-10


def test_nbody_energy_and_momentum_drift():
    rng = np.random.default_rng(4)
    state = random_retrograde_state(rng)
    flat = state.flat()
    mt = _mass_tuple(MASSES)
    n_steps, stride = 20000, 100
    dt = 0.005
    samples, s, n_done, _ = _kernels.nbody_run(
        flat, dt, n_steps, stride, _kernels.YOSHIDA6, *mt,
        MASSES.m0, MASSES.m1, MASSES.m2, MASSES.mu, 1e-6)
    E, C = _kernels.energy_and_momentum(samples, *mt, MASSES.m0, MASSES.m1,
                                        MASSES.m2, MASSES.mu)
    assert np.max(np.abs(E - E[0])) < 1e-10 * abs(E[0])
    assert np.max(np.abs(C - C[0])) < 1e-12


def test_nbody_time_reversal():
    rng = np.random.default_rng(5)
    state = random_retrograde_state(rng)
    flat = state.flat()
    mt = _mass_tuple(MASSES)
    _, mid, _, _ = _kernels.nbody_run(flat, 0.004, 5000, 5000, _kernels.YOSHIDA6,
                                      *mt, MASSES.m0, MASSES.m1, MASSES.m2, MASSES.mu, 1e-6)
    _, back, _, _ = _kernels.nbody_run(mid, -0.004, 5000, 5000, _kernels.YOSHIDA6,
                                       *mt, MASSES.m0, MASSES.m1, MASSES.m2, MASSES.mu, 1e-6)
    assert np.max(np.abs(back - flat)) < 1e-8


def test_numpy_fallback_matches_numba():
    # run a tiny parity computation in a subprocess with numba disabled
    code = """
import numpy as np
from kam3bp import _accel, _kernels
assert not _accel.USE_NUMBA
ell = np.linspace(0, 6, 7); e = np.full(7, 0.3)
print(repr(_kernels.kepler_u(ell, e).sum()))
"""
    env = dict(os.environ, KAM3BP_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env, check=True)
    val_off = float(out.stdout.strip().replace("np.float64(", "").rstrip(")"))
    ell = np.linspace(0, 6, 7)
    e = np.full(7, 0.3)
    val_on = float(_kernels.kepler_u(ell, e).sum())
    assert val_off == pytest.approx(val_on, rel=1e-15)
