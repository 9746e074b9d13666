import math
import warnings

import numpy as np
import pytest

from kam3bp.averaging import QuadratureConfig
from kam3bp.bnf import (
    BnfError,
    PAIR_J6,
    PolyEvaluator,
    bnf_from_fav,
    birkhoff_normalize,
    diagonalize_quadratic,
    make_fav_evaluator,
    map_points_to_raw,
    normal_form_coefficients,
    remainder_scaling,
    taylor_from_samples,
)
from kam3bp.bodies import MassParams
from kam3bp.tfseries import Monomial, TFSeries, realify_complex_pairs

MASSES = MassParams(m0=1.0, m1=1.0, m2=0.1, mu=1e-3)
SQ2 = math.sqrt(2.0)


def make_poly_evaluator(poly):
    ev = PolyEvaluator(poly)

    def f(pts):
        pts = np.atleast_2d(pts)
        eta = pts[:, 0::2]
        xi = pts[:, 1::2]
        U = (eta - 1j * xi) / SQ2
        V = (eta + 1j * xi) / (1j * SQ2)
        vals = ev.value(U, V)
        return vals.real

    return f


def balanced_test_poly():
    """Real, charge-balanced (charges -1,1,1) polynomial with elliptic part."""
    poly = TFSeries(0, 3)
    poly._add_term(Monomial((), (), (0, 0, 0), (0, 0, 0)), 0.37)
    for k, om in enumerate([0.9, 0.53, 0.21]):
        e = tuple(1 if j == k else 0 for j in range(3))
        poly._add_term(Monomial((), (), e, e), 1j * om)
    c = 0.11 + 0.04j
    poly._add_term(Monomial((), (), (1, 1, 0), (0, 0, 0)), c)
    poly._add_term(Monomial((), (), (0, 0, 0), (1, 1, 0)), np.conj(c) * 1j ** 2)
    poly._add_term(Monomial((), (), (1, 1, 1), (1, 1, 1)), 0.23j)
    poly._add_term(Monomial((), (), (2, 0, 0), (2, 0, 0)), -0.5)
    return poly


# -------------------------------------------------------------- diagonalization

def test_diagonalize_identity_on_diagonal_input():
    A = np.diag([0.5, 0.5, -0.2, -0.2, 0.9, 0.9])
    M, Om = diagonalize_quadratic(A)
    assert np.allclose(M, np.eye(6))
    assert np.allclose(Om, [0.5, -0.2, 0.9])


def test_diagonalize_recovers_rotated_form():
    # eigen-decomposition oracle: conjugate a known form by a random symplectic
    from scipy.linalg import expm
    rng = np.random.default_rng(0)
    S = rng.normal(size=(6, 6))
    S = 0.3 * (S + S.T)
    R = expm(PAIR_J6 @ S)
    D = np.diag([1.3, 1.3, 0.7, 0.7, -0.4, -0.4])
    A = R.T @ D @ R
    M, Om = diagonalize_quadratic(A)
    assert np.allclose(sorted(Om), [-0.4, 0.7, 1.3], atol=1e-10)
    assert np.max(np.abs(M.T @ PAIR_J6 @ M - PAIR_J6)) < 1e-10
    assert np.max(np.abs(M.T @ A @ M - np.diag(np.repeat(Om, 2)))) < 1e-10


def test_diagonalize_random_elliptic_symplecticity():
    from scipy.linalg import expm
    rng = np.random.default_rng(1)
    for _ in range(5):
        S = rng.normal(size=(6, 6))
        S = 0.25 * (S + S.T)
        R = expm(PAIR_J6 @ S)
        vals = rng.uniform(0.2, 2.0, 3) * rng.choice([-1.0, 1.0], 3)
        while np.min(np.abs(np.diff(np.sort(np.abs(vals))))) < 0.05:
            vals = rng.uniform(0.2, 2.0, 3) * rng.choice([-1.0, 1.0], 3)
        A = R.T @ np.diag(np.repeat(vals, 2)) @ R
        M, Om = diagonalize_quadratic(A)
        assert np.max(np.abs(M.T @ PAIR_J6 @ M - PAIR_J6)) < 1e-10


def test_diagonalize_rejects_hyperbolic():
    A = np.diag([1.0, -1.0, 0.5, 0.5, 0.9, 0.9])  # saddle pair
    with pytest.raises(BnfError):
        diagonalize_quadratic(A)


# ------------------------------------------------------------ Taylor extraction

def test_extraction_recovers_polynomial():
    poly = balanced_test_poly()
    ext = taylor_from_samples(make_poly_evaluator(poly), 6, 0.4, charges=(-1, 1, 1))
    assert (ext - poly).max_amplitude() < 1e-8


# -------------------------------------------------------------------- BNF core

def test_single_oscillator_quartic_oracle():
    # H = Omega r + c eta^4: angle averaging gives the degree-4 normal form
    # (3/2) c r^2, i.e. torsion 3c; higher generators cannot touch it
    Om = (0.31, 1.0, 1.37)
    h = TFSeries(0, 3)
    for k, om in enumerate(Om):
        e = tuple(1 if j == k else 0 for j in range(3))
        h._add_term(Monomial((), (), e, e), 1j * om)
    cq = 0.07
    H = h.copy()
    for j in range(5):
        coeff = cq * math.comb(4, j) * (1j) ** j / 4.0
        H._add_term(Monomial((), (), (4 - j, 0, 0), (j, 0, 0)), coeff)
    normal, gens, resid = birkhoff_normalize(H, np.array(Om), s=2)
    C0, Om2, T, Pj = normal_form_coefficients(normal)
    assert np.allclose(Om2, Om, rtol=1e-13)
    assert T[0, 0] == pytest.approx(3 * cq, rel=1e-12)
    assert resid.max_amplitude() < 1e-14


def test_normalize_harmonic_is_identity():
    Om = (0.31, 1.0, 1.37)
    h = TFSeries(0, 3)
    for k, om in enumerate(Om):
        e = tuple(1 if j == k else 0 for j in range(3))
        h._add_term(Monomial((), (), e, e), 1j * om)
    normal, gens, resid = birkhoff_normalize(h, np.array(Om), s=3)
    assert not gens
    C0, Om2, T, Pj = normal_form_coefficients(normal)
    assert C0 == 0.0
    assert np.allclose(Om2, Om)
    assert np.allclose(T, 0.0)
    assert not Pj


def test_resonance_detected():
    from kam3bp.tfseries import ResonanceError
    h = TFSeries(0, 3)
    Om = (1.0, 0.5, 0.25)  # 1 - 2*0.5 = 0 resonance
    for k, om in enumerate(Om):
        e = tuple(1 if j == k else 0 for j in range(3))
        h._add_term(Monomial((), (), e, e), 1j * om)
    with pytest.raises(ResonanceError):
        birkhoff_normalize(h, np.array(Om), s=2)


# --------------------------------------------------------------- full pipeline

@pytest.fixture(scope="module")
def fav_setup():
    L1 = MASSES.lambda_of(1, 0.13)
    L2 = MASSES.lambda_of(2, 1.0)
    cfg = QuadratureConfig(N=32)
    ev = make_fav_evaluator(L1, L2, MASSES, cfg)
    return L1, L2, cfg, ev


@pytest.fixture(scope="module")
def bnf_s2(fav_setup):
    L1, L2, cfg, ev = fav_setup
    return bnf_from_fav(L1, L2, MASSES, s=2, cfg=cfg, radius=0.05, evaluator=ev)


def test_bnf_torsion_properties(bnf_s2):
    res = bnf_s2
    assert np.max(np.abs(res.T - res.T.T)) < 1e-10  # symmetric by construction
    det = np.linalg.det(res.T)
    scale = float(np.max(np.abs(res.T))) ** 3
    assert abs(det) > 1e-8 * scale
    # frequencies match the quadratic diagonalization to high accuracy
    assert np.allclose(res.Omega, res.meta["Omega_quadratic"], rtol=2e-3)


def test_bnf_torsion_radius_consistency(fav_setup):
    # T independent of the extraction radius
    L1, L2, cfg, ev = fav_setup
    r1 = bnf_from_fav(L1, L2, MASSES, s=2, cfg=cfg, radius=0.05, evaluator=ev)
    r2 = bnf_from_fav(L1, L2, MASSES, s=2, cfg=cfg, radius=0.035, evaluator=ev)
    # truncation bias O(radius^4) and sampling noise bound the achievable
    # agreement; 1e-3 relative is the honest double-precision level here
    assert np.max(np.abs(r1.T - r2.T)) < 1e-3 * np.max(np.abs(r1.T))


def test_bnf_remainder_scaling_s2(fav_setup, bnf_s2):
    L1, L2, cfg, ev = fav_setup
    radii = np.geomspace(0.03, 0.3, 5)
    rem = remainder_scaling(bnf_s2, radii, ev, n_dirs=12, seed=1)
    # conforms to the stated upper bound eps^(2s+1); the even symmetry of the
    # averaged coupling makes the sharp rate 2s+2
    assert rem["exponent"] >= 5 - 0.3
    assert rem["exponent"] <= 7.0


def test_bnf_charge_invariant_preserved(bnf_s2):
    # the conserved rotation diagonalizes along with the Hessian: charges are
    # all +-1 and every generator is charge-balanced, so the quadratic first
    # integral is untouched by the normalization
    res = bnf_s2
    assert set(res.charges) <= {-1, 1}
    for gen in res.generators:
        for mo, _ in gen.items():
            bal = sum(s * (a - b) for s, a, b in zip(res.charges, mo.alpha, mo.beta))
            assert bal == 0


def test_exact_polynomial_input_zero_remainder():
    # run the pipeline on a degree-4 polynomial: post-normalization remainder
    # at machine/extraction level for all radii, no power law left
    poly = balanced_test_poly()
    fev = make_poly_evaluator(poly)
    res = bnf_from_fav(None, None, None, s=3, cfg=QuadratureConfig(N=8),
                       radius=0.3, evaluator=fev)
    rem = remainder_scaling(res, [0.05, 0.1, 0.2, 0.4], fev, n_dirs=8, seed=2)
    assert max(rem["sup_norms"]) < 1e-6


def test_map_points_roundtrip_real(bnf_s2):
    rng = np.random.default_rng(3)
    z = 0.05 * rng.normal(size=(6, 6))
    raw = map_points_to_raw(bnf_s2, z)
    assert raw.shape == z.shape
    assert np.all(np.isfinite(raw))
    # the map is near identity at small amplitude (linear part + small flows)
    lin = z @ bnf_s2.linear_map.T
    assert np.max(np.abs(raw - lin)) < 0.2 * np.max(np.abs(lin))
