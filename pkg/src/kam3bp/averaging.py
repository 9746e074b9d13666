"""Double averaging over the fast angles, quadrupole extraction, and the
elliptic/hyperbolic equilibrium verification.

The average is a tensor trapezoid rule on [0, 2pi)^2, which is spectrally
accurate for the analytic integrands at hand.  The elliptic side works in
the regularized chart at z = 0, the hyperbolic side in the perihelion chart
at (Theta, vartheta) = (0, 0) through the alpha^2 coefficient of the
normalized averaged coupling.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels
from .bodies import MassParams
from .charts import (
    CollisionError,
    Elements,
    PeriheliaCoords,
    RpsCoords,
    cartesian_from_perihelia,
    elements_from_cartesian,
    rotate,
    K3,
)


@dataclass
class QuadratureConfig:
    """N: nodes per angle (even, >= 8); fd_step: relative step for secular
    derivatives (4th-order central stencils)."""

    N: int = 64
    fd_step: float = 1e-3

    def __post_init__(self):
        if self.N < 8 or self.N % 2:
            raise ValueError("N must be even and >= 8")


@dataclass
class EquilibriumReport:
    gradient_norm: float
    hessian: np.ndarray
    eigenvalues: np.ndarray
    classification: str
    frequencies: np.ndarray = None
    rate: float = None
    quadrature: dict = None

    def to_json_dict(self):
        out = {
            "gradient_norm": self.gradient_norm,
            "hessian": np.asarray(self.hessian).tolist(),
            "eigenvalues": [[z.real, z.imag] for z in np.asarray(self.eigenvalues)],
            "classification": self.classification,
            "quadrature": self.quadrature,
        }
        if self.frequencies is not None:
            out["frequencies"] = np.asarray(self.frequencies).tolist()
        if self.rate is not None:
            out["rate"] = self.rate
        return out


def grid_average(fn, N):
    """Tensor-trapezoid mean of fn(l1, l2) over the torus (synthetic tests)."""
    l = np.linspace(0.0, 2.0 * np.pi, N, endpoint=False)
    L1, L2 = np.meshgrid(l, l, indexing="ij")
    return float(np.mean(fn(L1, L2)))


def _mass_tuple(masses):
    return (masses.reduced(1), masses.total(1), masses.reduced(2), masses.total(2))


def average_fast_angles(point, masses, cfg=None):
    """Mean of the perturbing function over the two fast angles at the given
    secular point (rps or perihelia chart)."""
    cfg = cfg or QuadratureConfig()
    N = cfg.N
    l = np.linspace(0.0, 2.0 * np.pi, N, endpoint=False)
    A1, A2 = np.meshgrid(l, l, indexing="ij")
    A1 = np.ascontiguousarray(A1.ravel())
    A2 = np.ascontiguousarray(A2.ravel())
    ones = np.ones_like(A1)
    if isinstance(point, RpsCoords):
        comp = _kernels.rps_state_arrays(
            point.Lambda1 * ones, point.Lambda2 * ones, A1, A2,
            point.eta1 * ones, point.xi1 * ones, point.eta2 * ones,
            point.xi2 * ones, point.p * ones, point.q * ones,
            point.Z * ones, point.zeta * ones, *_mass_tuple(masses))
    elif isinstance(point, PeriheliaCoords):
        comp = _kernels.peri_state_arrays(
            point.Lambda1 * ones, point.Lambda2 * ones, point.Gamma2 * ones,
            point.Theta * ones, A1, A2, point.g2 * ones, point.vartheta * ones,
            point.G * ones, point.Z * ones, point.g * ones, point.zeta * ones,
            *_mass_tuple(masses))
    else:
        raise TypeError("point must be RpsCoords or PeriheliaCoords")
    vals = _kernels.perturbing_from_arrays(*comp, masses.m0, masses.m1, masses.m2)
    if not np.all(np.isfinite(vals)):
        raise CollisionError("collision on the averaging grid")
    return float(np.mean(vals))


def average_from_elements(el1, el2, masses, cfg=None):
    """Double average with both orbits held fixed as geometric ellipses."""
    cfg = cfg or QuadratureConfig()
    N = cfg.N
    frames = []
    for el in (el1, el2):
        node_dir = np.array([math.cos(el.node), math.sin(el.node), 0.0])
        h_dir = rotate(K3, node_dir, el.inc)
        P = rotate(node_dir, h_dir, el.argp)
        Q = np.cross(h_dir, P)
        frames.append((P, Q))
    l = np.linspace(0.0, 2.0 * np.pi, N, endpoint=False)
    A1, A2 = np.meshgrid(l, l, indexing="ij")
    A1 = np.ascontiguousarray(A1.ravel())
    A2 = np.ascontiguousarray(A2.ravel())
    states = []
    for i, (el, (P, Q), ell) in enumerate(zip((el1, el2), frames, (A1, A2)), start=1):
        mr, Mt = masses.reduced(i), masses.total(i)
        ones = np.ones_like(ell)
        states.append(_kernels._ellipse_state(
            el.a * ones, el.e * ones, P[0] * ones, P[1] * ones, P[2] * ones,
            Q[0] * ones, Q[1] * ones, Q[2] * ones, ell, mr, Mt))
    s1, s2 = states
    vals = _kernels.perturbing_from_arrays(
        s1[0], s1[1], s1[2], s2[0], s2[1], s2[2],
        s1[3], s1[4], s1[5], s2[3], s2[4], s2[5],
        masses.m0, masses.m1, masses.m2)
    if not np.all(np.isfinite(vals)):
        raise CollisionError("collision on the averaging grid")
    return float(np.mean(vals))


# ------------------------------------------------------- quadrupole extraction

class ExtractionError(RuntimeError):
    """The alpha-power fit did not represent the averaged coupling."""


def quadrupole_P(Lambda1, Lambda2, Gamma2, Theta, vartheta, G, masses,
                 cfg=None, g2=0.0, residual_tol=1e-3, node_scale=1.0):
    """Coefficient of alpha^2 in -(a2/(m1 m2)) f_av - 1.

    The orbital shape (eccentricities, mutual geometry, perihelion angles)
    is held fixed while a1 runs through alpha0 * node_scale * (1, 1/2, 1/4);
    a Vandermonde solve in powers (2, 3, 4) isolates the quadrupole
    coefficient.  A fourth node at half the smallest one measures the fit
    residual; relative residuals above residual_tol raise
    :class:`ExtractionError`.  node_scale < 1 re-extracts the same shape from
    smaller nodes (consistency probes).
    """
    cfg = cfg or QuadratureConfig()
    peri = PeriheliaCoords(Lambda1=Lambda1, Lambda2=Lambda2, Gamma2=Gamma2,
                           Theta=Theta, G=G, Z=0.35 * G, ell1=0.0, ell2=0.0,
                           g2=g2, vartheta=vartheta, g=0.0, zeta=0.0)
    state = cartesian_from_perihelia(peri, masses)
    el1 = elements_from_cartesian(state.y1, state.x1, masses, 1)
    el2 = elements_from_cartesian(state.y2, state.x2, masses, 2)
    alpha0 = el1.a / el2.a * node_scale
    if not alpha0 < 1.0:
        raise ValueError("require a1 < a2")
    return _quadrupole_from_elements(el1, el2, alpha0, masses, cfg, residual_tol)


def _quadrupole_from_elements(el1, el2, alpha0, masses, cfg, residual_tol):
    from dataclasses import replace

    alphas = np.array([alpha0, alpha0 / 2.0, alpha0 / 4.0])
    gvals = []
    for al in alphas:
        el1a = replace(el1, a=al * el2.a)
        fav = average_from_elements(el1a, el2, masses, cfg)
        gvals.append(-(el2.a / (masses.m1 * masses.m2)) * fav - 1.0)
    V = np.column_stack([alphas ** 2, alphas ** 3, alphas ** 4])
    coeffs = np.linalg.solve(V, np.array(gvals))
    P = float(coeffs[0])
    # residual probe at alpha0/8
    al = alpha0 / 8.0
    fav = average_from_elements(replace(el1, a=al * el2.a), el2, masses, cfg)
    g_probe = -(el2.a / (masses.m1 * masses.m2)) * fav - 1.0
    model = coeffs @ np.array([al ** 2, al ** 3, al ** 4])
    denom = max(abs(P) * al ** 2, 1e-300)
    residual = abs(g_probe - model) / denom
    if residual > residual_tol:
        raise ExtractionError(f"alpha-fit residual {residual:.2e} above {residual_tol:.2e}")
    return P


# ------------------------------------------------------- equilibrium checking

_J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _symplectic_J(m):
    J = np.zeros((2 * m, 2 * m))
    for k in range(m):
        J[2 * k, 2 * k + 1] = 1.0
        J[2 * k + 1, 2 * k] = -1.0
    return J


def fd_gradient(f, x0, steps):
    g = np.zeros(len(x0))
    for i, h in enumerate(steps):
        vals = []
        for shift in (2, 1, -1, -2):
            v = x0.copy()
            v[i] += shift * h
            vals.append(f(v))
        g[i] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
    return g


def fd_hessian(f, x0, steps):
    n = len(x0)
    H = np.zeros((n, n))
    f0 = f(x0)
    for i in range(n):
        h = steps[i]
        vals = []
        for shift in (2, 1, -1, -2):
            v = x0.copy()
            v[i] += shift * h
            vals.append(f(v))
        H[i, i] = (-vals[0] + 16 * vals[1] - 30 * f0 + 16 * vals[2] - vals[3]) / (12 * h * h)
    for i in range(n):
        for j in range(i + 1, n):
            def cross(hi, hj):
                tot = 0.0
                for si, sj, w in ((1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)):
                    v = x0.copy()
                    v[i] += si * hi
                    v[j] += sj * hj
                    tot += w * f(v)
                return tot / (4 * hi * hj)
            d1 = cross(steps[i], steps[j])
            d2 = cross(steps[i] / 2, steps[j] / 2)
            H[i, j] = H[j, i] = (4 * d2 - d1) / 3.0  # Richardson to 4th order
    return H


def elliptic_equilibrium_check(Lambda1, Lambda2, masses, cfg=None, Z_frac=0.5):
    """Gradient/Hessian of the averaged perturbing function in z at z = 0.

    Returns an EquilibriumReport with the linearization spectrum of the
    secular quadratic part: purely imaginary conjugate pairs +- i Omega_k for
    an elliptic equilibrium, with frequencies Omega sorted descending.
    """
    cfg = cfg or QuadratureConfig()
    if Lambda1 <= Lambda2:
        raise ValueError("need Lambda1 > Lambda2 on the retrograde manifold")
    G0 = Lambda1 - Lambda2

    def f(z):
        point = RpsCoords(Lambda1=Lambda1, Lambda2=Lambda2, lambda1=0.0,
                          lambda2=0.0, eta1=z[0], xi1=z[1], eta2=z[2],
                          xi2=z[3], p=z[4], q=z[5], Z=Z_frac * G0, zeta=0.0)
        return average_fast_angles(point, masses, cfg)

    scale = math.sqrt(Lambda2)
    steps = np.full(6, cfg.fd_step * scale)
    z0 = np.zeros(6)
    grad = fd_gradient(f, z0, steps)
    hess = fd_hessian(f, z0, steps)
    eig = np.linalg.eigvals(_symplectic_J(3) @ hess)
    hscale = float(np.max(np.abs(hess)))
    elliptic = bool(np.all(np.abs(eig.real) < 1e-6 * np.max(np.abs(eig))))
    omegas = np.sort(np.abs(eig.imag))[::-2]  # one per conjugate pair
    return EquilibriumReport(
        gradient_norm=float(np.linalg.norm(grad)),
        hessian=hess,
        eigenvalues=eig,
        classification="elliptic" if elliptic else "mixed",
        frequencies=omegas,
        quadrature={"N": cfg.N, "fd_step": cfg.fd_step, "hessian_scale": hscale},
    )


def hyperbolic_equilibrium_check(Lambda1, Lambda2, Gamma2, G, masses, cfg=None,
                                 spec=None, residual_tol=1e-3):
    """Gradient/Hessian of the quadrupole coefficient P in (Theta, vartheta)
    at (0, 0).  A saddle (real +-lambda spectrum of the linearization) is the
    hyperbolic verdict; the report carries the transverse rate lambda."""
    cfg = cfg or QuadratureConfig()
    if spec is not None:
        from .domains import in_Ap
        if not in_Ap(Lambda1, Lambda2, Gamma2, spec):
            raise ValueError("(Lambda1, Lambda2, Gamma2) outside the hyperbolic domain")

    def f(tv):
        return quadrupole_P(Lambda1, Lambda2, Gamma2, tv[0], tv[1], G, masses,
                            cfg, residual_tol=residual_tol)

    steps = np.array([cfg.fd_step * G, cfg.fd_step])
    x0 = np.zeros(2)
    grad = fd_gradient(f, x0, steps)
    hess = fd_hessian(f, x0, steps)
    eig = np.linalg.eigvals(_J2 @ hess)
    hscale = float(np.max(np.abs(hess)))
    hyperbolic = bool(np.all(np.abs(eig.imag) < 1e-6 * np.max(np.abs(eig)))
                      and np.max(eig.real) > 0)
    rate = float(np.max(eig.real))
    return EquilibriumReport(
        gradient_norm=float(np.linalg.norm(grad)),
        hessian=hess,
        eigenvalues=eig,
        classification="hyperbolic" if hyperbolic else "mixed",
        rate=rate,
        quadrature={"N": cfg.N, "fd_step": cfg.fd_step, "hessian_scale": hscale},
    )


def transverse_rate_full(Lambda1, Lambda2, Gamma2, G, masses, cfg=None, g2=0.0,
                         step_scale=0.03):
    """Transverse linearization rate of the full averaged coupling f_av in
    (Theta, vartheta) at the coplanar retrograde point (units of the
    perturbing function; multiply by mu for the secular flow rate).

    The transverse curvature of f_av is O(alpha^2) small against the
    quadrature floor, so the probing steps default much larger than the
    generic fd_step (truncation is still 4th order)."""
    cfg = cfg or QuadratureConfig()

    def f(tv):
        point = PeriheliaCoords(Lambda1=Lambda1, Lambda2=Lambda2, Gamma2=Gamma2,
                                Theta=tv[0], G=G, Z=0.35 * G, ell1=0.0, ell2=0.0,
                                g2=g2, vartheta=tv[1], g=0.0, zeta=0.0)
        return average_fast_angles(point, masses, cfg)

    steps = np.array([step_scale * G, step_scale])
    hess = fd_hessian(f, np.zeros(2), steps)
    eig = np.linalg.eigvals(_J2 @ hess)
    return float(np.max(eig.real)), hess, eig


def transverse_rate_g2_mean(Lambda1, Lambda2, Gamma2, G, masses, cfg=None,
                            n_g2=8, step_scale=0.03):
    """Transverse rate of the full averaged coupling, averaged over the outer
    perihelion angle.  The outer perihelion precesses through many turns per
    transverse e-fold, so a trajectory's measured growth compares against
    this orbit-averaged rate, not the rate at one frozen g2 (the octupole
    part of the coupling makes the instantaneous rate g2-dependent)."""
    rates = []
    for g2 in np.linspace(0.0, 2.0 * np.pi, n_g2, endpoint=False):
        r, _, _ = transverse_rate_full(Lambda1, Lambda2, Gamma2, G, masses,
                                       cfg, g2=float(g2), step_scale=step_scale)
        rates.append(r)
    return float(np.mean(rates)), rates
