"""Symplectic coordinate charts for the two-planet system.

Four representations of one physical state:

* CartesianState — heliocentric impulses/positions (y1, y2, x1, x2), the
  chart the Hamiltonian is elementary in.
* JrdCoords — the nodes-based action-angle chart (Z, G, G1, G2, Lambda_i;
  zeta, gamma, gamma_1, gamma_2, ell_i).  Singular at circular or coplanar
  configurations.
* RpsCoords — Poincare-style regularized chart (Lambda_i, lambda_i; the
  rectangular secular pairs (eta_i, xi_i), (p, q); cyclic pair (Z, zeta)).
  Regular on the circular, coplanar, outer-retrograde manifold, which is
  exactly {z = 0} with z = (eta, xi, p, q).
* PeriheliaCoords — perihelion-frame chart (Lambda_i, Gamma2, Theta;
  ell_i, g2, vartheta; reduced block (Z, G, zeta, g)).  Regular for
  coplanar motion; the retrograde configuration sits at Theta = vartheta = 0.

All charts are canonical for Omega = sum dLambda ^ dell + dy ^ dx with the
momentum listed first in each pair; `symplectic_pairs` returns the pairing
used by the finite-difference symplecticity test.

Angles follow one convention: alpha_w(u, v) is the angle from u to v
counterclockwise around w, via atan2(w.(u x v)/|w|, u.v).  Where a chart
angle degenerates (circular orbit, coplanar node) the atan2(0, 0) = 0
convention is used; every physically meaningful combination stays exact.
"""

from dataclasses import dataclass, asdict
import math

import numpy as np

from .bodies import MassParams

K1 = np.array([1.0, 0.0, 0.0])
K2 = np.array([0.0, 1.0, 0.0])
K3 = np.array([0.0, 0.0, 1.0])

NODE_TOL = 1e-8
TWO_PI = 2.0 * math.pi


class ChartError(ValueError):
    """State outside the chart's validity domain (node/radicand failure)."""


class CollisionError(ValueError):
    """Bodies too close for the perturbing function to make sense."""


class NotEllipticError(ValueError):
    """Two-body energy nonnegative: no instantaneous ellipse."""


def wrap_angle(x):
    return np.mod(x, TWO_PI)


def wrap_pi(x):
    """Wrap to (-pi, pi]; used for the signed transverse angle."""
    return math.remainder(x, TWO_PI)


def alpha_angle(w, u, v):
    """Angle from u to v, counterclockwise around w (u, v need not be unit)."""
    w = np.asarray(w, dtype=float)
    nw = np.linalg.norm(w)
    if nw == 0:
        raise ChartError("angle axis vanished")
    return wrap_angle(math.atan2(np.dot(w, np.cross(u, v)) / nw, np.dot(u, v)))


def rotate(vec, axis_unit, angle):
    """Rodrigues rotation of vec about the unit axis."""
    k = np.asarray(axis_unit, dtype=float)
    c, s = math.cos(angle), math.sin(angle)
    return vec * c + np.cross(k, vec) * s + k * np.dot(k, vec) * (1.0 - c)


# ---------------------------------------------------------------- state types

@dataclass
class CartesianState:
    y1: np.ndarray
    y2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        for name in ("y1", "y2", "x1", "x2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def flat(self):
        return np.concatenate([self.y1, self.y2, self.x1, self.x2])

    @classmethod
    def from_flat(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[0:3], v[3:6], v[6:9], v[9:12])

    def angular_momentum(self, i=None):
        if i == 1:
            return np.cross(self.x1, self.y1)
        if i == 2:
            return np.cross(self.x2, self.y2)
        return np.cross(self.x1, self.y1) + np.cross(self.x2, self.y2)

    def to_json_dict(self):
        return {"chart": "cartesian", **{k: list(v) for k, v in asdict(self).items()}}


@dataclass
class JrdCoords:
    Lambda1: float
    Lambda2: float
    Gamma1: float
    Gamma2: float
    G: float
    Z: float
    ell1: float
    ell2: float
    gamma1: float
    gamma2: float
    gamma: float
    zeta: float

    def flat(self):
        return np.array([self.Lambda1, self.Lambda2, self.Gamma1, self.Gamma2,
                         self.G, self.Z, self.ell1, self.ell2, self.gamma1,
                         self.gamma2, self.gamma, self.zeta])

    @classmethod
    def from_flat(cls, v):
        return cls(*map(float, v))

    def to_json_dict(self):
        return {"chart": "jrd", **asdict(self)}


@dataclass
class RpsCoords:
    Lambda1: float
    Lambda2: float
    lambda1: float
    lambda2: float
    eta1: float
    xi1: float
    eta2: float
    xi2: float
    p: float
    q: float
    Z: float
    zeta: float

    def flat(self):
        return np.array([self.Lambda1, self.Lambda2, self.eta1, self.eta2,
                         self.p, self.Z, self.lambda1, self.lambda2, self.xi1,
                         self.xi2, self.q, self.zeta])

    @classmethod
    def from_flat(cls, v):
        v = list(map(float, v))
        return cls(Lambda1=v[0], Lambda2=v[1], eta1=v[2], eta2=v[3], p=v[4],
                   Z=v[5], lambda1=v[6], lambda2=v[7], xi1=v[8], xi2=v[9],
                   q=v[10], zeta=v[11])

    @property
    def z(self):
        return np.array([self.eta1, self.xi1, self.eta2, self.xi2, self.p, self.q])

    def to_json_dict(self):
        return {"chart": "rps", **asdict(self)}


@dataclass
class PeriheliaCoords:
    Lambda1: float
    Lambda2: float
    Gamma2: float
    Theta: float
    G: float
    Z: float
    ell1: float
    ell2: float
    g2: float
    vartheta: float
    g: float
    zeta: float

    def flat(self):
        return np.array([self.Lambda1, self.Lambda2, self.Gamma2, self.Theta,
                         self.G, self.Z, self.ell1, self.ell2, self.g2,
                         self.vartheta, self.g, self.zeta])

    @classmethod
    def from_flat(cls, v):
        return cls(*map(float, v))

    def to_json_dict(self):
        return {"chart": "perihelia", **asdict(self)}


def symplectic_pairs(chart):
    """(momentum_index, coordinate_index) pairs in the chart's flat order."""
    if chart in ("jrd", "perihelia"):
        return [(i, i + 6) for i in range(6)]
    if chart == "rps":
        return [(i, i + 6) for i in range(6)]
    if chart == "cartesian":
        return [(i, i + 6) for i in range(6)]
    raise ValueError(chart)


def symplectic_matrix(dim=12):
    J = np.zeros((dim, dim))
    half = dim // 2
    J[:half, half:] = np.eye(half)
    J[half:, :half] = -np.eye(half)
    return J


# ------------------------------------------------------------- two-body pieces

def kepler_solve(ell, e, tol=1e-14, max_iter=60):
    """Eccentric anomaly u with u - e sin u = ell, for 0 <= e < 1.

    Newton from the standard bootstrap; guaranteed residual < 1e-13.
    """
    if not 0.0 <= e < 1.0:
        raise ValueError("eccentricity must lie in [0, 1)")
    ell = float(ell)
    ell_w = math.remainder(ell, TWO_PI)
    u = ell_w + 0.85 * e * math.copysign(1.0, math.sin(ell_w)) if e > 0 else ell_w
    for _ in range(max_iter):
        f = u - e * math.sin(u) - ell_w
        du = f / (1.0 - e * math.cos(u))
        u -= du
        if abs(du) < tol:
            break
    return u + (ell - ell_w)


@dataclass
class Elements:
    """Instantaneous-ellipse elements of one planet (angles in radians).

    a: semi-major axis; e: eccentricity; inc: inclination to the (k1,k2)
    plane; node: longitude of ascending node; argp: argument of perihelion
    from the node; ell: mean anomaly.
    """

    a: float
    e: float
    inc: float
    node: float
    argp: float
    ell: float


def cartesian_from_elements(elem, masses, i):
    """Impulse/position of planet i from its elements."""
    if elem.a <= 0:
        raise NotEllipticError("semi-major axis must be positive")
    mr, Mt = masses.reduced(i), masses.total(i)
    # orbital frame
    Om, inc, w = elem.node, elem.inc, elem.argp
    node_dir = np.array([math.cos(Om), math.sin(Om), 0.0])
    # normal to the orbit plane
    h_dir = rotate(K3, node_dir, inc)
    P = rotate(node_dir, h_dir, w)
    Q = np.cross(h_dir, P)
    u = kepler_solve(elem.ell, elem.e)
    b_over_a = math.sqrt(1.0 - elem.e ** 2)
    x = elem.a * ((math.cos(u) - elem.e) * P + b_over_a * math.sin(u) * Q)
    n = math.sqrt(Mt / elem.a ** 3)
    denom = 1.0 - elem.e * math.cos(u)
    v = (n * elem.a / denom) * (-math.sin(u) * P + b_over_a * math.cos(u) * Q)
    return mr * v, x


def elements_from_cartesian(y, x, masses, i):
    """Inverse of :func:`cartesian_from_elements` on the elliptic domain."""
    mr, Mt = masses.reduced(i), masses.total(i)
    v = np.asarray(y, dtype=float) / mr
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if r == 0:
        raise CollisionError("position at the origin")
    inv_a = 2.0 / r - np.dot(v, v) / Mt
    if inv_a <= 0:
        raise NotEllipticError("two-body energy is nonnegative")
    a = 1.0 / inv_a
    h = np.cross(x, v)
    hn = np.linalg.norm(h)
    e_vec = np.cross(v, h) / Mt - x / r
    e = float(np.linalg.norm(e_vec))
    inc = math.acos(max(-1.0, min(1.0, h[2] / hn)))
    node_vec = np.cross(K3, h)
    if np.linalg.norm(node_vec) < NODE_TOL * hn:
        node_vec = K1  # equatorial orbit: measure argp from k1
        node = 0.0
    else:
        node = alpha_angle(K3, K1, node_vec)
    # robust anomaly extraction: (e cos u, e sin u) stay defined at e -> 0
    ecu = 1.0 - r / a
    esu = float(np.dot(x, v)) / math.sqrt(Mt * a)
    u = math.atan2(esu, ecu)
    ell = u - esu
    true_anom = math.atan2(math.sqrt(max(0.0, 1.0 - e * e)) * esu, ecu - e * e)
    pos_angle = alpha_angle(h, node_vec, x)
    argp = wrap_angle(pos_angle - true_anom)
    return Elements(a=a, e=e, inc=inc, node=node, argp=argp, ell=wrap_angle(ell))


def _planet_angles_from_node(y, x, masses, i, nu_ref):
    """(gamma_i, ell_i) of one planet, with the perihelion angle measured
    from the reference node nu_ref; exact combinations at e -> 0."""
    mr, Mt = masses.reduced(i), masses.total(i)
    v = np.asarray(y, dtype=float) / mr
    r = np.linalg.norm(x)
    inv_a = 2.0 / r - np.dot(v, v) / Mt
    if inv_a <= 0:
        raise NotEllipticError("two-body energy is nonnegative")
    a = 1.0 / inv_a
    h = np.cross(x, v)
    e_vec = np.cross(v, h) / Mt - x / r
    e = float(np.linalg.norm(e_vec))
    ecu = 1.0 - r / a
    esu = float(np.dot(x, v)) / math.sqrt(Mt * a)
    u = math.atan2(esu, ecu)
    ell = u - esu
    true_anom = math.atan2(math.sqrt(max(0.0, 1.0 - e * e)) * esu, ecu - e * e)
    w_angle = alpha_angle(h, nu_ref, x)
    gamma_i = wrap_angle(w_angle - true_anom)
    return gamma_i, wrap_angle(ell), a, e


# ------------------------------------------------------------------ JRD chart

def jrd_from_cartesian(state, masses, strict=True):
    """Forward nodes chart.  strict=True errors on vanishing nodes."""
    C1 = state.angular_momentum(1)
    C2 = state.angular_momentum(2)
    C = C1 + C2
    G = float(np.linalg.norm(C))
    if G == 0:
        raise ChartError("total angular momentum vanished")
    nu1 = np.cross(K3, C)
    nu = np.cross(C2, C1)
    G1n = float(np.linalg.norm(C1))
    G2n = float(np.linalg.norm(C2))
    if strict:
        if np.linalg.norm(nu1) < NODE_TOL * G:
            raise ChartError("node k3 x C vanished")
        if np.linalg.norm(nu) < NODE_TOL * G1n * G2n:
            raise ChartError("mutual node C2 x C1 vanished")
    Z = float(C[2])
    G1, G2 = G1n, G2n
    zeta = alpha_angle(K3, K1, nu1) if np.linalg.norm(nu1) > 0 else 0.0
    gamma = alpha_angle(C, nu1, nu) if np.linalg.norm(nu) > 0 else 0.0
    nu_ref = nu if np.linalg.norm(nu) > 0 else nu1
    g1, ell1, a1, _ = _planet_angles_from_node(state.y1, state.x1, masses, 1, nu_ref)
    g2, ell2, a2, _ = _planet_angles_from_node(state.y2, state.x2, masses, 2, nu_ref)
    return JrdCoords(Lambda1=masses.lambda_of(1, a1), Lambda2=masses.lambda_of(2, a2),
                     Gamma1=G1, Gamma2=G2, G=G, Z=Z, ell1=ell1, ell2=ell2,
                     gamma1=g1, gamma2=g2, gamma=gamma, zeta=zeta)


def cartesian_from_jrd(jrd, masses):
    """Geometric reconstruction: orient both instantaneous ellipses from the
    node angles and evaluate the Kepler motion at the mean anomalies."""
    G, Z = jrd.G, jrd.Z
    if G <= 0 or abs(Z) > G:
        raise ChartError("need G > 0 and |Z| <= G")
    nu1_hat = np.array([math.cos(jrd.zeta), math.sin(jrd.zeta), 0.0])
    sin_i = math.sqrt(max(0.0, 1.0 - (Z / G) ** 2))
    C_hat = (Z / G) * K3 + sin_i * np.cross(nu1_hat, K3)
    nu_hat = rotate(nu1_hat, C_hat, jrd.gamma)
    G1, G2 = jrd.Gamma1, jrd.Gamma2
    cos_i1 = (G ** 2 + G1 ** 2 - G2 ** 2) / (2.0 * G * G1)
    cos_i1 = max(-1.0, min(1.0, cos_i1))
    sin_i1 = math.sqrt(1.0 - cos_i1 ** 2)
    C1_hat = cos_i1 * C_hat + sin_i1 * np.cross(nu_hat, C_hat)
    C2_vec = G * C_hat - G1 * C1_hat
    n2 = np.linalg.norm(C2_vec)
    if abs(n2 - G2) > 1e-6 * max(G, 1.0):
        raise ChartError("angular-momentum triangle violated")
    C2_hat = C2_vec / n2 if n2 > 0 else C_hat
    out = []
    for i, (lam, Gi, Ci_hat, gam, ell) in enumerate(
            [(jrd.Lambda1, G1, C1_hat, jrd.gamma1, jrd.ell1),
             (jrd.Lambda2, G2, C2_hat, jrd.gamma2, jrd.ell2)], start=1):
        if Gi > lam * (1.0 + 1e-12):
            raise ChartError(f"Gamma{i} exceeds Lambda{i}")
        e = math.sqrt(max(0.0, 1.0 - (Gi / lam) ** 2))
        a = masses.a_of_lambda(i, lam)
        P = rotate(nu_hat, Ci_hat, gam)
        P = P - Ci_hat * np.dot(P, Ci_hat)
        P /= np.linalg.norm(P)
        Q = np.cross(Ci_hat, P)
        u = kepler_solve(ell, e)
        boa = math.sqrt(1.0 - e * e)
        x = a * ((math.cos(u) - e) * P + boa * math.sin(u) * Q)
        n = math.sqrt(masses.total(i) / a ** 3)
        v = (n * a / (1.0 - e * math.cos(u))) * (-math.sin(u) * P + boa * math.cos(u) * Q)
        out.append((masses.reduced(i) * v, x))
    return CartesianState(y1=out[0][0], y2=out[1][0], x1=out[0][1], x2=out[1][1])


# ------------------------------------------------------------------ RPS chart

def rps_from_jrd(jrd):
    w1 = jrd.Lambda1 - jrd.Gamma1
    w2 = jrd.Lambda2 - jrd.Gamma2
    w3 = jrd.G + jrd.Gamma2 - jrd.Gamma1
    if min(w1, w2, w3) < -1e-12 * max(jrd.Lambda1, jrd.Lambda2, jrd.G):
        raise ChartError("negative radicand: state outside the regularized chart")
    r1 = math.sqrt(2.0 * max(0.0, w1))
    r2 = math.sqrt(2.0 * max(0.0, w2))
    r3 = math.sqrt(2.0 * max(0.0, w3))
    z1 = r1 * np.exp(-1j * (jrd.gamma1 + jrd.gamma))
    z2 = -r2 * np.exp(1j * (jrd.gamma - jrd.gamma2))
    z3 = -r3 * np.exp(1j * jrd.gamma)
    return RpsCoords(Lambda1=jrd.Lambda1, Lambda2=jrd.Lambda2,
                     lambda1=wrap_angle(jrd.ell1 + jrd.gamma1 + jrd.gamma),
                     lambda2=wrap_angle(jrd.ell2 + jrd.gamma2 - jrd.gamma),
                     eta1=z1.real, xi1=z1.imag, eta2=z2.real, xi2=z2.imag,
                     p=z3.real, q=z3.imag, Z=jrd.Z, zeta=jrd.zeta)


def jrd_from_rps(rps):
    G1 = rps.Lambda1 - 0.5 * (rps.eta1 ** 2 + rps.xi1 ** 2)
    G2 = rps.Lambda2 - 0.5 * (rps.eta2 ** 2 + rps.xi2 ** 2)
    w3 = 0.5 * (rps.p ** 2 + rps.q ** 2)
    G = G1 - G2 + w3
    if G1 <= 0 or G2 <= 0 or G <= 0:
        raise ChartError("angular momenta must stay positive")
    gamma = math.atan2(-rps.q, -rps.p) if (rps.p, rps.q) != (0.0, 0.0) else 0.0
    # combination angles are exact even when an individual one degenerates
    A1 = -math.atan2(rps.xi1, rps.eta1)
    A2 = math.pi - math.atan2(rps.xi2, rps.eta2) if (rps.eta2, rps.xi2) != (0.0, 0.0) else 0.0
    if (rps.eta1, rps.xi1) == (0.0, 0.0):
        A1 = 0.0
    gamma1 = wrap_angle(A1 - gamma)
    gamma2 = wrap_angle(A2 + gamma)
    return JrdCoords(Lambda1=rps.Lambda1, Lambda2=rps.Lambda2, Gamma1=G1,
                     Gamma2=G2, G=G, Z=rps.Z,
                     ell1=wrap_angle(rps.lambda1 - A1),
                     ell2=wrap_angle(rps.lambda2 - A2),
                     gamma1=gamma1, gamma2=gamma2, gamma=gamma, zeta=rps.zeta)


def rps_from_cartesian(state, masses):
    return rps_from_jrd(jrd_from_cartesian(state, masses, strict=False))


def cartesian_from_rps(rps, masses):
    return cartesian_from_jrd(jrd_from_rps(rps), masses)


def g_rps(rps):
    """The conserved total angular momentum in regularized variables:
    Lambda1 - Lambda2 - (eta1^2+xi1^2)/2 + (eta2^2+xi2^2)/2 + (p^2+q^2)/2."""
    return (rps.Lambda1 - rps.Lambda2
            - 0.5 * (rps.eta1 ** 2 + rps.xi1 ** 2)
            + 0.5 * (rps.eta2 ** 2 + rps.xi2 ** 2)
            + 0.5 * (rps.p ** 2 + rps.q ** 2))


# ------------------------------------------------------------ perihelia chart

def perihelia_from_cartesian(state, masses, strict=True):
    C1 = state.angular_momentum(1)
    C2 = state.angular_momentum(2)
    C = C1 + C2
    G = float(np.linalg.norm(C))
    if G == 0:
        raise ChartError("total angular momentum vanished")
    # perihelion direction of the inner planet
    mr1, Mt1 = masses.reduced(1), masses.total(1)
    v1 = state.y1 / mr1
    r1 = np.linalg.norm(state.x1)
    e_vec = np.cross(v1, np.cross(state.x1, v1)) / Mt1 - state.x1 / r1
    e1 = np.linalg.norm(e_vec)
    if e1 < 1e-13:
        raise ChartError("inner orbit circular: perihelion direction undefined")
    P1_hat = e_vec / e1
    nu1 = np.cross(K3, C)
    n1 = np.cross(C, P1_hat)
    nu2 = np.cross(P1_hat, C2)
    n2 = np.cross(C2, _perihelion_dir(state.y2, state.x2, masses, 2))
    if strict:
        scale = max(G, 1.0)
        for name, vec in (("k3 x C", nu1), ("C x P1", n1), ("P1 x C2", nu2), ("C2 x P2", n2)):
            if np.linalg.norm(vec) < NODE_TOL * scale:
                raise ChartError(f"node {name} vanished")
    Theta = float(np.dot(C, P1_hat))
    zeta = alpha_angle(K3, K1, nu1)
    g = alpha_angle(C, nu1, n1)
    vth = wrap_pi(alpha_angle(P1_hat, n1, nu2))
    g2 = alpha_angle(C2, nu2, n2)
    el1 = elements_like_mean_anomaly(state.y1, state.x1, masses, 1)
    el2 = elements_like_mean_anomaly(state.y2, state.x2, masses, 2)
    return PeriheliaCoords(Lambda1=masses.lambda_of(1, _semi_major(state.y1, state.x1, masses, 1)),
                           Lambda2=masses.lambda_of(2, _semi_major(state.y2, state.x2, masses, 2)),
                           Gamma2=float(np.linalg.norm(C2)), Theta=Theta,
                           G=G, Z=float(C[2]), ell1=el1, ell2=el2,
                           g2=g2, vartheta=vth, g=g, zeta=zeta)


def _semi_major(y, x, masses, i):
    mr, Mt = masses.reduced(i), masses.total(i)
    v = np.asarray(y) / mr
    r = np.linalg.norm(x)
    inv_a = 2.0 / r - np.dot(v, v) / Mt
    if inv_a <= 0:
        raise NotEllipticError("two-body energy is nonnegative")
    return 1.0 / inv_a


def _perihelion_dir(y, x, masses, i):
    mr, Mt = masses.reduced(i), masses.total(i)
    v = np.asarray(y) / mr
    r = np.linalg.norm(x)
    e_vec = np.cross(v, np.cross(x, v)) / Mt - np.asarray(x) / r
    n = np.linalg.norm(e_vec)
    if n < 1e-13:
        raise ChartError("circular orbit: perihelion direction undefined")
    return e_vec / n


def elements_like_mean_anomaly(y, x, masses, i):
    mr, Mt = masses.reduced(i), masses.total(i)
    v = np.asarray(y) / mr
    r = np.linalg.norm(x)
    a = _semi_major(y, x, masses, i)
    ecu = 1.0 - r / a
    esu = float(np.dot(x, v)) / math.sqrt(Mt * a)
    u = math.atan2(esu, ecu)
    return wrap_angle(u - esu)


def cartesian_from_perihelia(peri, masses):
    """Geometric reconstruction from the perihelion-frame variables."""
    G, Z = peri.G, peri.Z
    if G <= 0 or abs(Z) > G:
        raise ChartError("need G > 0 and |Z| <= G")
    if abs(peri.Theta) > min(G, peri.Gamma2):
        raise ChartError("|Theta| exceeds min(G, Gamma2)")
    nu1_hat = np.array([math.cos(peri.zeta), math.sin(peri.zeta), 0.0])
    sin_i = math.sqrt(max(0.0, 1.0 - (Z / G) ** 2))
    C_hat = (Z / G) * K3 + sin_i * np.cross(nu1_hat, K3)
    n1_hat = rotate(nu1_hat, C_hat, peri.g)
    u_hat = np.cross(n1_hat, C_hat)
    cth = peri.Theta / G
    P1_hat = cth * C_hat + math.sqrt(max(0.0, 1.0 - cth ** 2)) * u_hat
    nu2_hat = rotate(n1_hat, P1_hat, peri.vartheta)
    w_hat = np.cross(nu2_hat, P1_hat)
    C2 = peri.Theta * P1_hat + math.sqrt(max(0.0, peri.Gamma2 ** 2 - peri.Theta ** 2)) * w_hat
    C1 = G * C_hat - C2
    G1 = float(np.linalg.norm(C1))
    if G1 <= 0 or G1 > peri.Lambda1 * (1.0 + 1e-12):
        raise ChartError("derived Gamma1 outside (0, Lambda1]")
    C1_hat = C1 / G1
    C2_hat = C2 / peri.Gamma2
    n2_hat = rotate(nu2_hat, C2_hat, peri.g2)
    P2_hat = np.cross(n2_hat, C2_hat)
    out = []
    for i, (lam, Gi, Ci_hat, Pi_hat, ell) in enumerate(
            [(peri.Lambda1, G1, C1_hat, P1_hat, peri.ell1),
             (peri.Lambda2, peri.Gamma2, C2_hat, P2_hat, peri.ell2)], start=1):
        e = math.sqrt(max(0.0, 1.0 - (Gi / lam) ** 2))
        a = masses.a_of_lambda(i, lam)
        P = Pi_hat - Ci_hat * np.dot(Pi_hat, Ci_hat)
        P /= np.linalg.norm(P)
        Q = np.cross(Ci_hat, P)
        u = kepler_solve(ell, e)
        boa = math.sqrt(1.0 - e * e)
        x = a * ((math.cos(u) - e) * P + boa * math.sin(u) * Q)
        n = math.sqrt(masses.total(i) / a ** 3)
        v = (n * a / (1.0 - e * math.cos(u))) * (-math.sin(u) * P + boa * math.cos(u) * Q)
        out.append((masses.reduced(i) * v, x))
    return CartesianState(y1=out[0][0], y2=out[1][0], x1=out[0][1], x2=out[1][1])


def gamma1_from_perihelia(G, G2, Theta, vartheta):
    """|C1| from the reduced block:
    sqrt(G^2 + G2^2 - 2 Theta^2 + 2 sqrt(G^2-Theta^2) sqrt(G2^2-Theta^2) cos vartheta)."""
    if abs(Theta) > min(G, G2):
        raise ValueError("|Theta| must not exceed min(G, G2)")
    rad = (G * G + G2 * G2 - 2.0 * Theta ** 2
           + 2.0 * math.sqrt(G * G - Theta ** 2) * math.sqrt(G2 * G2 - Theta ** 2)
           * math.cos(vartheta))
    if rad < 0:
        raise ValueError("negative radicand")
    return math.sqrt(rad)


# ----------------------------------------------------------------- Hamiltonian

def perturbing_function(state, masses):
    """f = -m1 m2/|x1 - x2| + y1.y2/m0 (the O(mu) coupling)."""
    dx = np.linalg.norm(state.x1 - state.x2)
    if dx == 0:
        raise CollisionError("planet collision")
    return -masses.m1 * masses.m2 / dx + float(np.dot(state.y1, state.y2)) / masses.m0


def hamiltonian_keplerian(L1, L2, masses):
    """h_k(Lambda) = -sum_i mr_i^3 Mt_i^2 / (2 Lambda_i^2)."""
    return (-masses.reduced(1) ** 3 * masses.total(1) ** 2 / (2.0 * L1 ** 2)
            - masses.reduced(2) ** 3 * masses.total(2) ** 2 / (2.0 * L2 ** 2))


def hamiltonian(obj, masses):
    """Total Hamiltonian of a state given in any chart."""
    state = to_cartesian(obj, masses)
    kepler = 0.0
    for i, (y, x) in enumerate([(state.y1, state.x1), (state.y2, state.x2)], start=1):
        r = np.linalg.norm(x)
        if r == 0:
            raise CollisionError("star collision")
        kepler += float(np.dot(y, y)) / (2.0 * masses.reduced(i)) \
            - masses.reduced(i) * masses.total(i) / r
    return kepler + masses.mu * perturbing_function(state, masses)


def to_cartesian(obj, masses):
    if isinstance(obj, CartesianState):
        return obj
    if isinstance(obj, JrdCoords):
        return cartesian_from_jrd(obj, masses)
    if isinstance(obj, RpsCoords):
        return cartesian_from_rps(obj, masses)
    if isinstance(obj, PeriheliaCoords):
        return cartesian_from_perihelia(obj, masses)
    raise TypeError(f"not a chart object: {type(obj)}")


def to_chart(state, chart, masses, strict=False):
    if chart == "cartesian":
        return state
    if chart == "jrd":
        return jrd_from_cartesian(state, masses, strict=strict)
    if chart == "rps":
        return rps_from_cartesian(state, masses)
    if chart == "perihelia":
        return perihelia_from_cartesian(state, masses, strict=strict)
    raise ValueError(chart)


CHART_TYPES = {"cartesian": CartesianState, "jrd": JrdCoords, "rps": RpsCoords,
               "perihelia": PeriheliaCoords}


def symplecticity_residual(obj, masses, rel_step=3e-5):
    """max |J^T Omega J - Omega| for the chart -> cartesian map at obj.

    J is the 4th-order finite-difference Jacobian with per-coordinate steps
    rel_step * max(1, |coordinate|).  Canonical charts give residuals at the
    finite-difference noise floor (<< 1e-6).
    """
    cls = type(obj)
    x0 = obj.flat()
    dim = len(x0)

    def f(v):
        return to_cartesian(cls.from_flat(v), masses).flat()

    J = np.zeros((dim, dim))
    for i in range(dim):
        h = rel_step * max(1.0, abs(x0[i]))
        for shift, wgt in ((2, -1.0), (1, 8.0), (-1, -8.0), (-2, 1.0)):
            v = x0.copy()
            v[i] += shift * h
            J[:, i] += wgt * f(v)
        J[:, i] /= 12.0 * h
    Om = symplectic_matrix(dim)
    return float(np.max(np.abs(J.T @ Om @ J - Om)))


def state_from_json_dict(d):
    d = dict(d)
    chart = d.pop("chart")
    cls = CHART_TYPES[chart]
    if chart == "cartesian":
        return CartesianState(**{k: np.asarray(v, dtype=float) for k, v in d.items()})
    return cls(**d)
