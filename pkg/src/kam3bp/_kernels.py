"""Hot numerical kernels: batched chart reconstruction, the perturbing
function on quadrature grids, and the symplectic n-body integrator core.

Everything is written in array-oriented numpy that runs identically with or
without numba; ``maybe_njit`` compiles it when enabled (see `_accel`).  The
scalar chart API in `charts` is the readable reference implementation; parity
tests pin these kernels against it.
"""

import numpy as np

from ._accel import maybe_njit

TWO_PI = 2.0 * np.pi


@maybe_njit(cache=True)
def kepler_u(ell, e):
    """Eccentric anomaly for arrays (u - e sin u = ell); Newton, fixed sweep."""
    ell_w = np.remainder(ell + np.pi, TWO_PI) - np.pi
    u = ell_w + 0.85 * e * np.sign(np.sin(ell_w))
    for _ in range(30):
        u = u - (u - e * np.sin(u) - ell_w) / (1.0 - e * np.cos(u))
    return u + (ell - ell_w)


@maybe_njit(cache=True)
def _rot_about(vx, vy, vz, kx, ky, kz, ang):
    """Rodrigues rotation, componentwise (axis assumed unit)."""
    c = np.cos(ang)
    s = np.sin(ang)
    dot = kx * vx + ky * vy + kz * vz
    cx = ky * vz - kz * vy
    cy = kz * vx - kx * vz
    cz = kx * vy - ky * vx
    rx = vx * c + cx * s + kx * dot * (1.0 - c)
    ry = vy * c + cy * s + ky * dot * (1.0 - c)
    rz = vz * c + cz * s + kz * dot * (1.0 - c)
    return rx, ry, rz


@maybe_njit(cache=True)
def _ellipse_state(a, e, Px, Py, Pz, Qx, Qy, Qz, ell, mr, Mt):
    u = kepler_u(ell, e)
    boa = np.sqrt(1.0 - e * e)
    cu = np.cos(u)
    su = np.sin(u)
    xx = a * ((cu - e) * Px + boa * su * Qx)
    xy = a * ((cu - e) * Py + boa * su * Qy)
    xz = a * ((cu - e) * Pz + boa * su * Qz)
    n = np.sqrt(Mt / a ** 3)
    fac = mr * n * a / (1.0 - e * cu)
    yx = fac * (-su * Px + boa * cu * Qx)
    yy = fac * (-su * Py + boa * cu * Qy)
    yz = fac * (-su * Pz + boa * cu * Qz)
    return yx, yy, yz, xx, xy, xz


@maybe_njit(cache=True)
def _planet_state(Li, Gi, Cix, Ciy, Ciz, nux, nuy, nuz, gam, ell, mr, Mt):
    """Ellipse state of one planet: perihelion at angle gam from the node
    direction nu, in the plane normal to Ci."""
    e = np.sqrt(np.maximum(0.0, 1.0 - (Gi / Li) ** 2))
    a = (Li / mr) ** 2 / Mt
    Px, Py, Pz = _rot_about(nux, nuy, nuz, Cix, Ciy, Ciz, gam)
    pdot = Px * Cix + Py * Ciy + Pz * Ciz
    Px = Px - pdot * Cix
    Py = Py - pdot * Ciy
    Pz = Pz - pdot * Ciz
    pn = np.sqrt(Px ** 2 + Py ** 2 + Pz ** 2)
    Px, Py, Pz = Px / pn, Py / pn, Pz / pn
    Qx = Ciy * Pz - Ciz * Py
    Qy = Ciz * Px - Cix * Pz
    Qz = Cix * Py - Ciy * Px
    return _ellipse_state(a, e, Px, Py, Pz, Qx, Qy, Qz, ell, mr, Mt)


@maybe_njit(cache=True)
def rps_state_arrays(L1, L2, l1, l2, eta1, xi1, eta2, xi2, p, q, Z, zeta,
                     mr1, Mt1, mr2, Mt2):
    """Batched regularized-chart -> cartesian reconstruction.

    All inputs broadcast to a common shape beforehand.  Returns the twelve
    cartesian components (y1, y2, x1, x2).
    """
    G1 = L1 - 0.5 * (eta1 ** 2 + xi1 ** 2)
    G2 = L2 - 0.5 * (eta2 ** 2 + xi2 ** 2)
    w3 = 0.5 * (p ** 2 + q ** 2)
    G = G1 - G2 + w3
    gamma = np.arctan2(-q, -p)
    A1 = -np.arctan2(xi1, eta1)
    A2 = np.pi - np.arctan2(xi2, eta2)
    gamma1 = A1 - gamma
    gamma2 = A2 + gamma
    ell1 = l1 - A1
    ell2 = l2 - A2
    # frame of the total angular momentum
    n1x = np.cos(zeta)
    n1y = np.sin(zeta)
    zog = Z / G
    sin_i = np.sqrt(np.maximum(0.0, 1.0 - zog ** 2))
    Cx = sin_i * n1y
    Cy = -sin_i * n1x
    Cz = zog
    nux, nuy, nuz = _rot_about(n1x, n1y, 0.0 * n1x, Cx, Cy, Cz, gamma)
    cos_i1 = (G ** 2 + G1 ** 2 - G2 ** 2) / (2.0 * G * G1)
    cos_i1 = np.minimum(1.0, np.maximum(-1.0, cos_i1))
    sin_i1 = np.sqrt(1.0 - cos_i1 ** 2)
    wx = nuy * Cz - nuz * Cy
    wy = nuz * Cx - nux * Cz
    wz = nux * Cy - nuy * Cx
    C1x = cos_i1 * Cx + sin_i1 * wx
    C1y = cos_i1 * Cy + sin_i1 * wy
    C1z = cos_i1 * Cz + sin_i1 * wz
    C2x = (G * Cx - G1 * C1x) / G2
    C2y = (G * Cy - G1 * C1y) / G2
    C2z = (G * Cz - G1 * C1z) / G2
    s1 = _planet_state(L1, G1, C1x, C1y, C1z, nux, nuy, nuz, gamma1, ell1, mr1, Mt1)
    s2 = _planet_state(L2, G2, C2x, C2y, C2z, nux, nuy, nuz, gamma2, ell2, mr2, Mt2)
    return (s1[0], s1[1], s1[2], s2[0], s2[1], s2[2],
            s1[3], s1[4], s1[5], s2[3], s2[4], s2[5])


@maybe_njit(cache=True)
def peri_state_arrays(L1, L2, G2, Theta, ell1, ell2, g2, vth, G, Z, g, zeta,
                      mr1, Mt1, mr2, Mt2):
    """Batched perihelion-chart -> cartesian reconstruction."""
    n1x = np.cos(zeta)
    n1y = np.sin(zeta)
    zog = Z / G
    sin_i = np.sqrt(np.maximum(0.0, 1.0 - zog ** 2))
    Cx = sin_i * n1y
    Cy = -sin_i * n1x
    Cz = zog
    m1x, m1y, m1z = _rot_about(n1x, n1y, 0.0 * n1x, Cx, Cy, Cz, g)
    ux = m1y * Cz - m1z * Cy
    uy = m1z * Cx - m1x * Cz
    uz = m1x * Cy - m1y * Cx
    cth = Theta / G
    sth = np.sqrt(np.maximum(0.0, 1.0 - cth ** 2))
    P1x = cth * Cx + sth * ux
    P1y = cth * Cy + sth * uy
    P1z = cth * Cz + sth * uz
    nu2x, nu2y, nu2z = _rot_about(m1x, m1y, m1z, P1x, P1y, P1z, vth)
    wx = nu2y * P1z - nu2z * P1y
    wy = nu2z * P1x - nu2x * P1z
    wz = nu2x * P1y - nu2y * P1x
    rad = np.sqrt(np.maximum(0.0, G2 ** 2 - Theta ** 2))
    C2x = Theta * P1x + rad * wx
    C2y = Theta * P1y + rad * wy
    C2z = Theta * P1z + rad * wz
    C1x = G * Cx - C2x
    C1y = G * Cy - C2y
    C1z = G * Cz - C2z
    G1 = np.sqrt(C1x ** 2 + C1y ** 2 + C1z ** 2)
    C1hx, C1hy, C1hz = C1x / G1, C1y / G1, C1z / G1
    C2hx, C2hy, C2hz = C2x / G2, C2y / G2, C2z / G2
    n2x, n2y, n2z = _rot_about(nu2x, nu2y, nu2z, C2hx, C2hy, C2hz, g2)
    P2x = n2y * C2hz - n2z * C2hy
    P2y = n2z * C2hx - n2x * C2hz
    P2z = n2x * C2hy - n2y * C2hx
    # planet 1
    e1 = np.sqrt(np.maximum(0.0, 1.0 - (G1 / L1) ** 2))
    a1 = (L1 / mr1) ** 2 / Mt1
    pdot = P1x * C1hx + P1y * C1hy + P1z * C1hz
    Px = P1x - pdot * C1hx
    Py = P1y - pdot * C1hy
    Pz = P1z - pdot * C1hz
    pn = np.sqrt(Px ** 2 + Py ** 2 + Pz ** 2)
    Px, Py, Pz = Px / pn, Py / pn, Pz / pn
    Qx = C1hy * Pz - C1hz * Py
    Qy = C1hz * Px - C1hx * Pz
    Qz = C1hx * Py - C1hy * Px
    s1 = _ellipse_state(a1, e1, Px, Py, Pz, Qx, Qy, Qz, ell1, mr1, Mt1)
    # planet 2
    e2 = np.sqrt(np.maximum(0.0, 1.0 - (G2 / L2) ** 2))
    a2 = (L2 / mr2) ** 2 / Mt2
    Q2x = C2hy * P2z - C2hz * P2y
    Q2y = C2hz * P2x - C2hx * P2z
    Q2z = C2hx * P2y - C2hy * P2x
    s2 = _ellipse_state(a2, e2, P2x, P2y, P2z, Q2x, Q2y, Q2z, ell2, mr2, Mt2)
    return (s1[0], s1[1], s1[2], s2[0], s2[1], s2[2],
            s1[3], s1[4], s1[5], s2[3], s2[4], s2[5])


@maybe_njit(cache=True)
def perturbing_from_arrays(y1x, y1y, y1z, y2x, y2y, y2z,
                           x1x, x1y, x1z, x2x, x2y, x2z, m0, m1, m2):
    """f = -m1 m2/|x1-x2| + y1.y2/m0, batched."""
    dx = x1x - x2x
    dy = x1y - x2y
    dz = x1z - x2z
    d = np.sqrt(dx ** 2 + dy ** 2 + dz ** 2)
    return -m1 * m2 / d + (y1x * y2x + y1y * y2y + y1z * y2z) / m0


# Yoshida 6th-order composition weights over the leapfrog kernel
_W1 = -1.17767998417887
_W2 = 0.235573213359357
_W3 = 0.784513610477560
_W0 = 1.0 - 2.0 * (_W1 + _W2 + _W3)
YOSHIDA6 = np.array([_W3, _W2, _W1, _W0, _W1, _W2, _W3])
LEAPFROG = np.array([1.0])


@maybe_njit(cache=True)
def nbody_run(state0, dt, n_steps, stride, weights,
              mr1, Mt1, mr2, Mt2, m0, m1, m2, mu, collision_dist):
    """Symplectic kick-drift-kick composition for the two-planet system.

    state0: flat (y1, y2, x1, x2) length-12 array.  Returns (samples, state,
    n_done, min_sep): samples has shape (n_steps//stride + 1, 12) with row 0
    the initial state; integration stops early when |x1 - x2| dips below
    collision_dist (n_done reports completed steps).
    """
    s = state0.copy()
    n_out = n_steps // stride + 1
    out = np.empty((n_out, 12))
    out[0] = s
    min_sep = 1e300
    n_done = 0
    row = 1
    for step in range(n_steps):
        for w in weights:
            h = w * dt
            # half kick
            r1 = np.sqrt(s[6] ** 2 + s[7] ** 2 + s[8] ** 2)
            r2 = np.sqrt(s[9] ** 2 + s[10] ** 2 + s[11] ** 2)
            ddx = s[6] - s[9]
            ddy = s[7] - s[10]
            ddz = s[8] - s[11]
            d = np.sqrt(ddx ** 2 + ddy ** 2 + ddz ** 2)
            if d < min_sep:
                min_sep = d
            if d < collision_dist:
                return out[:row], s, n_done, min_sep
            c1 = mr1 * Mt1 / r1 ** 3
            c2 = mr2 * Mt2 / r2 ** 3
            cc = mu * m1 * m2 / d ** 3
            hh = 0.5 * h
            s[0] -= hh * (c1 * s[6] + cc * ddx)
            s[1] -= hh * (c1 * s[7] + cc * ddy)
            s[2] -= hh * (c1 * s[8] + cc * ddz)
            s[3] -= hh * (c2 * s[9] - cc * ddx)
            s[4] -= hh * (c2 * s[10] - cc * ddy)
            s[5] -= hh * (c2 * s[11] - cc * ddz)
            # drift
            s[6] += h * (s[0] / mr1 + mu * s[3] / m0)
            s[7] += h * (s[1] / mr1 + mu * s[4] / m0)
            s[8] += h * (s[2] / mr1 + mu * s[5] / m0)
            s[9] += h * (s[3] / mr2 + mu * s[0] / m0)
            s[10] += h * (s[4] / mr2 + mu * s[1] / m0)
            s[11] += h * (s[5] / mr2 + mu * s[2] / m0)
            # half kick
            r1 = np.sqrt(s[6] ** 2 + s[7] ** 2 + s[8] ** 2)
            r2 = np.sqrt(s[9] ** 2 + s[10] ** 2 + s[11] ** 2)
            ddx = s[6] - s[9]
            ddy = s[7] - s[10]
            ddz = s[8] - s[11]
            d = np.sqrt(ddx ** 2 + ddy ** 2 + ddz ** 2)
            c1 = mr1 * Mt1 / r1 ** 3
            c2 = mr2 * Mt2 / r2 ** 3
            cc = mu * m1 * m2 / d ** 3
            s[0] -= hh * (c1 * s[6] + cc * ddx)
            s[1] -= hh * (c1 * s[7] + cc * ddy)
            s[2] -= hh * (c1 * s[8] + cc * ddz)
            s[3] -= hh * (c2 * s[9] - cc * ddx)
            s[4] -= hh * (c2 * s[10] - cc * ddy)
            s[5] -= hh * (c2 * s[11] - cc * ddz)
        n_done += 1
        if n_done % stride == 0 and row < n_out:
            out[row] = s
            row += 1
    return out[:row], s, n_done, min_sep


@maybe_njit(cache=True)
def energy_and_momentum(samples, mr1, Mt1, mr2, Mt2, m0, m1, m2, mu):
    """Per-sample total energy and angular-momentum vector."""
    n = samples.shape[0]
    E = np.empty(n)
    C = np.empty((n, 3))
    for i in range(n):
        s = samples[i]
        r1 = np.sqrt(s[6] ** 2 + s[7] ** 2 + s[8] ** 2)
        r2 = np.sqrt(s[9] ** 2 + s[10] ** 2 + s[11] ** 2)
        d = np.sqrt((s[6] - s[9]) ** 2 + (s[7] - s[10]) ** 2 + (s[8] - s[11]) ** 2)
        T = ((s[0] ** 2 + s[1] ** 2 + s[2] ** 2) / (2.0 * mr1)
             + (s[3] ** 2 + s[4] ** 2 + s[5] ** 2) / (2.0 * mr2)
             + mu * (s[0] * s[3] + s[1] * s[4] + s[2] * s[5]) / m0)
        V = -mr1 * Mt1 / r1 - mr2 * Mt2 / r2 - mu * m1 * m2 / d
        E[i] = T + V
        C[i, 0] = s[7] * s[2] - s[8] * s[1] + s[10] * s[5] - s[11] * s[4]
        C[i, 1] = s[8] * s[0] - s[6] * s[2] + s[11] * s[3] - s[9] * s[5]
        C[i, 2] = s[6] * s[1] - s[7] * s[0] + s[9] * s[4] - s[10] * s[3]
    return E, C
