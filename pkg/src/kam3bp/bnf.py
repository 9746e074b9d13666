"""Birkhoff normal form of the averaged secular Hamiltonian.

Pipeline: sample the double-averaged coupling on real poly-circles in the
secular variables, recover its Taylor coefficients by an angular FFT plus
per-mode radial Vandermonde solves, symplectically diagonalize the quadratic
part, and eliminate non-resonant terms order by order with Lie transforms
from `tfseries`.  The output is the polynomial normal form in the action-like
variables r_k = (eta_k^2 + xi_k^2)/2: constant, frequencies, torsion matrix,
higher coefficients, plus the generator list needed to map points back and
measure the true remainder.

The secular rotation generated by the conserved combination
-r1 + r2 + r3 commutes with the averaged coupling, which (a) restricts every
Taylor monomial to a charge-balance sub-lattice — only even total degrees
survive — and (b) lets one angle of the three poly-circle phases be frozen,
cutting the sampling effort by an order of magnitude.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels
from .averaging import QuadratureConfig
from .charts import CollisionError
from .tfseries import (
    DivisorSpec,
    Monomial,
    ResonanceError,
    TFSeries,
    lie_transform,
    solve_homological,
)

SQ2 = math.sqrt(2.0)


class BnfError(RuntimeError):
    pass


# ------------------------------------------------------------ f_av evaluation

def make_fav_evaluator(Lambda1, Lambda2, masses, cfg=None, Z_frac=0.5):
    """Vectorized z -> f_av(z): z has shape (batch, 6) in the secular
    variables (eta1, xi1, eta2, xi2, p, q); one quadrature grid per row."""
    cfg = cfg or QuadratureConfig()
    N = cfg.N
    l = np.linspace(0.0, 2.0 * np.pi, N, endpoint=False)
    A1g, A2g = np.meshgrid(l, l, indexing="ij")
    A1g = A1g.ravel()
    A2g = A2g.ravel()
    G0 = Lambda1 - Lambda2
    mt = (masses.reduced(1), masses.total(1), masses.reduced(2), masses.total(2))

    def evaluate(zbatch, chunk=64):
        zbatch = np.atleast_2d(np.asarray(zbatch, dtype=float))
        out = np.empty(len(zbatch))
        for lo in range(0, len(zbatch), chunk):
            zb = zbatch[lo:lo + chunk]
            nb = len(zb)
            shape = (nb, A1g.size)
            a1 = np.broadcast_to(A1g, shape).ravel()
            a2 = np.broadcast_to(A2g, shape).ravel()
            cols = [np.broadcast_to(zb[:, j, None], shape).ravel() for j in range(6)]
            ones = np.ones_like(a1)
            comp = _kernels.rps_state_arrays(
                Lambda1 * ones, Lambda2 * ones, a1, a2,
                cols[0], cols[1], cols[2], cols[3], cols[4], cols[5],
                Z_frac * G0 * ones, 0.0 * ones, *mt)
            vals = _kernels.perturbing_from_arrays(*comp, masses.m0, masses.m1, masses.m2)
            if not np.all(np.isfinite(vals)):
                raise CollisionError("collision on the averaging grid")
            out[lo:lo + chunk] = vals.reshape(shape).mean(axis=1)
        return out

    return evaluate


# ------------------------------------------------------ Taylor coefficient DFT

def taylor_from_samples(evaluator, degree, radius, charges=(-1, 1, 1),
                        pair_map=None, radial_nodes=None):
    """Taylor coefficients of an SO(2)-symmetric function of three canonical
    pairs, to total degree ``degree``, on poly-circles of size ``radius``.

    charges: rotation weights s_k of the conserved quadratic sum_k s_k r_k;
    the phase of pair 1 is frozen (section trick) and its mode recovered from
    the balance sum_k s_k m_k = 0.  pair_map(z6) can post-process sampled
    points (used to sample in diagonalized variables).  Returns a TFSeries
    over complexified pairs (n=0, m=3).
    """
    if degree % 2:
        degree += 1
    nphi = 2 * degree + 1
    nr = degree // 2 + 1
    if radial_nodes is None:
        radial_nodes = np.linspace(0.4, 1.0, nr) * radius
    rho = [radial_nodes] * 3
    psi = 2.0 * np.pi * np.arange(nphi) / nphi
    # sample layout: (r1, r2, r3, psi2, psi3)
    R1, R2, R3, P2, P3 = np.meshgrid(rho[0], rho[1], rho[2], psi, psi, indexing="ij")
    th1 = np.zeros_like(P2)
    th2 = P2
    th3 = P3
    z = np.stack([R1 * np.cos(th1), R1 * np.sin(th1),
                  R2 * np.cos(th2), R2 * np.sin(th2),
                  R3 * np.cos(th3), R3 * np.sin(th3)], axis=-1)
    pts = z.reshape(-1, 6)
    if pair_map is not None:
        pts = pair_map(pts)
    vals = evaluator(pts).reshape(R1.shape)
    # angular FFT over (psi2, psi3)
    modes = np.fft.fft2(vals, axes=(3, 4)) / nphi ** 2
    s1, s2, s3 = charges
    series = TFSeries(0, 3)
    freqs = np.fft.fftfreq(nphi, d=1.0 / nphi).astype(int)
    for i2, m2 in enumerate(freqs):
        if abs(m2) > degree:
            continue
        for i3, m3 in enumerate(freqs):
            if abs(m3) > degree:
                continue
            m1 = -(s2 * m2 + s3 * m3) * s1
            if abs(m1) + abs(m2) + abs(m3) > degree:
                continue
            prof = modes[:, :, :, i2, i3]
            _radial_solve(series, prof, (m1, m2, m3), radial_nodes, degree)
    series.prune(1e-13)
    return series


def _radial_solve(series, prof, m, nodes, degree):
    """Tensor Vandermonde solve of prof[j1,j2,j3] = sum c prod rho^(|m_k|+2 j_k).

    Columns are scaled to unit norm before inversion to tame the Vandermonde
    conditioning; the scaling is undone on the coefficients."""
    nr = len(nodes)
    Vs = []
    for mk in m:
        V = np.column_stack([nodes ** (abs(mk) + 2 * j) for j in range(nr)])
        colnorm = np.linalg.norm(V, axis=0)
        Vs.append((np.linalg.inv(V / colnorm), colnorm))
    c = np.einsum("ai,bj,ck,ijk->abc", Vs[0][0], Vs[1][0], Vs[2][0], prof)
    c /= np.multiply.outer(np.multiply.outer(Vs[0][1], Vs[1][1]), Vs[2][1])
    Vs = None
    for j1 in range(nr):
        for j2 in range(nr):
            for j3 in range(nr):
                deg = sum(abs(mk) + 2 * jk for mk, jk in zip(m, (j1, j2, j3)))
                if deg > degree:
                    continue
                amp = c[j1, j2, j3]
                if abs(amp) < 1e-16:
                    continue
                # per pair: w^a wbar^b with a - b = m_k, a + b = |m_k| + 2 j_k
                aexp = []
                bexp = []
                for mk, jk in zip(m, (j1, j2, j3)):
                    tot = abs(mk) + 2 * jk
                    aexp.append((tot + mk) // 2)
                    bexp.append((tot - mk) // 2)
                # w = i sqrt2 v, wbar = sqrt2 u  =>  w^a wbar^b = 2^((a+b)/2) i^a u^b v^a
                atot = sum(aexp)
                btot = sum(bexp)
                factor = (SQ2 ** (atot + btot)) * (1j ** atot)
                mono = Monomial((), (), tuple(bexp), tuple(aexp))
                series._add_term(mono, amp * factor)


# ------------------------------------------------------ linear diagonalization

PAIR_J6 = np.array([[0, 1, 0, 0, 0, 0],
                    [-1, 0, 0, 0, 0, 0],
                    [0, 0, 0, 1, 0, 0],
                    [0, 0, -1, 0, 0, 0],
                    [0, 0, 0, 0, 0, 1],
                    [0, 0, 0, 0, -1, 0]], dtype=float)


def diagonalize_quadratic(A, tol=1e-10):
    """Symplectic M with M^T A M = diag(Omega_k I2) for an elliptic quadratic
    form (1/2) z^T A z; returns (M, Omega) with M^T J M = J.

    Eigenvalues of J A must be purely imaginary and simple.  Omega_k keep
    their signs (negative-energy elliptic modes are legitimate).  A pair-
    diagonal input returns the identity map.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0] // 2
    J = PAIR_J6 if m == 3 else _pair_J(m)
    off = A - _pair_diagonal_part(A)
    if np.max(np.abs(off)) < tol * max(np.max(np.abs(A)), 1e-300):
        Omega = np.array([A[2 * k, 2 * k] for k in range(m)])
        return np.eye(2 * m), Omega
    eig, vec = np.linalg.eig(J @ A)
    scale = np.max(np.abs(eig))
    if np.max(np.abs(eig.real)) > 1e-8 * scale:
        raise BnfError(f"spectrum not elliptic: {eig}")
    order = np.argsort(-eig.imag)
    pos = [i for i in order if eig.imag[i] > 0]
    if len(pos) != m:
        raise BnfError("could not split conjugate pairs")
    omegas = eig.imag[pos]
    if np.min(np.abs(np.diff(np.sort(omegas)))) < 1e-8 * scale:
        raise BnfError("degenerate frequencies")
    cols = []
    Omega = []
    for idx in pos:
        w = vec[:, idx]
        u, v = w.real.copy(), w.imag.copy()
        s = float(u @ J @ v)
        if abs(s) < 1e-14:
            raise BnfError("defective eigenvector normalization")
        if s > 0:
            u /= math.sqrt(s)
            v /= math.sqrt(s)
            cols.extend([u, v])
            Omega.append(eig.imag[idx])
        else:
            u /= math.sqrt(-s)
            v /= math.sqrt(-s)
            cols.extend([v, u])
            Omega.append(-eig.imag[idx])
    M = np.column_stack(cols)
    resid = np.max(np.abs(M.T @ J @ M - J))
    if resid > tol:
        raise BnfError(f"symplecticity residual {resid:.2e}")
    return M, np.array(Omega)


def _pair_J(m):
    J = np.zeros((2 * m, 2 * m))
    for k in range(m):
        J[2 * k, 2 * k + 1] = 1.0
        J[2 * k + 1, 2 * k] = -1.0
    return J


def _pair_diagonal_part(A):
    m = A.shape[0] // 2
    D = np.zeros_like(A)
    for k in range(m):
        d = 0.5 * (A[2 * k, 2 * k] + A[2 * k + 1, 2 * k + 1])
        D[2 * k, 2 * k] = D[2 * k + 1, 2 * k + 1] = d
    return D


# ------------------------------------------------------------------- BNF core

@dataclass
class BnfResult:
    Lambda: tuple
    s: int
    C0: float
    Omega: np.ndarray
    T: np.ndarray
    Pj: dict                 # degree j -> {r-exponent tuple: coefficient}
    generators: list         # TFSeries, in elimination order
    linear_map: np.ndarray   # raw z = M @ diagonalized z
    normal_series: TFSeries  # complexified normal form (diag variables)
    charges: tuple
    meta: dict
    remainder: dict = None

    def normal_form_value(self, r):
        """Evaluate C0 + Omega.r + r.T r/2 + sum_j P_j(r)."""
        r = np.asarray(r, dtype=float)
        val = self.C0 + float(self.Omega @ r) + 0.5 * float(r @ self.T @ r)
        for j, terms in self.Pj.items():
            for expo, c in terms.items():
                val += c * float(np.prod(r ** np.array(expo)))
        return val

    def to_json_dict(self):
        out = {
            "Lambda": list(self.Lambda),
            "s": self.s,
            "C0": self.C0,
            "Omega": self.Omega.tolist(),
            "T": self.T.tolist(),
            "Pj": [{"degree": j,
                    "coeffs": [{"expo": list(e), "value": c}
                               for e, c in sorted(terms.items())]}
                   for j, terms in sorted(self.Pj.items())],
            "meta": self.meta,
        }
        if self.remainder is not None:
            out["remainder"] = self.remainder
        return out


def _hessian_from_series(series):
    """6x6 real Hessian of the degree-2 part of a complexified-pair series."""
    from .tfseries import realify_complex_pairs
    deg2 = series.select(lambda mo: mo.degree == 2)
    real = realify_complex_pairs(deg2)
    H = np.zeros((6, 6))
    for mo, c in real.items():
        if abs(c.imag) > 1e-9 * max(abs(c), 1.0):
            raise BnfError("degree-2 part failed the reality check")
        idx = []
        for k in range(3):
            idx += [2 * k] * mo.alpha[k] + [2 * k + 1] * mo.beta[k]
        i, j = idx
        if i == j:
            H[i, i] += 2.0 * c.real
        else:
            H[i, j] += c.real
            H[j, i] += c.real
    return H


def birkhoff_normalize(series, Omega, s, resonance_tol=None):
    """Order-by-order elimination of non (r-power) monomials through degree
    2s.  series: complexified (n=0, m=3) Taylor series whose quadratic part
    is already sum_k i Omega_k u_k v_k.  Returns (normal_series, generators).
    """
    degree_cap = 2 * s
    Omega = np.asarray(Omega, dtype=float)
    if resonance_tol is None:
        resonance_tol = 1e-6 * float(np.max(np.abs(Omega)))
    # nonresonance through order 2s
    for kvec in _modes_upto(len(Omega), degree_cap):
        if any(kvec) and abs(float(Omega @ kvec)) < resonance_tol * max(1, sum(map(abs, kvec))):
            raise ResonanceError(f"resonant frequency combination {kvec}",
                                 mode=tuple(kvec))
    div = DivisorSpec(omega1=(), omega2=(), nu=1j * Omega, alpha1=resonance_tol,
                      alpha2=resonance_tol, K=degree_cap, m=len(Omega))
    work = series.truncate_degree(degree_cap)
    gens = []
    # d = 2 mops up numerically imperfect diagonalization (a tiny linear
    # correction); d >= 3 is the usual order-by-order elimination
    for d in range(2, degree_cap + 1):
        part = work.select(lambda mo: mo.degree == d and mo.alpha != mo.beta)
        if len(part) == 0:
            continue
        phi = solve_homological(part, div)
        gens.append(phi)
        order = max(3, (degree_cap - 2) // max(d - 2, 1))
        work = lie_transform(phi, work, order, degree_cap=degree_cap)
    residual = work.select(lambda mo: mo.alpha != mo.beta)
    return work, gens, residual


def _modes_upto(m, K):
    out = []

    def rec(idx, remaining, vec):
        if idx == m:
            out.append(tuple(vec))
            return
        for val in range(-remaining, remaining + 1):
            vec.append(val)
            rec(idx + 1, remaining - abs(val), vec)
            vec.pop()

    rec(0, K, [])
    return out


def normal_form_coefficients(normal_series):
    """(C0, Omega, T, Pj) from the balanced monomials u^a v^a; r-polynomial
    coefficients use u_k v_k = -i r_k."""
    C0 = 0.0
    Omega = np.zeros(3)
    T = np.zeros((3, 3))
    Pj = {}
    for mo, c in normal_series.items():
        if mo.alpha != mo.beta:
            continue
        a = mo.alpha
        coeff = c * (-1j) ** sum(a)
        if abs(coeff.imag) > 1e-8 * max(1.0, abs(coeff)):
            raise BnfError(f"normal-form coefficient not real: {mo} -> {coeff}")
        val = coeff.real
        order = sum(a)
        if order == 0:
            C0 += val
        elif order == 1:
            Omega[a.index(1)] += val
        elif order == 2:
            i = next(k for k in range(3) if a[k])
            if a[i] == 2:
                T[i, i] += 2.0 * val
            else:
                j = next(k for k in range(i + 1, 3) if a[k])
                T[i, j] += val
                T[j, i] += val
        else:
            Pj.setdefault(order, {})[tuple(a)] = Pj.get(order, {}).get(tuple(a), 0.0) + val
    return C0, Omega, T, Pj


def bnf_from_fav(Lambda1, Lambda2, masses, s=4, cfg=None, radius=0.05,
                 evaluator=None, fit_margin=2):
    """Full pipeline at one action point: extract, diagonalize, normalize.

    fit_margin extends the extraction basis beyond degree 2s so that the
    neglected tail does not bias the working coefficients (the torsion picks
    up an O(radius^(margin+2)) truncation bias otherwise)."""
    cfg = cfg or QuadratureConfig()
    if evaluator is None:
        evaluator = make_fav_evaluator(Lambda1, Lambda2, masses, cfg)
    degree = 2 * s
    # stage 1: quadratic part in raw pairs (degree-4 basis so quartic content
    # does not alias into the Hessian)
    quad = taylor_from_samples(evaluator, 4, radius * 0.5, charges=(-1, 1, 1))
    H = _hessian_from_series(quad)
    M, Omega = diagonalize_quadratic(H)
    # charge signature in the diagonalized variables
    S_raw = np.diag([-1.0, -1.0, 1.0, 1.0, 1.0, 1.0])
    S_diag = M.T @ S_raw @ M
    charges = tuple(int(round(S_diag[2 * k, 2 * k])) for k in range(3))
    if np.max(np.abs(S_diag - np.diag(np.repeat(charges, 2)))) > 1e-8:
        raise BnfError("conserved rotation did not diagonalize with the Hessian")
    # stage 2: full-degree extraction in diagonalized variables
    full = taylor_from_samples(evaluator, degree + fit_margin, radius, charges=charges,
                               pair_map=lambda pts: pts @ M.T).truncate_degree(degree)
    normal, gens, residual = birkhoff_normalize(full, Omega, s)
    C0, Om2, T, Pj = normal_form_coefficients(normal)
    # brackets never create constants, so the exact mean at z = 0 is the
    # normal form's constant; pinning it removes the extraction's offset noise
    C0 = float(evaluator(np.zeros((1, 6)))[0])
    resid_scale = residual.max_amplitude() / max(full.max_amplitude(), 1e-300)
    return BnfResult(
        Lambda=(Lambda1, Lambda2), s=s, C0=C0, Omega=np.asarray(Om2), T=T,
        Pj=Pj, generators=gens, linear_map=M, normal_series=normal,
        charges=charges,
        meta={"ordering": "total (eta,xi,p,q) degree", "radius": radius,
              "quadrature_N": cfg.N, "residual_rel": float(resid_scale),
              "Omega_quadratic": Omega.tolist()},
    )


def torsion_det(Lambda1, Lambda2, masses, s=2, cfg=None, radius=0.05):
    res = bnf_from_fav(Lambda1, Lambda2, masses, s=s, cfg=cfg, radius=radius)
    scale = float(np.max(np.abs(res.T))) ** 3
    return float(np.linalg.det(res.T)), scale, res


# --------------------------------------------------------------- remainder map

class PolyEvaluator:
    """Batched value/gradient of an oscillator-only TFSeries at complex
    pair points."""

    def __init__(self, series):
        self.m = series.m
        monos = list(series.items())
        self.A = np.array([mo.alpha for mo, _ in monos], dtype=int).reshape(-1, self.m)
        self.B = np.array([mo.beta for mo, _ in monos], dtype=int).reshape(-1, self.m)
        self.c = np.array([c for _, c in monos], dtype=complex)

    def _pow(self, U, E):
        return np.prod(U[:, None, :] ** E[None, :, :], axis=2)

    def value(self, U, V):
        if len(self.c) == 0:
            return np.zeros(len(U), dtype=complex)
        return self._pow(U, self.A) * self._pow(V, self.B) @ self.c

    def grad(self, U, V):
        nb = len(U)
        gu = np.zeros((nb, self.m), dtype=complex)
        gv = np.zeros((nb, self.m), dtype=complex)
        if len(self.c) == 0:
            return gu, gv
        PU = self._pow(U, self.A)
        PV = self._pow(V, self.B)
        for j in range(self.m):
            sel = self.A[:, j] > 0
            if np.any(sel):
                Aj = self.A[sel].copy()
                Aj[:, j] -= 1
                gu[:, j] = (self._pow(U, Aj) * PV[:, sel]) @ (self.c[sel] * self.A[sel, j])
            sel = self.B[:, j] > 0
            if np.any(sel):
                Bj = self.B[sel].copy()
                Bj[:, j] -= 1
                gv[:, j] = (PU[:, sel] * self._pow(V, Bj)) @ (self.c[sel] * self.B[sel, j])
        return gu, gv


def flow_generator(gen, U, V, t=1.0, n_steps=48):
    """RK4 time-t flow of du/dt = dphi/dv, dv/dt = -dphi/du."""
    ev = PolyEvaluator(gen)
    h = t / n_steps

    def field(U, V):
        gu, gv = ev.grad(U, V)
        return gv, -gu

    for _ in range(n_steps):
        k1u, k1v = field(U, V)
        k2u, k2v = field(U + 0.5 * h * k1u, V + 0.5 * h * k1v)
        k3u, k3v = field(U + 0.5 * h * k2u, V + 0.5 * h * k2v)
        k4u, k4v = field(U + h * k3u, V + h * k3v)
        U = U + (h / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        V = V + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return U, V


def map_points_to_raw(bnf, zbar):
    """Normal-form coordinates -> original secular coordinates.

    The normalization built H_new = H_old o Phi_3^{-1} o Phi_4^{-1} o ...,
    so a point maps back through the inverse flows, last generator first,
    then the linear diagonalization.
    """
    zbar = np.atleast_2d(np.asarray(zbar, dtype=float))
    eta = zbar[:, 0::2]
    xi = zbar[:, 1::2]
    U = (eta - 1j * xi) / SQ2
    V = (eta + 1j * xi) / (1j * SQ2)
    for gen in reversed(bnf.generators):
        U, V = flow_generator(gen, U, V, t=-1.0)
    eta = (U + 1j * V) / SQ2
    xi = (1j * U + V) / SQ2
    if max(np.max(np.abs(eta.imag)), np.max(np.abs(xi.imag))) > 1e-8 * max(1.0, np.max(np.abs(eta.real))):
        raise BnfError("flow left the real slice")
    zdiag = np.empty_like(zbar)
    zdiag[:, 0::2] = eta.real
    zdiag[:, 1::2] = xi.real
    return zdiag @ bnf.linear_map.T


def remainder_scaling(bnf, radii, evaluator, n_dirs=24, seed=0):
    """Sup over sampled directions of |f_av(map back(z)) - normal_form(r)|
    per radius, plus the log-log fitted exponent (expected 2s+1)."""
    radii = np.asarray(sorted(radii), dtype=float)
    if len(radii) < 4:
        raise ValueError("need at least 4 radii")
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_dirs, 6))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    sup = []
    for eps in radii:
        zbar = eps * dirs
        zraw = map_points_to_raw(bnf, zbar)
        f_true = evaluator(zraw)
        r = 0.5 * (zbar[:, 0::2] ** 2 + zbar[:, 1::2] ** 2)
        f_model = np.array([bnf.normal_form_value(rk) for rk in r])
        sup.append(float(np.max(np.abs(f_true - f_model))))
    sup = np.array(sup)
    good = sup > 0
    exponent = float(np.polyfit(np.log(radii[good]), np.log(sup[good]), 1)[0]) if good.sum() >= 2 else float("nan")
    return {"radii": radii.tolist(), "sup_norms": sup.tolist(), "exponent": exponent}
