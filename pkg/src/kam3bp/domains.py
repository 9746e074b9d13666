"""Admissible parameter regions and measure estimates.

All the explicit set constructions around the co-planar, co-circular,
outer-retrograde configuration: the action box L, the hyperbolic-chart
domains L_p/G_p/B_p/A_p, the two nested families L0/A0 (hyperbolic side)
and L1/G1/A1/B1 (elliptic side), the tangency-cubic surds, the bisection
root x_star, and the Monte-Carlo / quadrature / closed-form chain bounding
the measure of the overlap A_star = A0 n A1.

Membership tests follow the displayed inequalities verbatim (strict where
displayed strict).  Everything is scale covariant under (Lambda, G, Gamma2)
-> t (Lambda, G, Gamma2), which the proofs use via x = Lambda2/G,
y = Lambda1/G.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .bodies import MassParams


def curve_C(x):
    """y = (1 + x) sqrt((4 + x)/5), the boundary curve through (1, 2)."""
    x = np.asarray(x, dtype=float)
    return (1.0 + x) * np.sqrt((4.0 + x) / 5.0)


def underline_k():
    """Slope of the line through the origin tangent to curve_C: ~1.57."""
    return 0.25 * math.sqrt(0.3 * (69.0 + 11.0 * math.sqrt(33.0)))


def lambda_plus_of_G(G):
    """Largest admissible Lambda2: where curve_C meets the line y = 2x."""
    if G <= 0:
        raise ValueError("G must be positive")
    return 0.5 * G * (13.0 + math.sqrt(185.0))


def tangency_cubic():
    """Closed-form tangency data (a, b, k) for y = kx touching curve_C.

    Eliminating y gives x^3 + (6 - 5k^2) x^2 + 9x + 4 = 0, matched against
    (x - a)^2 (x - b): a = (1+sqrt(33))/2, b = (-17+sqrt(33))/32,
    k = underline_k().  Residuals of the matched-coefficient system are
    checked before returning.
    """
    s33 = math.sqrt(33.0)
    a = (1.0 + s33) / 2.0
    b = (-17.0 + s33) / 32.0
    k = underline_k()
    resid = (abs(-(b + 2 * a) - (6 - 5 * k ** 2)),
             abs(2 * a * b + a * a - 9.0),
             abs(-a * a * b - 4.0))
    if max(resid) > 1e-12:
        raise AssertionError(f"tangency residuals too large: {resid}")
    return a, b, k


def tangency_cubic_roots():
    """Roots of a^3 - 9a - 8 = 0: (-1, (1-sqrt(33))/2, (1+sqrt(33))/2)."""
    s33 = math.sqrt(33.0)
    return -1.0, (1.0 - s33) / 2.0, (1.0 + s33) / 2.0


THETA_VALIDITY = (-19.0 + math.sqrt(1385.0)) / 128.0  # ~0.1423


def xstar_cubic(x, theta):
    """G(x) = x^3 + x^2 - (1+10 theta) x - 1 - 10 theta - 5 theta^2.

    Equivalent for x >= -1 to x + 1 + theta = (1+x) sqrt((4+x)/5) after
    multiplying by the conjugate; G(1+4t) = t(64t^2+19t-4) and
    G(1+6t) = t(216t^2+79t+4).
    """
    return x ** 3 + x ** 2 - (1.0 + 10.0 * theta) * x - 1.0 - 10.0 * theta - 5.0 * theta ** 2


def xstar(theta, tol=1e-12):
    """Unique root of xstar_cubic in (1 + 4 theta, 1 + 6 theta), by bisection.

    Valid for 0 < theta < 1/10 (the sign bracket holds up to ~0.1423).  This
    is the abscissa where the upper boundary of the overlap strip meets
    curve_C, in x = Lambda2/G units.
    """
    if not 0.0 < theta <= 0.1:
        raise ValueError("theta must lie in (0, 1/10]")
    lo, hi = 1.0 + 4.0 * theta, 1.0 + 6.0 * theta
    flo, fhi = xstar_cubic(lo, theta), xstar_cubic(hi, theta)
    if not (flo < 0.0 < fhi):
        raise AssertionError("bisection bracket failed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if xstar_cubic(mid, theta) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class DomainSpec:
    """Geometric and mass parameters for the membership tests.

    G: total angular momentum level; Lambda_minus < Lambda_plus: Lambda2
    bounds for L; alpha_minus < alpha_plus in (0,1): semi-major-axis-ratio
    bounds; c, c1 in (0,1): free constants; delta: mass-gap parameter;
    eps: secular-ball radius; gamma_small < c1^2 eps^2; masses: MassParams.
    """

    G: float
    Lambda_minus: float
    Lambda_plus: float
    alpha_minus: float
    alpha_plus: float
    c: float = 0.5
    c1: float = 0.1
    delta: float = 0.5
    eps: float = 0.1
    gamma_small: float = None
    masses: MassParams = None

    def __post_init__(self):
        if self.masses is None:
            self.masses = MassParams(m0=1.0, m1=1.0, m2=0.25, mu=1e-3)
        if self.gamma_small is None:
            self.gamma_small = 0.5 * self.c1 ** 2 * self.eps ** 2
        if not 0 < self.Lambda_minus < self.Lambda_plus:
            raise ValueError("require 0 < Lambda_minus < Lambda_plus")
        if not 0 < self.alpha_minus < self.alpha_plus < 1:
            raise ValueError("require 0 < alpha_minus < alpha_plus < 1")
        for name in ("c", "c1", "delta"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.gamma_small >= self.c1 ** 2 * self.eps ** 2:
            raise ValueError("require gamma_small < c1^2 eps^2")

    def k_pm(self):
        """Slopes (k_minus, k_plus) bounding Lambda1/Lambda2 over L."""
        m = self.masses
        base = m.m1 / m.m2
        num = m.m0 + m.mu * m.m2
        den = m.m0 + m.mu * m.m1
        return (base * math.sqrt(num / den * self.alpha_minus),
                base * math.sqrt(num / den * self.alpha_plus))

    @property
    def theta(self):
        return self.c1 ** 2 * self.eps ** 2 / self.G

    @property
    def zeta(self):
        return self.gamma_small / self.G


def k_pm(spec):
    return spec.k_pm()


# ------------------------------------------------------------- membership tests

def in_L(L1, L2, spec):
    """Action box: Lambda_- < L2 < Lambda_+ and k_- L2 < L1 < k_+ L2."""
    km, kp = spec.k_pm()
    return (spec.Lambda_minus < L2 < spec.Lambda_plus) and (km * L2 < L1 < kp * L2)


def in_Lp(L1, L2, spec):
    """Hyperbolic-chart action domain (all inequalities strict).

    The third inequality reads 5 L1^2 G > (G + L2)^2 (4G + L2): the squared
    first factor is what makes it the sub-curve_C condition (square the curve
    relation) and keeps the set scale covariant, matching the parallel
    alpha_plus-inequality.
    """
    G = spec.G
    w = 2.0 / spec.c * math.sqrt(spec.alpha_plus)
    return (in_L(L1, L2, spec)
            and L1 > G + w * L2
            and 5.0 * L1 ** 2 * G - (G + w * L1) ** 2 * (4.0 * G + w * L1) > 0.0
            and 5.0 * L1 ** 2 * G - (G + L2) ** 2 * (4.0 * G + L2) > 0.0
            and L2 > G and L1 > 2.0 * G)


def in_Gp(G2, L1, L2, spec):
    """Gamma2 window: max{(2/c) sqrt(alpha_+) L2, G} < G2 < L2."""
    w = 2.0 / spec.c * math.sqrt(spec.alpha_plus)
    return max(w * L2, spec.G) < G2 < L2


def in_Bp(Theta, vartheta, spec):
    """|Theta| < G/2 and |vartheta| < pi/2."""
    return abs(Theta) < spec.G / 2.0 and abs(vartheta) < math.pi / 2.0


def in_Ap(L1, L2, G2, spec):
    return in_Lp(L1, L2, spec) and in_Gp(G2, L1, L2, spec)


def in_L0(L1, L2, spec):
    """Inner action region below curve_C: G <= L2 <= Lambda_+ and
    curve_C(L2/G) G < L1 < min(k_+ L2, 2 Lambda_+)."""
    G = spec.G
    _, kp = spec.k_pm()
    if not (G <= L2 <= spec.Lambda_plus):
        return False
    lower = (G + L2) * math.sqrt((4.0 * G + L2) / (5.0 * G))
    return lower < L1 < min(kp * L2, 2.0 * spec.Lambda_plus)


def in_A0(L1, L2, G2, spec):
    return in_L0(L1, L2, spec) and in_Gp(G2, L1, L2, spec)


def in_L1(L1, L2, spec):
    """Elliptic-side strip: (L1, L2) in L and |L1 - L2 - G| < c1^2 eps^2."""
    return in_L(L1, L2, spec) and abs(L1 - L2 - spec.G) < spec.c1 ** 2 * spec.eps ** 2


def in_G1(G2, L2, spec):
    """L2 - c1^2 eps^2 < G2 < L2 - gamma_small."""
    return L2 - spec.c1 ** 2 * spec.eps ** 2 < G2 < L2 - spec.gamma_small


def in_A1(L1, L2, G2, spec):
    return in_L1(L1, L2, spec) and in_G1(G2, L2, spec)


def in_B1(Theta, vartheta, spec):
    """Theta^2 < c1^2 G eps^2 and vartheta^2 < c1^2 eps^2 / G."""
    c1e2 = spec.c1 ** 2 * spec.eps ** 2
    return Theta ** 2 < c1e2 * spec.G and vartheta ** 2 < c1e2 / spec.G


def in_Astar(L1, L2, G2, spec):
    return in_A0(L1, L2, G2, spec) and in_A1(L1, L2, G2, spec)


# ----------------------------------------------------- inclusion check (X sets)

def check_inclusion_hypotheses(spec):
    """Hypotheses for the inner-region inclusion: Lambda_- < G, k_- <=
    underline_k, k_+ >= 2, alpha_+ <= c^2/16."""
    km, kp = spec.k_pm()
    fails = []
    if not spec.Lambda_minus < spec.G:
        fails.append("Lambda_minus < G")
    if not km <= underline_k():
        fails.append(f"k_minus = {km:.4f} <= underline_k")
    if not kp >= 2.0:
        fails.append(f"k_plus = {kp:.4f} >= 2")
    if not spec.alpha_plus <= spec.c ** 2 / 16.0:
        fails.append("alpha_plus <= c^2/16")
    return fails


def _in_X0(y, x, x_plus, kp):
    return (1.0 <= x <= x_plus) and (curve_C(x) < y < min(kp * x, 2.0 * x_plus))


def _in_X1(y, x, x_plus, km, kp):
    return (1.0 <= x <= x_plus and y > 2.0
            and max(km * x, float(curve_C(x))) < y < kp * x)


def _in_X2(y, x, x_plus, w):
    return 1.0 <= x <= x_plus and y > 1.0 + w * x


def _in_X3(y, x, x_plus, w):
    return (1.0 <= x <= x_plus and y > 2.0
            and 5.0 * y ** 2 - (1.0 + w * y) ** 2 * (4.0 + w * y) > 0.0)


def verify_inclusion_X(spec, samples=10_000, seed=0):
    """Sample X0 uniformly and verify every point lies in X1 n X2 n X3.

    X0 is the rescaled inner region (x, y) = (Lambda2, Lambda1)/G;
    X1, X2, X3 are the three constraint sets whose intersection is the
    rescaled hyperbolic-chart domain.  Returns a report dict.
    """
    fails = check_inclusion_hypotheses(spec)
    if fails:
        raise ValueError("inclusion hypotheses violated: " + "; ".join(fails))
    km, kp = spec.k_pm()
    w = 2.0 / spec.c * math.sqrt(spec.alpha_plus)
    x_plus = lambda_plus_of_G(spec.G) / spec.G
    rng = np.random.default_rng(seed)
    n_in = 0
    bad = []
    while n_in < samples:
        draw = samples - n_in
        x = rng.uniform(1.0, x_plus, draw)
        y = rng.uniform(2.0, 2.0 * x_plus, draw)
        for xi, yi in zip(x, y):
            if not _in_X0(yi, xi, x_plus, kp):
                continue
            n_in += 1
            if not (_in_X1(yi, xi, x_plus, km, kp) and _in_X2(yi, xi, x_plus, w)
                    and _in_X3(yi, xi, x_plus, w)):
                bad.append((float(xi), float(yi)))
            if n_in == samples:
                break
    return {"samples": samples, "violations": len(bad), "bad_points": bad[:10],
            "pass": not bad}


# ------------------------------------------------------------- measure estimate

def _F1(x, theta):
    return np.minimum(2.0 * x, x + 1.0 + theta) - curve_C(x)


def _F2(x, theta, zeta, mslope):
    return np.minimum(np.minimum(theta - zeta, x - 1.0 - zeta), mslope * x - zeta)


def measure_Astar(spec, samples=200_000, seed=0, quad_points=4096):
    """Measure of A_star = A0 n A1 in (Lambda1, Lambda2, Gamma2) space.

    Returns a dict with three values and their chain relation:
      monte_carlo  — rejection sampling in a bounding box of the overlap,
      integral     — G^3 * quadrature of F1*F2 over (1+zeta, x_star),
      analytic     — (9/10)(c1^2 eps^2 - gamma) c1^4 eps^4,
    which must satisfy monte_carlo >= integral >= analytic (the first up to
    the reported statistical error).

    Hypotheses: G >= 10 c1^2 eps^2 and alpha_+ < c^2/16.
    """
    G = spec.G
    theta = spec.theta
    zeta = spec.zeta
    if G < 10.0 * spec.c1 ** 2 * spec.eps ** 2:
        raise ValueError("require G >= 10 c1^2 eps^2")
    if not spec.alpha_plus < spec.c ** 2 / 16.0:
        raise ValueError("require alpha_plus < c^2/16")
    xs = xstar(theta)
    mslope = 1.0 - 2.0 / spec.c * math.sqrt(spec.alpha_plus)

    # quadrature of the exact lower-bound integrand (F1 >= 0 is clipped:
    # the strip is empty where the curve lies above the upper envelope)
    x = np.linspace(1.0 + zeta, xs, quad_points)
    integrand = np.clip(_F1(x, theta), 0.0, None) * np.clip(_F2(x, theta, zeta, mslope), 0.0, None)
    integral = G ** 3 * float(np.trapezoid(integrand, x))

    analytic = 0.9 * (spec.c1 ** 2 * spec.eps ** 2 - spec.gamma_small) * spec.c1 ** 4 * spec.eps ** 4

    # Monte Carlo on a box containing the overlap:
    #   L2 in (G(1+zeta), G x_star), L1 in (L2 + G - theta G, L2 + G + theta G),
    #   G2 in (L2 - c1^2 eps^2, L2 - gamma)
    rng = np.random.default_rng(seed)
    c1e2 = spec.c1 ** 2 * spec.eps ** 2
    lo2, hi2 = G * (1.0 + zeta), G * xs
    n_hit = 0
    batch = 50_000
    remaining = samples
    while remaining > 0:
        nb = min(batch, remaining)
        remaining -= nb
        L2 = rng.uniform(lo2, hi2, nb)
        L1 = L2 + G + rng.uniform(-c1e2, c1e2, nb)
        G2 = L2 - rng.uniform(spec.gamma_small, c1e2, nb)
        for a, b, g2 in zip(L1, L2, G2):
            if in_Astar(a, b, g2, spec):
                n_hit += 1
    box_vol = (hi2 - lo2) * (2.0 * c1e2) * (c1e2 - spec.gamma_small)
    frac = n_hit / samples
    mc = box_vol * frac
    mc_err = box_vol * math.sqrt(max(frac * (1.0 - frac), 1e-12) / samples)
    return {
        "monte_carlo": mc,
        "monte_carlo_stderr": mc_err,
        "integral": integral,
        "analytic_lower_bound": analytic,
        "x_star": xs,
        "theta": theta,
        "zeta": zeta,
        "chain_ok": bool(mc + 2.0 * mc_err >= integral >= analytic),
        "samples": samples,
    }


# ----------------------------------------------------------------- calibration

def calibrate_c1(spec_factory, eps, candidates=None, samples=200, seed=0):
    """Largest c1 for which sampled members of the elliptic-side region map to
    secular coordinates with |z| <= K eps for a fixed K (the smallness the
    inclusion argument needs).  spec_factory(c1) must build a DomainSpec.
    """
    from .charts import gamma1_from_perihelia
    if candidates is None:
        candidates = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5]
    rng = np.random.default_rng(seed)
    best = None
    report = {}
    for c1 in candidates:
        spec = spec_factory(c1)
        zmax = _z_over_eps_max(spec, rng, samples)
        report[c1] = zmax
        if zmax <= 3.0:
            best = c1
    return best, report


def _z_over_eps_max(spec, rng, samples):
    from .charts import gamma1_from_perihelia
    G = spec.G
    c1e2 = spec.c1 ** 2 * spec.eps ** 2
    worst = 0.0
    got = 0
    while got < samples:
        L2 = rng.uniform(max(spec.Lambda_minus, G * 0.5), spec.Lambda_plus)
        L1 = L2 + G + rng.uniform(-c1e2, c1e2)
        G2 = L2 - rng.uniform(spec.gamma_small, c1e2)
        Th = rng.uniform(-1, 1) * math.sqrt(c1e2 * G)
        vth = rng.uniform(-1, 1) * math.sqrt(c1e2 / G)
        if not (in_L1(L1, L2, spec) and in_G1(G2, L2, spec) and in_B1(Th, vth, spec)):
            continue
        got += 1
        G1 = gamma1_from_perihelia(G, G2, Th, vth)
        z2 = 2.0 * (G + G2 - G1) + 2.0 * (L1 - G1) + 2.0 * (L2 - G2)
        if z2 < 0:
            z2 = 0.0
        worst = max(worst, math.sqrt(z2) / spec.eps)
    return worst


# ------------------------------------------------------------------ figure data

def emit_figure_data(spec, figure_id, n_points=400):
    """Plot-data rows (x, y, series-label) for the two reference figures.

    figure 1: curve_C with the two slope lines k_- x and k_+ x.
    figure 2: boundaries of the rescaled regions L0 (curve_C up to the upper
    envelope) and L1 (the strip |y - x - 1| < theta), in x = Lambda2/G units.
    """
    km, kp = spec.k_pm()
    x_plus = lambda_plus_of_G(spec.G) / spec.G
    rows = []
    if figure_id == 1:
        x = np.linspace(1.0, x_plus * 1.05, n_points)
        for xi, yi in zip(x, curve_C(x)):
            rows.append((float(xi), float(yi), "curve_C"))
        for xi in x:
            rows.append((float(xi), float(km * xi), "slope_k_minus"))
        for xi in x:
            rows.append((float(xi), float(kp * xi), "slope_k_plus"))
    elif figure_id == 2:
        theta = spec.theta
        xs = xstar(theta)
        x = np.linspace(1.0, x_plus, n_points)
        upper0 = np.minimum(kp * x, 2.0 * x_plus)
        for xi, lo, hi in zip(x, curve_C(x), upper0):
            if lo < hi:
                rows.append((float(xi), float(lo), "L0_lower"))
                rows.append((float(xi), float(hi), "L0_upper"))
        x1 = np.linspace(1.0, min(xs * 1.6, x_plus), n_points)
        for xi in x1:
            rows.append((float(xi), float(xi + 1.0 - theta), "L1_lower"))
            rows.append((float(xi), float(xi + 1.0 + theta), "L1_upper"))
    else:
        raise ValueError(f"unknown figure id {figure_id}")
    return rows


def write_figure_csv(path, rows):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "series"])
        writer.writerows(rows)
