"""Quantitative bookkeeping of the two-scale KAM iteration.

Everything here is exact arithmetic on the displayed recursions: the step
constants, the two-scale Diophantine scan, the per-step parameter update with
its super-convergence and hyperbolicity-floor guarantees, and the headline
threshold/measure formulas.  No dynamics is touched; this is the constants
ledger that the averaging/normal-form machinery must satisfy.

The per-step quantities square at every iteration, so a run of more than a
handful of steps underflows float64.  All recursion arithmetic is done in
mpmath (60 significant digits) and stored as ``mpf`` values.
"""

from dataclasses import dataclass, field, replace

import mpmath as mp
import numpy as np

mp.mp.dps = 60

LOG2 = mp.log(2)


class HyperbolicityExhausted(RuntimeError):
    """The lower bound on |Re nu| was eaten up by the perturbation."""


def constants(n, tau):
    """Step constants (c_hat, c_tilde) = (2^7 (n+1) 24^tau, 2^6).

    Exact integers whenever tau is integral.
    """
    if n < 1 or tau <= n:
        raise ValueError("require n >= 1 and tau > n")
    if float(tau).is_integer():
        c_hat = 2 ** 7 * (n + 1) * 24 ** int(tau)
    else:
        c_hat = mp.mpf(2) ** 7 * (n + 1) * mp.mpf(24) ** mp.mpf(tau)
    return c_hat, 2 ** 6


def log_plus(x):
    """max(1, log x)."""
    x = mp.mpf(x)
    if x <= 0:
        raise ValueError("log_plus needs a positive argument")
    return max(mp.mpf(1), mp.log(x))


@dataclass
class KamInput:
    """Constant ledger of the two-scale KAM theorem.

    n1, n2: angle-block dimensions (n = n1 + n2); tau > n: Diophantine
    exponent; gamma1 >= gamma2 > 0: two-scale Diophantine constants;
    s: angle analyticity width (0 < s <= eps/(eps_bar + eps)); rho: action
    width; eps, eps_bar: oscillator radii; M, M_hat, M_bar, M_bar1, M_bar2:
    frequency-map bounds; E: perturbation norm; lam: lower bound on |Re nu|.
    L = max(M_bar, 1/M, 1/M_hat) is derived.
    """

    n1: int
    n2: int
    tau: float
    gamma1: float
    gamma2: float
    s: float
    rho: float
    eps: float
    eps_bar: float
    M: float
    M_hat: float
    M_bar: float
    M_bar1: float
    M_bar2: float
    E: float
    lam: float
    c1: float = 1.0  # empirical bracket constant entering the smallness margin

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "s", "rho", "eps", "eps_bar", "M",
                     "M_hat", "M_bar", "M_bar1", "M_bar2", "E", "lam"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tau <= self.n:
            raise ValueError("tau must exceed n = n1 + n2")
        if self.gamma1 < self.gamma2:
            raise ValueError("require gamma1 >= gamma2")
        if self.s > self.eps / (self.eps_bar + self.eps) + 1e-15:
            raise ValueError("require s <= eps/(eps_bar + eps)")

    @property
    def n(self):
        return self.n1 + self.n2

    @property
    def L(self):
        return max(self.M_bar, 1.0 / self.M, 1.0 / self.M_hat)


@dataclass
class KamState:
    """Per-step quantities; all mpf."""

    j: int
    K: object
    rho_hat: object
    rho_tilde: object
    E_hat: object
    E_tilde: object
    E: object
    M: object
    M_hat: object
    M_bar: object
    M_bar1: object
    M_bar2: object
    L: object
    lam: object
    lam_relaxed: object  # variant with the 2^4 update of the inner lemma
    s: object
    rho: object
    eps: object
    alpha1: object
    alpha2: object

    def as_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, mp.mpf):
                out[k] = {"value": float(v), "mpf": mp.nstr(v, 25)}
            else:
                out[k] = v
        return out


def _derived(j, E, M, M_hat, M_bar, M_bar1, M_bar2, L, lam, lam_relaxed, s, rho, eps, inp):
    g1 = mp.mpf(inp.gamma1)
    g2 = mp.mpf(inp.gamma2)
    tau = mp.mpf(inp.tau)
    x = (E * L * M ** 2 / g1 ** 2) ** -1
    K = 32 / s * log_plus(x)
    rho_hat = min(g1 / (2 * M * K ** (tau + 1)),
                  g2 / (2 * M_hat * K ** (tau + 1)),
                  lam / (2 * M * K),
                  lam / (2 * M_hat * K),
                  rho)
    rho_tilde = min(rho_hat, eps ** 2 / s)
    E_hat = E * L / (rho_hat * rho_tilde)
    E_tilde = E / (lam * eps ** 2)
    alpha1 = g1 / (2 * K ** tau)
    alpha2 = g2 / (2 * K ** tau)
    return KamState(j=j, K=K, rho_hat=rho_hat, rho_tilde=rho_tilde,
                    E_hat=E_hat, E_tilde=E_tilde, E=E, M=M, M_hat=M_hat,
                    M_bar=M_bar, M_bar1=M_bar1, M_bar2=M_bar2, L=L, lam=lam,
                    lam_relaxed=lam_relaxed, s=s, rho=rho, eps=eps,
                    alpha1=alpha1, alpha2=alpha2)


def initial_state(inp):
    f = mp.mpf
    return _derived(0, f(inp.E), f(inp.M), f(inp.M_hat), f(inp.M_bar),
                    f(inp.M_bar1), f(inp.M_bar2), f(inp.L), f(inp.lam),
                    f(inp.lam), f(inp.s), f(inp.rho), f(inp.eps), inp)


def step(state, inp):
    """One iteration of the displayed parameter recursion.

    E+ = E^2 L M^2 / gamma1^2 (the remainder bound e^{-Ks/32} E evaluated at
    the cutoff definition, which is what makes E_hat square at every step);
    the frequency-map bounds double; rho+ = rho_hat/4, eps+ = eps/4,
    s+ = s/4; lam+ = lam - 2^8 E/eps^2 (the relaxed variant lam - 2^4 E/eps^2
    is tracked alongside).  Raises :class:`HyperbolicityExhausted` when
    lam+ <= 0.
    """
    g1 = mp.mpf(inp.gamma1)
    E_next = state.E ** 2 * state.L * state.M ** 2 / g1 ** 2
    lam_next = state.lam - 2 ** 8 * state.E / state.eps ** 2
    lam_relaxed_next = state.lam_relaxed - 2 ** 4 * state.E / state.eps ** 2
    if lam_next <= 0:
        raise HyperbolicityExhausted(
            f"lambda exhausted at step {state.j}: {mp.nstr(lam_next, 8)}")
    return _derived(state.j + 1, E_next, 2 * state.M, 2 * state.M_hat,
                    2 * state.M_bar, 2 * state.M_bar1, 2 * state.M_bar2,
                    2 * state.L, lam_next, lam_relaxed_next,
                    state.s / 4, state.rho_hat / 4, state.eps / 4, inp)


def check_conditions(inp):
    """Evaluate the smallness conditions at step 0 and report all margins.

    The two headline conditions are c_hat*E_hat < 1 and c_tilde*E_tilde < 1;
    alongside them the simplifying lambda-condition 2 s^tau gamma2/(6^tau
    lambda) <= 1 and the averaging-step requirements (K*sigma_hat >= 8 log 2
    and the bracket smallness with delta = min(r_hat*s_hat, eps_hat^2)) are
    evaluated.  Margins are value/limit, so < 1 passes.
    """
    st = initial_state(inp)
    c_hat, c_tilde = constants(inp.n, inp.tau)
    tau = mp.mpf(inp.tau)
    s = mp.mpf(inp.s)
    lam = mp.mpf(inp.lam)
    g2 = mp.mpf(inp.gamma2)
    kam1 = mp.mpf(c_hat) * st.E_hat
    kam2 = mp.mpf(c_tilde) * st.E_tilde
    lam_cond = 2 * s ** tau * g2 / (6 ** tau * lam)
    sigma_hat = s / 8
    delta = st.rho_tilde * s / 64  # min(r_hat*s_hat, eps_hat^2) with hats = /8
    k_sigma = st.K * sigma_hat
    smallness = (2 ** 3 * mp.mpf(inp.c1) * st.K * sigma_hat / (st.alpha2 * delta)) * st.E
    report = {
        "c_hat": float(c_hat),
        "c_tilde": float(c_tilde),
        "E_hat": float(st.E_hat),
        "E_tilde": float(st.E_tilde),
        "margin_kam1": float(kam1),
        "margin_kam2": float(kam2),
        "margin_lambda_cond": float(lam_cond),
        "K_sigma_over_8log2": float(k_sigma / (8 * LOG2)),
        "margin_smallness": float(smallness),
        "smallness_chain_bound": float(2 ** 6 * mp.mpf(inp.c1) * st.E_hat),
        "r": float(8 * inp.n * st.E_hat * st.rho_tilde),
        "r_prime": float(2 * st.E_hat * mp.mpf(inp.eps)),
        "pass_kam1": bool(kam1 < 1),
        "pass_kam2": bool(kam2 < 1),
        "pass_lambda_cond": bool(lam_cond <= 1),
        "pass_K_sigma": bool(k_sigma >= 8 * LOG2),
        "pass_smallness": bool(smallness < 1),
    }
    report["pass"] = all(report[k] for k in
                         ("pass_kam1", "pass_kam2", "pass_lambda_cond",
                          "pass_K_sigma", "pass_smallness"))
    return report


def run(inp, J_max, require_conditions=True):
    """Run the recursion J_max steps, verifying the per-step guarantees.

    Checked at every step: super-convergence E_hat_{j+1} < E_hat_j^2, the
    hyperbolicity floor lam_j >= lam_0/2, the cutoff growth K_{j+1} < 8 K_j,
    and the width ratios rho_hat_+/rho_hat, rho_tilde_+/rho_tilde >=
    1/(2*8^(tau+1)).  Returns (states, verdict_dict).
    """
    report = check_conditions(inp)
    if require_conditions and not report["pass"]:
        raise ValueError(f"KAM conditions fail: {report}")
    states = [initial_state(inp)]
    failures = []
    ratio_floor = 1 / (2 * mp.mpf(8) ** (mp.mpf(inp.tau) + 1))
    lam0 = states[0].lam
    for j in range(J_max):
        prev = states[-1]
        try:
            cur = step(prev, inp)
        except HyperbolicityExhausted as err:
            failures.append({"step": j, "check": "lambda_positive", "detail": str(err)})
            break
        states.append(cur)
        checks = [
            ("superconvergence", cur.E_hat < prev.E_hat ** 2,
             f"E_hat+={mp.nstr(cur.E_hat, 8)} vs E_hat^2={mp.nstr(prev.E_hat ** 2, 8)}"),
            ("lambda_floor", cur.lam >= lam0 / 2,
             f"lam={mp.nstr(cur.lam, 8)} vs lam0/2={mp.nstr(lam0 / 2, 8)}"),
            ("K_growth", cur.K < 8 * prev.K,
             f"K+={mp.nstr(cur.K, 8)} vs 8K={mp.nstr(8 * prev.K, 8)}"),
            ("rho_hat_ratio", cur.rho_hat >= prev.rho_hat * ratio_floor,
             f"rho_hat+/rho_hat={mp.nstr(cur.rho_hat / prev.rho_hat, 8)}"),
            ("rho_tilde_ratio", cur.rho_tilde >= prev.rho_tilde * ratio_floor,
             f"rho_tilde+/rho_tilde={mp.nstr(cur.rho_tilde / prev.rho_tilde, 8)}"),
        ]
        for name, ok, detail in checks:
            if not ok:
                failures.append({"step": j + 1, "check": name, "detail": detail})
    verdict = {"pass": not failures, "failures": failures,
               "steps_completed": len(states) - 1, "conditions": report}
    return states, verdict


def diophantine_check(omega1, omega2, gamma1, gamma2, tau, Kmax):
    """Scan 0 < |k|_1 <= Kmax for the two-scale Diophantine inequality.

    |omega1.k1 + omega2.k2| >= gamma1/|k|_1^tau when k1 != 0, and
    >= gamma2/|k2|_1^tau when k1 = 0, k2 != 0.  Returns worst margins
    (lhs/rhs, so >= 1 passes) and the offending modes.
    """
    if Kmax < 1:
        raise ValueError("Kmax must be >= 1")
    omega1 = np.atleast_1d(np.asarray(omega1, dtype=float))
    omega2 = np.atleast_1d(np.asarray(omega2, dtype=float))
    n1, n2 = len(omega1), len(omega2)
    omega = np.concatenate([omega1, omega2])
    worst1 = worst2 = None

    def rec(idx, remaining, vec):
        nonlocal worst1, worst2
        if idx == n1 + n2:
            if all(x == 0 for x in vec):
                return
            k = np.array(vec)
            lhs = abs(float(omega @ k))
            if any(vec[:n1]):
                rhs = gamma1 / float(np.sum(np.abs(k))) ** tau
                margin = lhs / rhs
                if worst1 is None or margin < worst1[0]:
                    worst1 = (margin, tuple(vec), lhs)
            else:
                rhs = gamma2 / float(np.sum(np.abs(k[n1:]))) ** tau
                margin = lhs / rhs
                if worst2 is None or margin < worst2[0]:
                    worst2 = (margin, tuple(vec), lhs)
            return
        for val in range(-remaining, remaining + 1):
            vec.append(val)
            rec(idx + 1, remaining - abs(val), vec)
            vec.pop()

    rec(0, Kmax, [])
    report = {"Kmax": Kmax, "tau": tau, "gamma1": gamma1, "gamma2": gamma2}
    if worst1 is not None:
        report["worst_margin_k1_nonzero"] = worst1[0]
        report["argworst_k1_nonzero"] = list(worst1[1])
        report["pass_k1_nonzero"] = bool(worst1[0] >= 1.0)
    if worst2 is not None:
        report["worst_margin_k1_zero"] = worst2[0]
        report["argworst_k1_zero"] = list(worst2[1])
        report["pass_k1_zero"] = bool(worst2[0] >= 1.0)
    report["pass"] = bool(report.get("pass_k1_nonzero", True) and report.get("pass_k1_zero", True))
    return report


def thresholds_and_measures(eps, s, a, P0_norm, eta, n, E,
                            Cstar=1.0, cstar=1.0, astar=1.0, b=1.0, mu=None):
    """Evaluate the headline threshold inequalities and measure fractions.

    Cstar, cstar, astar, b are calibration inputs (the theorems only assert
    their existence).  Returns every formula value; with mu supplied the
    threshold comparisons are included.
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    if a <= 0 or a >= 1:
        raise ValueError("a must lie in (0, 1)")
    log_inv_eps = np.log(1.0 / eps)
    aP = a * P0_norm
    out = {
        "mu_max_full_tori": eps ** (2 * s + 2) / (Cstar * log_inv_eps ** cstar),
        "measure_fraction_full_tori": 1.0 - Cstar * eps ** (s - 1.5),
        "a_max_whiskered": astar * eps ** 4,
        "pass_a_whiskered": bool(a < astar * eps ** 4),
        "mu_max_whiskered": Cstar * aP ** (1.0 + eta) / np.log(1.0 / aP) ** cstar,
        "measure_fraction_whiskered": 1.0 - Cstar * np.sqrt(a),
        "c_n": (1.0 + (1.0 + 2 ** 8 * n * E) ** (2 * n)) ** 2,
        "mu_max_full_tori_relaxed": 1.0 / (Cstar * log_inv_eps ** (2 * b)),
        "mu_max_whiskered_relaxed": 1.0 / (Cstar * np.log(1.0 / aP) ** (2 * b)),
        "defect_exponent_full_tori": s - 1.5,
        "sigma_main": s - 3.5,
    }
    if mu is not None:
        out["mu"] = mu
        out["pass_mu_full_tori"] = bool(0 < mu < out["mu_max_full_tori"])
        out["pass_mu_whiskered"] = bool(0 < mu < out["mu_max_whiskered"])
    return out


def fit_Cstar(eps_values, mu_values, s, cstar=1.0):
    """Smallest Cstar making mu <= eps^(2s+2)/(Cstar (log 1/eps)^cstar) hold
    across a sweep of (eps, mu) pairs that passed an empirical criterion."""
    eps_values = np.asarray(eps_values, dtype=float)
    mu_values = np.asarray(mu_values, dtype=float)
    vals = eps_values ** (2 * s + 2) / (mu_values * np.log(1.0 / eps_values) ** cstar)
    return float(np.min(vals))
