"""Truncated Taylor-Fourier series algebra.

Series live on ``T^n x R^n x R^{2m}``: ``n`` angle/action pairs ``(phi, I)``
and ``m`` canonical oscillator pairs ``(u_j, v_j)`` with ``{u_j, v_j} = 1``.
A term is

    c * (I - I0)^a * exp(i k.phi) * u^alpha * v^beta

with integer exponent tuples ``k, a, alpha, beta``.  Action dependence of the
Fourier coefficients is carried as jets in ``(I - I0)`` up to ``jet_degree``
(default 2).

The oscillator pair is abstract.  For a hyperbolic pair take ``(u, v) =
(p, q)`` directly, so the reference Hamiltonian ``nu * u v`` has real rate
``nu``.  For an elliptic pair substitute

    u = (eta - i xi)/sqrt(2),     v = (eta + i xi)/(i sqrt(2))

(see :func:`complexify_real_pairs`); then ``(eta^2 + xi^2)/2 = i u v`` and a
harmonic term ``Omega (eta^2 + xi^2)/2`` becomes ``(i Omega) u v``, i.e. an
imaginary rate.  Either way monomials are eigenvectors of bracketing with
``h = omega.I + sum_j nu_j u_j v_j``:

    {M, h} = (-i k.omega + nu.(alpha - beta)) M

which is what makes the homological equation diagonal.
"""

from dataclasses import dataclass
from fractions import Fraction
import json
import math
from typing import NamedTuple

import numpy as np

DROP_TOL = 1e-14


class ResonanceError(ValueError):
    """A divisor fell below the allowed floor; carries the offending mode."""

    def __init__(self, message, mode=None, divisor=None):
        super().__init__(message)
        self.mode = mode
        self.divisor = divisor


class Monomial(NamedTuple):
    """Exponent record of a single term.

    k: Fourier mode (length n); a: action-jet exponents (length n);
    alpha, beta: oscillator exponents (length m).
    """

    k: tuple
    a: tuple
    alpha: tuple
    beta: tuple

    def combined_mode(self):
        """Mode vector (k, alpha - beta) in Z^{n+m}, the index the small
        divisors and the normal-form lattice act on."""
        return self.k + tuple(x - y for x, y in zip(self.alpha, self.beta))

    @property
    def order_k(self):
        return sum(abs(x) for x in self.k)

    @property
    def degree(self):
        return sum(self.alpha) + sum(self.beta)


class Lattice:
    """Sub-lattice of Z^d used to declare resonant normal-form modes.

    Membership is exact integer arithmetic.  Generators must be linearly
    independent (they form a basis of the sub-lattice).
    """

    def __init__(self, dim, generators=()):
        self.dim = dim
        self.generators = tuple(tuple(int(x) for x in g) for g in generators)
        for g in self.generators:
            if len(g) != dim:
                raise ValueError("generator dimension mismatch")
        self._basis = [[Fraction(x) for x in g] for g in self.generators]

    @classmethod
    def zero(cls, dim):
        return cls(dim, ())

    def contains(self, vec):
        vec = tuple(int(x) for x in vec)
        if len(vec) != self.dim:
            raise ValueError("vector dimension mismatch")
        if all(x == 0 for x in vec):
            return True
        if not self._basis:
            return False
        # Solve sum_i c_i g_i = vec exactly; member iff solvable with c_i in Z.
        rows = [list(col) for col in zip(*self._basis)]  # dim x ngen
        rhs = [Fraction(x) for x in vec]
        ngen = len(self._basis)
        piv_cols = []
        r = 0
        for c in range(ngen):
            piv = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
            if piv is None:
                continue
            rows[r], rows[piv] = rows[piv], rows[r]
            rhs[r], rhs[piv] = rhs[piv], rhs[r]
            inv = 1 / rows[r][c]
            rows[r] = [x * inv for x in rows[r]]
            rhs[r] = rhs[r] * inv
            for i in range(len(rows)):
                if i != r and rows[i][c] != 0:
                    f = rows[i][c]
                    rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
                    rhs[i] = rhs[i] - f * rhs[r]
            piv_cols.append(c)
            r += 1
        # Consistency of the overdetermined system.
        for i in range(r, len(rows)):
            if rhs[i] != 0:
                return False
        coeffs = [Fraction(0)] * ngen
        for row_idx, c in enumerate(piv_cols):
            coeffs[c] = rhs[row_idx]
        return all(x.denominator == 1 for x in coeffs)

    def __repr__(self):
        if not self.generators:
            return f"Lattice.zero({self.dim})"
        return f"Lattice({self.dim}, {list(self.generators)})"


@dataclass
class DivisorSpec:
    """Frequency data for the homological equation and resonance scans.

    omega1, omega2: real frequency blocks (the angle frequencies, split so
    that modes with k1 != 0 are held to the larger floor alpha1).
    nu: oscillator rate(s), complex; scalar broadcasts over all pairs.  Real
    nu is the hyperbolic case, imaginary nu an elliptic pair.
    alpha1 >= alpha2 > 0 are the divisor floors, K the mode cutoff, lattice
    the resonant sub-lattice of Z^{n+m} (combined modes kept in normal form).
    """

    omega1: tuple
    omega2: tuple
    nu: complex = 0.0
    alpha1: float = 1e-12
    alpha2: float = 1e-12
    K: int = 10
    lattice: Lattice = None
    m: int = None  # oscillator count; inferred from nu when it is a sequence

    def __post_init__(self):
        self.omega1 = tuple(float(x) for x in np.atleast_1d(self.omega1)) if len(np.atleast_1d(self.omega1)) else ()
        self.omega2 = tuple(float(x) for x in np.atleast_1d(self.omega2)) if len(np.atleast_1d(self.omega2)) else ()
        if self.alpha1 < self.alpha2:
            raise ValueError("require alpha1 >= alpha2")
        if np.ndim(self.nu) == 0:
            if self.m is None:
                self.m = 1 if self.nu != 0 else 0
            self.nu_vec = (complex(self.nu),) * self.m
        else:
            self.nu_vec = tuple(complex(x) for x in self.nu)
            self.m = len(self.nu_vec)
        self.n = len(self.omega1) + self.omega_len2
        if self.lattice is None:
            self.lattice = Lattice.zero(self.n + self.m)

    @property
    def omega_len2(self):
        return len(self.omega2)

    @property
    def omega(self):
        return self.omega1 + self.omega2

    def divisor(self, k, osc_mode):
        """Complex divisor of the combined mode (k, alpha-beta)."""
        val = -1j * sum(w * ki for w, ki in zip(self.omega, k))
        val += sum(nu * mj for nu, mj in zip(self.nu_vec, osc_mode))
        return val

    def floor_for(self, k):
        n1 = len(self.omega1)
        return self.alpha1 if any(k[:n1]) else self.alpha2


def _tuple_add(x, y):
    return tuple(a + b for a, b in zip(x, y))


def _tuple_sub_unit(x, i):
    return x[:i] + (x[i] - 1,) + x[i + 1:]


class TFSeries:
    """Finite Taylor-Fourier series with complex coefficients."""

    def __init__(self, n, m, terms=None, base_point=None, jet_degree=2):
        self.n = int(n)
        self.m = int(m)
        self.jet_degree = int(jet_degree)
        self.base_point = tuple(float(x) for x in (base_point if base_point is not None else (0.0,) * self.n))
        self._terms = {}
        if terms:
            for mono, c in terms.items() if isinstance(terms, dict) else terms:
                self._add_term(mono, c)
        self.prune()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, n, m, **kw):
        return cls(n, m, **kw)

    @classmethod
    def constant(cls, n, m, value, **kw):
        s = cls(n, m, **kw)
        s._add_term(s.monomial(), complex(value))
        return s

    def monomial(self, k=None, a=None, alpha=None, beta=None):
        k = tuple(int(x) for x in (k if k is not None else (0,) * self.n))
        a = tuple(int(x) for x in (a if a is not None else (0,) * self.n))
        alpha = tuple(int(x) for x in (alpha if alpha is not None else (0,) * self.m))
        beta = tuple(int(x) for x in (beta if beta is not None else (0,) * self.m))
        if len(k) != self.n or len(a) != self.n or len(alpha) != self.m or len(beta) != self.m:
            raise ValueError("exponent tuple length mismatch")
        return Monomial(k, a, alpha, beta)

    @classmethod
    def single(cls, n, m, coeff, k=None, a=None, alpha=None, beta=None, **kw):
        s = cls(n, m, **kw)
        s._add_term(s.monomial(k, a, alpha, beta), complex(coeff))
        return s

    @classmethod
    def action_linear(cls, n, m, omega, constant=0.0, **kw):
        """omega . (I - I0) + constant  (use with base_point for omega.I)."""
        s = cls(n, m, **kw)
        if constant:
            s._add_term(s.monomial(), complex(constant))
        for i, w in enumerate(omega):
            if w:
                a = tuple(1 if j == i else 0 for j in range(n))
                s._add_term(s.monomial(a=a), complex(w))
        return s

    @classmethod
    def oscillator_reference(cls, n, m, omega, nu, **kw):
        """h = omega.(I-I0) + sum_j nu_j u_j v_j, the divisor reference."""
        s = cls.action_linear(n, m, omega, **kw)
        nus = (complex(nu),) * m if np.ndim(nu) == 0 else tuple(complex(x) for x in nu)
        for j, nuj in enumerate(nus):
            if nuj:
                e = tuple(1 if i == j else 0 for i in range(m))
                s._add_term(s.monomial(alpha=e, beta=e), nuj)
        s.prune()
        return s

    def copy(self):
        out = TFSeries(self.n, self.m, base_point=self.base_point, jet_degree=self.jet_degree)
        out._terms = dict(self._terms)
        return out

    # -- basic algebra ---------------------------------------------------------

    def _add_term(self, mono, c):
        if c == 0:
            return
        cur = self._terms.get(mono)
        new = c if cur is None else cur + c
        if new == 0:
            self._terms.pop(mono, None)
        else:
            self._terms[mono] = new

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __getitem__(self, mono):
        return self._terms.get(mono, 0j)

    def max_amplitude(self):
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def prune(self, tol=DROP_TOL):
        """Drop terms below tol * (largest amplitude)."""
        cut = tol * self.max_amplitude()
        if cut > 0.0:
            self._terms = {mo: c for mo, c in self._terms.items() if abs(c) > cut}
        return self

    def _check_dims(self, other):
        if self.n != other.n or self.m != other.m:
            raise ValueError(f"dimension mismatch: ({self.n},{self.m}) vs ({other.n},{other.m})")

    def __add__(self, other):
        if np.isscalar(other):
            other = TFSeries.constant(self.n, self.m, other, base_point=self.base_point)
        self._check_dims(other)
        out = self.copy()
        out.jet_degree = max(self.jet_degree, other.jet_degree)
        for mo, c in other._terms.items():
            out._add_term(mo, c)
        return out.prune()

    __radd__ = __add__

    def __neg__(self):
        out = self.copy()
        out._terms = {mo: -c for mo, c in out._terms.items()}
        return out

    def __sub__(self, other):
        return self + (-other if isinstance(other, TFSeries) else -complex(other))

    def __mul__(self, other):
        if np.isscalar(other):
            if other == 0:
                return TFSeries.zero(self.n, self.m, base_point=self.base_point, jet_degree=self.jet_degree)
            out = self.copy()
            out._terms = {mo: c * other for mo, c in out._terms.items()}
            return out
        self._check_dims(other)
        cap = max(self.jet_degree, other.jet_degree)
        out = TFSeries.zero(self.n, self.m, base_point=self.base_point, jet_degree=cap)
        for mo1, c1 in self._terms.items():
            for mo2, c2 in other._terms.items():
                a = _tuple_add(mo1.a, mo2.a)
                if sum(a) > cap:
                    continue
                mono = Monomial(_tuple_add(mo1.k, mo2.k), a,
                                _tuple_add(mo1.alpha, mo2.alpha),
                                _tuple_add(mo1.beta, mo2.beta))
                out._add_term(mono, c1 * c2)
        return out.prune()

    __rmul__ = __mul__

    # -- norms, truncations, projections --------------------------------------

    def weighted_norm(self, s, eps, action_radius=1.0):
        """Sum of |c| e^{|k|_1 s} eps^{|alpha|+|beta|} r^{|a|}."""
        if s <= 0 or eps <= 0:
            raise ValueError("require s > 0 and eps > 0")
        tot = 0.0
        for mo, c in self._terms.items():
            tot += abs(c) * math.exp(mo.order_k * s) * eps ** mo.degree * action_radius ** sum(mo.a)
        return tot

    def truncate_K(self, K, combined=False):
        """Keep |k|_1 <= K; with combined=True keep |(k, alpha-beta)|_1 <= K
        (the cutoff the ultraviolet-remainder estimate is phrased in)."""
        if K < 0:
            raise ValueError("K must be >= 0")
        out = TFSeries.zero(self.n, self.m, base_point=self.base_point, jet_degree=self.jet_degree)
        for mo, c in self._terms.items():
            size = sum(abs(x) for x in mo.combined_mode()) if combined else mo.order_k
            if size <= K:
                out._add_term(mo, c)
        return out

    def truncate_degree(self, D):
        """Keep oscillator degree |alpha|+|beta| <= D."""
        out = TFSeries.zero(self.n, self.m, base_point=self.base_point, jet_degree=self.jet_degree)
        for mo, c in self._terms.items():
            if mo.degree <= D:
                out._add_term(mo, c)
        return out

    def project_L(self, lattice):
        """Keep terms whose combined mode (k, alpha-beta) lies in the lattice."""
        out = TFSeries.zero(self.n, self.m, base_point=self.base_point, jet_degree=self.jet_degree)
        for mo, c in self._terms.items():
            if lattice.contains(mo.combined_mode()):
                out._add_term(mo, c)
        return out

    def select(self, pred):
        out = TFSeries.zero(self.n, self.m, base_point=self.base_point, jet_degree=self.jet_degree)
        for mo, c in self._terms.items():
            if pred(mo):
                out._add_term(mo, c)
        return out

    # -- Poisson bracket -------------------------------------------------------

    def poisson_bracket(self, other):
        """{f, g} = sum_i (f_I g_phi - f_phi g_I) + sum_j (f_u g_v - f_v g_u).

        Exact on the finite support; action jets above the degree cap of the
        operands are dropped (Taylor truncation in I - I0).
        """
        self._check_dims(other)
        cap = max(self.jet_degree, other.jet_degree)
        out = TFSeries.zero(self.n, self.m, base_point=self.base_point, jet_degree=cap)
        g_terms = list(other._terms.items())
        for mo1, c1 in self._terms.items():
            for mo2, c2 in g_terms:
                # angle/action block
                for i in range(self.n):
                    # d f/d I_i * d g/d phi_i
                    if mo1.a[i] and mo2.k[i]:
                        a = _tuple_add(_tuple_sub_unit(mo1.a, i), mo2.a)
                        if sum(a) <= cap:
                            coeff = c1 * mo1.a[i] * c2 * 1j * mo2.k[i]
                            out._add_term(Monomial(_tuple_add(mo1.k, mo2.k), a,
                                                   _tuple_add(mo1.alpha, mo2.alpha),
                                                   _tuple_add(mo1.beta, mo2.beta)), coeff)
                    # - d f/d phi_i * d g/d I_i
                    if mo1.k[i] and mo2.a[i]:
                        a = _tuple_add(mo1.a, _tuple_sub_unit(mo2.a, i))
                        if sum(a) <= cap:
                            coeff = -c1 * 1j * mo1.k[i] * c2 * mo2.a[i]
                            out._add_term(Monomial(_tuple_add(mo1.k, mo2.k), a,
                                                   _tuple_add(mo1.alpha, mo2.alpha),
                                                   _tuple_add(mo1.beta, mo2.beta)), coeff)
                # oscillator block
                a_jets = _tuple_add(mo1.a, mo2.a)
                if sum(a_jets) > cap:
                    continue
                k_new = _tuple_add(mo1.k, mo2.k)
                for j in range(self.m):
                    # d f/d u_j * d g/d v_j
                    if mo1.alpha[j] and mo2.beta[j]:
                        out._add_term(Monomial(k_new, a_jets,
                                               _tuple_sub_unit(_tuple_add(mo1.alpha, mo2.alpha), j),
                                               _tuple_sub_unit(_tuple_add(mo1.beta, mo2.beta), j)),
                                      c1 * c2 * mo1.alpha[j] * mo2.beta[j])
                    # - d f/d v_j * d g/d u_j
                    if mo1.beta[j] and mo2.alpha[j]:
                        out._add_term(Monomial(k_new, a_jets,
                                               _tuple_sub_unit(_tuple_add(mo1.alpha, mo2.alpha), j),
                                               _tuple_sub_unit(_tuple_add(mo1.beta, mo2.beta), j)),
                                      -c1 * c2 * mo1.beta[j] * mo2.alpha[j])
        return out.prune()

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, I=None, phi=None, u=None, v=None):
        """Evaluate at numeric (I, phi, u, v); u, v may be complex."""
        I = np.zeros(self.n) if I is None else np.asarray(I, dtype=float)
        phi = np.zeros(self.n) if phi is None else np.asarray(phi, dtype=float)
        u = np.zeros(self.m, dtype=complex) if u is None else np.asarray(u, dtype=complex)
        v = np.zeros(self.m, dtype=complex) if v is None else np.asarray(v, dtype=complex)
        dI = I - np.asarray(self.base_point)
        tot = 0j
        for mo, c in self._terms.items():
            val = c
            if any(mo.a):
                val *= np.prod(dI ** np.array(mo.a))
            if any(mo.k):
                val *= np.exp(1j * float(np.dot(mo.k, phi)))
            if any(mo.alpha):
                val *= np.prod(u ** np.array(mo.alpha))
            if any(mo.beta):
                val *= np.prod(v ** np.array(mo.beta))
            tot += val
        return tot

    # -- serialization ---------------------------------------------------------

    def to_json_dict(self):
        entries = []
        for mo in sorted(self._terms, key=lambda mo: (mo.k, mo.a, mo.alpha, mo.beta)):
            c = self._terms[mo]
            e = {"k": list(mo.k), "alpha": list(mo.alpha), "beta": list(mo.beta),
                 "re": c.real, "im": c.imag}
            if any(mo.a):
                e["a"] = list(mo.a)
            entries.append(e)
        return {"dims": {"n": self.n, "m": self.m}, "base_point": list(self.base_point),
                "jet_degree": self.jet_degree, "entries": entries}

    def to_json(self, **kw):
        return json.dumps(self.to_json_dict(), sort_keys=True, **kw)

    @classmethod
    def from_json_dict(cls, d):
        s = cls(d["dims"]["n"], d["dims"]["m"], base_point=d.get("base_point"),
                jet_degree=d.get("jet_degree", 2))
        for e in d["entries"]:
            mono = s.monomial(k=e["k"], a=e.get("a"), alpha=e["alpha"], beta=e["beta"])
            s._add_term(mono, complex(e["re"], e["im"]))
        return s.prune()

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))

    def __repr__(self):
        return f"TFSeries(n={self.n}, m={self.m}, terms={len(self._terms)})"


# -- module-level operation wrappers (the documented API) ----------------------

def weighted_norm(f, s, eps, action_radius=1.0):
    return f.weighted_norm(s, eps, action_radius)


def truncate_K(f, K, combined=False):
    return f.truncate_K(K, combined=combined)


def project_L(f, lattice):
    return f.project_L(lattice)


def poisson_bracket(f, g):
    return f.poisson_bracket(g)


def solve_homological(f, div):
    """Generator phi with {phi, h} cancelling the non-normal part of T_K f.

    h is the reference Hamiltonian encoded by ``div`` (frequencies omega,
    rates nu).  Monomials of f with |k|_1 <= div.K whose combined mode is
    outside div.lattice are divided by their divisor; a modulus below
    div.alpha2 raises :class:`ResonanceError`.  Guarantees
    ``weighted_norm(phi) <= weighted_norm(f) / alpha2`` at any weights.
    """
    phi = TFSeries.zero(f.n, f.m, base_point=f.base_point, jet_degree=f.jet_degree)
    for mo, c in f.items():
        if mo.order_k > div.K:
            continue
        cmode = mo.combined_mode()
        if div.lattice.contains(cmode):
            continue
        osc_mode = tuple(x - y for x, y in zip(mo.alpha, mo.beta))
        d = div.divisor(mo.k, osc_mode)
        if abs(d) < div.alpha2:
            raise ResonanceError(
                f"divisor {abs(d):.3e} below floor {div.alpha2:.3e} at mode k={mo.k}, alpha-beta={osc_mode}",
                mode=cmode, divisor=d)
        phi._add_term(mo, -c / d)
    return phi.prune()


def lie_transform(phi, f, order, degree_cap=None, mode_cap=None):
    """sum_{k<=order} L_phi^k f / k!  with  L_phi f = {phi, f}.

    Optional caps bound the working window: degree_cap truncates oscillator
    degree, mode_cap truncates |k|_1, both applied after every bracket.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    acc = f.copy()
    term = f
    fact = 1.0
    for k in range(1, order + 1):
        term = phi.poisson_bracket(term)
        if degree_cap is not None:
            term = term.truncate_degree(degree_cap)
        if mode_cap is not None:
            term = term.truncate_K(mode_cap)
        if len(term) == 0:
            break
        fact *= k
        acc = acc + term * (1.0 / fact)
    return acc.prune()


def check_nonresonance(div, K):
    """Exhaustive small-divisor scan over combined modes |(k1,k2,k3)|_1 <= K.

    k3 ranges over the oscillator block only when rates are declared.
    Returns a report dict with the worst divisor per class (k1 != 0 versus
    k1 = 0) and pass/fail against alpha1/alpha2; lattice modes are skipped.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    n1 = len(div.omega1)
    n2 = len(div.omega2)
    m = div.m
    dim = n1 + n2 + m
    worst = {"class1": None, "class2": None}

    def rec(idx, remaining, vec):
        if idx == dim:
            if all(x == 0 for x in vec):
                return
            k = tuple(vec[:n1 + n2])
            osc = tuple(vec[n1 + n2:])
            if div.lattice.contains(tuple(vec)):
                return
            d = abs(div.divisor(k, osc))
            cls = "class1" if any(vec[:n1]) else "class2"
            if worst[cls] is None or d < worst[cls][0]:
                worst[cls] = (d, tuple(vec))
            return
        for val in range(-remaining, remaining + 1):
            vec.append(val)
            rec(idx + 1, remaining - abs(val), vec)
            vec.pop()

    rec(0, K, [])
    report = {"K": K, "n1": n1, "n2": n2, "m": m,
              "alpha1": div.alpha1, "alpha2": div.alpha2}
    ok = True
    if worst["class1"] is not None:
        d, mode = worst["class1"]
        report["min_divisor_k1_nonzero"] = d
        report["argmin_k1_nonzero"] = list(mode)
        report["pass_k1_nonzero"] = bool(d >= div.alpha1)
        ok &= report["pass_k1_nonzero"]
    if worst["class2"] is not None:
        d, mode = worst["class2"]
        report["min_divisor_k1_zero"] = d
        report["argmin_k1_zero"] = list(mode)
        report["pass_k1_zero"] = bool(d >= div.alpha2)
        ok &= report["pass_k1_zero"]
    report["pass"] = bool(ok)
    return report


# -- linear changes of oscillator variables ------------------------------------

def substitute_linear(f, L):
    """Substitute old oscillator variables = L @ new (2m x 2m complex matrix).

    Variable ordering is pair-interleaved: (u1, v1, u2, v2, ...).  Angle and
    jet exponents ride along unchanged.
    """
    L = np.asarray(L, dtype=complex)
    twom = 2 * f.m
    if L.shape != (twom, twom):
        raise ValueError("substitution matrix must be (2m, 2m)")
    # linear forms for old variables in terms of new monomials
    unit_monos = []
    for j in range(twom):
        row = {}
        for i in range(twom):
            if L[j, i] != 0:
                alpha = [0] * f.m
                beta = [0] * f.m
                (alpha if i % 2 == 0 else beta)[i // 2] = 1
                row[(tuple(alpha), tuple(beta))] = L[j, i]
        unit_monos.append(row)

    pow_cache = {}

    def poly_mul(p1, p2):
        out = {}
        for (a1, b1), c1 in p1.items():
            for (a2, b2), c2 in p2.items():
                key = (_tuple_add(a1, a2), _tuple_add(b1, b2))
                out[key] = out.get(key, 0j) + c1 * c2
        return out

    def form_power(j, p):
        if p == 0:
            return {((0,) * f.m, (0,) * f.m): 1.0 + 0j}
        key = (j, p)
        if key not in pow_cache:
            pow_cache[key] = poly_mul(form_power(j, p - 1), unit_monos[j])
        return pow_cache[key]

    out = TFSeries.zero(f.n, f.m, base_point=f.base_point, jet_degree=f.jet_degree)
    for mo, c in f.items():
        poly = {((0,) * f.m, (0,) * f.m): c}
        for j in range(f.m):
            if mo.alpha[j]:
                poly = poly_mul(poly, form_power(2 * j, mo.alpha[j]))
            if mo.beta[j]:
                poly = poly_mul(poly, form_power(2 * j + 1, mo.beta[j]))
        for (alpha, beta), cc in poly.items():
            out._add_term(Monomial(mo.k, mo.a, alpha, beta), cc)
    return out.prune()


_SQ2 = math.sqrt(2.0)


def complexify_real_pairs(f):
    """Rewrite a series given in real pairs (eta, xi) in the diagonal complex
    pair (u, v) = ((eta - i xi)/sqrt2, (eta + i xi)/(i sqrt2))."""
    # old (eta, xi) in terms of new (u, v): eta = (u + i v)/sqrt2, xi = (i u + v)/sqrt2
    blocks = np.zeros((2 * f.m, 2 * f.m), dtype=complex)
    for j in range(f.m):
        blocks[2 * j, 2 * j] = 1 / _SQ2
        blocks[2 * j, 2 * j + 1] = 1j / _SQ2
        blocks[2 * j + 1, 2 * j] = 1j / _SQ2
        blocks[2 * j + 1, 2 * j + 1] = 1 / _SQ2
    return substitute_linear(f, blocks)


def realify_complex_pairs(f):
    """Inverse of :func:`complexify_real_pairs`."""
    blocks = np.zeros((2 * f.m, 2 * f.m), dtype=complex)
    for j in range(f.m):
        blocks[2 * j, 2 * j] = 1 / _SQ2
        blocks[2 * j, 2 * j + 1] = -1j / _SQ2
        blocks[2 * j + 1, 2 * j] = -1j / _SQ2
        blocks[2 * j + 1, 2 * j + 1] = 1 / _SQ2
    return substitute_linear(f, blocks)


# -- normal-form averaging step (iterated homological elimination) -------------

def averaging_normal_form(h, f, div, rounds=None, lie_order=8, degree_cap=None, mode_cap=None):
    """Iteratively push f into (K, L)-normal form against the reference h.

    One call is one complete averaging transformation: ``rounds`` elementary
    time-one Lie steps (default floor(K sigma / (8 log 2)) + 1 rounds for the
    caller's sigma is not known here, so default 6), each solving the
    homological equation for the current remainder and transforming
    ``h + g + f`` as a whole.

    Returns (g, f_rest, phis): g collects the normal-form part, f_rest the
    remainder (ultraviolet modes plus higher-order dust), phis the
    generators in application order.

    The working window is finite: bracket-generated terms beyond mode_cap /
    degree_cap are dropped.  The defaults keep every mode of the input plus
    ample room for the quadratically small dust; tighten them only for speed.
    """
    if rounds is None:
        rounds = 6
    if mode_cap is None:
        f_kmax = max((mo.order_k for mo in f._terms), default=0)
        mode_cap = 2 * div.K + f_kmax
    if degree_cap is None:
        f_dmax = max((mo.degree for mo in f._terms), default=0)
        h_dmax = max((mo.degree for mo in h._terms), default=0)
        degree_cap = f_dmax + h_dmax + 4
    g = TFSeries.zero(f.n, f.m, base_point=f.base_point, jet_degree=f.jet_degree)
    rest = f.copy()
    phis = []
    for _ in range(rounds):
        phi = solve_homological(rest, div)
        phis.append(phi)
        total = h + g + rest
        total = lie_transform(phi, total, lie_order, degree_cap=degree_cap, mode_cap=mode_cap)
        g = g + rest.truncate_K(div.K).project_L(div.lattice)
        rest = total - h - g
        rest.prune()
        still_nonnormal = rest.truncate_K(div.K).select(
            lambda mo: not div.lattice.contains(mo.combined_mode()))
        if len(still_nonnormal) == 0:
            break
    return g, rest, phis


def measure_bracket_constant(trials=40, seed=0, n=2, m=1, size=6):
    """Empirical bracket constant c_m in
    ||{f,g}||_{r-rh, s-sh, e-eh} <= (c_m/delta) ||f|| ||g||, delta = min(rh*sh, eh^2).

    The analytic constant is never pinned down; this samples random finite
    series and returns the largest observed ratio.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    r, s, eps = 1.0, 0.8, 0.5
    rh, sh, eh = 0.3, 0.3, 0.2
    delta = min(rh * sh, eh * eh)
    for _ in range(trials):
        f = _random_series(rng, n, m, size)
        g = _random_series(rng, n, m, size)
        br = f.poisson_bracket(g)
        nf = f.weighted_norm(s, eps, action_radius=r)
        ng = g.weighted_norm(s, eps, action_radius=r)
        if nf == 0 or ng == 0:
            continue
        nb = br.weighted_norm(s - sh, eps - eh, action_radius=r - rh)
        worst = max(worst, nb * delta / (nf * ng))
    return worst


def _random_series(rng, n, m, size, kmax=3, dmax=3, jet=1):
    s = TFSeries.zero(n, m, jet_degree=2)
    for _ in range(size):
        k = tuple(int(x) for x in rng.integers(-kmax, kmax + 1, n))
        a = tuple(int(x) for x in rng.integers(0, jet + 1, n))
        alpha = tuple(int(x) for x in rng.integers(0, dmax, m))
        beta = tuple(int(x) for x in rng.integers(0, dmax, m))
        c = complex(rng.normal(), rng.normal())
        s._add_term(Monomial(k, a, alpha, beta), c)
    s.prune()
    return s
