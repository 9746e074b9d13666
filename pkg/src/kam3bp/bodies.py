"""Masses and the heliocentric two-particle Hamiltonian data.

Gravitational masses are (m0, mu*m1, mu*m2) with Newton constant 1.  After
the heliocentric reduction and the impulse rescaling y -> mu*y the
Hamiltonian is exactly

    sum_i |y_i|^2/(2 mr_i) - mr_i Mt_i / |x_i|
        + mu * ( y1.y2/m0 - m1 m2 / |x1 - x2| )

with the reduced/total masses mr_i = m0 m_i/(m0 + mu m_i) and
Mt_i = m0 + mu m_i.  Those are the masses every chart below is built with;
the circular frequency of planet i is mr_i^3 Mt_i^2 / Lambda_i^3.
"""

from dataclasses import dataclass
import math


@dataclass(frozen=True)
class MassParams:
    """m0: star; m1, m2: planet mass factors; mu: perturbation parameter."""

    m0: float
    m1: float
    m2: float
    mu: float

    def __post_init__(self):
        if self.m0 <= 0 or self.m1 <= 0 or self.m2 <= 0:
            raise ValueError("masses must be positive")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")

    def reduced(self, i):
        """mr_i = m0 m_i / (m0 + mu m_i)."""
        mi = (self.m1, self.m2)[i - 1]
        return self.m0 * mi / (self.m0 + self.mu * mi)

    def total(self, i):
        """Mt_i = m0 + mu m_i."""
        mi = (self.m1, self.m2)[i - 1]
        return self.m0 + self.mu * mi

    def mu0(self, delta):
        """Mass-parameter ceiling mu0(delta) = delta m0/(m1(1-delta) - m2)."""
        den = self.m1 * (1.0 - delta) - self.m2
        if den <= 0:
            return math.inf
        return delta * self.m0 / den

    def retrograde_conditions_ok(self, delta, alpha_minus):
        """The inner planet dominates the angular-momentum budget:
        0 < m2/m1 < min(sqrt((1-delta) alpha_minus), 1-delta) and mu < mu0."""
        ratio = self.m2 / self.m1
        bound = min(math.sqrt((1.0 - delta) * alpha_minus), 1.0 - delta)
        return 0.0 < ratio < bound and self.mu < self.mu0(delta)

    def lambda_of(self, i, a):
        """Action Lambda_i = mr_i sqrt(Mt_i a)."""
        return self.reduced(i) * math.sqrt(self.total(i) * a)

    def a_of_lambda(self, i, lam):
        return (lam / self.reduced(i)) ** 2 / self.total(i)

    def mean_motion(self, i, lam):
        """Circular frequency mr_i^3 Mt_i^2 / Lambda_i^3."""
        return self.reduced(i) ** 3 * self.total(i) ** 2 / lam ** 3
