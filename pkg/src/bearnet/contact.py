"""Nonlinear load-deflection law for roller--raceway line contact.

Palmgren's classical line-contact relation for steel on steel:

    delta = 3.84e-5 * Q**0.9 / l**0.8     (delta mm, Q N, l mm)

inverted to force form Q(delta) = (delta * l**0.8 / 3.84e-5)**(10/9),
a pure power law with exponent 10/9.  The same law is used on the inner
and the outer contact of every roller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PALMGREN_CONSTANT = 3.84e-5
FORCE_EXPONENT = 10.0 / 9.0


@dataclass(frozen=True)
class ContactLaw:
    """Q = stiffness_constant * delta**(10/9) with delta in mm, Q in N."""

    stiffness_constant: float
    exponent: float = FORCE_EXPONENT

    def __post_init__(self):
        if not self.stiffness_constant > 0:
            raise ValueError(
                f"stiffness_constant must be > 0, got {self.stiffness_constant}")


def contact_constant(roller_length: float,
                     deflection_constant: float = PALMGREN_CONSTANT) -> ContactLaw:
    """Build the contact law for a roller of the given length (mm).

    deflection_constant is the Palmgren coefficient; overridable for
    sensitivity studies.
    """
    if not roller_length > 0:
        raise ValueError(f"roller_length must be > 0, got {roller_length}")
    c = (roller_length ** 0.8 / deflection_constant) ** FORCE_EXPONENT
    return ContactLaw(stiffness_constant=c)


def contact_force(law: ContactLaw, deflection):
    """Contact load (N) at the given interference (mm).

    Unilateral: non-positive deflection carries no load.  Accepts scalars
    or arrays.
    """
    d = np.asarray(deflection, dtype=float)
    q = np.where(d > 0.0,
                 law.stiffness_constant * np.abs(d) ** law.exponent,
                 0.0)
    if np.ndim(deflection) == 0:
        return float(q)
    return q


def contact_deflection(law: ContactLaw, load):
    """Interference (mm) producing the given load (N); inverse of contact_force."""
    q = np.asarray(load, dtype=float)
    d = np.where(q > 0.0,
                 (np.abs(q) / law.stiffness_constant) ** (1.0 / law.exponent),
                 0.0)
    if np.ndim(load) == 0:
        return float(d)
    return d
