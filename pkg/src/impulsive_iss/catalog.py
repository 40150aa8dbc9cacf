"""Ready-made models and certificates used by tests, examples and the CLI."""
from __future__ import annotations

import math

from .core import KFunction
from .dsl import parse_model
from .errors import DomainError
from .lyapunov import ExpLyapCertificate, SubsystemCert

LINEAR_DECAY = """\
model decay {
  sub s1[1] {
    flow x1' = -x1;
    jump point x1 = 0.5*x1;
  }
}
"""

QUADRATIC_PAIR = """\
model qpair {
  sub p1[1] {
    flow x1' = -x1 + x2^2;
    jump point x1 = exp(1)*x1;
  }
  sub p2[1] {
    flow x2' = -x2 + 0.5*sqrt(abs(x1));
    jump point x2 = exp(1)*x2;
  }
}
"""


def linear_decay_model():
    return parse_model(LINEAR_DECAY)


def linear_decay_certificate():
    return ExpLyapCertificate((SubsystemCert("s1", "abs(x1)", 1.0, math.log(2.0)),))


def quadratic_pair_model():
    return parse_model(QUADRATIC_PAIR)


def pair_feasibility(eps1: float, eps2: float) -> float:
    """``(1 - eps1)(1 - eps2)^2``; the composition needs it above 1/4."""
    return (1.0 - eps1) * (1.0 - eps2) ** 2


def pair_scale_interval(eps1: float, eps2: float):
    """Open interval of admissible ``a`` for ``V = max(|x1|, x2^2 / a^2)``."""
    lo = 1.0 / (2.0 * (1.0 - eps2))
    hi = math.sqrt(1.0 - eps1)
    return lo, hi


def quadratic_pair_certificate(eps2: float = 0.267, eps1: float | None = None,
                               a: float | None = None) -> ExpLyapCertificate:
    """Certificates of the quadratic pair with linear gains.

    The second block uses ``W2 = x2^2 / a^2`` so that both internal gains
    become linear: ``gamma_12 = a^2 / (1 - eps1)`` and ``gamma_21 = 1 /
    (4 a^2 (1 - eps2)^2)``.  The default ``a`` is the interval midpoint.
    """
    eps1 = 2.0 * eps2 if eps1 is None else eps1
    if not (0 < eps1 < 1 and 0 < eps2 < 1):
        raise DomainError("eps1 and eps2 must lie in (0, 1)")
    lo, hi = pair_scale_interval(eps1, eps2)
    if not lo < hi:
        raise DomainError(f"empty scale interval ({lo!r}, {hi!r}): "
                          f"feasibility {pair_feasibility(eps1, eps2)!r} <= 1/4")
    a = 0.5 * (lo + hi) if a is None else a
    if not lo < a < hi:
        raise DomainError(f"a={a!r} outside ({lo!r}, {hi!r})")
    a2 = a * a
    sub1 = SubsystemCert("p1", "abs(x1)", eps1, -1.0, (("p2", a2 / (1.0 - eps1)),))
    w = KFunction.power(1.0 / a2, 2.0)
    sub2 = SubsystemCert("p2", f"x2^2/{a2!r}", 2.0 * eps2, -2.0,
                         (("p1", 1.0 / (4.0 * a2 * (1.0 - eps2) ** 2)),), psi1=w, psi2=w)
    return ExpLyapCertificate((sub1, sub2))
