import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .config import IDENTITY_RTOL, MAX_EXPONENT, SURFACE_RTOL
from .errors import ConvergenceError, DomainError, InternalError, SurfaceError

logger = logging.getLogger(__name__)

# Upper end of the geometric bracket search
_MAX_BRACKET = 2.0 ** 60


def _check_exponent(name: str, value: float):
    if not (1.0 < value <= MAX_EXPONENT) or math.isnan(value):
        raise DomainError(f"{name} must lie in (1, {MAX_EXPONENT:g}], got {value!r}")


@dataclass(frozen=True)
class Exponents:
    """The pair (p, q) with 1 < q < p."""
    p: float
    q: float

    def __post_init__(self):
        _check_exponent("p", self.p)
        _check_exponent("q", self.q)
        if not self.q < self.p:
            raise DomainError(f"need 1 < q < p, got p={self.p!r}, q={self.q!r}")

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)


@dataclass(frozen=True)
class ConstraintTriple:
    """f = ∫φ, A = ∫φ^q, F = ∫φ^p."""
    f: float
    A: float
    F: float


@dataclass(frozen=True)
class BoundReport:
    upper_bound: float
    k: float
    on_surface: bool
    exact_value: Optional[float] = None
    lower_bound_empirical: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "exact": self.exact_value,
            "upper": self.upper_bound,
            "empirical": self.lower_bound_empirical,
            "k": self.k,
            "on_surface": self.on_surface,
        }

    def is_consistent(self, rtol: float = 0.0) -> bool:
        """empirical <= exact <= upper, skipping the values that are not set."""
        ceiling = self.upper_bound * (1.0 + rtol)
        if self.exact_value is not None:
            if self.exact_value > ceiling:
                return False
            ceiling = self.exact_value * (1.0 + rtol)
        return self.lower_bound_empirical is None or self.lower_bound_empirical <= ceiling


def _solve_decreasing(func: Callable[[float], float], lo: float, hi: float,
                      fprime: Optional[Callable[[float], float]] = None) -> float:
    """
    Root of a strictly decreasing function on [lo, hi] with func(lo) >= 0 >= func(hi).
    Brent's method on the bracket, then at most three Newton steps that are kept
    only if they stay inside the bracket and shrink the residual.
    """
    try:
        x = brentq(func, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    except (RuntimeError, ValueError) as e:
        raise ConvergenceError(f"bracketed root search failed on [{lo!r}, {hi!r}]: {e}") from e
    if fprime is None:
        return x
    fx = func(x)
    for _ in range(3):
        if fx == 0.0:
            break
        d = fprime(x)
        if d == 0.0 or not math.isfinite(d):
            break
        cand = x - fx / d
        if not lo <= cand <= hi:
            break
        fc = func(cand)
        if abs(fc) >= abs(fx):
            break
        x, fx = cand, fc
    return x


def _grow_bracket(func: Callable[[float], float], lo: float) -> float:
    """Double hi from 2*lo until func(hi) < 0."""
    hi = 2.0 * lo
    while func(hi) >= 0.0:
        hi *= 2.0
        if hi > _MAX_BRACKET:
            raise ConvergenceError(f"no sign change found in [{lo!r}, {_MAX_BRACKET:g}]")
    logger.debug("bracket [%g, %g]", lo, hi)
    return hi


def hp(p: float, z: float) -> float:
    """H_p(z) = -(p-1) z^p + p z^(p-1)."""
    _check_exponent("p", p)
    if z < 0:
        raise DomainError(f"hp needs z >= 0, got {z!r}")
    return -(p - 1.0) * z ** p + p * z ** (p - 1.0)


def omega(p: float, tau: float) -> float:
    """
    Inverse of H_p on [1, p/(p-1)], where H_p decreases from 1 to 0.
    Endpoints are returned exactly.
    """
    _check_exponent("p", p)
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"omega needs tau in [0, 1], got {tau!r}")
    top = p / (p - 1.0)
    if tau == 0.0:
        return top
    if tau == 1.0:
        return 1.0

    def residual(z):
        return -(p - 1.0) * z ** p + p * z ** (p - 1.0) - tau

    def slope(z):
        return p * (p - 1.0) * z ** (p - 2.0) * (1.0 - z)

    return _solve_decreasing(residual, 1.0, top, slope)


def construction_root(q: float, alpha: float, tau: float) -> float:
    """
    The unique z >= 1 with
        -(z - alpha)^q + (1 - alpha)^(q-1) z^q = tau * alpha * (1 - alpha)^(q-1).
    As alpha -> 0+ the root tends to omega(q, tau).
    """
    _check_exponent("q", q)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not 0.0 < tau <= 1.0:
        raise DomainError(f"tau must lie in (0, 1], got {tau!r}")
    if tau == 1.0:
        return 1.0

    log_keep = (q - 1.0) * math.log1p(-alpha)

    # Both sides are O(alpha); the difference of powers is taken through
    # expm1 of a log difference and the equation is divided by alpha.
    def residual(z):
        gap = log_keep - q * math.log1p(-alpha / z)
        return ((z - alpha) ** q * math.expm1(gap) - tau * alpha * math.exp(log_keep)) / alpha

    def slope(z):
        return q * ((1.0 - alpha) ** (q - 1.0) * z ** (q - 1.0) - (z - alpha) ** (q - 1.0)) / alpha

    hi = _grow_bracket(residual, 1.0)
    return _solve_decreasing(residual, 1.0, hi, slope)


def construction_residual(q: float, alpha: float, tau: float, z: float) -> float:
    """Plain residual of the construction equation, as written."""
    return -(z - alpha) ** q + (1.0 - alpha) ** (q - 1.0) * z ** q - tau * alpha * (1.0 - alpha) ** (q - 1.0)


def critical_f(exps: Exponents, f: float, A: float) -> float:
    """The F(f, A) completing (f, A) to a point of the critical surface."""
    if not (f > 0 and f ** exps.q < A):
        raise DomainError(f"need 0 < f^q < A, got f={f!r}, A={A!r}")
    w = omega(exps.q, f ** exps.q / A)
    top = exps.p / (exps.p - 1.0)
    if w >= top:
        raise SurfaceError(
            f"omega_q(f^q/A) = {w:.15g} >= p/(p-1) = {top:.15g}; "
            f"no finite F(f, A) exists for p={exps.p:g}")
    return f ** exps.p / hp(exps.p, w)


def bellman_on_surface(exps: Exponents, f: float, A: float) -> float:
    """Exact Bellman value omega_q(f^q/A)^p * F(f, A) on the critical surface."""
    big_f = critical_f(exps, f, A)
    return omega(exps.q, f ** exps.q / A) ** exps.p * big_f


def two_variable_bellman(p: float, f: float, F: float) -> float:
    """F * omega_p(f^p / F)^p, the Bellman function without the L^q constraint."""
    _check_exponent("p", p)
    if not (f > 0 and f ** p <= F):
        raise DomainError(f"need 0 < f^p <= F, got f={f!r}, F={F!r}")
    return F * omega(p, f ** p / F) ** p


def doob_constant(p: float) -> float:
    _check_exponent("p", p)
    return p / (p - 1.0)


def h_fn(exps: Exponents, t: float) -> float:
    """h(t) = p t^(p-q) - (p-q) t^p; maximum q at t = 1."""
    if not t > 0:
        raise DomainError(f"h needs t > 0, got {t!r}")
    p, q = exps.p, exps.q
    return p * t ** (p - q) - (p - q) * t ** p


def h_inv(exps: Exponents, y: float) -> float:
    """Inverse of h on its decreasing branch [1, inf)."""
    p, q = exps.p, exps.q
    if y > q or math.isnan(y):
        raise DomainError(f"h_inv needs y <= q = {q:g}, got {y!r}")
    if y == q:
        return 1.0

    def residual(t):
        return p * t ** (p - q) - (p - q) * t ** p - y

    def slope(t):
        return p * (p - q) * t ** (p - q - 1.0) * (1.0 - t ** q)

    hi = _grow_bracket(residual, 1.0)
    return _solve_decreasing(residual, 1.0, hi, slope)


def validate_triple(exps: Exponents, triple: ConstraintTriple):
    f, A, F = triple.f, triple.A, triple.F
    if not (f >= 0 and A > 0 and F > 0):
        raise DomainError(f"need f >= 0, A > 0, F > 0, got {triple}")
    if not (f ** exps.q < A < F ** (exps.q / exps.p)):
        raise DomainError(f"need f^q < A < F^(q/p), got {triple}")


def k_value(exps: Exponents, triple: ConstraintTriple) -> float:
    p, q = exps.p, exps.q
    f, A, F = triple.f, triple.A, triple.F
    return (p * f ** (p - q) * A - (p - q) * f ** p) / F


def on_surface(exps: Exponents, triple: ConstraintTriple, rtol: float = SURFACE_RTOL) -> bool:
    try:
        surface_f = critical_f(exps, triple.f, triple.A)
    except (DomainError, SurfaceError):
        return False
    return abs(surface_f - triple.F) <= rtol * abs(triple.F)


def upper_bound(exps: Exponents, triple: ConstraintTriple, validate: bool = True) -> BoundReport:
    """
    F * h_inv(k)^p, an upper bound for ∫(Mφ)^p valid for every triple.
    Fills exact_value when the triple sits on the critical surface.
    With validate=False the strict triple inequalities are skipped, which lets
    callers pass the boundary triple of a constant function (k = q).
    """
    if validate:
        validate_triple(exps, triple)
    k = k_value(exps, triple)
    q = exps.q
    if k > q:
        # rounding at the k = q boundary
        if k <= q * (1.0 + IDENTITY_RTOL):
            logger.debug("clamping k=%r to q=%r", k, q)
            k = q
        else:
            raise InternalError(f"k = {k!r} exceeds q = {q!r} for {triple}")
    if not k > 0:
        raise InternalError(f"k = {k!r} is not positive for {triple}")
    bound = triple.F * h_inv(exps, k) ** exps.p
    exact = None
    surface = on_surface(exps, triple)
    if surface:
        exact = bellman_on_surface(exps, triple.f, triple.A)
    return BoundReport(upper_bound=bound, k=k, on_surface=surface, exact_value=exact)


