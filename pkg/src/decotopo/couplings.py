"""Closed-form maps from channel/state parameters to classical couplings.

The physical knobs are the error rate ``p`` of the coherent channel
``(1-p) rho + p sigma(theta) rho sigma(theta)``, the channel angle ``theta``
(``sigma(theta) = cos(theta) Z + sin(theta) X``) and the strength ``h`` of the
non-unitary perturbation ``prod_e (1 + h sigma_e)`` applied to the toric code.

Infinite couplings are represented by ``math.inf``; the ``*_infinite``
properties make the flag explicit and weight builders turn them into hard
constraints instead of overflowing exponentials.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

#: tolerance used by the identity checks of this module
IDENTITY_TOL = 1e-12

SELFDUAL_THETA = math.pi / 4


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"p out of [0, 0.5]: {p!r}")


def _check_h(h: float) -> None:
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"h out of [0, 1]: {h!r}")


def _check_theta(theta: float) -> None:
    if not 0.0 <= theta <= math.pi / 2 + 1e-15:
        raise ValueError(f"theta out of [0, pi/2]: {theta!r}")


@dataclass(frozen=True)
class ChannelSpec:
    p: float
    theta: float = SELFDUAL_THETA
    h: float = 0.0

    def __post_init__(self):
        _check_p(self.p)
        _check_theta(self.theta)
        _check_h(self.h)


@dataclass(frozen=True)
class ATCouplings:
    """Isotropic Ashkin-Teller couplings ``exp[K(ss'+tt') + K4 ss'tt']``."""

    K: float
    K4: float

    def __post_init__(self):
        for name in ("K", "K4"):
            v = getattr(self, name)
            if math.isnan(v) or v < 0:
                raise ValueError(f"{name} must be >= 0 (or inf), got {v!r}")

    @property
    def K_infinite(self) -> bool:
        return math.isinf(self.K)

    @property
    def K4_infinite(self) -> bool:
        return math.isinf(self.K4)

    @property
    def finite(self) -> bool:
        return not (self.K_infinite or self.K4_infinite)

    @property
    def tanh(self) -> tuple[float, float]:
        return math.tanh(self.K), math.tanh(self.K4)


@dataclass(frozen=True)
class PerturbedParams:
    h_prime: float
    f: float
    lam: float


def _atanh(x: float) -> float:
    if x >= 1.0:
        return math.inf
    return math.atanh(x)


def lambda_of_p(p: float) -> float:
    """Effective strength ``2p(1-p) / (1 - 2p + 2p^2)`` of the squared channel."""
    _check_p(p)
    return 2 * p * (1 - p) / (1 - 2 * p + 2 * p * p)


def selfdual_couplings(p: float) -> ATCouplings:
    """AT couplings for the self-dual channel ``sigma = (X+Z)/sqrt(2)``.

    The result lies on the self-dual line ``exp(-2 K4) = sinh(2 K)``; ``p=0``
    gives the flagged limit ``(0, inf)``.
    """
    lam = lambda_of_p(p)
    if lam == 0.0:
        return ATCouplings(0.0, math.inf)
    root = math.sqrt(4 - lam * lam)
    # (2 - sqrt(4 - l^2)) / l rewritten without cancellation
    a = lam / (2 + root)
    b = (2 - lam * root) / (2 - lam * lam)
    return ATCouplings(_atanh(a), _atanh(b))


def general_rhs(p: float, theta: float) -> tuple[float, float]:
    """Right-hand sides ``(A, B)`` of the general-angle coupling equations.

    ``A = lam sin^2 / (1 + lam cos^2)`` multiplies ``ss' + tt'`` and
    ``B = (1 - lam cos^2) / (1 + lam cos^2)`` multiplies ``ss'tt'`` in the
    normalised edge weight.
    """
    _check_theta(theta)
    lam = lambda_of_p(p)
    c2 = math.cos(theta) ** 2
    s2 = math.sin(theta) ** 2
    return lam * s2 / (1 + lam * c2), (1 - lam * c2) / (1 + lam * c2)


def general_lhs(a: float, b: float) -> tuple[float, float]:
    """Edge-weight coefficients generated by ``tanh K = a``, ``tanh K4 = b``."""
    den = 1 + a * a * b
    return a * (1 + b) / den, (a * a + b) / den


def general_couplings(p: float, theta: float) -> ATCouplings:
    """AT couplings for the channel ``sigma = cos(theta) Z + sin(theta) X``.

    Eliminating ``b = tanh K4`` from the two rational equations leaves
    ``A a^2 - (1 + B) a + A = 0``; the physical root is the one in ``[0, 1)``
    (the two roots multiply to one). ``b`` follows from
    ``b = (B - a^2) / (1 - B a^2)``.
    """
    A, B = general_rhs(p, theta)
    if A == 0.0:
        return ATCouplings(0.0, _atanh(B))
    disc = (1 + B) ** 2 - 4 * A * A
    if disc < 0.0:
        if disc < -1e-12:
            raise ArithmeticError(f"no real coupling solution for p={p}, theta={theta}")
        disc = 0.0
    a = 2 * A / ((1 + B) + math.sqrt(disc))
    if a >= 1.0 - 1e-15:
        # double root at a = 1: pure-X channel at maximal error rate
        return ATCouplings(math.inf, math.inf)
    lhs_a, _ = general_lhs(a, (B - a * a) / (1 - B * a * a))
    if abs(lhs_a - A) > 1e-10:
        # near-degenerate quadratic; bracket the physical root instead
        a = brentq(lambda x: A * x * x - (1 + B) * x + A, 0.0, 1.0 - 1e-15, xtol=1e-15)
    b = (B - a * a) / (1 - B * a * a)
    b = min(max(b, 0.0), 1.0)
    return ATCouplings(_atanh(a), _atanh(b))


def selfduality_residual(c: ATCouplings) -> float:
    """``exp(-2 K4) - sinh(2 K)``; zero on the AT self-dual line."""
    if c.K_infinite:
        raise ValueError("selfduality_residual needs finite K")
    return math.exp(-2 * c.K4) - math.sinh(2 * c.K)


def h_prime(h: float) -> float:
    _check_h(h)
    return 2 * h / (1 + h * h)


def perturbed_params(h: float, p: float) -> PerturbedParams:
    """Renormalised perturbation ``h'`` and disorder weight ``f = lam h'^2``."""
    hp = h_prime(h)
    lam = lambda_of_p(p)
    return PerturbedParams(h_prime=hp, f=lam * hp * hp, lam=lam)


def chamon_couplings(h: float, p: float) -> tuple[float, float]:
    """Loop-model couplings for ``prod_e(1 + h Z_e)|TC>`` under phase flips.

    Returns ``K = ln((1+h)/(1-h))`` (amplitude ``exp(-K |g|)`` per loop edge)
    and ``K4 = -ln(1 - 2p)``; ``h=1`` or ``p=1/2`` give ``inf``.
    """
    _check_h(h)
    _check_p(p)
    K = math.inf if h == 1.0 else math.log1p(h) - math.log1p(-h)
    K4 = math.inf if p == 0.5 else -math.log1p(-2 * p)
    return K, K4


def chamon_critical_h() -> float:
    """Pure-state critical ``h`` of the phase-flip family (``n -> 1``).

    At ``p = 0`` the loop weight ``((1-h)/(1+h))^(2|g|)`` is the
    high-temperature expansion of the square-lattice Ising model, critical at
    ``tanh J = sqrt(2) - 1``.
    """
    r = math.sqrt(math.sqrt(2.0) - 1.0)
    return (1 - r) / (1 + r)
