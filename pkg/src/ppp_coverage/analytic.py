"""Closed-form coverage upper bound for ZF downlink with additive impairments.

Three Laplace transforms enter the bound:

* interference from the PPP of other BSs, ``exp(-C s^(2/alpha))``;
* transmit and receive distortion, ``(1 + q s)^-M`` with ``q = p delta^2``.

The integrand at serving distance ``l`` is

    sum_{i<Delta} sum_{k<=i} sum_{n<=i-k} C(i,k) C(i-k,n) (-1)^i / i!
        * Tt^(i-k) s^k * Lr^(n)(Tt) * Lt^(i-k-n)(Tt) * LI^(k)(s)

with ``Tt = T / p`` and ``s = Tt l^alpha``: the distortion transforms are
differentiated and evaluated at ``Tt`` and the interference transform at
``s``. The bound is ``2 pi lambda int_0^inf integrand(l) l dl``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .model import NetworkConfig, derived_delta


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class SingularityError(ValueError):
    """Derivative requested at a point where it does not exist."""


@dataclass(frozen=True)
class InterferenceConstant:
    """``C(alpha, K)`` multiplying ``s^(2/alpha)`` in the interference exponent.

    Interferer powers are not included; the bound multiplies by ``p^(2/alpha)``.
    """

    value: float
    alpha: float
    k_users: int
    lambda_b: float

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class LaplaceDeriv:
    """Derivatives of orders ``0..n`` of a Laplace transform at ``point``."""

    point: float
    values: np.ndarray

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, n):
        return self.values[n]


@dataclass(frozen=True)
class BoundResult:
    value: float
    clamped: float
    evaluations: int
    error_estimate: float


def _log_factorial(n):
    return special.gammaln(np.asarray(n, dtype=float) + 1.0)


def interference_constant(cfg: NetworkConfig | None = None, *, alpha=None, k_users=None,
                          lambda_b=None) -> InterferenceConstant:
    """``(2 pi lambda / alpha) sum_{m=1..K} C(K,m) B(K - m + 2/alpha, m - 2/alpha)``.

    The ``m = 0`` term would be ``B(K + 2/alpha, -2/alpha)``, which diverges,
    so the sum starts at 1.
    """
    if cfg is not None:
        alpha, k_users, lambda_b = cfg.alpha, cfg.k_users, cfg.lambda_b
    if not alpha > 2:
        raise ValueError(f"alpha must exceed 2 (got {alpha})")
    if lambda_b < 0:
        raise ValueError("lambda_b must be non-negative")
    b = 2.0 / alpha
    m = np.arange(1, k_users + 1)
    log_terms = (special.gammaln(k_users + 1) - special.gammaln(m + 1)
                 - special.gammaln(k_users - m + 1) + special.betaln(k_users - m + b, m - b))
    total = float(np.exp(log_terms).sum())
    return InterferenceConstant(2.0 * math.pi * lambda_b / alpha * total, float(alpha),
                                int(k_users), float(lambda_b))


def laplace_interference(s, c, alpha):
    """``exp(-C s^(2/alpha))``."""
    return np.exp(-float(c) * np.asarray(s, dtype=float) ** (2.0 / alpha))


def laplace_distortion(s, q, m):
    """``(1 + q s)^-M``, the transform of ``q * Gamma(M, 1)``."""
    return (1.0 + q * np.asarray(s, dtype=float)) ** (-m)


def distortion_deriv_stack(s: float, q: float, m: int, n: int) -> LaplaceDeriv:
    """Orders ``0..n`` of ``(1 + q s)^-M``, closed form.

    ``d^j/ds^j = (-q)^j M (M+1) ... (M+j-1) (1 + q s)^-(M+j)``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    j = np.arange(n + 1)
    rising = np.exp(special.gammaln(m + j) - special.gammaln(m))
    vals = (-q) ** j * rising * (1.0 + q * s) ** (-(m + j).astype(float))
    return LaplaceDeriv(float(s), vals)


def _falling(beta, k):
    return np.prod(beta - np.arange(k)) if k else 1.0


def interference_deriv_stack(s: float, c, alpha: float, n: int) -> LaplaceDeriv:
    """Orders ``0..n`` of ``F(s) = exp(g(s))``, ``g(s) = -C s^beta``, ``beta = 2/alpha``.

    Faa di Bruno for an exponential outer function reduces to the recurrence
    ``F^(n) = sum_{j<n} C(n-1, j) g^(n-j) F^(j)``, with
    ``g^(k)(s) = -C beta (beta-1) ... (beta-k+1) s^(beta-k)``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    c = float(c)
    beta = 2.0 / alpha
    if s == 0:
        if n >= 1 and c != 0:
            raise SingularityError("derivatives of exp(-C s^beta) diverge at s = 0")
        vals = np.zeros(n + 1)
        vals[0] = 1.0
        return LaplaceDeriv(0.0, vals)
    if s < 0:
        raise ValueError("s must be non-negative")
    g = [0.0] + [-c * _falling(beta, k) * s ** (beta - k) for k in range(1, n + 1)]
    vals = np.empty(n + 1)
    vals[0] = math.exp(-c * s ** beta)
    for order in range(1, n + 1):
        vals[order] = sum(math.comb(order - 1, j) * g[order - j] * vals[j] for j in range(order))
    return LaplaceDeriv(float(s), vals)


def _multinomial_weights(d):
    """``C(i,k) C(i-k,n) / i! = 1 / (k! n! (i-k-n)!)`` for all ``i < d``."""
    i, k, n = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
    valid = (k <= i) & (n <= i - k)
    j = np.where(valid, i - k - n, 0)
    logw = -(_log_factorial(k) + _log_factorial(n) + _log_factorial(j))
    return valid, k, n, j, np.where(valid, np.exp(logw), 0.0)


class _Integrand:
    """The per-distance integrand with everything independent of ``l`` cached."""

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        self.d = derived_delta(cfg)
        self.t_tilde = cfg.target_sir / cfg.power
        self.beta = 2.0 / cfg.alpha
        c = interference_constant(cfg)
        # equal-power interferers: I = p * sum g |y|^-alpha has exponent (p s)^beta C
        self.c_eff = c.value * cfg.power ** self.beta
        top = self.d - 1
        lr = distortion_deriv_stack(self.t_tilde, cfg.power * cfg.delta_r ** 2, cfg.m_antennas, top)
        lt = distortion_deriv_stack(self.t_tilde, cfg.power * cfg.delta_t ** 2, cfg.m_antennas, top)
        valid, self.k, n, j, w = _multinomial_weights(self.d)
        i = self.k + n + j
        # (-1)^i Tt^(i-k) Lr^(n) Lt^(i-k-n) and the combinatorial weight; l-free
        self.fixed = np.where(valid, w * (-1.0) ** i * self.t_tilde ** (n + j)
                              * lr.values[n] * lt.values[j], 0.0)
        self.calls = 0

    def __call__(self, l: float) -> float:
        self.calls += 1
        if l <= 0:
            raise SingularityError("serving distance must be positive")
        s = self.t_tilde * l ** self.cfg.alpha
        li = interference_deriv_stack(s, self.c_eff, self.cfg.alpha, self.d - 1).values
        return float(np.sum(self.fixed * s ** self.k * li[self.k]))

    @property
    def length_scale2(self) -> float:
        """``l^2`` at which the ideal interference factor decays by ``e``."""
        return 1.0 / (self.c_eff * self.t_tilde ** self.beta)


def coverage_integrand(l: float, cfg: NetworkConfig) -> float:
    """Conditional coverage term for a BS at distance ``l`` (km)."""
    return _Integrand(cfg)(l)


L_EPS = 1e-9
TAIL_TOL = 1e-8


def coverage_bound(cfg: NetworkConfig, epsrel: float = 1e-9, limit: int = 200) -> BoundResult:
    """Upper bound on coverage, ``pi lambda int integrand(sqrt(u)) du`` with ``u = l^2``.

    The variable is rescaled by the ideal-hardware decay length, the domain
    truncated at ``(L_EPS, u_max]`` where the remaining mass is below
    ``TAIL_TOL`` of the accumulated integral.
    """
    f = _Integrand(cfg)
    if cfg.target_sir == 0:
        return BoundResult(math.inf, 1.0, 0, 0.0)
    scale = f.length_scale2
    v_lo = L_EPS ** 2 / scale

    def g(v):
        return f(math.sqrt(v * scale))

    total, err = 0.0, 0.0
    edges = [v_lo, 1.0, 4.0, 16.0, 64.0]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            for a, b in zip(edges[:-1], edges[1:]):
                val, e = integrate.quad(g, a, b, epsabs=0.0, epsrel=epsrel, limit=limit)
                total += val
                err += e
            # the integrand is e^-v times a polynomial in v: extend until the tail is negligible
            b = edges[-1]
            while True:
                val, e = integrate.quad(g, b, 2.0 * b, epsabs=0.0, epsrel=epsrel, limit=limit)
                total += val
                err += e
                b *= 2.0
                if val <= TAIL_TOL * total * 1e-2 or b > 1e6:
                    break
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature failed for {cfg}: {exc}") from exc
    if b > 1e6:
        raise QuadratureError("integrand tail did not decay")
    value = math.pi * cfg.lambda_b * scale * total
    err_abs = math.pi * cfg.lambda_b * scale * err
    return BoundResult(value, min(value, 1.0), f.calls, err_abs)


def ideal_bound_closed_form(alpha: float, target_sir) -> float:
    """SISO ideal-hardware bound ``alpha sin(2 pi / alpha) / (2 pi T^(2/alpha))``."""
    return alpha * math.sin(2 * math.pi / alpha) / (2 * math.pi * np.asarray(target_sir) ** (2 / alpha))
