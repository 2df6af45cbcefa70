"""Scenario parameters, SIR terms and the random-variable primitives.

Distances are in km, densities in BS per km^2, powers on a linear scale
relative to unit receiver noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special


class ConfigError(ValueError):
    """A NetworkConfig (or config file) violates an invariant."""


class DegenerateSIRError(ArithmeticError):
    """Every term of the SIR denominator is zero."""


def db_to_linear(x_db):
    x = 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)
    return float(x) if x.ndim == 0 else x


def linear_to_db(x):
    x = 10.0 * np.log10(np.asarray(x, dtype=float))
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class NetworkConfig:
    """All parameters of one single-tier network scenario.

    Parameters
    ----------
    lambda_b : float
        BS density per km^2.
    alpha : float
        Path-loss exponent, must exceed 2.
    m_antennas, k_users : int
        Transmit antennas per BS and users served per BS (``K <= M``).
    delta_t, delta_r : float
        Transmit / receive impairment levels (EVM-like proportionality).
    power : float
        Per-user transmit power, linear.
    noise_power : float
        Thermal noise power, linear. ``0`` gives the pure SIR model.
    target_sir : float
        Coverage threshold, linear.
    lambda_u : float, optional
        User density; defaults to ``6 * lambda_b``. Stored only.
    correlated_distortion : bool
        If True, the distortion powers of a serving link share the channel
        norm of the desired signal (channel-level truth). The default treats
        them as independent Gamma variates, as the analytic bound does.
    """

    lambda_b: float
    alpha: float
    m_antennas: int
    k_users: int
    delta_t: float = 0.0
    delta_r: float = 0.0
    power: float = 1.0
    noise_power: float = 0.0
    target_sir: float = 1.0
    lambda_u: float | None = field(default=None)
    correlated_distortion: bool = False

    def __post_init__(self):
        if self.lambda_u is None:
            object.__setattr__(self, "lambda_u", 6.0 * self.lambda_b)
        for name in ("m_antennas", "k_users"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ConfigError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not self.alpha > 2:
            raise ConfigError(f"alpha must exceed 2 (got {self.alpha})")
        if not self.lambda_b > 0:
            raise ConfigError(f"lambda_b must be positive (got {self.lambda_b})")
        if self.k_users < 1:
            raise ConfigError(f"k_users must be at least 1 (got {self.k_users})")
        if self.m_antennas < self.k_users:
            raise ConfigError(
                f"m_antennas must be >= k_users (M={self.m_antennas}, K={self.k_users})")
        for name in ("delta_t", "delta_r", "power", "noise_power", "target_sir", "lambda_u"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be finite and non-negative (got {v})")

    @property
    def delta(self) -> int:
        return derived_delta(self)

    def replace(self, **changes) -> "NetworkConfig":
        if "lambda_b" in changes and "lambda_u" not in changes:
            changes["lambda_u"] = None
        return replace(self, **changes)


def derived_delta(cfg: NetworkConfig) -> int:
    """Diversity order of the ZF desired link, ``M - K + 1``."""
    return cfg.m_antennas - cfg.k_users + 1


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"Gamma shape and scale must be positive, got {self}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale ** 2

    def cdf(self, x):
        return special.gammainc(self.shape, np.asarray(x, dtype=float) / self.scale)

    def sf(self, x):
        return special.gammaincc(self.shape, np.asarray(x, dtype=float) / self.scale)


def sample_gamma(params: GammaParams, rng: np.random.Generator, size=None):
    return rng.gamma(params.shape, params.scale, size)


def sample_beta(a: float, b: float, rng: np.random.Generator, size=None):
    """Beta(a, b) draws; ``b == 0`` is the point mass at 1 (the K = 1 case)."""
    if a <= 0 or b < 0:
        raise ValueError(f"need a > 0 and b >= 0, got a={a}, b={b}")
    if b == 0:
        return 1.0 if size is None else np.ones(size)
    return rng.beta(a, b, size)


@dataclass(frozen=True)
class SirTerms:
    """Every random quantity entering the SIR of one serving link."""

    desired: float
    serving_distance: float
    distortion_tx: float
    distortion_rx: float
    interference: float

    def __post_init__(self):
        if not self.serving_distance > 0:
            raise ValueError("serving_distance must be positive")
        for name in ("desired", "distortion_tx", "distortion_rx", "interference"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def sir_from_terms(t: SirTerms, cfg: NetworkConfig) -> float:
    """SIR (or SINR when ``cfg.noise_power > 0``) of one serving link.

    Raises DegenerateSIRError when the denominator vanishes; callers in the
    Monte Carlo engine count such a trial as covered.
    """
    path_gain = t.serving_distance ** (-cfg.alpha)
    num = cfg.power * t.desired * path_gain
    den = (t.distortion_tx + t.distortion_rx) * path_gain + t.interference + cfg.noise_power
    if den <= 0:
        raise DegenerateSIRError("no interference, distortion or noise in the denominator")
    return num / den


def sir_array(desired, path_gain, distortion, interference, cfg: NetworkConfig):
    """Vectorised form of :func:`sir_from_terms`; zero denominators give +inf.

    ``distortion`` is the summed tx + rx distortion power.
    """
    num = cfg.power * desired * path_gain
    den = distortion * path_gain + interference + cfg.noise_power
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
