"""Monte Carlo coverage estimation for a typical user at the origin.

Each trial drops a PPP of base stations in a rectangular window centred on
the origin, lets every BS in turn act as the serving candidate (all others
interfere) and declares coverage when the best SIR exceeds the target.

Random streams are split per block of ``BLOCK_TRIALS`` trials from
``SeedSequence(seed, spawn_key=(block,))``, so an estimate depends only on
(cfg, window, trials, seed) and not on how blocks are scheduled.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache, partial

import numpy as np
from scipy import integrate

from .model import (
    DegenerateSIRError,
    GammaParams,
    NetworkConfig,
    SirTerms,
    derived_delta,
    sample_beta,
    sample_gamma,
    sir_array,
    sir_from_terms,
)

BLOCK_TRIALS = 1000
DEFAULT_SEED = 1
Z95 = 1.96


@dataclass(frozen=True)
class Window:
    """Simulation window in km, centred on the typical user.

    ``far_field`` adds the mean interference of the PPP outside the window
    (equal powers, mean fading K), which removes most of the boundary bias
    for small path-loss exponents. Set it to False for the bare protocol.
    """

    width: float = 5.0
    height: float = 6.0
    far_field: bool = True

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("window width and height must be positive")

    @property
    def area(self) -> float:
        return self.width * self.height

    def check_density(self, lambda_b: float) -> None:
        if 0 < lambda_b * self.area < 20:
            warnings.warn(
                f"only {lambda_b * self.area:.1f} BSs expected in the window; "
                "boundary effects will dominate", RuntimeWarning, stacklevel=3)

    def outside_path_integral(self, alpha: float) -> float:
        """``int_{R^2 minus window} |y|^-alpha dy``."""
        return _outside_integral(self.width / 2.0, self.height / 2.0, float(alpha))

    def far_field_interference(self, cfg: NetworkConfig) -> float:
        if not self.far_field:
            return 0.0
        return cfg.lambda_b * cfg.power * cfg.k_users * self.outside_path_integral(cfg.alpha)


@lru_cache(maxsize=256)
def _outside_integral(a: float, b: float, alpha: float) -> float:
    # polar form: each ray leaves the rectangle at rho(theta)
    corner = math.atan2(b, a)
    k = 1.0 / (alpha - 2.0)
    side = integrate.quad(lambda t: k * (a / math.cos(t)) ** (2 - alpha), 0.0, corner,
                          epsabs=0, epsrel=1e-12)[0]
    top = integrate.quad(lambda t: k * (b / math.sin(t)) ** (2 - alpha), corner, math.pi / 2,
                         epsabs=0, epsrel=1e-12)[0]
    return 4.0 * (side + top)


@dataclass(frozen=True)
class Realization:
    """One sampled network seen from the origin.

    Per-BS arrays are aligned with ``positions``. ``desired`` is the fading
    power the BS would deliver as server, ``interference_gain`` the fading
    power it delivers as an interferer, and the distortion arrays are the
    powers (already scaled by ``p * delta**2``) if it were serving.
    """

    positions: np.ndarray
    desired: np.ndarray
    interference_gain: np.ndarray
    distortion_tx: np.ndarray
    distortion_rx: np.ndarray

    def __len__(self):
        return len(self.positions)

    def distances(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])


@dataclass(frozen=True)
class CoverageEstimate:
    p_hat: float
    trials: int
    ci_halfwidth: float
    seed: int


def ci_halfwidth(p_hat, trials):
    return Z95 * np.sqrt(p_hat * (1.0 - p_hat) / trials)


def sample_ppp(lambda_b: float, window: Window, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP on the window; returns an ``(N, 2)`` array of km."""
    if lambda_b < 0:
        raise ValueError("lambda_b must be non-negative")
    n = rng.poisson(lambda_b * window.area) if lambda_b > 0 else 0
    return _uniform_points(n, window, rng)


def _uniform_points(n, window, rng):
    x = rng.uniform(-window.width / 2.0, window.width / 2.0, n)
    y = rng.uniform(-window.height / 2.0, window.height / 2.0, n)
    return np.column_stack([x, y])


def _draw_links(cfg: NetworkConfig, n: int, rng: np.random.Generator, shared_channel: bool):
    """Fading and distortion draws for ``n`` BSs.

    With ``shared_channel`` each BS carries one channel norm ``||h||^2 ~ G(M)``;
    as server it delivers ``norm * Beta(Delta, K-1)`` (ZF projection) and as
    interferer ``norm * Beta(K, M-K)`` (projection on K unit streams). Both
    marginals are the G(Delta, 1) and G(K, 1) laws of the SIR model.
    Otherwise the two roles draw independent Gammas.
    """
    m, k = cfg.m_antennas, cfg.k_users
    d = derived_delta(cfg)
    if shared_channel:
        norm = sample_gamma(GammaParams(m), rng, n)
        desired = norm * sample_beta(d, k - 1, rng, n)
        gain = norm * sample_beta(k, m - k, rng, n)
    else:
        norm = None
        desired = sample_gamma(GammaParams(d), rng, n)
        gain = sample_gamma(GammaParams(k), rng, n)
    # always drawn so that runs differing only in delta share random numbers
    g_tx = sample_gamma(GammaParams(m), rng, n)
    g_rx = sample_gamma(GammaParams(m), rng, n)
    if cfg.correlated_distortion:
        if norm is None:
            raise ValueError("correlated distortion needs the shared-channel link model")
        g_tx = g_rx = norm
    scale_t = cfg.power * cfg.delta_t ** 2
    scale_r = cfg.power * cfg.delta_r ** 2
    return desired, gain, scale_t * g_tx, scale_r * g_rx


def sample_realization(cfg: NetworkConfig, window: Window, rng: np.random.Generator,
                       shared_channel: bool = True) -> Realization:
    pos = sample_ppp(cfg.lambda_b, window, rng)
    desired, gain, d_tx, d_rx = _draw_links(cfg, len(pos), rng, shared_channel)
    return Realization(pos, desired, gain, d_tx, d_rx)


def realization_sir(real: Realization, cfg: NetworkConfig, window: Window) -> np.ndarray:
    """SIR offered by each BS of ``real`` when it serves the origin."""
    if len(real) == 0:
        return np.empty(0)
    pg = real.distances() ** (-cfg.alpha)
    contrib = cfg.power * real.interference_gain * pg
    total = contrib.sum() + window.far_field_interference(cfg)
    interference = np.maximum(total - contrib, 0.0)
    return sir_array(real.desired, pg, real.distortion_tx + real.distortion_rx,
                     interference, cfg)


def trial_coverage(cfg: NetworkConfig, window: Window, rng: np.random.Generator,
                   shared_channel: bool = True) -> tuple[bool, float]:
    """One trial: ``(covered, max SIR)``. An empty network is never covered."""
    real = sample_realization(cfg, window, rng, shared_channel)
    if len(real) == 0:
        return False, 0.0
    sir = realization_sir(real, cfg, window)
    best = float(sir.max())
    return best > cfg.target_sir, best


def serving_terms(real: Realization, i: int, cfg: NetworkConfig, window: Window) -> SirTerms:
    """The :class:`SirTerms` of BS ``i`` as server, for single-link inspection."""
    r = real.distances()
    contrib = cfg.power * real.interference_gain * r ** (-cfg.alpha)
    interference = contrib.sum() - contrib[i] + window.far_field_interference(cfg)
    return SirTerms(desired=float(real.desired[i]), serving_distance=float(r[i]),
                    distortion_tx=float(real.distortion_tx[i]),
                    distortion_rx=float(real.distortion_rx[i]),
                    interference=max(float(interference), 0.0))


def _block_max_sir(cfg: NetworkConfig, window: Window, n: int, rng: np.random.Generator,
                   shared_channel: bool) -> np.ndarray:
    """Max SIR of ``n`` independent trials, vectorised over all their BSs."""
    counts = rng.poisson(cfg.lambda_b * window.area, n)
    total = int(counts.sum())
    pos = _uniform_points(total, window, rng)
    desired, gain, d_tx, d_rx = _draw_links(cfg, total, rng, shared_channel)

    best = np.zeros(n)
    if total == 0:
        return best
    pg = np.hypot(pos[:, 0], pos[:, 1]) ** (-cfg.alpha)
    contrib = cfg.power * gain * pg
    trial = np.repeat(np.arange(n), counts)
    per_trial = np.bincount(trial, weights=contrib, minlength=n)
    per_trial += window.far_field_interference(cfg)
    interference = np.maximum(per_trial[trial] - contrib, 0.0)
    sir = sir_array(desired, pg, d_tx + d_rx, interference, cfg)

    nonempty = counts > 0
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[nonempty]
    best[nonempty] = np.maximum.reduceat(sir, starts)
    return best


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _block_sizes(trials: int) -> list[int]:
    full, rest = divmod(trials, BLOCK_TRIALS)
    return [BLOCK_TRIALS] * full + ([rest] if rest else [])


def _run_block(block: int, size: int, cfg, window, seed, option, sampler):
    return sampler(cfg, window, size, _block_rng(seed, block), option)


def run_blocks(sampler, cfg, window: Window, trials: int, seed: int, workers: int = 1,
               option=True) -> np.ndarray:
    """Evaluate ``sampler(cfg, window, n, rng, option)`` on every trial block.

    Blocks are concatenated in block order, whatever the worker count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = _block_sizes(trials)
    job = partial(_run_block, cfg=cfg, window=window, seed=seed, option=option, sampler=sampler)
    if workers > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes)), sizes))
    else:
        parts = [job(b, s) for b, s in enumerate(sizes)]
    return np.concatenate(parts)


def max_sir_samples(cfg: NetworkConfig, window: Window | None = None, trials: int = 100_000,
                    seed: int = DEFAULT_SEED, workers: int = 1,
                    shared_channel: bool = True) -> np.ndarray:
    """Per-trial maximum SIR; thresholding it gives coverage at any target."""
    window = window or Window()
    window.check_density(cfg.lambda_b)
    return run_blocks(_block_max_sir, cfg, window, trials, seed, workers, shared_channel)


def coverage_from_samples(max_sir: np.ndarray, targets) -> tuple[np.ndarray, np.ndarray]:
    """``(p_hat, ci_halfwidth)`` for each target SIR (linear)."""
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    p = (max_sir[None, :] > targets[:, None]).mean(axis=1)
    return p, ci_halfwidth(p, max_sir.size)


class Welford:
    """Streaming mean/variance (Welford's update, batched via Chan et al.)."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self._m2 = 0.0

    def update(self, x):
        x = np.asarray(x, dtype=float)
        nb = x.size
        if nb == 0:
            return
        mb = float(x.mean())
        m2b = float(((x - mb) ** 2).sum())
        n = self.n + nb
        d = mb - self.mean
        self.mean += d * nb / n
        self._m2 += m2b + d * d * self.n * nb / n
        self.n = n

    @property
    def variance(self) -> float:
        return self._m2 / (self.n - 1) if self.n > 1 else 0.0


def estimate_coverage(cfg: NetworkConfig, window: Window | None = None, trials: int = 100_000,
                      seed: int = DEFAULT_SEED, workers: int = 1,
                      target_ci: float | None = None,
                      shared_channel: bool = True) -> CoverageEstimate:
    """Coverage probability at ``cfg.target_sir``.

    With ``target_ci`` the blocks are consumed in order and sampling stops
    once the 95% half-width drops below it (``trials`` is then a cap).
    """
    window = window or Window()
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if target_ci is None:
        samples = max_sir_samples(cfg, window, trials, seed, workers, shared_channel)
        p = float(np.mean(samples > cfg.target_sir))
        return CoverageEstimate(p, trials, float(ci_halfwidth(p, trials)), seed)

    window.check_density(cfg.lambda_b)
    acc = Welford()
    for b, size in enumerate(_block_sizes(trials)):
        hits = _block_max_sir(cfg, window, size, _block_rng(seed, b), shared_channel) > cfg.target_sir
        acc.update(hits)
        if ci_halfwidth(acc.mean, acc.n) <= target_ci and acc.n >= BLOCK_TRIALS:
            break
    p = min(max(acc.mean, 0.0), 1.0)
    return CoverageEstimate(p, acc.n, float(ci_halfwidth(p, acc.n)), seed)


def single_link_sir(terms: SirTerms, cfg: NetworkConfig) -> float:
    """:func:`sir_from_terms` with the degenerate convention applied (covered)."""
    try:
        return sir_from_terms(terms, cfg)
    except DegenerateSIRError:
        return math.inf
