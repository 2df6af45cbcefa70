"""Channel-level ground truth: complex Gaussian channels and ZF precoding.

Row ``k`` of a channel matrix is the channel vector ``h_k`` of user ``k``
(length M). The precoder is ``W = Hb^H (Hb Hb^H)^-1`` with ``Hb`` the
row-normalised ``[h_1, ..., h_K]^H``, followed by unit-norm columns, so that
``h_j^H w_k = 0`` for ``j != k``.

All functions accept stacked inputs with leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import NetworkConfig, derived_delta, sir_array
from .montecarlo import DEFAULT_SEED, Window, _uniform_points, ci_halfwidth, run_blocks

COND_LIMIT = 1e12


class SingularChannelError(np.linalg.LinAlgError):
    """The normalised Gram matrix ``Hb Hb^H`` is numerically singular."""


def random_channels(k: int, m: int, rng: np.random.Generator, batch: tuple = ()) -> np.ndarray:
    """i.i.d. CN(0, 1) entries, shape ``batch + (k, m)``."""
    shape = tuple(batch) + (k, m)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _herm(a):
    return np.conj(np.swapaxes(a, -1, -2))


def zf_precoder(h: np.ndarray) -> np.ndarray:
    """Unit-column ZF precoder (``M x K``) for channel rows ``h`` (``K x M``)."""
    h = np.asarray(h, dtype=complex)
    if h.ndim < 2:
        raise ValueError("channel matrix must be at least 2-D (K x M)")
    k, m = h.shape[-2:]
    if k > m:
        raise ValueError(f"need K <= M, got K={k}, M={m}")
    norms = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise SingularChannelError("zero channel row")
    hb = np.conj(h / norms)                       # rows are h_k^H / ||h_k||
    # Hb^H = QR gives Hb^H (Hb Hb^H)^-1 = Q R^-H without forming the Gram matrix
    q, r = np.linalg.qr(_herm(hb))
    if np.any(np.linalg.cond(r) ** 2 > COND_LIMIT):
        raise SingularChannelError("Hb Hb^H condition number exceeds 1e12")
    w = q @ _herm(np.linalg.inv(r))
    return w / np.linalg.norm(w, axis=-2, keepdims=True)


def desired_power(h: np.ndarray, w: np.ndarray, k: int) -> np.ndarray:
    """``|h_k^H w_k|^2``, distributed G(M - K + 1, 1) for i.i.d. Rayleigh rows."""
    hk = np.asarray(h)[..., k, :]
    wk = np.asarray(w)[..., :, k]
    return np.abs(np.sum(np.conj(hk) * wk, axis=-1)) ** 2


def interference_power(g: np.ndarray, w_other: np.ndarray) -> np.ndarray:
    """``||g^H W||^2``: power from a cell precoding with ``w_other``."""
    g = np.asarray(g)
    proj = np.einsum("...m,...mk->...k", np.conj(g), np.asarray(w_other))
    return np.sum(np.abs(proj) ** 2, axis=-1)


def distortion_powers(h: np.ndarray, cfg: NetworkConfig, k: int):
    """``(p dt^2 ||h_k||^2, p dr^2 ||h_k||^2)``."""
    norm2 = np.sum(np.abs(np.asarray(h)[..., k, :]) ** 2, axis=-1)
    return (cfg.power * cfg.delta_t ** 2 * norm2, cfg.power * cfg.delta_r ** 2 * norm2)


def orthonormal_precoder(rng: np.random.Generator, m: int, k: int, batch=()) -> np.ndarray:
    """Haar-random ``M x K`` matrix with orthonormal columns."""
    q, r = np.linalg.qr(_herm(random_channels(k, m, rng, batch)))
    # fix column phases so the distribution is Haar
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


def zf_draws(m: int, k: int, n: int, rng: np.random.Generator,
             interferer: str = "zf") -> tuple[np.ndarray, np.ndarray]:
    """``n`` samples of (desired power of user 0, power from an interfering cell).

    The interfering cell precodes for its own K users with an independent ZF
    precoder (``interferer="zf"``) or with orthonormal columns
    (``"orthonormal"``).
    """
    h = random_channels(k, m, rng, (n,))
    des = desired_power(h, zf_precoder(h), 0)
    g = random_channels(1, m, rng, (n,))[:, 0, :]
    w_other = _interferer_precoder(interferer, m, k, n, rng)
    return des, interference_power(g, w_other)


def _interferer_precoder(kind, m, k, n, rng):
    if kind == "zf":
        return zf_precoder(random_channels(k, m, rng, (n,)))
    if kind == "orthonormal":
        return orthonormal_precoder(rng, m, k, (n,))
    raise ValueError(f"unknown interferer precoder {kind!r}")


@dataclass(frozen=True)
class KSResult:
    m: int
    k: int
    quantity: str
    reference: str
    n: int
    statistic: float
    pvalue: float
    alpha: float = 0.01

    @property
    def passed(self) -> bool:
        return self.pvalue > self.alpha

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"M={self.m} K={self.k} {self.quantity:<26s} vs {self.reference:<9s} "
                f"n={self.n} D={self.statistic:.5f} p={self.pvalue:.3g} {verdict}")


STANDARD_PAIRS = ((1, 1), (6, 1), (6, 6), (4, 2))


def ks_suite(pairs=STANDARD_PAIRS, n: int = 100_000, seed: int = DEFAULT_SEED,
             alpha: float = 0.01, interferers=("zf",)) -> list[KSResult]:
    """Two-sided KS tests of the channel-level powers against their Gamma laws."""
    out = []
    for i, (m, k) in enumerate(pairs):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        h = random_channels(k, m, rng, (n,))
        des = desired_power(h, zf_precoder(h), 0)
        d = derived_delta(NetworkConfig(1.0, 3.0, m, k))
        res = stats.kstest(des, stats.gamma(d).cdf)
        out.append(KSResult(m, k, "desired_power", f"G({d},1)", n, res.statistic, res.pvalue, alpha))
        g = random_channels(1, m, rng, (n,))[:, 0, :]
        for kind in interferers:
            ip = interference_power(g, _interferer_precoder(kind, m, k, n, rng))
            res = stats.kstest(ip, stats.gamma(k).cdf)
            out.append(KSResult(m, k, f"interference_power[{kind}]", f"G({k},1)", n,
                                res.statistic, res.pvalue, alpha))
    return out


def _block_max_sir_channel(cfg: NetworkConfig, window: Window, n: int,
                           rng: np.random.Generator, interferer: str) -> np.ndarray:
    """Max SIR of ``n`` trials with explicit channels at every BS.

    For each BS: the typical user's channel ``h`` (M), the channels of the
    K-1 co-scheduled users of that BS, and the precoder it uses for its own
    K users when it is not serving the typical user. Distortions follow the
    channel norm of the serving link.
    """
    m, k = cfg.m_antennas, cfg.k_users
    counts = rng.poisson(cfg.lambda_b * window.area, n)
    total = int(counts.sum())
    pos = _uniform_points(total, window, rng)
    best = np.zeros(n)
    if total == 0:
        return best
    h = random_channels(1, m, rng, (total,))
    others = random_channels(k - 1, m, rng, (total,)) if k > 1 else np.empty((total, 0, m))
    hs = np.concatenate([h, others], axis=1)
    des = desired_power(hs, zf_precoder(hs), 0)
    gain = interference_power(h[:, 0, :], _interferer_precoder(interferer, m, k, total, rng))
    d_tx, d_rx = distortion_powers(hs, cfg, 0)

    pg = np.hypot(pos[:, 0], pos[:, 1]) ** (-cfg.alpha)
    contrib = cfg.power * gain * pg
    trial = np.repeat(np.arange(n), counts)
    per_trial = np.bincount(trial, weights=contrib, minlength=n) + window.far_field_interference(cfg)
    interference = np.maximum(per_trial[trial] - contrib, 0.0)
    sir = sir_array(des, pg, d_tx + d_rx, interference, cfg)
    nonempty = counts > 0
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[nonempty]
    best[nonempty] = np.maximum.reduceat(sir, starts)
    return best


def max_sir_samples_channel(cfg: NetworkConfig, window: Window | None = None,
                            trials: int = 10_000, seed: int = DEFAULT_SEED, workers: int = 1,
                            interferer: str = "zf") -> np.ndarray:
    """Channel-level counterpart of :func:`montecarlo.max_sir_samples`."""
    window = window or Window()
    return run_blocks(_block_max_sir_channel, cfg, window, trials, seed, workers, interferer)


def estimate_coverage_channel(cfg: NetworkConfig, window: Window | None = None,
                              trials: int = 10_000, seed: int = DEFAULT_SEED, workers: int = 1,
                              interferer: str = "zf"):
    samples = max_sir_samples_channel(cfg, window, trials, seed, workers, interferer)
    p = float(np.mean(samples > cfg.target_sir))
    return p, float(ci_halfwidth(p, trials))


