"""Synthetic data from a latent-state model, with the ground truth exposed.

Each sample draws a latent state uniformly, then an observed category that
lands inside the latent state's block of categories with probability
`p_assign` (uniform within the block) and otherwise uniformly over all other
categories. Features are Gaussian around latent-specific means; outcomes
follow one of three models of increasing complexity. The returned truth holds
everything an oracle test needs: the exact category-to-latent posterior, the
latent feature means, the outcome coefficients and the per-sample latents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .dataset import CategoryIndex, Dataset

OUTCOME_MODELS = ("linear", "group_linear", "piecewise")

_MAX_COVERAGE_RETRIES = 100


@dataclass(frozen=True)
class SynthConfig:
    n: int
    p: int
    m: int
    k_latent: int
    p_assign: float
    noise_sd: float
    outcome: str
    seed: int

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.m < 1 or self.k_latent < 1:
            raise ValueError("n, p, m and k_latent must all be >= 1")
        if self.m % self.k_latent != 0:
            raise ValueError(f"m={self.m} must be divisible by k_latent={self.k_latent}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.outcome not in OUTCOME_MODELS:
            raise ValueError(f"outcome must be one of {OUTCOME_MODELS}")
        uniform_rate = 1.0 / self.k_latent
        if self.k_latent > 1 and not uniform_rate < self.p_assign <= 1.0:
            raise ValueError(f"p_assign must lie in ({uniform_rate:.4g}, 1], got {self.p_assign}")
        if self.k_latent == 1 and not 0.0 < self.p_assign <= 1.0:
            raise ValueError("p_assign must lie in (0, 1]")

    @property
    def block_size(self) -> int:
        return self.m // self.k_latent


@dataclass(frozen=True)
class SynthTruth:
    phi: np.ndarray                 # (k, m) posterior P(L | G), columns sum to 1
    b_means: np.ndarray             # (k, p) latent feature means
    cov_scales: np.ndarray          # (k,) isotropic covariance factors
    alpha: np.ndarray               # intercepts: length k (linear) or 1 (others)
    beta_shared: np.ndarray | None
    beta_group: np.ndarray | None
    beta_plus: np.ndarray | None
    beta_minus: np.ndarray | None
    medians: np.ndarray | None
    latents: np.ndarray             # (n,) latent draw behind each sample
    seed: int

    def to_jsonable(self) -> dict:
        out = {
            "phi": self.phi.tolist(),
            "b_means": self.b_means.tolist(),
            "cov_scales": self.cov_scales.tolist(),
            "alpha": self.alpha.tolist(),
            "seed": self.seed,
        }
        for name in ("beta_shared", "beta_group", "beta_plus", "beta_minus", "medians"):
            val = getattr(self, name)
            out[name] = None if val is None else val.tolist()
        return out


def category_labels(m: int) -> tuple[str, ...]:
    # zero-padded so lexicographic label order matches generation order
    return tuple(f"g{i:04d}" for i in range(m))


def true_posterior(cfg: SynthConfig) -> np.ndarray:
    """Closed-form P(L = l | G = g) implied by the assignment mechanism."""
    k, m, s = cfg.k_latent, cfg.m, cfg.block_size
    if k == 1:
        return np.ones((1, m))
    in_prob = cfg.p_assign / s
    out_prob = (1.0 - cfg.p_assign) / (m - s)
    phi = np.full((k, m), out_prob)
    for g in range(m):
        phi[g // s, g] = in_prob
    return phi / phi.sum(axis=0)


def _draw_coefficients(cfg: SynthConfig, rng: np.random.Generator):
    k, p = cfg.k_latent, cfg.p
    for _ in range(_MAX_COVERAGE_RETRIES):
        b = rng.standard_normal((k, p))
        if np.linalg.matrix_rank(b) == min(k, p) and np.linalg.cond(b) < 1e3:
            break
    else:
        raise RuntimeError("could not draw a well-conditioned latent-means matrix")
    cov_scales = rng.uniform(0.5, 1.5, size=k)

    alpha = beta_shared = beta_group = beta_plus = beta_minus = None
    if cfg.outcome == "linear":
        alpha = rng.standard_normal(k)
        beta_shared = rng.standard_normal(p)
    elif cfg.outcome == "group_linear":
        alpha = rng.standard_normal(1)
        beta_group = rng.standard_normal((k, p))
    else:
        alpha = rng.standard_normal(1)
        beta_plus = rng.standard_normal(p)
        beta_minus = rng.standard_normal(p)
    return b, cov_scales, alpha, beta_shared, beta_group, beta_plus, beta_minus


def _mixture_medians(b_means: np.ndarray, cov_scales: np.ndarray) -> np.ndarray:
    """Population median of each feature's equal-weight Gaussian mixture."""
    k, p = b_means.shape
    sds = np.sqrt(cov_scales)
    medians = np.empty(p)
    for j in range(p):
        mus = b_means[:, j]

        def cdf(t):
            return norm.cdf((t - mus) / sds).mean() - 0.5

        lo = mus.min() - 10.0 * sds.max()
        hi = mus.max() + 10.0 * sds.max()
        medians[j] = brentq(cdf, lo, hi, xtol=1e-12)
    return medians


def _draw_assignments(cfg: SynthConfig, rng: np.random.Generator):
    """Latents and categories for all samples, retrying until every category shows up."""
    k, m, s, n = cfg.k_latent, cfg.m, cfg.block_size, cfg.n
    if n < m:
        raise ValueError(f"n={n} cannot cover all m={m} categories")
    for _ in range(_MAX_COVERAGE_RETRIES):
        latents = rng.integers(0, k, size=n)
        block_start = latents * s
        within = block_start + rng.integers(0, s, size=n)
        if m == s:
            cats = within
        else:
            off = rng.integers(0, m - s, size=n)
            outside = np.where(off >= block_start, off + s, off)
            in_block = rng.random(n) < cfg.p_assign
            cats = np.where(in_block, within, outside)
        if (np.bincount(cats, minlength=m) > 0).all():
            return latents, cats
    raise RuntimeError(f"some categories stayed empty after {_MAX_COVERAGE_RETRIES} draws; "
                       "increase n or reduce m")


def outcome_mean(x_row: np.ndarray, latent_id: int, truth: SynthTruth, cfg: SynthConfig) -> float:
    """Noise-free outcome for one sample."""
    x_row = np.asarray(x_row, dtype=np.float64)
    if cfg.outcome == "linear":
        return float(truth.alpha[latent_id] + x_row @ truth.beta_shared)
    if cfg.outcome == "group_linear":
        return float(truth.alpha[0] + x_row @ truth.beta_group[latent_id])
    above = x_row > truth.medians
    return float(truth.alpha[0]
                 + np.where(above, x_row * truth.beta_plus, x_row * truth.beta_minus).sum())


def gen_outcome(x_row, latent_id, truth: SynthTruth, cfg: SynthConfig,
                rng: np.random.Generator | None = None) -> float:
    """One outcome draw; `rng` supplies the Gaussian noise when noise_sd > 0."""
    mean = outcome_mean(x_row, latent_id, truth, cfg)
    if cfg.noise_sd == 0:
        return mean
    if rng is None:
        raise ValueError("an rng is required when noise_sd > 0")
    return mean + rng.normal(0.0, cfg.noise_sd)


def _outcome_means_vec(x: np.ndarray, latents: np.ndarray, truth: SynthTruth,
                       cfg: SynthConfig) -> np.ndarray:
    if cfg.outcome == "linear":
        return truth.alpha[latents] + x @ truth.beta_shared
    if cfg.outcome == "group_linear":
        return truth.alpha[0] + (x * truth.beta_group[latents]).sum(axis=1)
    above = x > truth.medians
    return truth.alpha[0] + np.where(above, x * truth.beta_plus, x * truth.beta_minus).sum(axis=1)


def gen_dataset(cfg: SynthConfig):
    """Draw a full (Dataset, SynthTruth) pair, deterministic in cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    b, cov_scales, alpha, beta_shared, beta_group, beta_plus, beta_minus = \
        _draw_coefficients(cfg, rng)
    medians = _mixture_medians(b, cov_scales) if cfg.outcome == "piecewise" else None

    latents, cats = _draw_assignments(cfg, rng)
    x = b[latents] + np.sqrt(cov_scales[latents])[:, None] * rng.standard_normal((cfg.n, cfg.p))

    truth = SynthTruth(phi=true_posterior(cfg), b_means=b, cov_scales=cov_scales, alpha=alpha,
                       beta_shared=beta_shared, beta_group=beta_group, beta_plus=beta_plus,
                       beta_minus=beta_minus, medians=medians, latents=latents, seed=cfg.seed)
    y = _outcome_means_vec(x, latents, truth, cfg)
    if cfg.noise_sd > 0:
        y = y + rng.normal(0.0, cfg.noise_sd, size=cfg.n)

    labels = CategoryIndex.from_labels(category_labels(cfg.m))
    ds = Dataset(x=x, g=cats, y=y, m=cfg.m, labels=labels,
                 feature_names=tuple(f"x{j + 1}" for j in range(cfg.p)))
    return ds, truth
