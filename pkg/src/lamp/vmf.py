"""von Mises-Fisher likelihood, Gamma prior on the concentration, and the
training loss with analytic gradients.

The density on the unit sphere S^{d-1} is

    p(z | mu, kappa) = C_d(kappa) exp(kappa mu.z),
    C_d(kappa) = kappa^{d/2-1} / ((2 pi)^{d/2} I_{d/2-1}(kappa)),

with I_nu the modified Bessel function of the first kind. All Bessel work
happens through exponentially-scaled values (scipy's `ive`) so kappa up to
1e4 stays finite; the small-argument regime where `ive` underflows falls
back to the leading series terms in log space.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log, pi

import numpy as np
from scipy.special import ive

KAPPA_MIN = 1e-3
KAPPA_MAX = 1e4

# below this, treat the density as uniform on the sphere
_KAPPA_UNIFORM = 1e-8
# ive underflow guard for the series fallback
_IVE_TINY = 1e-290


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(alpha, beta) prior over the vMF concentration."""

    alpha: float = 2.0
    beta: float = 0.5

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive finite, got {self.alpha}")
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError(f"beta must be positive finite, got {self.beta}")


@dataclass(frozen=True)
class VmfParams:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if abs(np.linalg.norm(mu) - 1.0) > 1e-6:
            raise ValueError("mu must be unit norm")
        if not (0.0 <= self.kappa <= KAPPA_MAX):
            raise ValueError(f"kappa {self.kappa} outside [0, {KAPPA_MAX}]")
        object.__setattr__(self, "mu", mu)


def _log_ive_series(nu: float, kappa: np.ndarray) -> np.ndarray:
    """log(e^-k I_nu(k)) from the two leading series terms; small kappa only."""
    k = np.asarray(kappa, dtype=float)
    return (
        nu * np.log(k / 2.0)
        - lgamma(nu + 1.0)
        + np.log1p(k * k / (4.0 * (nu + 1.0)))
        - k
    )


def log_bessel_i(nu: float, kappa) -> np.ndarray:
    """ln I_nu(kappa), elementwise, stable over kappa in (0, 1e4]."""
    k = np.asarray(kappa, dtype=float)
    scaled = ive(nu, k)
    out = np.where(
        scaled > _IVE_TINY,
        np.log(np.maximum(scaled, _IVE_TINY)) + k,
        _log_ive_series(nu, np.maximum(k, 1e-300)) + k,
    )
    return out


def bessel_ratio(d: int, kappa) -> np.ndarray:
    """A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa), elementwise.

    This is -d/dk ln C_d(kappa); it lives in (0, 1) and increases in kappa.
    """
    nu = d / 2.0 - 1.0
    k = np.asarray(kappa, dtype=float)
    lo = ive(nu, k)
    hi = ive(nu + 1.0, k)
    # leading-order series ratio when the scaled values underflow
    small = lo <= _IVE_TINY
    safe_lo = np.where(small, 1.0, lo)
    ratio = np.where(small, k / d, hi / safe_lo)
    return ratio


def log_norm_const(d: int, kappa) -> np.ndarray:
    """ln C_d(kappa); continuous at kappa -> 0 (uniform sphere density)."""
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    k = np.asarray(kappa, dtype=float)
    if np.any(k < 0) or np.any(k > KAPPA_MAX):
        raise ValueError(f"kappa outside [0, {KAPPA_MAX}]")
    nu = d / 2.0 - 1.0
    uniform = lgamma(d / 2.0) - log(2.0) - (d / 2.0) * log(pi)
    ksafe = np.maximum(k, _KAPPA_UNIFORM)
    general = nu * np.log(ksafe) - (d / 2.0) * log(2.0 * pi) - log_bessel_i(nu, ksafe)
    out = np.where(k < _KAPPA_UNIFORM, uniform, general)
    return out if out.shape else float(out)


def vmf_log_pdf(z, p: VmfParams) -> float:
    """ln p(z | mu, kappa) for a unit vector z."""
    z = np.asarray(z, dtype=float)
    if z.shape != p.mu.shape:
        raise ValueError(f"dimension mismatch: {z.shape} vs {p.mu.shape}")
    d = z.shape[0]
    return float(log_norm_const(d, p.kappa) + p.kappa * (p.mu @ z))


def gamma_neg_log_prior(kappa: float, prior: GammaPrior) -> float:
    """-ln p(kappa) under the Gamma prior, constants included."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    a, b = prior.alpha, prior.beta
    return -a * log(b) + lgamma(a) - (a - 1.0) * log(kappa) + b * kappa


def vmf_loss(z_obs, p: VmfParams, prior: GammaPrior):
    """Negative log-posterior for one (z_obs, mu, kappa) triple.

    Returns (loss, d_mu, d_kappa). d_mu is the raw ambient gradient (the
    caller projects to the sphere tangent when mu is itself constrained);
    d_kappa uses the Bessel ratio for the normalizer derivative.
    """
    z_obs = np.asarray(z_obs, dtype=float)
    if z_obs.shape != p.mu.shape:
        raise ValueError(f"dimension mismatch: {z_obs.shape} vs {p.mu.shape}")
    d = z_obs.shape[0]
    kappa = float(np.clip(p.kappa, KAPPA_MIN, KAPPA_MAX))
    dot = float(p.mu @ z_obs)
    loss = -(float(log_norm_const(d, kappa)) + kappa * dot) + gamma_neg_log_prior(
        kappa, prior
    )
    d_mu = -kappa * z_obs
    d_kappa = float(bessel_ratio(d, kappa)) - dot - (prior.alpha - 1.0) / kappa + prior.beta
    return loss, d_mu, d_kappa


def vmf_loss_batch(Z_obs: np.ndarray, Mu: np.ndarray, kappa: np.ndarray, prior: GammaPrior):
    """Vectorized loss + gradients over a batch (rows of Z_obs and Mu).

    Returns (losses, dMu, dKappa) with shapes (n,), (n, d), (n,).
    """
    if Z_obs.shape != Mu.shape:
        raise ValueError(f"dimension mismatch: {Z_obs.shape} vs {Mu.shape}")
    d = Z_obs.shape[1]
    k = np.clip(kappa, KAPPA_MIN, KAPPA_MAX)
    dots = np.einsum("ij,ij->i", Mu, Z_obs)
    a, b = prior.alpha, prior.beta
    prior_term = -a * log(b) + lgamma(a) - (a - 1.0) * np.log(k) + b * k
    losses = -(log_norm_const(d, k) + k * dots) + prior_term
    dMu = -k[:, None] * Z_obs
    dKappa = bessel_ratio(d, k) - dots - (a - 1.0) / k + b
    return losses, dMu, dKappa
