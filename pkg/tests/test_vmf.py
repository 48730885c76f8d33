"""Directional-statistics layer: normalization constants, Bessel terms,
prior, and the loss gradients.

Oracle values were computed with mpmath (50 digits) and with closed forms
that exist for d=3; both are recomputed here rather than hard-coded so the
assertions stay self-documenting.
"""

from math import lgamma, log, pi, sinh

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamp.geometry import normalize
from lamp.vmf import (
    KAPPA_MAX,
    KAPPA_MIN,
    GammaPrior,
    VmfParams,
    bessel_ratio,
    gamma_neg_log_prior,
    log_bessel_i,
    log_norm_const,
    vmf_log_pdf,
    vmf_loss,
    vmf_loss_batch,
)

mpmath.mp.dps = 50


def mp_log_norm_const(d, kappa):
    """[DERIVED] mpmath oracle for ln C_d(kappa)."""
    k = mpmath.mpf(kappa)
    nu = mpmath.mpf(d) / 2 - 1
    return float(
        nu * mpmath.log(k) - (mpmath.mpf(d) / 2) * mpmath.log(2 * mpmath.pi)
        - mpmath.log(mpmath.besseli(nu, k))
    )


def test_log_bessel_i_against_mpmath():
    for nu in (0.5, 3.0, 15.0):
        for k in (1e-6, 1e-3, 0.1, 1.0, 10.0, 100.0, 1e4):
            oracle = float(mpmath.log(mpmath.besseli(nu, k)))
            assert np.isclose(float(log_bessel_i(nu, k)), oracle, rtol=1e-10, atol=1e-10), (nu, k)


def test_bessel_ratio_against_mpmath():
    for d in (3, 8, 32):
        nu = d / 2 - 1
        for k in (1e-3, 0.5, 5.0, 50.0, 1e4):
            oracle = float(mpmath.besseli(nu + 1, k) / mpmath.besseli(nu, k))
            assert np.isclose(float(bessel_ratio(d, k)), oracle, rtol=1e-9), (d, k)


def test_bessel_ratio_small_kappa_series():
    # [DERIVED] A_d(kappa) -> kappa/d as kappa -> 0
    for d in (3, 8, 32):
        k = 1e-12
        assert np.isclose(float(bessel_ratio(d, k)), k / d, rtol=1e-6)


def test_bessel_ratio_in_unit_interval_and_monotone():
    ks = np.logspace(-3, 4, 200)
    r = bessel_ratio(8, ks)
    assert np.all(r > 0) and np.all(r < 1)
    assert np.all(np.diff(r) > 0)


def test_log_norm_const_d3_closed_form():
    # [PAPER]-adjacent closed form: C_3(k) = k / (4 pi sinh k), checked to 1e-8
    for k in (0.1, 1.0, 2.0, 10.0, 100.0):
        closed = log(k) - log(4.0 * pi * sinh(k)) if k < 500 else log(k) - log(2.0 * pi) - k
        assert abs(float(log_norm_const(3, k)) - closed) < 1e-8, k


def test_log_norm_const_uniform_limit():
    # kappa -> 0 must match the uniform density on S^{d-1} to 1e-9
    for d in (3, 8, 32):
        uniform = lgamma(d / 2.0) - log(2.0) - (d / 2.0) * log(pi)
        assert abs(float(log_norm_const(d, 0.0)) - uniform) < 1e-9
        assert abs(float(log_norm_const(d, 1e-9)) - uniform) < 1e-9


def test_log_norm_const_matches_mpmath_generic():
    for d in (3, 8, 32):
        for k in (1e-3, 0.7, 13.0, 1e3, 1e4):
            assert np.isclose(
                float(log_norm_const(d, k)), mp_log_norm_const(d, k), rtol=1e-9, atol=1e-9
            ), (d, k)


def test_log_norm_const_rejects_bad_inputs():
    with pytest.raises(ValueError):
        log_norm_const(1, 1.0)
    with pytest.raises(ValueError):
        log_norm_const(3, -0.5)
    with pytest.raises(ValueError):
        log_norm_const(3, KAPPA_MAX * 2)


def test_monte_carlo_unit_mass_s2():
    # [DERIVED] the d=3 density integrates to 1 over S^2 within 1%
    rng = np.random.default_rng(42)
    n = 200_000
    z = rng.standard_normal((n, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    mu = np.array([0.0, 0.0, 1.0])
    area = 4.0 * pi
    for kappa in (0.5, 2.0, 10.0):
        log_pdf = log_norm_const(3, kappa) + kappa * (z @ mu)
        mass = float(np.mean(np.exp(log_pdf))) * area
        assert abs(mass - 1.0) < 0.01, (kappa, mass)


def test_vmf_log_pdf_peak_at_mu():
    mu = normalize(np.ones(8))
    p = VmfParams(mu=mu, kappa=5.0)
    rng = np.random.default_rng(3)
    peak = vmf_log_pdf(mu, p)
    for _ in range(20):
        other = normalize(rng.standard_normal(8))
        assert vmf_log_pdf(other, p) <= peak


def test_vmf_params_validation():
    with pytest.raises(ValueError):
        VmfParams(mu=np.ones(4), kappa=1.0)  # not unit norm
    with pytest.raises(ValueError):
        VmfParams(mu=normalize(np.ones(4)), kappa=-1.0)


def test_gamma_prior_validation():
    with pytest.raises(ValueError):
        GammaPrior(alpha=0.0)
    with pytest.raises(ValueError):
        GammaPrior(beta=-1.0)


def test_gamma_neg_log_prior_value():
    # [DERIVED] alpha=2, beta=0.5: -ln p(k) = -2 ln 0.5 - ln k + 0.5 k
    prior = GammaPrior(alpha=2.0, beta=0.5)
    for k in (0.5, 1.0, 7.0):
        expected = -2.0 * log(0.5) + lgamma(2.0) - log(k) + 0.5 * k
        assert np.isclose(gamma_neg_log_prior(k, prior), expected)


def test_gamma_neg_log_prior_rejects_nonpositive():
    with pytest.raises(ValueError):
        gamma_neg_log_prior(0.0, GammaPrior())


def _fd_check(d, kappa, seed, rel_tol=1e-4):
    """Central finite differences on the loss wrt mu (ambient) and kappa."""
    rng = np.random.default_rng(seed)
    mu = normalize(rng.standard_normal(d))
    z = normalize(rng.standard_normal(d))
    prior = GammaPrior()
    p = VmfParams(mu=mu, kappa=kappa)
    loss, d_mu, d_kappa = vmf_loss(z, p, prior)

    eps = 1e-6
    # ambient mu gradient: perturb one coordinate of the (unconstrained) mu.
    # The loss treats mu as a free vector; the sphere projection lives in
    # the field head, not here.
    def loss_at(mu_vec, k):
        dot = float(np.asarray(mu_vec) @ z)
        return -(float(log_norm_const(d, k)) + k * dot) + gamma_neg_log_prior(k, prior)

    for i in range(min(d, 4)):
        e = np.zeros(d)
        e[i] = eps
        fd = (loss_at(mu + e, kappa) - loss_at(mu - e, kappa)) / (2 * eps)
        denom = max(abs(fd), 1e-8)
        assert abs(fd - d_mu[i]) / denom < rel_tol, (d, kappa, i)

    fd_k = (loss_at(mu, kappa + eps) - loss_at(mu, kappa - eps)) / (2 * eps)
    denom = max(abs(fd_k), 1e-6)
    assert abs(fd_k - d_kappa) / denom < 1e-3, (d, kappa)
    assert np.isfinite(loss)


def test_vmf_loss_gradients_finite_difference():
    # >= 100 random cases over d in {3, 8, 32}
    cases = 0
    for d in (3, 8, 32):
        for kappa in (0.01, 0.5, 2.0, 10.0, 100.0, 1000.0):
            for seed in range(6):
                _fd_check(d, kappa, seed * 1000 + d)
                cases += 1
    assert cases >= 100


def test_vmf_loss_batch_matches_scalar():
    rng = np.random.default_rng(11)
    d, n = 16, 40
    Z = rng.standard_normal((n, d))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    Mu = rng.standard_normal((n, d))
    Mu /= np.linalg.norm(Mu, axis=1, keepdims=True)
    kappa = rng.uniform(0.01, 500.0, n)
    prior = GammaPrior()
    losses, dMu, dKappa = vmf_loss_batch(Z, Mu, kappa, prior)
    for i in range(n):
        loss, d_mu, d_kappa = vmf_loss(Z[i], VmfParams(mu=Mu[i], kappa=kappa[i]), prior)
        assert np.isclose(losses[i], loss)
        assert np.allclose(dMu[i], d_mu)
        assert np.isclose(dKappa[i], d_kappa)


def test_vmf_loss_clips_kappa():
    mu = normalize(np.ones(8))
    z = normalize(np.arange(1.0, 9.0))
    prior = GammaPrior()
    lo, _, _ = vmf_loss(z, VmfParams(mu=mu, kappa=KAPPA_MIN / 10), prior)
    lo_clip, _, _ = vmf_loss(z, VmfParams(mu=mu, kappa=KAPPA_MIN), prior)
    assert np.isclose(lo, lo_clip)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(3, 48),
    st.floats(KAPPA_MIN, KAPPA_MAX),
    st.integers(0, 2**31 - 1),
)
def test_vmf_loss_finite_everywhere(d, kappa, seed):
    rng = np.random.default_rng(seed)
    mu = normalize(rng.standard_normal(d))
    z = normalize(rng.standard_normal(d))
    loss, d_mu, d_kappa = vmf_loss(z, VmfParams(mu=mu, kappa=kappa), GammaPrior())
    assert np.isfinite(loss)
    assert np.all(np.isfinite(d_mu))
    assert np.isfinite(d_kappa)
