"""Posterior predictive expectation and density via the covariate-dependent urn.

Each retained draw contributes a mixture over its occupied clusters (mass
n_j times the cluster's covariate density at the query point) plus a
fresh-cluster term (mass alpha times the prior marginal covariate density).
Per-draw quantities are averaged over draws. The fresh-cluster term of the
expectation vanishes analytically because the coefficient baselines are
centered at zero, but it still appears in the normalizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .distributions import log_normal_pdf, log_student_t_pdf
from .errors import InvalidParameterError
from .model import DrawRecord, Hyperparams, POS_FLOOR, PosteriorDraws
from .rng import RngStream


def marginal_x_prior_logpdf(x, hyper: Hyperparams):
    """Log prior marginal density of a covariate profile under the baseline.

    The normal-inverse-gamma covariate baseline integrates to a product of
    independent location-scale Student-t densities with df nu0, location m0,
    and squared scale s0^2 (1 + n0) / n0.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    scale = np.sqrt(hyper.s0_sq * (1.0 + hyper.n0) / hyper.n0)
    vals = log_student_t_pdf(x, hyper.nu0, hyper.m0, scale).sum(axis=1)
    return float(vals[0]) if vals.shape == (1,) else vals


@dataclass(frozen=True)
class UrnWeights:
    """Allocation masses for one query point under one retained draw."""

    log_new_mass: float
    log_cluster_masses: np.ndarray
    log_normalizer: float

    @property
    def new_cluster_mass(self) -> float:
        return float(np.exp(self.log_new_mass))

    @property
    def per_cluster_mass(self) -> np.ndarray:
        return np.exp(self.log_cluster_masses)

    @property
    def b(self) -> float:
        return float(np.exp(self.log_normalizer))

    def probs(self):
        """(new-cluster probability, per-cluster probabilities); sums to 1."""
        p_new = np.exp(self.log_new_mass - self.log_normalizer)
        p_cl = np.exp(self.log_cluster_masses - self.log_normalizer)
        return float(p_new), p_cl


def _cluster_x_logpdf(X: np.ndarray, draw: DrawRecord) -> np.ndarray:
    """(q, K) log of prod_l N(x_l | m_kl, tau_kl) for each cluster k."""
    if draw.m is None or draw.tau is None:
        raise InvalidParameterError(
            "draws were stored without covariate parameters; refit with "
            "store_covariate_params=True to enable prediction"
        )
    inv_tau = 1.0 / draw.tau
    const = -0.5 * (X.shape[1] * np.log(2.0 * np.pi) + np.sum(np.log(draw.tau), axis=1))
    quad = (
        (X**2) @ inv_tau.T
        - 2.0 * X @ (draw.m * inv_tau).T
        + np.sum(draw.m**2 * inv_tau, axis=1)[None, :]
    )
    return const[None, :] - 0.5 * quad


def urn_allocation_logprobs(x, draw: DrawRecord, hyper: Hyperparams) -> UrnWeights:
    """Urn masses at covariate profile x for one retained draw."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    log_f0 = float(marginal_x_prior_logpdf(x, hyper))
    log_new = np.log(max(draw.alpha, POS_FLOOR)) + log_f0
    log_cl = np.log(draw.sizes.astype(float)) + _cluster_x_logpdf(x, draw)[0]
    log_b = float(logsumexp(np.concatenate([[log_new], log_cl])))
    return UrnWeights(log_new, log_cl, log_b)


def predictive_expectation(x, draws: PosteriorDraws, hyper: Hyperparams):
    """Posterior predictive mean of the response at covariate profile(s) x."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = predictive_expectation_batch(np.atleast_2d(x), draws, hyper)
    return float(out[0]) if single else out


def predictive_expectation_batch(
    X: np.ndarray, draws: PosteriorDraws, hyper: Hyperparams
) -> np.ndarray:
    """Vectorized predictive mean over rows of X."""
    if draws.S < 1:
        raise InvalidParameterError("need at least one retained draw")
    X = np.asarray(X, dtype=float)
    log_f0 = np.atleast_1d(marginal_x_prior_logpdf(X, hyper))
    total = np.zeros(X.shape[0])
    for s in range(draws.S):
        draw = draws.draw(s)
        log_fx = _cluster_x_logpdf(X, draw)  # (q, K)
        log_mass = np.log(draw.sizes.astype(float))[None, :] + log_fx
        log_new = np.log(max(draw.alpha, POS_FLOOR)) + log_f0
        log_b = logsumexp(
            np.concatenate([log_new[:, None], log_mass], axis=1), axis=1
        )
        cluster_mean = draw.mu[None, :] + X @ draw.beta.T
        total += np.sum(np.exp(log_mass - log_b[:, None]) * cluster_mean, axis=1)
    return total / draws.S


def _g0_draws(k: int, p: int, hyper: Hyperparams, draw: DrawRecord, ng_V, rng: RngStream):
    """k fresh (mu, beta) draws from the baseline measure for one retained draw."""
    g = rng.gen
    if hyper.baseline == "hs":
        zeta = np.abs(g.standard_cauchy(k))
        gamma = np.abs(g.standard_cauchy((k, p)))
        beta = np.sqrt(draw.sigma2) * zeta[:, None] * gamma * g.standard_normal((k, p))
        mu = np.sqrt(hyper.nu_mu) * g.standard_normal(k)
    elif hyper.baseline == "ng":
        lam = np.maximum(g.standard_exponential(k), 1e-8)
        gamma_inv2 = np.maximum(g.gamma(2.0, 2.0 * lam / ng_V, size=k), POS_FLOOR)
        psi = np.maximum(
            g.gamma(np.broadcast_to(lam[:, None], (k, p)), 2.0 / gamma_inv2[:, None]),
            POS_FLOOR,
        )
        beta = np.sqrt(psi) * g.standard_normal((k, p))
        mu = np.sqrt(hyper.nu_mu) * g.standard_normal(k)
    else:
        if draw.eta is None or draw.sigma_chol is None:
            raise InvalidParameterError(
                "plain-normal baseline draws were stored without (eta, Sigma); "
                "refit with store_baseline_hyper=True to evaluate densities"
            )
        theta = draw.eta[None, :] + g.standard_normal((k, p + 1)) @ draw.sigma_chol.T
        mu = theta[:, 0]
        beta = theta[:, 1:]
    return mu, beta


def predictive_density(
    y,
    x,
    draws: PosteriorDraws,
    hyper: Hyperparams,
    mc_g0_draws: int = 256,
    rng: RngStream | None = None,
):
    """Posterior predictive density of the response at (y, x).

    The fresh-cluster response density is estimated by Monte Carlo over
    ``mc_g0_draws`` baseline coefficient draws per retained draw; cluster
    terms are plug-in normals. Accepts scalar or array y.
    """
    if draws.S < 1:
        raise InvalidParameterError("need at least one retained draw")
    if rng is None:
        rng = RngStream(draws.meta.get("seed", 0), (9999,))
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.asarray(x, dtype=float).reshape(1, -1)
    p = x.shape[1]
    log_f0x = float(marginal_x_prior_logpdf(x, hyper))
    ng_V = draws.meta.get("ng_V")
    dens = np.zeros_like(y_arr)
    for s in range(draws.S):
        draw = draws.draw(s)
        weights = urn_allocation_logprobs(x[0], draw, hyper)
        p_new, p_cl = weights.probs()
        mu_g0, beta_g0 = _g0_draws(mc_g0_draws, p, hyper, draw, ng_V, rng)
        centers = mu_g0 + beta_g0 @ x[0]
        f0y = np.mean(
            np.exp(log_normal_pdf(y_arr[:, None], centers[None, :], draw.sigma2)),
            axis=1,
        )
        cl_centers = draw.mu + draw.beta @ x[0]
        fy = np.exp(log_normal_pdf(y_arr[:, None], cl_centers[None, :], draw.sigma2))
        dens += p_new * f0y + fy @ p_cl
    dens /= draws.S
    return float(dens[0]) if np.isscalar(y) or np.asarray(y).ndim == 0 else dens
