"""Per-sweep Gibbs and slice updates plus the chain driver.

A sweep follows the fixed order: stick weights and slice variables, cluster
parameter updates for the instantiated range (locals, regression
coefficients, covariate means/variances), prior draws for the extension
range, allocation resampling, the noise variance, and finally the DP mass
parameter. Labels are 0-based; the cluster arrays always cover the current
truncation level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.special import gammaln

from .data import Dataset
from .distributions import (
    LOG_2PI,
    sample_gig_many,
    sample_mvn_from_precision_system,
    sample_wishart,
    slice_sample_step,
)
from .errors import InvalidParameterError, NumericalError
from .model import (
    POS_FLOOR,
    DrawRecord,
    HsLocals,
    Hyperparams,
    MixtureState,
    NgLocals,
    PosteriorDraws,
    _append_clusters,
    canonicalize_labels,
    init_state,
    truncation_cap,
    weights_and_slices_for_labels,
)
from .rng import RngStream

# Caps keeping precision/variance ratios representable.
_PREC_CAP = 1e290


def _clip_pos(x):
    return np.clip(x, POS_FLOOR, _PREC_CAP)


@dataclass(frozen=True)
class ChainConfig:
    """MCMC run settings."""

    iterations: int
    burn_in: int
    thin: int = 1
    seed: int = 0
    stream_key: tuple = ()
    store_covariate_params: bool = True
    # None = auto: keep the plain-normal (eta, Sigma) draws only when p <= 50.
    store_baseline_hyper: bool | None = None
    single_cluster: bool = False

    def __post_init__(self):
        if not (self.iterations > self.burn_in >= 0):
            raise InvalidParameterError(
                f"need iterations > burn_in >= 0, got {self.iterations}, {self.burn_in}"
            )
        if self.thin < 1:
            raise InvalidParameterError(f"thin must be >= 1, got {self.thin}")


# ---------------------------------------------------------------------------
# Step 1: stick weights and slice variables


def update_weights_and_slices(
    state: MixtureState, hyper: Hyperparams, rng: RngStream
) -> int:
    """Redraw (v, w, u) and grow the truncation level until slice coverage.

    Returns the number of extension clusters whose parameters still need a
    prior draw (the weight sticks already exist for them).
    """
    n_cl = state.n_clusters
    cap = truncation_cap(len(state.d), state.alpha)
    v, w, u = weights_and_slices_for_labels(state.d, state.alpha, n_cl, rng, cap)
    state.v, state.w, state.u = v, w, u
    return len(v) - n_cl


def _compact(state: MixtureState) -> None:
    """Drop clusters above the maximum occupied label."""
    m = state.max_label + 1
    if m == state.n_clusters:
        return
    state.mu = state.mu[:m]
    state.beta = state.beta[:m]
    state.m = state.m[:m]
    state.tau = state.tau[:m]
    state.v = state.v[:m]
    state.w = state.w[:m]
    if isinstance(state.locals_, HsLocals):
        lo = state.locals_
        state.locals_ = HsLocals(lo.gamma_sq[:m], lo.zeta_sq[:m], lo.nu[:m], lo.xi[:m])
    elif isinstance(state.locals_, NgLocals):
        lo = state.locals_
        state.locals_ = NgLocals(lo.lam[:m], lo.gamma_inv2[:m], lo.psi[:m])


# ---------------------------------------------------------------------------
# Step 2 (horseshoe): shrinkage locals and coefficients


def hs_draw_nu(gamma_sq, rng: RngStream):
    """Auxiliary scales for the local shrinkage parameters."""
    return _draw_ig_vec(1.0, 1.0 + 1.0 / np.asarray(gamma_sq), rng.gen)


def hs_draw_xi(zeta_sq, rng: RngStream):
    """Auxiliary scale for the global shrinkage parameter."""
    return _draw_ig_vec(1.0, 1.0 + 1.0 / np.asarray(zeta_sq), rng.gen)


def hs_draw_gamma_sq(nu, beta, zeta_sq, sigma2, rng: RngStream):
    """Local shrinkage scales given coefficients and the global scale."""
    zeta_sq = np.asarray(zeta_sq)
    b2_scaled = np.asarray(beta) ** 2 / (2.0 * zeta_sq[..., None] * sigma2)
    return _draw_ig_vec(1.0, 1.0 / np.asarray(nu) + b2_scaled, rng.gen)


def hs_draw_zeta_sq(xi, beta, gamma_sq, sigma2, rng: RngStream):
    """Global shrinkage scale given coefficients and local scales."""
    beta = np.asarray(beta)
    p = beta.shape[-1]
    scale = 1.0 / np.asarray(xi) + np.sum(beta**2 / np.asarray(gamma_sq), axis=-1) / (
        2.0 * sigma2
    )
    return _draw_ig_vec((p + 1) / 2.0, scale, rng.gen)


def hs_update_locals(
    locals_: HsLocals, beta: np.ndarray, sigma2: float, rng: RngStream
) -> HsLocals:
    """Gibbs pass over the augmented half-Cauchy hierarchy (all clusters at once)."""
    nu = hs_draw_nu(locals_.gamma_sq, rng)
    xi = hs_draw_xi(locals_.zeta_sq, rng)
    gamma_sq = hs_draw_gamma_sq(nu, beta, locals_.zeta_sq, sigma2, rng)
    zeta_sq = hs_draw_zeta_sq(xi, beta, gamma_sq, sigma2, rng)
    return HsLocals(gamma_sq, zeta_sq, nu, xi)


def _draw_ig_vec(shape, igscale, g):
    """Vectorized inverse-gamma draws with positivity guards."""
    igscale = _clip_pos(igscale)
    gam = np.maximum(g.gamma(shape, 1.0, size=np.shape(igscale)), POS_FLOOR)
    return _clip_pos(igscale / gam)


def hs_draw_coefficients(
    Xs: np.ndarray,
    ys: np.ndarray,
    gamma_sq: np.ndarray,
    zeta_sq: float,
    sigma2: float,
    nu_mu: float,
    rng: RngStream,
):
    """Joint (mu, beta) draw for one horseshoe cluster.

    The slope prior N(0, zeta^2 sigma^2 diag(gamma^2)) and intercept prior
    N(0, nu_mu) give posterior precision X'X/sigma^2 + diag(1/nu_mu,
    1/(zeta^2 sigma^2 gamma^2)); empty clusters reduce to the prior.
    """
    prior_b = np.concatenate(
        [[sigma2 / nu_mu], 1.0 / _clip_pos(zeta_sq * gamma_sq)]
    )
    if len(ys) == 0:
        var = np.concatenate([[nu_mu], _clip_pos(zeta_sq * sigma2 * gamma_sq)])
        theta = np.sqrt(var) * rng.gen.standard_normal(len(var))
    else:
        Xt = np.column_stack([np.ones(len(ys)), Xs])
        B = Xt.T @ Xt
        B[np.diag_indices_from(B)] += prior_b
        theta = sample_mvn_from_precision_system(B, Xt.T @ ys, sigma2, rng)
    return float(theta[0]), theta[1:]


# ---------------------------------------------------------------------------
# Step 2 (normal-gamma): tail weight, global scale, local variances,
# coefficients with the underdetermined SVD branch


def ng_lambda_log_density(lam, p, gamma_inv2, sum_log_psi):
    """Log conditional (up to a constant) of the gamma-mixing shape."""
    if lam <= 0:
        return -np.inf
    return (
        -lam
        + p * lam * np.log(gamma_inv2 / 2.0)
        - p * gammaln(lam)
        + lam * sum_log_psi
    )


def ng_draw_gamma_inv2(lam, psi, V, rng: RngStream):
    """Inverse global scale given tail weights and local variances."""
    lam = np.asarray(lam)
    psi = np.asarray(psi)
    p = psi.shape[-1]
    rate = 0.5 * np.sum(psi, axis=-1) + V / (2.0 * lam)
    return _clip_pos(rng.gen.gamma(p * lam + 2.0, 1.0 / _clip_pos(rate)))


def ng_draw_psi(lam, gamma_inv2, beta, rng: RngStream):
    """Local variances: GIG(lambda - 1/2, gamma^-2, beta^2), beta^2 floored."""
    b2 = np.maximum(np.asarray(beta) ** 2, POS_FLOOR)
    lam = np.asarray(lam)
    gamma_inv2 = np.asarray(gamma_inv2)
    return _clip_pos(
        sample_gig_many(lam[..., None] - 0.5, gamma_inv2[..., None], b2, rng)
    )


def ng_update_locals(
    locals_: NgLocals, beta: np.ndarray, V: float, rng: RngStream
) -> NgLocals:
    """One pass over (lambda, gamma^-2, psi) for all clusters."""
    k, p = beta.shape
    lam = locals_.lam.copy()
    for j in range(k):
        gi2 = float(locals_.gamma_inv2[j])
        slp = float(np.sum(np.log(locals_.psi[j])))
        lam[j] = slice_sample_step(
            lambda x: ng_lambda_log_density(x, p, gi2, slp),
            float(lam[j]),
            width=1.0,
            max_stepout=50,
            rng=rng,
        )
    lam = np.maximum(lam, 1e-8)
    gamma_inv2 = ng_draw_gamma_inv2(lam, locals_.psi, V, rng)
    psi = ng_draw_psi(lam, gamma_inv2, beta, rng)
    return NgLocals(lam, gamma_inv2, psi)


def ng_draw_coefficients(
    Xs: np.ndarray,
    ys: np.ndarray,
    psi: np.ndarray,
    sigma2: float,
    nu_mu: float,
    rng: RngStream,
):
    """Joint (mu, beta) draw for one normal-gamma cluster.

    Overdetermined clusters use the precision-system draw; clusters with at
    most p+1 members use the SVD identity, sampled exactly through the
    auxiliary decomposition theta = u + Psi A C^{-1}(theta_hat - A'u - delta).
    """
    nj = len(ys)
    p = len(psi)
    prior_var = np.concatenate([[nu_mu], _clip_pos(psi)])
    g = rng.gen
    if nj == 0:
        theta = np.sqrt(prior_var) * g.standard_normal(p + 1)
    elif nj > p + 1:
        Xt = np.column_stack([np.ones(nj), Xs])
        B = Xt.T @ Xt
        B[np.diag_indices_from(B)] += sigma2 / prior_var
        theta = sample_mvn_from_precision_system(B, Xt.T @ ys, sigma2, rng)
    else:
        theta = _ng_svd_draw(Xs, ys, prior_var, sigma2, g)
    return float(theta[0]), theta[1:]


def _ng_svd_factors(Xs, ys, prior_var, sigma2):
    """SVD pieces shared by the draw and its analytic moments."""
    nj = len(ys)
    Xt = np.column_stack([np.ones(nj), Xs])
    U, s, Vt = np.linalg.svd(Xt, full_matrices=False)
    keep = s > 1e-10 * s[0]
    U, s, Vt = U[:, keep], s[keep], Vt[keep]
    A = Vt.T  # (p+1, r)
    theta_hat = (U.T @ ys) / s
    PsiA = prior_var[:, None] * A
    C = A.T @ PsiA + sigma2 * np.diag(1.0 / s**2)
    return A, s, theta_hat, PsiA, C


def ng_svd_posterior_moments(Xs, ys, prior_var, sigma2):
    """Exact (mean, covariance) of the SVD-branch conditional."""
    A, _s, theta_hat, PsiA, C = _ng_svd_factors(Xs, ys, prior_var, sigma2)
    mean = PsiA @ np.linalg.solve(C, theta_hat)
    cov = np.diag(prior_var) - PsiA @ np.linalg.solve(C, PsiA.T)
    return mean, 0.5 * (cov + cov.T)


def _ng_svd_draw(Xs, ys, prior_var, sigma2, g):
    A, s, theta_hat, PsiA, C = _ng_svd_factors(Xs, ys, prior_var, sigma2)
    u0 = np.sqrt(prior_var) * g.standard_normal(len(prior_var))
    delta = np.sqrt(sigma2) / s * g.standard_normal(len(s))
    v = A.T @ u0 + delta
    try:
        corr = sla.cho_solve(sla.cho_factor(C), theta_hat - v)
    except np.linalg.LinAlgError:
        corr = np.linalg.solve(C + 1e-10 * np.eye(len(s)), theta_hat - v)
    return u0 + PsiA @ corr


# ---------------------------------------------------------------------------
# Step 2 (plain normal): conjugate coefficient and hyperparameter updates


def normalfull_update_coefficients_and_hyper(
    state: MixtureState,
    data: Dataset,
    hyper: Hyperparams,
    rng: RngStream,
    members: list,
) -> None:
    """(mu_j, beta_j) for each instantiated cluster, then (eta, Sigma)."""
    p = data.p
    sigma_chol = np.linalg.cholesky(state.normal_sigma)
    ident = np.eye(p + 1)
    sigma_inv = sla.cho_solve((sigma_chol, True), ident)
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
    g = rng.gen
    occupied = []
    for j, rows in enumerate(members):
        if len(rows) == 0:
            theta = state.normal_eta + sigma_chol @ g.standard_normal(p + 1)
        else:
            Xt = np.column_stack([np.ones(len(rows)), data.X[rows]])
            B = Xt.T @ Xt / state.sigma2 + sigma_inv
            b = Xt.T @ data.y[rows] / state.sigma2 + sigma_inv @ state.normal_eta
            theta = sample_mvn_from_precision_system(B, b, 1.0, rng)
            occupied.append(theta)
        state.mu[j] = theta[0]
        state.beta[j] = theta[1:]

    k = len(occupied)
    if k == 0:
        return
    theta_sum = np.sum(occupied, axis=0)
    prec = ident / hyper.normalfull_eta_var + k * sigma_inv
    state.normal_eta = sample_mvn_from_precision_system(
        prec, sigma_inv @ theta_sum, 1.0, rng
    )
    resid = np.asarray(occupied) - state.normal_eta[None, :]
    scatter = resid.T @ resid
    rate_mat = hyper.normalfull_wishart_scale * ident + scatter
    scale_post = np.linalg.inv(rate_mat)
    scale_post = 0.5 * (scale_post + scale_post.T)
    prec_draw = sample_wishart(hyper.wishart_df(p) + k, scale_post, rng)
    sigma = np.linalg.inv(prec_draw)
    state.normal_sigma = 0.5 * (sigma + sigma.T)


# ---------------------------------------------------------------------------
# Steps 2.6-2.7: covariate means and variances


def draw_covariate_params(
    counts: np.ndarray,
    xbar: np.ndarray,
    ss: np.ndarray,
    hyper: Hyperparams,
    rng: RngStream,
):
    """Conjugate (tau, m) draws for a block of clusters.

    counts (k,), xbar and ss (k, p): member counts, column means, and sums
    of squared deviations; empty clusters pass zeros and receive prior draws.
    """
    g = rng.gen
    counts = counts.astype(float)
    n_star = hyper.n0 + counts
    nu_star = hyper.nu0 + counts
    quad = (hyper.n0 * counts / n_star)[:, None] * (xbar - hyper.m0) ** 2
    igscale = 0.5 * (ss + hyper.s0_sq * hyper.nu0 + quad)
    tau = _draw_ig_vec(
        np.broadcast_to((nu_star / 2.0)[:, None], igscale.shape), igscale, g
    )
    m_mean = (counts[:, None] * xbar + hyper.n0 * hyper.m0) / n_star[:, None]
    m = m_mean + np.sqrt(tau / n_star[:, None]) * g.standard_normal(tau.shape)
    return tau, m


def update_covariate_params(member_X: np.ndarray, hyper: Hyperparams, rng: RngStream):
    """Single-cluster convenience wrapper around :func:`draw_covariate_params`."""
    member_X = np.atleast_2d(member_X)
    nj = member_X.shape[0]
    if nj == 0:
        counts = np.zeros(1)
        xbar = np.zeros((1, member_X.shape[1]))
        ss = np.zeros((1, member_X.shape[1]))
    else:
        counts = np.array([nj], dtype=float)
        xbar = member_X.mean(axis=0, keepdims=True)
        ss = ((member_X - xbar) ** 2).sum(axis=0, keepdims=True)
    tau, m = draw_covariate_params(counts, xbar, ss, hyper, rng)
    return tau[0], m[0]


# ---------------------------------------------------------------------------
# Step 3: allocations


def _component_log_likelihoods(state: MixtureState, data: Dataset):
    """(n, N) response and covariate log likelihood matrices."""
    X, y = data.X, data.y
    yhat = state.mu[None, :] + X @ state.beta.T
    log_fy = -0.5 * (
        LOG_2PI + np.log(state.sigma2) + (y[:, None] - yhat) ** 2 / state.sigma2
    )
    inv_tau = 1.0 / state.tau
    const = -0.5 * (data.p * LOG_2PI + np.sum(np.log(state.tau), axis=1))
    quad = (
        (X**2) @ inv_tau.T
        - 2.0 * X @ (state.m * inv_tau).T
        + np.sum(state.m**2 * inv_tau, axis=1)[None, :]
    )
    log_fx = const[None, :] - 0.5 * quad
    return log_fy, log_fx


def update_allocations(state: MixtureState, data: Dataset, rng: RngStream) -> float:
    """Resample labels over the slice-admissible clusters; returns the data
    log likelihood at the new allocation."""
    log_fy, log_fx = _component_log_likelihoods(state, data)
    logp = log_fy + log_fx
    admissible = state.w[None, :] > state.u[:, None]
    if not admissible.any(axis=1).all():
        raise NumericalError("empty slice candidate set; state is inconsistent")
    logp = np.where(admissible, logp, -np.inf)
    row_max = logp.max(axis=1)
    probs = np.exp(logp - row_max[:, None])
    norm = probs.sum(axis=1)
    probs /= norm[:, None]
    total_err = np.abs(probs.sum(axis=1) - 1.0).max()
    if not total_err < 1e-12:
        raise NumericalError(f"allocation probabilities off by {total_err}")
    cum = np.cumsum(probs, axis=1)
    r = np.clip(rng.gen.random(len(state.d)), 1e-16, 1.0 - 1e-16)
    state.d = (cum < r[:, None]).sum(axis=1).astype(np.int64)
    idx = np.arange(len(state.d))
    loglik = float(np.sum(log_fy[idx, state.d] + log_fx[idx, state.d]))
    return loglik


# ---------------------------------------------------------------------------
# Step 4: noise variance


def update_sigma2(
    state: MixtureState, data: Dataset, hyper: Hyperparams, rng: RngStream
) -> None:
    n, p = data.n, data.p
    yhat = state.mu[state.d] + np.einsum("ij,ij->i", data.X, state.beta[state.d])
    sse = float(np.sum((data.y - yhat) ** 2))
    if hyper.baseline == "hs":
        occ = np.unique(state.d)
        k = len(occ)
        lo = state.locals_
        cross = float(
            np.sum(
                np.sum(state.beta[occ] ** 2 / lo.gamma_sq[occ], axis=1)
                / (2.0 * lo.zeta_sq[occ])
            )
        )
        shape = (n + p * k) / 2.0 + hyper.alpha0
        igscale = sse / 2.0 + cross + hyper.theta0
    else:
        shape = n / 2.0 + hyper.alpha0
        igscale = sse / 2.0 + hyper.theta0
    if not np.isfinite(igscale):
        raise NumericalError(f"non-finite variance update (sse={sse})")
    g = rng.gen
    state.sigma2 = float(_clip_pos(igscale / max(g.gamma(shape, 1.0), POS_FLOOR)))


# ---------------------------------------------------------------------------
# Step 5: DP mass parameter (auxiliary-variable mixture update)


def update_alpha(
    state: MixtureState, k: int, n: int, hyper: Hyperparams, rng: RngStream
) -> None:
    g = rng.gen
    eta = float(np.clip(g.beta(state.alpha + 1.0, n), 1e-15, 1.0 - 1e-15))
    rate = 1.0 / hyper.theta_alpha - np.log(eta)
    odds = (hyper.alpha_alpha + k - 1.0) / (rate * n)
    pick_upper = g.random() > odds / (1.0 + odds)
    shape = hyper.alpha_alpha + k - (1.0 if pick_upper else 0.0)
    state.alpha = float(max(g.gamma(shape, 1.0 / rate), 1e-8))


# ---------------------------------------------------------------------------
# Full sweep and chain driver


def _member_rows(d: np.ndarray, n_clusters: int) -> list:
    order = np.argsort(d, kind="stable")
    counts = np.bincount(d, minlength=n_clusters)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    return [order[bounds[j] : bounds[j + 1]] for j in range(n_clusters)]


def _covariate_stats(d, X, n_clusters):
    counts = np.bincount(d, minlength=n_clusters).astype(float)
    sums = np.zeros((n_clusters, X.shape[1]))
    np.add.at(sums, d, X)
    sumsq = np.zeros_like(sums)
    np.add.at(sumsq, d, X**2)
    safe = np.maximum(counts, 1.0)[:, None]
    xbar = np.where(counts[:, None] > 0, sums / safe, 0.0)
    ss = np.maximum(sumsq - counts[:, None] * xbar**2, 0.0)
    return counts, xbar, ss


def sweep(
    state: MixtureState,
    data: Dataset,
    hyper: Hyperparams,
    cfg: ChainConfig,
    rng: RngStream,
) -> float:
    """One full MCMC sweep; returns the allocation-time log likelihood."""
    _compact(state)
    extension = update_weights_and_slices(state, hyper, rng)

    n_cl = state.n_clusters
    members = _member_rows(state.d, n_cl)
    if hyper.baseline == "hs":
        state.locals_ = hs_update_locals(state.locals_, state.beta, state.sigma2, rng)
        lo = state.locals_
        for j in range(n_cl):
            rows = members[j]
            state.mu[j], state.beta[j] = hs_draw_coefficients(
                data.X[rows],
                data.y[rows],
                lo.gamma_sq[j],
                float(lo.zeta_sq[j]),
                state.sigma2,
                hyper.nu_mu,
                rng,
            )
    elif hyper.baseline == "ng":
        state.locals_ = ng_update_locals(state.locals_, state.beta, state.ng_V, rng)
        lo = state.locals_
        for j in range(n_cl):
            rows = members[j]
            state.mu[j], state.beta[j] = ng_draw_coefficients(
                data.X[rows],
                data.y[rows],
                lo.psi[j],
                state.sigma2,
                hyper.nu_mu,
                rng,
            )
    else:
        normalfull_update_coefficients_and_hyper(state, data, hyper, rng, members)

    counts, xbar, ss = _covariate_stats(state.d, data.X, n_cl)
    state.tau, state.m = draw_covariate_params(counts, xbar, ss, hyper, rng)

    if extension > 0:
        _append_clusters(state, extension, data.p, hyper, rng)

    if cfg.single_cluster:
        log_fy, log_fx = _component_log_likelihoods(state, data)
        idx = np.arange(data.n)
        loglik = float(np.sum(log_fy[idx, state.d] + log_fx[idx, state.d]))
    else:
        loglik = update_allocations(state, data, rng)
    if not np.isfinite(loglik):
        raise NumericalError(
            "non-finite log likelihood; state summary: "
            f"sigma2={state.sigma2:.4g}, alpha={state.alpha:.4g}, "
            f"K={len(np.unique(state.d))}, "
            f"|mu|max={np.abs(state.mu).max():.4g}, "
            f"|beta|max={np.abs(state.beta).max():.4g}"
        )

    update_sigma2(state, data, hyper, rng)
    if not cfg.single_cluster:
        update_alpha(state, len(np.unique(state.d)), data.n, hyper, rng)
    return loglik


def _snapshot(state: MixtureState, store_cov: bool, store_hyper: bool):
    """Canonical, compacted copy of the current draw."""
    labels = canonicalize_labels(state.d)
    uniq, first_idx = np.unique(state.d, return_index=True)
    original_order = uniq[np.argsort(first_idx, kind="stable")]
    rec = {
        "labels": labels,
        "mu": state.mu[original_order].copy(),
        "beta": state.beta[original_order].copy(),
        "m": state.m[original_order].copy() if store_cov else None,
        "tau": state.tau[original_order].copy() if store_cov else None,
        "sigma2": state.sigma2,
        "alpha": state.alpha,
        "eta": None,
        "sigma_chol": None,
    }
    if store_hyper and state.normal_eta is not None:
        rec["eta"] = state.normal_eta.copy()
        rec["sigma_chol"] = np.linalg.cholesky(state.normal_sigma)
    return rec


def run_chain(data: Dataset, hyper: Hyperparams, cfg: ChainConfig) -> PosteriorDraws:
    """Initialize and run one chain, returning retained draws with traces."""
    rng = RngStream(cfg.seed, cfg.stream_key)
    state = init_state(data, hyper, rng)
    if cfg.single_cluster:
        state.d = np.zeros(data.n, dtype=np.int64)
        state.alpha = 1e-8
        _compact(state)
        state.v, state.w = state.v[:1], state.w[:1]
        state.u = np.minimum(state.u, state.w[0] * 0.5)

    store_hyper = cfg.store_baseline_hyper
    if store_hyper is None:
        store_hyper = hyper.baseline == "normal" and data.p <= 50
    store_hyper = store_hyper and hyper.baseline == "normal"

    records = []
    trace = {"iter": [], "sigma2": [], "alpha": [], "K": [], "loglik": []}
    for it in range(1, cfg.iterations + 1):
        loglik = sweep(state, data, hyper, cfg, rng)
        trace["iter"].append(it)
        trace["sigma2"].append(state.sigma2)
        trace["alpha"].append(state.alpha)
        trace["K"].append(len(np.unique(state.d)))
        trace["loglik"].append(loglik)
        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            records.append(_snapshot(state, cfg.store_covariate_params, store_hyper))

    meta = {
        "baseline": hyper.baseline,
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "seed": cfg.seed,
        "stream_key": list(cfg.stream_key),
        "single_cluster": cfg.single_cluster,
        "n": data.n,
        "p": data.p,
        "ng_V": state.ng_V,
        "hyper": hyper.to_dict(),
        "store_covariate_params": cfg.store_covariate_params,
        "store_baseline_hyper": bool(store_hyper),
    }
    return PosteriorDraws(
        labels=[r["labels"] for r in records],
        mu=[r["mu"] for r in records],
        beta=[r["beta"] for r in records],
        m=[r["m"] for r in records] if cfg.store_covariate_params else None,
        tau=[r["tau"] for r in records] if cfg.store_covariate_params else None,
        sigma2=np.array([r["sigma2"] for r in records]),
        alpha=np.array([r["alpha"] for r in records]),
        meta=meta,
        normal_eta=[r["eta"] for r in records] if store_hyper else None,
        normal_sigma_chol=[r["sigma_chol"] for r in records] if store_hyper else None,
        trace={k: np.asarray(v) for k, v in trace.items()},
    )
