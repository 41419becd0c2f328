"""Model state: hyperparameters, per-cluster parameters, MCMC state, draws.

Cluster parameters are stored as stacked arrays (row j = cluster j) so the
samplers can update all clusters and coordinates in vectorized form. Labels
are 0-based internally; canonical order is order of first appearance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict
from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

from .data import Dataset
from .errors import DataError, InvalidParameterError, TruncationError
from .rng import RngStream

BASELINES = ("hs", "ng", "normal")

# Base margin of the adaptive truncation cap.
TRUNCATION_MARGIN = 50


def truncation_cap(n: int, alpha: float) -> int:
    """Hard cap on the truncation level for one sweep.

    The sticks needed for slice coverage grow like alpha * log(1/min u), so
    a constant margin over n starves sweeps with a large transient mass
    parameter; the cap scales with alpha to stay out of the way while still
    catching runaway growth.
    """
    return int(n + TRUNCATION_MARGIN + np.ceil(40.0 * max(alpha, 1.0)))

# Positivity guard applied to variance-like quantities.
POS_FLOOR = 1e-300


@dataclass(frozen=True)
class Hyperparams:
    """Fixed prior constants plus the baseline selector.

    ``theta_alpha`` is the *scale* of the Gamma prior on the mass parameter
    (mean ``alpha_alpha * theta_alpha``); mind the convention when porting
    rate-parameterized values. ``normalfull_wishart_scale * I`` is the prior
    scale of the coefficient covariance under the plain-normal baseline, so
    its inverse has Wishart mean ``df / wishart_scale * I``.
    """

    n0: float = 0.1
    m0: float = 0.0
    nu0: float = 2.0
    s0_sq: float = 2.0
    alpha0: float = 2.0
    theta0: float = 2.0
    alpha_alpha: float = 2.0
    theta_alpha: float = 2.0
    nu_mu: float = 100.0
    baseline: str = "hs"
    normalfull_eta_var: float = 100.0
    normalfull_wishart_df: float | None = None  # None -> p + 1
    normalfull_wishart_scale: float = 10.0

    def __post_init__(self):
        for name in (
            "n0",
            "nu0",
            "s0_sq",
            "alpha0",
            "theta0",
            "alpha_alpha",
            "theta_alpha",
            "nu_mu",
            "normalfull_eta_var",
            "normalfull_wishart_scale",
        ):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"hyperparameter {name} must be positive")
        if self.baseline not in BASELINES:
            raise InvalidParameterError(
                f"baseline must be one of {BASELINES}, got {self.baseline!r}"
            )

    @property
    def tau_prior_shape(self) -> float:
        return self.nu0 / 2.0

    @property
    def tau_prior_igscale(self) -> float:
        return self.nu0 * self.s0_sq / 2.0

    def wishart_df(self, p: int) -> float:
        return self.normalfull_wishart_df if self.normalfull_wishart_df else p + 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class HsLocals:
    """Horseshoe local scales for a block of clusters (row per cluster)."""

    gamma_sq: np.ndarray  # (k, p)
    zeta_sq: np.ndarray  # (k,)
    nu: np.ndarray  # (k, p)
    xi: np.ndarray  # (k,)


@dataclass
class NgLocals:
    """Normal-gamma local parameters for a block of clusters."""

    lam: np.ndarray  # (k,)
    gamma_inv2: np.ndarray  # (k,)
    psi: np.ndarray  # (k, p)


class ClusterParams(NamedTuple):
    """Read view of a single cluster's parameters."""

    mu: float
    beta: np.ndarray
    m: np.ndarray
    tau: np.ndarray
    locals_: dict


@dataclass
class MixtureState:
    """Full MCMC state of one chain."""

    mu: np.ndarray  # (N,)
    beta: np.ndarray  # (N, p)
    m: np.ndarray  # (N, p)
    tau: np.ndarray  # (N, p)
    locals_: HsLocals | NgLocals | None
    v: np.ndarray  # (N,)
    w: np.ndarray  # (N,)
    u: np.ndarray  # (n,)
    d: np.ndarray  # (n,) int labels, 0-based
    sigma2: float
    alpha: float
    ng_V: float | None = None
    normal_eta: np.ndarray | None = None  # (p+1,), NormalFull only
    normal_sigma: np.ndarray | None = None  # (p+1, p+1), NormalFull only

    @property
    def n_clusters(self) -> int:
        return len(self.mu)

    @property
    def max_label(self) -> int:
        return int(self.d.max())

    def cluster(self, j: int) -> ClusterParams:
        loc: dict = {}
        if isinstance(self.locals_, HsLocals):
            loc = {
                "gamma_sq": self.locals_.gamma_sq[j],
                "zeta_sq": float(self.locals_.zeta_sq[j]),
                "nu": self.locals_.nu[j],
                "xi": float(self.locals_.xi[j]),
            }
        elif isinstance(self.locals_, NgLocals):
            loc = {
                "lam": float(self.locals_.lam[j]),
                "gamma_inv2": float(self.locals_.gamma_inv2[j]),
                "psi": self.locals_.psi[j],
            }
        return ClusterParams(float(self.mu[j]), self.beta[j], self.m[j], self.tau[j], loc)

    def check_invariants(self, atol: float = 1e-12) -> None:
        """Raise AssertionError if any structural invariant is violated."""
        n_cl = self.n_clusters
        assert len(self.v) == n_cl and len(self.w) == n_cl
        w_expect = stick_breaking_weights(self.v)
        assert np.allclose(self.w, w_expect, atol=atol)
        leftover = np.prod(1.0 - self.v)
        assert abs(self.w.sum() + leftover - 1.0) < 1e-10
        assert self.d.min() >= 0 and self.d.max() < n_cl
        assert np.all(self.u > 0) and np.all(self.u < self.w[self.d])
        assert 1.0 - self.w.sum() < self.u.min()
        assert self.sigma2 > 0 and self.alpha > 0
        assert np.all(self.tau > 0)
        if isinstance(self.locals_, HsLocals):
            for arr in (
                self.locals_.gamma_sq,
                self.locals_.zeta_sq,
                self.locals_.nu,
                self.locals_.xi,
            ):
                assert np.all(arr > 0)
        if isinstance(self.locals_, NgLocals):
            for arr in (self.locals_.lam, self.locals_.gamma_inv2, self.locals_.psi):
                assert np.all(arr > 0)


def stick_breaking_weights(v: np.ndarray) -> np.ndarray:
    """w_j = v_j * prod_{l<j} (1 - v_l)."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return v.copy()
    tail = np.concatenate(([1.0], np.cumprod(1.0 - v[:-1])))
    return v * tail


@dataclass(frozen=True)
class Partition:
    """Cluster labels canonicalized to first-appearance order."""

    labels: np.ndarray

    @staticmethod
    def from_labels(raw) -> "Partition":
        return Partition(canonicalize_labels(raw))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.labels, other.labels)


def canonicalize_labels(raw) -> np.ndarray:
    """Relabel to 0..K-1 in order of first appearance."""
    labels = np.asarray(raw)
    if labels.ndim != 1:
        raise InvalidParameterError("labels must be a 1-D array")
    uniq, first_idx = np.unique(labels, return_index=True)
    order = np.argsort(first_idx, kind="stable")
    canon = np.empty(len(uniq), dtype=np.int64)
    canon[order] = np.arange(len(uniq))
    return canon[np.searchsorted(uniq, labels)]


class DrawRecord(NamedTuple):
    """One retained posterior draw (labels canonical, params row-aligned)."""

    labels: np.ndarray  # (n,)
    sizes: np.ndarray  # (K,)
    mu: np.ndarray  # (K,)
    beta: np.ndarray  # (K, p)
    m: np.ndarray | None  # (K, p)
    tau: np.ndarray | None  # (K, p)
    sigma2: float
    alpha: float
    eta: np.ndarray | None
    sigma_chol: np.ndarray | None


@dataclass
class PosteriorDraws:
    """Retained post-burn-in samples powering prediction and reporting."""

    labels: list  # of (n,) int arrays, canonical
    mu: list  # of (K_s,) arrays
    beta: list  # of (K_s, p) arrays
    m: list | None
    tau: list | None
    sigma2: np.ndarray  # (S,)
    alpha: np.ndarray  # (S,)
    meta: dict
    normal_eta: list | None = None
    normal_sigma_chol: list | None = None
    trace: dict | None = None

    def __post_init__(self):
        if len(self.labels) < 1:
            raise InvalidParameterError("need at least one retained draw")
        for s, lab in enumerate(self.labels):
            k = len(self.mu[s])
            if lab.max() + 1 != k or lab.min() < 0:
                raise InvalidParameterError(
                    f"draw {s}: labels inconsistent with stored cluster list"
                )

    @property
    def S(self) -> int:
        return len(self.labels)

    @property
    def n(self) -> int:
        return len(self.labels[0])

    @property
    def p(self) -> int:
        return self.beta[0].shape[1]

    def draw(self, s: int) -> DrawRecord:
        lab = self.labels[s]
        return DrawRecord(
            labels=lab,
            sizes=np.bincount(lab, minlength=len(self.mu[s])),
            mu=self.mu[s],
            beta=self.beta[s],
            m=self.m[s] if self.m is not None else None,
            tau=self.tau[s] if self.tau is not None else None,
            sigma2=float(self.sigma2[s]),
            alpha=float(self.alpha[s]),
            eta=self.normal_eta[s] if self.normal_eta is not None else None,
            sigma_chol=(
                self.normal_sigma_chol[s]
                if self.normal_sigma_chol is not None
                else None
            ),
        )

    def partitions(self) -> list:
        return [Partition(lab) for lab in self.labels]


def compute_ng_V(data: Dataset) -> float:
    """Average squared slope of the (minimum-norm) least squares fit.

    Uses the ordinary solve when n >= p+1 and the minimum-norm system
    otherwise; rank-deficient systems fall back to a 1e-8 ridge jitter with
    a warning. The intercept is excluded from the average; the
    underdetermined branch divides by n as specified.
    """
    n, p = data.n, data.p
    Xt = np.column_stack([np.ones(n), data.X])
    if n >= p + 1:
        G = Xt.T @ Xt
        coef = _solve_psd_with_jitter(G, Xt.T @ data.y, "X'X")
        V = float(np.sum(coef[1:] ** 2)) / p
    else:
        K = Xt @ Xt.T
        coef = Xt.T @ _solve_psd_with_jitter(K, data.y, "XX'")
        V = float(np.sum(coef[1:] ** 2)) / n
    if V < 1e-12:
        warnings.warn("degenerate response: flooring V at 1e-12", stacklevel=2)
        V = 1e-12
    return V


def _solve_psd_with_jitter(G: np.ndarray, b: np.ndarray, label: str) -> np.ndarray:
    try:
        return sla.cho_solve(sla.cho_factor(G), b)
    except np.linalg.LinAlgError:
        warnings.warn(f"rank-deficient {label}: adding 1e-8 ridge jitter", stacklevel=3)
        return sla.cho_solve(sla.cho_factor(G + 1e-8 * np.eye(G.shape[0])), b)


def expected_clusters_prior(alpha: float, n: int) -> float:
    """Prior mean number of distinct clusters among n observations."""
    if alpha <= 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    return float(np.sum(alpha / (alpha + np.arange(n))))


# ---------------------------------------------------------------------------
# Prior draws for cluster parameter blocks (used at init and when extending
# the truncation level).


def draw_prior_covariates(k: int, p: int, hyper: Hyperparams, rng: RngStream):
    """(tau, m) for k fresh clusters from the normal-inverse-gamma baseline."""
    g = rng.gen
    tau = 1.0 / np.maximum(
        g.gamma(hyper.tau_prior_shape, 1.0 / hyper.tau_prior_igscale, size=(k, p)),
        POS_FLOOR,
    )
    m = hyper.m0 + np.sqrt(tau / hyper.n0) * g.standard_normal((k, p))
    return tau, m


def draw_prior_hs_block(k: int, p: int, hyper: Hyperparams, sigma2: float, rng: RngStream):
    """Fresh horseshoe cluster blocks: locals plus (mu, beta, m, tau)."""
    g = rng.gen
    nu = 1.0 / np.maximum(g.gamma(0.5, 1.0, size=(k, p)), POS_FLOOR)
    xi = 1.0 / np.maximum(g.gamma(0.5, 1.0, size=k), POS_FLOOR)
    gamma_sq = 1.0 / np.maximum(g.gamma(0.5, nu, size=(k, p)), POS_FLOOR)
    zeta_sq = 1.0 / np.maximum(g.gamma(0.5, xi, size=k), POS_FLOOR)
    mu = np.sqrt(hyper.nu_mu) * g.standard_normal(k)
    beta = np.sqrt(zeta_sq[:, None] * sigma2 * gamma_sq) * g.standard_normal((k, p))
    tau, m = draw_prior_covariates(k, p, hyper, rng)
    return mu, beta, m, tau, HsLocals(gamma_sq, zeta_sq, nu, xi)


def draw_prior_ng_block(
    k: int, p: int, hyper: Hyperparams, V: float, rng: RngStream
):
    """Fresh normal-gamma cluster blocks: locals plus (mu, beta, m, tau)."""
    g = rng.gen
    lam = np.maximum(g.standard_exponential(k), 1e-8)
    gamma_inv2 = np.maximum(g.gamma(2.0, 2.0 * lam / V, size=k), POS_FLOOR)
    psi = np.maximum(
        g.gamma(np.broadcast_to(lam[:, None], (k, p)), 2.0 / gamma_inv2[:, None]),
        POS_FLOOR,
    )
    mu = np.sqrt(hyper.nu_mu) * g.standard_normal(k)
    beta = np.sqrt(psi) * g.standard_normal((k, p))
    tau, m = draw_prior_covariates(k, p, hyper, rng)
    return mu, beta, m, tau, NgLocals(lam, gamma_inv2, psi)


def draw_prior_normalfull_block(
    k: int, p: int, hyper: Hyperparams, eta: np.ndarray, sigma_chol: np.ndarray, rng: RngStream
):
    """Fresh plain-normal cluster blocks sharing the global (eta, Sigma)."""
    g = rng.gen
    z = g.standard_normal((k, p + 1))
    theta = eta[None, :] + z @ sigma_chol.T
    mu = theta[:, 0]
    beta = theta[:, 1:]
    tau, m = draw_prior_covariates(k, p, hyper, rng)
    return mu, beta, m, tau, None


def draw_prior_block(
    k: int, p: int, hyper: Hyperparams, state: "MixtureState", rng: RngStream
):
    """Dispatch prior cluster draws by baseline, reading globals off the state."""
    if hyper.baseline == "hs":
        return draw_prior_hs_block(k, p, hyper, state.sigma2, rng)
    if hyper.baseline == "ng":
        return draw_prior_ng_block(k, p, hyper, state.ng_V, rng)
    chol = np.linalg.cholesky(state.normal_sigma)
    return draw_prior_normalfull_block(k, p, hyper, state.normal_eta, chol, rng)


def weights_and_slices_for_labels(
    d: np.ndarray, alpha: float, n_clusters: int, rng: RngStream, cap: int
):
    """Draw (v, w, u) for the current labels and extend until slice coverage.

    Occupied range: v_j ~ Beta(1 + n_j, alpha + m_j) with n_j the size of
    cluster j and m_j the count of labels above j. The truncation level N
    grows with prior sticks Beta(1, alpha) until sum(w) exceeds
    max_i(1 - u_i).
    """
    g = rng.gen
    n = len(d)
    counts = np.bincount(d, minlength=n_clusters).astype(float)
    # labels strictly greater than j
    above = n - np.cumsum(counts)
    v = g.beta(1.0 + counts, alpha + above)
    v = np.clip(v, 1e-15, 1.0 - 1e-15)
    w = stick_breaking_weights(v)
    u = g.random(n) * w[d]
    u = np.maximum(u, 1e-300)
    target = 1.0 - u.min()
    v_list = list(v)
    w_sum = w.sum()
    tail = np.prod(1.0 - v)
    while w_sum <= target:
        if len(v_list) >= cap:
            raise TruncationError(
                f"truncation cap {cap} reached (sum w = {w_sum:.6g}, "
                f"needed > {target:.6g}, alpha = {alpha:.6g})"
            )
        v_new = float(np.clip(g.beta(1.0, alpha), 1e-15, 1.0 - 1e-15))
        w_new = v_new * tail
        tail *= 1.0 - v_new
        v_list.append(v_new)
        w_sum += w_new
    v = np.asarray(v_list)
    return v, stick_breaking_weights(v), u


def init_state(data: Dataset, hyper: Hyperparams, rng: RngStream) -> MixtureState:
    """Initialize a chain: uniform labels, prior parameter draws, slice setup."""
    n, p = data.n, data.p
    if n < 2:
        raise DataError("need at least two observations")
    g = rng.gen
    d = g.integers(0, n, size=n)
    sigma2 = float(
        1.0 / max(g.gamma(hyper.alpha0, 1.0 / hyper.theta0), POS_FLOOR)
    )
    alpha = float(max(g.gamma(hyper.alpha_alpha, hyper.theta_alpha), 1e-8))
    n_cl = int(d.max()) + 1
    ng_V = compute_ng_V(data) if hyper.baseline == "ng" else None
    normal_eta = None
    normal_sigma = None
    if hyper.baseline == "normal":
        normal_eta = np.sqrt(hyper.normalfull_eta_var) * g.standard_normal(p + 1)
        prior_scale = np.eye(p + 1) / hyper.normalfull_wishart_scale
        from .distributions import sample_wishart

        prec = sample_wishart(hyper.wishart_df(p), prior_scale, rng)
        normal_sigma = np.linalg.inv(prec)
        normal_sigma = 0.5 * (normal_sigma + normal_sigma.T)

    state = MixtureState(
        mu=np.zeros(0),
        beta=np.zeros((0, p)),
        m=np.zeros((0, p)),
        tau=np.zeros((0, p)),
        locals_=None,
        v=np.zeros(0),
        w=np.zeros(0),
        u=np.zeros(n),
        d=d,
        sigma2=sigma2,
        alpha=alpha,
        ng_V=ng_V,
        normal_eta=normal_eta,
        normal_sigma=normal_sigma,
    )
    mu, beta, m, tau, locals_ = draw_prior_block(n_cl, p, hyper, state, rng)
    state.mu, state.beta, state.m, state.tau, state.locals_ = mu, beta, m, tau, locals_

    v, w, u = weights_and_slices_for_labels(d, alpha, n_cl, rng, truncation_cap(n, alpha))
    state.v, state.w, state.u = v, w, u
    extra = len(v) - n_cl
    if extra > 0:
        _append_clusters(state, extra, p, hyper, rng)
    return state


def _append_clusters(
    state: MixtureState, k: int, p: int, hyper: Hyperparams, rng: RngStream
) -> None:
    """Grow the cluster arrays by k prior-drawn clusters."""
    mu, beta, m, tau, locals_ = draw_prior_block(k, p, hyper, state, rng)
    state.mu = np.concatenate([state.mu, mu])
    state.beta = np.vstack([state.beta, beta])
    state.m = np.vstack([state.m, m])
    state.tau = np.vstack([state.tau, tau])
    if isinstance(state.locals_, HsLocals):
        state.locals_ = HsLocals(
            np.vstack([state.locals_.gamma_sq, locals_.gamma_sq]),
            np.concatenate([state.locals_.zeta_sq, locals_.zeta_sq]),
            np.vstack([state.locals_.nu, locals_.nu]),
            np.concatenate([state.locals_.xi, locals_.xi]),
        )
    elif isinstance(state.locals_, NgLocals):
        state.locals_ = NgLocals(
            np.concatenate([state.locals_.lam, locals_.lam]),
            np.concatenate([state.locals_.gamma_inv2, locals_.gamma_inv2]),
            np.vstack([state.locals_.psi, locals_.psi]),
        )
