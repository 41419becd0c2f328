"""Synthetic mixture-of-regressions data generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InvalidParameterError
from .rng import RngStream

# Largest coefficient support size in the benchmark recipe (component 1).
_MAX_SUPPORT = 5


@dataclass(frozen=True)
class SimTruth:
    """Ground truth behind a simulated dataset."""

    d_true: np.ndarray  # (n,) 0-based component labels
    mu_true: np.ndarray  # (J,)
    beta_true: np.ndarray  # (J, p)
    m_true: np.ndarray  # (J, p)
    tau_true: np.ndarray  # (J, p)
    sigma2: float

    @property
    def J(self) -> int:
        return len(self.mu_true)

    def beta_per_obs(self) -> np.ndarray:
        return self.beta_true[self.d_true]


def benchmark_components(p: int, J: int):
    """(mu, beta, m, tau) for the equal-weight benchmark recipe.

    Component j (1-based): covariate means 2j in every coordinate, unit
    covariate variances, intercept 10 - 2(j-1) for j <= 5 else 10 - 2j, and
    slopes equal to 3 on the first 6-j coordinates for j <= 5 else -3 on the
    first j-5 coordinates.
    """
    if J > 10:
        raise InvalidParameterError(f"components are defined up to J = 10, got {J}")
    if p < _MAX_SUPPORT:
        raise InvalidParameterError(
            f"need p >= {_MAX_SUPPORT} to fit the largest coefficient support, got {p}"
        )
    mu = np.empty(J)
    beta = np.zeros((J, p))
    m = np.empty((J, p))
    for idx in range(J):
        j = idx + 1
        mu[idx] = 10.0 - 2.0 * (j - 1) if j <= 5 else 10.0 - 2.0 * j
        if j <= 5:
            beta[idx, : 6 - j] = 3.0
        else:
            beta[idx, : j - 5] = -3.0
        m[idx] = 2.0 * j
    tau = np.ones((J, p))
    return mu, beta, m, tau


def generate_paper_dataset(n: int, p: int, J: int, seed) -> tuple[Dataset, SimTruth]:
    """Simulate the benchmark mixture: uniform labels, Gaussian covariates
    around component means, linear response with unit noise variance."""
    mu, beta, m, tau = benchmark_components(p, J)
    return _sample_mixture(n, mu, beta, m, tau, 1.0, seed)


def generate_generic_mixture(
    components: dict, n: int, seed
) -> tuple[Dataset, SimTruth]:
    """Simulate from explicit components.

    ``components`` maps: mu (J,), beta (J, p), m (J, p), tau (J, p),
    sigma2 scalar. Labels are uniform over components.
    """
    try:
        mu = np.asarray(components["mu"], dtype=float)
        beta = np.atleast_2d(np.asarray(components["beta"], dtype=float))
        m = np.atleast_2d(np.asarray(components["m"], dtype=float))
        tau = np.atleast_2d(np.asarray(components["tau"], dtype=float))
        sigma2 = float(components["sigma2"])
    except (KeyError, TypeError) as exc:
        raise InvalidParameterError(f"invalid component spec: {exc}") from None
    J = len(mu)
    if not (beta.shape[0] == m.shape[0] == tau.shape[0] == J):
        raise InvalidParameterError("component arrays disagree on J")
    if not (beta.shape[1] == m.shape[1] == tau.shape[1]):
        raise InvalidParameterError("component arrays disagree on p")
    if sigma2 <= 0 or np.any(tau <= 0):
        raise InvalidParameterError("variances must be positive")
    return _sample_mixture(n, mu, beta, m, tau, sigma2, seed)


def _sample_mixture(n, mu, beta, m, tau, sigma2, seed):
    rng = seed if isinstance(seed, RngStream) else RngStream(seed)
    g = rng.gen
    J, p = beta.shape
    d = g.integers(0, J, size=n)
    X = m[d] + np.sqrt(tau[d]) * g.standard_normal((n, p))
    y = mu[d] + np.einsum("ij,ij->i", X, beta[d]) + np.sqrt(sigma2) * g.standard_normal(n)
    names = [f"x{l + 1}" for l in range(p)]
    data = Dataset(y, X, column_names=names)
    truth = SimTruth(d, mu.copy(), beta.copy(), m.copy(), tau.copy(), float(sigma2))
    return data, truth


def generate_train_test(n: int, p: int, J: int, seed: int, n_test: int = 100):
    """Paired benchmark train/test sets with decoupled substreams."""
    master = RngStream(seed)
    train = generate_paper_dataset(n, p, J, master.substream(0))
    test = generate_paper_dataset(n_test, p, J, master.substream(1))
    return train, test
