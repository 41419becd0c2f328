"""Random variate generators and log densities used by the samplers.

Conventions (fixed once, used everywhere):

* ``Gamma(shape, scale)``: density proportional to ``x**(shape-1) * exp(-x/scale)``,
  mean ``shape * scale``.
* ``InverseGamma(shape, igscale)``: density proportional to
  ``x**(-shape-1) * exp(-igscale/x)``; the reciprocal is Gamma with rate
  ``igscale``.
* ``GIG(h, c, d)``: density proportional to ``x**(h-1) * exp(-(c*x + d/x)/2)``
  on x > 0.
* ``Wishart(df, V)``: mean ``df * V``.

All generators take an :class:`~dpmshrink.rng.RngStream` and are pure given
its state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.special import gammaln

from .errors import InvalidParameterError, NumericalError, SliceSamplerError
from .rng import RngStream

LOG_2PI = float(np.log(2.0 * np.pi))

# Positivity floor for degenerate GIG arguments (exactly-zero coefficients).
GIG_FLOOR = 1e-300


def _as_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0):
        raise InvalidParameterError(f"{name} must be strictly positive, got {x!r}")
    return arr


def sample_normal(mean, variance, rng: RngStream):
    """Draw from N(mean, variance). Broadcasts over array arguments."""
    var = _as_positive(variance, "variance")
    mean = np.asarray(mean, dtype=float)
    shape = np.broadcast_shapes(mean.shape, var.shape)
    out = mean + np.sqrt(var) * rng.gen.standard_normal(shape)
    return float(out) if out.shape == () else out


def sample_gamma(shape, scale, rng: RngStream):
    """Gamma(shape, scale) draw with mean shape*scale."""
    shp = _as_positive(shape, "shape")
    scl = _as_positive(scale, "scale")
    out = rng.gen.gamma(shp, scl)
    return float(out) if np.isscalar(out) or np.asarray(out).shape == () else out


def sample_inverse_gamma(shape, igscale, rng: RngStream):
    """InverseGamma(shape, igscale) draw; 1/X is Gamma(shape, rate=igscale)."""
    shp = _as_positive(shape, "shape")
    scl = _as_positive(igscale, "igscale")
    g = rng.gen.gamma(shp, 1.0 / scl)
    out = 1.0 / np.maximum(g, 1e-300)
    return float(out) if np.asarray(out).shape == () else out


def sample_beta(a, b, rng: RngStream):
    """Beta(a, b) draw."""
    av = _as_positive(a, "a")
    bv = _as_positive(b, "b")
    out = rng.gen.beta(av, bv)
    return float(out) if np.asarray(out).shape == () else out


def sample_mvn_from_precision_system(A, b, scale, rng: RngStream):
    """One draw from N(A^{-1} b, scale * A^{-1}) without forming A^{-1}.

    A is factored once (Cholesky); the mean solves the linear system and the
    correlated noise is a triangular back-solve of a standard normal vector.
    Raises :class:`NumericalError` with a condition diagnostic if A is not
    positive definite even after a light jitter retry.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if scale <= 0:
        raise InvalidParameterError(f"scale must be positive, got {scale}")
    diag_scale = float(np.max(np.abs(np.diag(A)))) or 1.0
    jitter = 0.0
    for attempt in range(4):
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))
            break
        except np.linalg.LinAlgError:
            jitter = diag_scale * 10.0 ** (-14 + 4 * attempt)
    else:
        cond = float(np.linalg.cond(A))
        raise NumericalError(
            f"precision matrix is not positive definite (cond={cond:.3e})"
        )
    half = sla.solve_triangular(L, b, lower=True)
    mean = sla.solve_triangular(L.T, half, lower=False)
    z = rng.gen.standard_normal(A.shape[0])
    noise = sla.solve_triangular(L.T, z, lower=False)
    return mean + np.sqrt(scale) * noise


def sample_wishart(df, scale_mat, rng: RngStream):
    """Wishart draw via the Bartlett decomposition; E[W] = df * scale_mat."""
    V = np.asarray(scale_mat, dtype=float)
    dim = V.shape[0]
    if df < dim:
        raise InvalidParameterError(f"df ({df}) must be >= dimension ({dim})")
    L = np.linalg.cholesky(V)
    A = np.zeros((dim, dim))
    for i in range(dim):
        A[i, i] = np.sqrt(rng.gen.chisquare(df - i))
    idx = np.tril_indices(dim, -1)
    A[idx] = rng.gen.standard_normal(len(idx[0]))
    LA = L @ A
    return LA @ LA.T


@dataclass(frozen=True)
class GigParams:
    """Parameters of GIG(h, c, d): order h, linear coefficient c, reciprocal d."""

    h: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.c > 0 and self.d > 0):
            raise InvalidParameterError(
                f"GIG requires c > 0 and d > 0, got c={self.c}, d={self.d}"
            )


def sample_gig(params: GigParams, rng: RngStream) -> float:
    """One draw from GIG(h, c, d)."""
    return float(sample_gig_many(params.h, params.c, params.d, rng))


def sample_gig_many(h, c, d, rng: RngStream, size=None):
    """Vectorized GIG(h, c, d) draws.

    Works in log space, where the density ``exp(h*y - b*cosh(y))`` (after
    standardizing by ``sqrt(d/c)``, with ``b = sqrt(c*d)``) is log-concave for
    every order ``h``. Rejection sampling from a three-piece hat (flat top
    between the points where the log density drops by one, tangent
    exponential tails beyond) then covers all parameter regimes, including
    the near-degenerate ``sqrt(c*d) -> 0`` limits, at ~1.3 proposals per
    draw.
    """
    h = np.asarray(h, dtype=float)
    c = _as_positive(c, "c")
    d = _as_positive(d, "d")
    extra = () if size is None else ((size,),)
    shape = np.broadcast_shapes(h.shape, c.shape, d.shape, *extra)
    p = np.broadcast_to(h, shape).astype(float).ravel()
    cc = np.broadcast_to(c, shape).astype(float).ravel()
    dd = np.broadcast_to(d, shape).astype(float).ravel()
    with np.errstate(over="ignore", under="ignore"):
        b = np.maximum(np.sqrt(cc * dd), GIG_FLOOR)
        log_scale = 0.5 * (np.log(dd) - np.log(cc))
        t = p / b
        y0 = np.arcsinh(t)
        cosh0 = np.sqrt(1.0 + t * t)

        def log_rel(y):
            # log density in y-space relative to its value at the mode
            return p * (y - y0) - b * (np.cosh(y) - cosh0)

        def drop_point(sign):
            # locate h(y) = -1 on the requested side of the mode
            step = np.ones_like(p)
            y = y0 + sign * step
            for _ in range(200):
                inside = log_rel(y) > -1.0
                if not inside.any():
                    break
                step = np.where(inside, step * 2.0, step)
                y = y0 + sign * step
            lo = np.where(sign > 0, y0, y)
            hi = np.where(sign > 0, y, y0)
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                inside = log_rel(mid) > -1.0
                if sign > 0:
                    lo = np.where(inside, mid, lo)
                    hi = np.where(inside, hi, mid)
                else:
                    hi = np.where(inside, mid, hi)
                    lo = np.where(inside, lo, mid)
            return 0.5 * (lo + hi)

        yr = drop_point(+1.0)
        yl = drop_point(-1.0)
        rate_l = p - b * np.sinh(yl)
        rate_r = b * np.sinh(yr) - p
        inv_e = np.exp(-1.0)
        mass_l = inv_e / rate_l
        mass_r = inv_e / rate_r
        mass_m = yr - yl
        total = mass_l + mass_m + mass_r

        out = np.empty_like(p)
        todo = np.arange(p.size)
        for _round in range(1000):
            if todo.size == 0:
                break
            uu = rng.gen.random(todo.size) * total[todo]
            vv = rng.gen.random(todo.size)
            ylt, yrt = yl[todo], yr[todo]
            rlt, rrt = rate_l[todo], rate_r[todo]
            mmt, mlt = mass_m[todo], mass_l[todo]
            in_mid = uu < mmt
            in_left = (~in_mid) & (uu < mmt + mlt)
            ua = np.clip((uu - mmt) * rlt * np.e, 1e-320, None)
            ub = np.clip(1.0 - (uu - mmt - mlt) * rrt * np.e, 1e-320, None)
            y = np.where(
                in_mid,
                ylt + uu,
                np.where(in_left, ylt + np.log(ua) / rlt, yrt - np.log(ub) / rrt),
            )
            log_hat = np.where(
                y < ylt,
                -1.0 + rlt * (y - ylt),
                np.where(y > yrt, -1.0 - rrt * (y - yrt), 0.0),
            )
            hy = p[todo] * (y - y0[todo]) - b[todo] * (np.cosh(y) - cosh0[todo])
            accept = np.log(vv) <= hy - log_hat
            out[todo[accept]] = y[accept]
            todo = todo[~accept]
        else:  # pragma: no cover
            raise NumericalError("GIG rejection sampler failed to terminate")
        result = np.exp(out + log_scale).reshape(shape)
    result = np.maximum(result, GIG_FLOOR)
    return float(result) if result.shape == () else result


def slice_sample_step(
    log_density, x0: float, width: float, max_stepout: int, rng: RngStream
) -> float:
    """One stepping-out/shrinkage slice sampling transition.

    Leaves ``exp(log_density)`` invariant. Domain constraints are expressed by
    returning ``-inf`` outside the support. ``max_stepout`` bounds the total
    number of width-sized interval expansions (the budget is randomly split
    between the two sides, which keeps the limited expansion reversible).
    """
    if width <= 0:
        raise InvalidParameterError(f"width must be positive, got {width}")
    f0 = log_density(x0)
    if not np.isfinite(f0):
        raise InvalidParameterError(
            f"log density must be finite at the current point, got {f0} at {x0}"
        )
    g = rng.gen
    log_y = f0 - g.standard_exponential()
    left = x0 - width * g.random()
    right = left + width
    j = int(np.floor(max_stepout * g.random()))
    k = max_stepout - 1 - j
    while j > 0 and log_y < log_density(left):
        left -= width
        j -= 1
    while k > 0 and log_y < log_density(right):
        right += width
        k -= 1
    for _ in range(10_000):
        x1 = left + (right - left) * g.random()
        if log_y < log_density(x1):
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    raise SliceSamplerError(
        f"shrinkage failed to accept: x0={x0}, log_y={log_y}, "
        f"interval=({left}, {right}), width={width}"
    )


def log_normal_pdf(x, mean, variance):
    """Log density of N(mean, variance), broadcasting."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(variance) + (x - mean) ** 2 / variance)


def log_student_t_pdf(x, df, loc, scale):
    """Log density of the location-scale Student-t distribution."""
    if df <= 0 or scale <= 0:
        raise InvalidParameterError(f"df and scale must be positive, got {df}, {scale}")
    z = (np.asarray(x, dtype=float) - loc) / scale
    return (
        gammaln((df + 1.0) / 2.0)
        - gammaln(df / 2.0)
        - 0.5 * np.log(df * np.pi)
        - np.log(scale)
        - (df + 1.0) / 2.0 * np.log1p(z * z / df)
    )
