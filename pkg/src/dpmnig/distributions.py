"""
Densities, moments and random variates for the MNIG mixture model.

The multivariate normal-inverse Gaussian (MNIG) law is the normal mean-variance
mixture

.. math::
    X \\mid U = u \\sim N(\\mu + u\\beta,\\ u\\Sigma), \\qquad U \\sim IG(1, \\gamma),

where the inverse Gaussian mixing density is
:math:`f(u) = (2\\pi)^{-1/2} e^{\\gamma} u^{-3/2} \\exp\\{-(1/u + \\gamma^2 u)/2\\}`
(mean :math:`1/\\gamma`, variance :math:`1/\\gamma^3`).

All samplers take an explicit :class:`numpy.random.Generator`.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import log_ndtr, ndtri

from .specfun import log_bessel_k

__all__ = [
    "ComponentParams",
    "GigParams",
    "NotPositiveDefiniteError",
    "gig_expectations",
    "mnig_logpdf",
    "mnig_logpdf_batch",
    "mnig_mean_cov",
    "sample_ig",
    "sample_mnig",
    "sample_mvn_precision",
    "sample_truncated_normal_positive",
    "sample_wishart",
]

_LOG_PI = np.log(np.pi)
_LOG_2 = np.log(2.0)


class NotPositiveDefiniteError(ValueError):
    """A matrix that must be symmetric positive definite is not."""


def _cholesky(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    try:
        return np.linalg.cholesky(0.5 * (a + a.T))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from None


@dataclass(frozen=True, eq=False)
class ComponentParams:
    """
    Parameters of one MNIG component.

    ``sigma_inv``, ``alpha_star`` (:math:`\\sqrt{\\gamma^2 + \\beta^T\\Sigma^{-1}\\beta}`)
    and the Cholesky factor of ``sigma`` are computed once at construction.
    Use :meth:`from_precision` when the precision matrix is what you have.
    """

    mu: np.ndarray
    beta: np.ndarray
    gamma: float
    sigma: np.ndarray
    sigma_inv: np.ndarray = field(default=None, repr=False)
    alpha_star: float = field(init=False, repr=False)
    chol: np.ndarray = field(init=False, repr=False)
    logdet: float = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        d = mu.shape[0]
        if mu.ndim != 1 or beta.shape != (d,) or sigma.shape != (d, d):
            raise ValueError(
                f"dimension mismatch: mu {mu.shape}, beta {beta.shape}, sigma {sigma.shape}"
            )
        gamma = float(self.gamma)
        if not (np.isfinite(gamma) and gamma > 0):
            raise ValueError(f"gamma must be > 0, got {gamma}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(beta))):
            raise ValueError("mu and beta must be finite")
        chol = _cholesky(sigma, "sigma")
        sigma = 0.5 * (sigma + sigma.T)
        if self.sigma_inv is None:
            eye = np.eye(d)
            sigma_inv = cho_solve((chol, True), eye)
            sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
        else:
            sigma_inv = np.atleast_2d(np.asarray(self.sigma_inv, dtype=float))
        set_ = object.__setattr__
        set_(self, "mu", mu)
        set_(self, "beta", beta)
        set_(self, "gamma", gamma)
        set_(self, "sigma", sigma)
        set_(self, "sigma_inv", sigma_inv)
        set_(self, "chol", chol)
        set_(self, "logdet", 2.0 * np.sum(np.log(np.diag(chol))))
        set_(self, "alpha_star", float(np.sqrt(gamma**2 + beta @ sigma_inv @ beta)))

    @classmethod
    def from_precision(cls, mu, beta, gamma, precision):
        """Build from the precision matrix, inverting it once."""
        precision = np.atleast_2d(np.asarray(precision, dtype=float))
        lp = _cholesky(precision, "precision")
        sigma = cho_solve((lp, True), np.eye(precision.shape[0]))
        sigma = 0.5 * (sigma + sigma.T)
        return cls(mu, beta, gamma, sigma, sigma_inv=0.5 * (precision + precision.T))

    @property
    def dim(self):
        return self.mu.shape[0]

    def as_dict(self):
        return {
            "gamma": self.gamma,
            "mu": self.mu.tolist(),
            "beta": self.beta.tolist(),
            "sigma": self.sigma.tolist(),
        }


@dataclass(frozen=True)
class GigParams:
    """Generalized inverse Gaussian with density ``u**(lam-1) exp(-(chi/u + psi*u)/2)``."""

    lam: float
    chi: float
    psi: float

    def __post_init__(self):
        if not (np.all(np.asarray(self.chi) > 0) and np.all(np.asarray(self.psi) > 0)):
            raise ValueError(f"chi and psi must be > 0, got chi={self.chi}, psi={self.psi}")


def _mahalanobis_parts(x, p):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != p.dim:
        raise ValueError(f"x has dimension {x.shape[1]}, parameters have {p.dim}")
    diff = x - p.mu
    z = solve_triangular(p.chol, diff.T, lower=True)
    maha = np.sum(z * z, axis=0)
    lin = diff @ (p.sigma_inv @ p.beta)
    return single, maha, lin


def mnig_logpdf(x, p):
    """
    Log density of the MNIG distribution.

    .. math::
        \\ln f(x) = -\\tfrac{d-1}{2}\\ln 2 - \\tfrac12\\ln|\\Sigma|
        + \\tfrac{d+1}{2}(\\ln\\alpha - \\ln\\pi - \\ln q(x))
        + p(x) + \\ln K_{(d+1)/2}(\\alpha q(x))

    with :math:`p(x) = \\gamma + (x-\\mu)^T\\Sigma^{-1}\\beta` and
    :math:`q(x) = \\sqrt{1 + (x-\\mu)^T\\Sigma^{-1}(x-\\mu)}`.

    Parameters
    ----------
    x : array_like, shape (d,) or (n, d)
    p : ComponentParams

    Returns
    -------
    float or ndarray of shape (n,)
    """
    single, maha, lin = _mahalanobis_parts(x, p)
    d = p.dim
    q = np.sqrt(1.0 + maha)
    a = p.alpha_star
    order = 0.5 * (d + 1)
    out = (
        -0.5 * (d - 1) * _LOG_2
        - 0.5 * p.logdet
        + order * (np.log(a) - _LOG_PI - np.log(q))
        + p.gamma
        + lin
        + log_bessel_k(order, a * q)
    )
    return float(out[0]) if single else out


def mnig_logpdf_batch(x, mu, beta, gamma, precision):
    """
    MNIG log density for stacks of parameters given in precision form.

    All arguments broadcast over their leading axes: ``x``, ``mu`` and
    ``beta`` have trailing shape ``(d,)``, ``precision`` has ``(d, d)`` and
    ``gamma`` is scalar per entry.  Used to score many prior draws at once.
    """
    x = np.asarray(x, dtype=float)
    precision = np.asarray(precision, dtype=float)
    d = precision.shape[-1]
    diff = x - mu
    tb = np.einsum("...ij,...j->...i", precision, beta)
    maha = np.einsum("...i,...ij,...j->...", diff, precision, diff)
    lin = np.einsum("...i,...i->...", diff, tb)
    alpha = np.sqrt(gamma**2 + np.einsum("...i,...i->...", beta, tb))
    _, logdet_prec = np.linalg.slogdet(precision)
    q = np.sqrt(1.0 + maha)
    order = 0.5 * (d + 1)
    arg = alpha * q
    shape = arg.shape
    return (
        -0.5 * (d - 1) * _LOG_2
        + 0.5 * logdet_prec
        + order * (np.log(alpha) - _LOG_PI - np.log(q))
        + gamma
        + lin
        + log_bessel_k(order, arg.ravel()).reshape(shape)
    )


def mnig_mean_cov(p):
    """Mean ``mu + beta/gamma`` and covariance ``sigma/gamma + beta beta^T / gamma**3``."""
    mean = p.mu + p.beta / p.gamma
    cov = p.sigma / p.gamma + np.outer(p.beta, p.beta) / p.gamma**3
    return mean, cov


def gig_expectations(g):
    """
    Conditional moments ``E[U]`` and ``E[1/U]`` of a GIG variable.

    With :math:`\\omega = \\sqrt{\\chi\\psi}`,
    :math:`E[U] = \\sqrt{\\chi/\\psi}\\,K_{\\lambda+1}(\\omega)/K_\\lambda(\\omega)` and
    :math:`E[U^{-1}] = \\sqrt{\\psi/\\chi}\\,K_{\\lambda-1}(\\omega)/K_\\lambda(\\omega)`.
    ``chi`` and ``psi`` may be arrays of a common shape.
    """
    chi = np.asarray(g.chi, dtype=float)
    psi = np.asarray(g.psi, dtype=float)
    omega = np.sqrt(chi * psi)
    lam = float(g.lam)
    lk = log_bessel_k(abs(lam), omega)
    lk_up = log_bessel_k(abs(lam + 1.0), omega)
    lk_dn = log_bessel_k(abs(lam - 1.0), omega)
    half_log_ratio = 0.5 * (np.log(chi) - np.log(psi))
    e_u = np.exp(half_log_ratio + lk_up - lk)
    e_uinv = np.exp(-half_log_ratio + lk_dn - lk)
    if e_u.ndim == 0:
        return float(e_u), float(e_uinv)
    return e_u, e_uinv


def sample_ig(gamma, rng, size=None):
    """
    Draw from ``IG(1, gamma)``: inverse Gaussian with mean ``1/gamma`` and shape 1.

    Uses numpy's Wald generator (the transformation-with-multiple-roots method).
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(~(gamma > 0)):
        raise ValueError("gamma must be > 0")
    out = rng.wald(1.0 / gamma, 1.0, size=size)
    return float(out) if np.ndim(out) == 0 else out


def _tail_exponential_rejection(a, rng):
    """Standard normal conditioned on Z > a for large a (Robert, 1995)."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    todo = np.arange(a.size)
    rate = 0.5 * (a + np.sqrt(a * a + 4.0))
    while todo.size:
        z = a[todo] + rng.exponential(1.0 / rate[todo])
        accept = rng.random(todo.size) <= np.exp(-0.5 * (z - rate[todo]) ** 2)
        out[todo[accept]] = z[accept]
        todo = todo[~accept]
    return out


def sample_truncated_normal_positive(mean, variance, rng, size=None):
    """
    Draw from ``N(mean, variance)`` conditioned on being positive.

    Inverse-CDF sampling in the upper tail when ``P(X > 0) >= 1e-3``,
    exponential-proposal rejection otherwise.  ``mean`` and ``variance`` may
    be arrays; they broadcast against ``size``.
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(~(variance > 0)):
        raise ValueError("variance must be > 0")
    shape = np.broadcast_shapes(mean.shape, variance.shape, () if size is None else
                                (size if isinstance(size, tuple) else (size,)))
    sd = np.broadcast_to(np.sqrt(variance), shape).ravel()
    lower = np.broadcast_to(-mean / np.sqrt(variance), shape).ravel()
    log_mass = log_ndtr(-lower)
    z = np.empty(lower.shape)
    easy = log_mass >= np.log(1e-3)
    if easy.any():
        v = rng.random(int(easy.sum())) * np.exp(log_mass[easy])
        z[easy] = -ndtri(v)
    if (~easy).any():
        z[~easy] = _tail_exponential_rejection(lower[~easy], rng)
    # inverse-CDF rounding can leave a value a hair below the bound
    z = np.maximum(z, lower)
    out = (np.broadcast_to(mean, shape).ravel() + sd * z).reshape(shape)
    out = np.maximum(out, np.finfo(float).tiny)
    return float(out) if out.ndim == 0 else out


def sample_wishart(df, scale, rng):
    """
    Wishart draw with ``df`` degrees of freedom and scale matrix ``scale``.

    Bartlett construction: ``W = L A A^T L^T`` with ``L = chol(scale)``,
    ``A`` lower triangular, ``A_ii^2 ~ chi2(df - i)`` and standard normal
    entries below the diagonal.  ``E[W] = df * scale``.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    d = scale.shape[0]
    if not df > d - 1:
        raise ValueError(f"df must exceed d - 1 = {d - 1}, got {df}")
    lower = _cholesky(scale, "scale")
    a = np.tril(rng.standard_normal((d, d)), -1)
    a[np.diag_indices(d)] = np.sqrt(rng.chisquare(df - np.arange(d)))
    la = lower @ a
    w = la @ la.T
    return 0.5 * (w + w.T)


def sample_wishart_batch(df, scale_chol, rng):
    """
    Vectorized Wishart draws.

    Parameters
    ----------
    df : ndarray, shape (m,)
    scale_chol : ndarray, shape (m, d, d) or (d, d)
        Lower Cholesky factors of the scale matrices.
    """
    df = np.asarray(df, dtype=float)
    m = df.shape[0]
    d = scale_chol.shape[-1]
    a = np.tril(rng.standard_normal((m, d, d)), -1)
    idx = np.arange(d)
    a[:, idx, idx] = np.sqrt(rng.chisquare(df[:, None] - idx[None, :]))
    la = scale_chol @ a
    return la @ np.swapaxes(la, -1, -2)


def sample_mvn_precision(mean, precision, rng):
    """
    Multivariate normal draw parameterized by its precision matrix.

    With ``precision = L L^T`` the draw is ``mean + L^{-T} z``; the inverse is
    never formed.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    lower = _cholesky(precision, "precision")
    if lower.shape[0] != mean.shape[0]:
        raise ValueError("mean and precision dimensions differ")
    z = rng.standard_normal(mean.shape[0])
    return mean + solve_triangular(lower.T, z, lower=False)


def sample_mnig(p, rng, size=None):
    """
    Draw ``(x, u)`` through the mixture hierarchy.

    ``u ~ IG(1, gamma)`` then ``x | u ~ N(mu + u beta, u sigma)``.  With
    ``size`` given, returns arrays of shape ``(size, d)`` and ``(size,)``.
    """
    n = 1 if size is None else int(size)
    u = np.atleast_1d(sample_ig(p.gamma, rng, size=n))
    z = rng.standard_normal((n, p.dim))
    x = p.mu + u[:, None] * p.beta + np.sqrt(u)[:, None] * (z @ p.chol.T)
    if size is None:
        return x[0], float(u[0])
    return x, u
