"""
Conjugate updates for the Dirichlet process mixture of MNIG distributions.

The complete-data likelihood of one component is an exponential family with
sufficient statistics

==========  ===========================================
``t0``      number of members
``t1``      :math:`\\sum x_i`
``t2``      :math:`\\sum u_i^{-1} x_i`
``t3``      :math:`\\sum u_i`
``t4``      :math:`\\sum u_i^{-1}`
``t5``      :math:`\\sum u_i^{-1} x_i x_i^T`
==========  ===========================================

so a prior with natural hyperparameters ``a0 .. a5`` is updated by adding the
statistics.  The hyperparameters are turned into a truncated normal for
``gamma``, a Wishart for the precision :math:`\\Sigma^{-1}` and a joint normal
for ``(mu, beta)`` whose precision is ``[[a4, a0], [a0, a3]] (x) Sigma^{-1}``.

The common hyperparameters in turn carry data-driven priors (``ThirdLayer``)
and are resampled from their conditional posteriors once per sweep.
"""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    ComponentParams,
    NotPositiveDefiniteError,
    sample_truncated_normal_positive,
    sample_wishart,
    sample_wishart_batch,
)

__all__ = [
    "CommonHyper",
    "DegenerateHyperError",
    "Diagnostics",
    "GroupHyper",
    "SufficientStats",
    "ThirdLayer",
    "compute_third_layer",
    "df_floor",
    "sample_a5",
    "sample_common_hypers",
    "sample_component_params",
    "sample_prior_batch",
    "sufficient_stats",
    "update_group_hypers",
    "wishart_df",
]


class DegenerateHyperError(ValueError):
    """``a3 * a4 - a0**2`` is not positive, so ``mu0``/``beta0`` are undefined."""


class Diagnostics(Counter):
    """Counts of floor and jitter events; keys are event names."""

    def flag(self, name, n=1):
        self[name] += n


def _regularize_spd(a, diag=None, name="jitter"):
    """Symmetrize ``a`` and add ``1e-8 * trace / d`` to the diagonal until it is SPD."""
    a = 0.5 * (a + a.T)
    d = a.shape[0]
    try:
        np.linalg.cholesky(a)
        return a
    except np.linalg.LinAlgError:
        pass
    scale = max(abs(np.trace(a)) / d, np.finfo(float).tiny)
    eps = 1e-8 * scale
    for _ in range(30):
        if diag is not None:
            diag.flag(name)
        a = a + eps * np.eye(d)
        try:
            np.linalg.cholesky(a)
            return a
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise NotPositiveDefiniteError("matrix could not be regularized to SPD")


@dataclass
class SufficientStats:
    t0: float
    t1: np.ndarray
    t2: np.ndarray
    t3: float
    t4: float
    t5: np.ndarray

    @classmethod
    def zeros(cls, d):
        return cls(0.0, np.zeros(d), np.zeros(d), 0.0, 0.0, np.zeros((d, d)))

    def __add__(self, other):
        return SufficientStats(
            self.t0 + other.t0,
            self.t1 + other.t1,
            self.t2 + other.t2,
            self.t3 + other.t3,
            self.t4 + other.t4,
            self.t5 + other.t5,
        )


def sufficient_stats(data, u, u_inv, members=None):
    """
    The six sums over ``members`` (all rows when ``None``).

    ``members`` may be an index array or a boolean mask.  An empty member set
    gives all-zero statistics.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if members is not None:
        data = data[members]
        u = np.asarray(u)[members]
        u_inv = np.asarray(u_inv)[members]
    u = np.asarray(u, dtype=float)
    u_inv = np.asarray(u_inv, dtype=float)
    if data.shape[0] == 0:
        return SufficientStats.zeros(data.shape[1])
    if np.any(u <= 0) or np.any(u_inv <= 0):
        raise ValueError("u and u_inv must be positive")
    wx = u_inv[:, None] * data
    return SufficientStats(
        t0=float(data.shape[0]),
        t1=data.sum(axis=0),
        t2=wx.sum(axis=0),
        t3=float(u.sum()),
        t4=float(u_inv.sum()),
        t5=wx.T @ data,
    )


def _solve_centres(a0, a1, a2, a3, a4):
    det = a3 * a4 - a0 * a0
    if not det > 0:
        raise DegenerateHyperError(f"a3*a4 - a0^2 = {det:.6g} is not positive")
    mu0 = (a3 * a2 - a0 * a1) / det
    beta0 = (a4 * a1 - a0 * a2) / det
    return mu0, beta0


def _centre_outer(mu0, beta0, tau_mu, tau_beta, tau_mubeta):
    mb = np.outer(mu0, beta0)
    return (tau_mu * np.outer(mu0, mu0) + tau_mubeta * (mb + mb.T)
            + tau_beta * np.outer(beta0, beta0))


@dataclass
class CommonHyper:
    """
    Hyperparameters ``a0 .. a5`` shared by every component's prior.

    The complete-data likelihood factorizes into a ``gamma`` part,
    ``exp(t0 gamma - t3 gamma^2 / 2)``, and a part in ``(mu, beta, Sigma)``.
    ``g0`` and ``g3`` are the natural parameters of the ``gamma`` factor of the
    prior; they default to ``a0`` and ``a3``, which ties the two factors
    together as in the fully natural conjugate prior.
    """

    a0: float
    a1: np.ndarray
    a2: np.ndarray
    a3: float
    a4: float
    a5: np.ndarray
    g0: float = None
    g3: float = None
    mu0: np.ndarray = field(init=False, repr=False)
    beta0: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.a0, self.a3, self.a4 = float(self.a0), float(self.a3), float(self.a4)
        self.g0 = self.a0 if self.g0 is None else float(self.g0)
        self.g3 = self.a3 if self.g3 is None else float(self.g3)
        if not (self.g0 > 0 and self.g3 > 0):
            raise ValueError("g0 and g3 must be positive")
        self.a1 = np.atleast_1d(np.asarray(self.a1, dtype=float))
        self.a2 = np.atleast_1d(np.asarray(self.a2, dtype=float))
        self.a5 = np.atleast_2d(np.asarray(self.a5, dtype=float))
        if not (self.a0 > 0 and self.a3 > 0 and self.a4 > 0):
            raise ValueError("a0, a3 and a4 must be positive")
        self.mu0, self.beta0 = _solve_centres(self.a0, self.a1, self.a2, self.a3, self.a4)

    @property
    def dim(self):
        return self.a1.shape[0]

    @property
    def tau_mu(self):
        return self.a4

    @property
    def tau_beta(self):
        return self.a3

    @property
    def tau_mubeta(self):
        return self.a0

    def centre_outer(self):
        return _centre_outer(self.mu0, self.beta0, self.a4, self.a3, self.a0)

    def as_dict(self):
        return {
            "a0": self.a0, "a1": self.a1.tolist(), "a2": self.a2.tolist(),
            "a3": self.a3, "a4": self.a4, "a5": self.a5.tolist(),
            "g0": self.g0, "g3": self.g3,
        }


@dataclass
class GroupHyper:
    """Posterior hyperparameters of one component and the quantities derived from them."""

    a0g: float
    a1g: np.ndarray
    a2g: np.ndarray
    a3g: float
    a4g: float
    a5g: np.ndarray
    mu0g: np.ndarray
    beta0g: np.ndarray
    v0g: np.ndarray
    g0g: float = None
    g3g: float = None

    def __post_init__(self):
        self.g0g = self.a0g if self.g0g is None else self.g0g
        self.g3g = self.a3g if self.g3g is None else self.g3g

    @property
    def tau_mu_g(self):
        return self.a4g

    @property
    def tau_beta_g(self):
        return self.a3g

    @property
    def tau_mubeta_g(self):
        return self.a0g


def update_group_hypers(common, stats, diag=None):
    """
    Add a component's sufficient statistics to the common hyperparameters.

    ``a_jg = a_j + t_j`` for ``j = 0..5``; then

    * ``mu0g = (a3g a2g - a0g a1g) / (a3g a4g - a0g^2)``
    * ``beta0g = (a4g a1g - a0g a2g) / (a3g a4g - a0g^2)``
    * ``V0g^{-1} = a5g + C(common) - C(group)`` where ``C`` is
      ``mu0 tau_mu mu0^T + mu0 tau_mubeta beta0^T + beta0 tau_mubeta mu0^T
      + beta0 tau_beta beta0^T``.

    Raises
    ------
    DegenerateHyperError
        If ``a3g a4g - a0g^2 <= 0``.
    """
    a0g = common.a0 + stats.t0
    a1g = common.a1 + stats.t1
    a2g = common.a2 + stats.t2
    a3g = common.a3 + stats.t3
    a4g = common.a4 + stats.t4
    a5g = common.a5 + stats.t5
    mu0g, beta0g = _solve_centres(a0g, a1g, a2g, a3g, a4g)
    v0_inv = a5g + common.centre_outer() - _centre_outer(mu0g, beta0g, a4g, a3g, a0g)
    v0_inv = _regularize_spd(v0_inv, diag, "v0_jitter")
    v0g = np.linalg.inv(v0_inv)
    v0g = _regularize_spd(v0g, diag, "v0_jitter")
    return GroupHyper(a0g, a1g, a2g, a3g, a4g, a5g, mu0g, beta0g, v0g,
                      common.g0 + stats.t0, common.g3 + stats.t3)


def _block_precision_draw(mu0, beta0, tau_mu, tau_beta, tau_mubeta, prec, rng):
    """
    Draw ``(mu, beta)`` with mean ``(mu0, beta0)`` and precision
    ``[[tau_mu, tau_mubeta], [tau_mubeta, tau_beta]] (x) prec``.

    With ``P2 = C C^T`` and ``prec = L L^T`` the Kronecker precision factors
    as ``(C (x) L)(C (x) L)^T``; the draw solves against that factor.
    """
    p2 = np.array([[tau_mu, tau_mubeta], [tau_mubeta, tau_beta]])
    c = np.linalg.cholesky(p2)
    low = np.linalg.cholesky(prec)
    z = rng.standard_normal((mu0.shape[0], 2))
    # (C (x) L)^T vec(X) = vec(Z)  <=>  L^T X C = Z  for column-major vec
    y = np.linalg.solve(low.T, z)
    x = np.linalg.solve(c.T, y.T).T
    return mu0 + x[:, 0], beta0 + x[:, 1]


def wishart_df(a0, d, exact=True):
    """
    Degrees of freedom of the marginal Wishart law of ``Sigma^{-1}``.

    Integrating ``(mu, beta)`` out of the conjugate density leaves
    ``|Sigma^{-1}|^{a0/2 - 1}``, i.e. ``a0 + d - 1`` degrees of freedom.
    ``exact=False`` returns ``a0`` itself; the two agree when ``d = 1``.
    """
    return a0 + d - 1.0 if exact else a0


def df_floor(d, exact=True):
    """
    Smallest Wishart degrees of freedom used, ``d + 0.1``.

    Valid Wishart laws only need ``df > d - 1``, but draws with ``df`` that low
    are numerically singular.  ``exact`` is accepted for symmetry with
    :func:`wishart_df`.
    """
    return d + 0.1


def sample_component_params(gh, rng, diag=None, exact_df=True):
    """
    One draw of ``(gamma, Sigma^{-1}, mu, beta)`` from a component posterior.

    ``gamma ~ N(g0g/g3g, 1/g3g) 1(gamma > 0)`` (``g = a`` for the tied prior),
    ``Sigma^{-1} ~ Wishart(wishart_df(a0g, d, exact_df), V0g)`` and
    ``(mu, beta) | Sigma^{-1}`` normal with block precision.  Degrees of
    freedom below ``d + 0.1`` are floored there (counted as ``df_floor``).
    """
    d = gh.a1g.shape[0]
    gamma = sample_truncated_normal_positive(gh.g0g / gh.g3g, 1.0 / gh.g3g, rng)
    df = wishart_df(gh.a0g, d, exact_df)
    if df < df_floor(d, exact_df):
        df = df_floor(d, exact_df)
        if diag is not None:
            diag.flag("df_floor")
    prec = sample_wishart(df, gh.v0g, rng)
    prec = _regularize_spd(prec, diag, "precision_jitter")
    mu, beta = _block_precision_draw(gh.mu0g, gh.beta0g, gh.a4g, gh.a3g, gh.a0g, prec, rng)
    return ComponentParams.from_precision(mu, beta, gamma, prec)


@dataclass
class PriorBatch:
    """A stack of ``m`` parameter draws in precision form."""

    gamma: np.ndarray
    mu: np.ndarray
    beta: np.ndarray
    precision: np.ndarray

    def __len__(self):
        return self.gamma.shape[0]

    def params(self, k):
        return ComponentParams.from_precision(
            self.mu[k], self.beta[k], self.gamma[k], self.precision[k]
        )


def sample_prior_batch(common, m, rng, diag=None, exact_df=True):
    """
    ``m`` independent draws of component parameters from the common prior.

    ``gamma ~ N(g0/g3, 1/g3) 1(gamma > 0)``,
    ``Sigma^{-1} ~ Wishart(wishart_df(a0, d, exact_df), a5^{-1})``,
    ``(mu, beta) | Sigma^{-1}`` normal with precision
    ``[[a4, a0], [a0, a3]] (x) Sigma^{-1}``.
    """
    d = common.dim
    gamma = sample_truncated_normal_positive(common.g0 / common.g3, 1.0 / common.g3, rng,
                                             size=m)
    df = wishart_df(common.a0, d, exact_df)
    if df < df_floor(d, exact_df):
        df = df_floor(d, exact_df)
        if diag is not None:
            diag.flag("df_floor")
    scale = _regularize_spd(np.linalg.inv(common.a5), diag, "a5_jitter")
    prec = sample_wishart_batch(np.full(m, df), np.linalg.cholesky(scale), rng)
    p2 = np.array([[common.a4, common.a0], [common.a0, common.a3]])
    c = np.linalg.cholesky(p2)
    try:
        low = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        prec = np.array([_regularize_spd(w, diag, "precision_jitter") for w in prec])
        low = np.linalg.cholesky(prec)
    z = rng.standard_normal((m, d, 2))
    y = np.linalg.solve(np.swapaxes(low, -1, -2), z)
    x = np.linalg.solve(c.T, np.swapaxes(y, -1, -2))
    x = np.swapaxes(x, -1, -2)
    mu = common.mu0 + x[:, :, 0]
    beta = common.beta0 + x[:, :, 1]
    return PriorBatch(np.atleast_1d(gamma), mu, beta, prec)


@dataclass
class ThirdLayer:
    """Data-driven constants of the hyperpriors on the common hyperparameters."""

    b0: float
    b3: float
    b4: float
    c1: np.ndarray
    bmat1: np.ndarray
    c2: np.ndarray
    bmat2: np.ndarray
    nu0: float
    lambda0: np.ndarray

    def as_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}


def compute_third_layer(data, u, u_inv, diag=None):
    """
    Hyperprior constants centred on the whole sample treated as one group.

    ``b0 = 1/N``, ``b3 = 1/sum(u)``, ``b4 = 1/sum(1/u)``, ``c1 = sum(x)``,
    ``B1 = cov(x)``, ``c2 = sum(x/u)``, ``B2 = cov(x/u)``, ``nu0 = d + 1`` and
    ``Lambda0 = B1 / nu0``.  Sample covariances use the ``N - 1`` divisor.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    if n < 2:
        raise ValueError("need at least two observations")
    u = np.asarray(u, dtype=float)
    u_inv = np.asarray(u_inv, dtype=float)
    wx = u_inv[:, None] * data
    b1 = _regularize_spd(np.atleast_2d(np.cov(data, rowvar=False)), diag, "cov_jitter")
    b2 = _regularize_spd(np.atleast_2d(np.cov(wx, rowvar=False)), diag, "cov_jitter")
    nu0 = d + 1.0
    return ThirdLayer(
        b0=1.0 / n,
        b3=1.0 / u.sum(),
        b4=1.0 / u_inv.sum(),
        c1=data.sum(axis=0),
        bmat1=b1,
        c2=wx.sum(axis=0),
        bmat2=b2,
        nu0=nu0,
        lambda0=b1 / nu0,
    )


def common_hyper_rates(params, weights, tl):
    """
    Exponential rates of the ``a0``, ``a3`` and ``a4`` conditionals, unfloored.

    * ``a0``: ``b0 - sum_g [gamma_g - mu_g' S_g^{-1} beta_g + log|S_g|^{-1/2} + log pi_g]``
    * ``a3``: ``b3 + 1/2 sum_g (beta_g' S_g^{-1} beta_g + gamma_g^2)``
    * ``a4``: ``b4 + 1/2 sum_g (mu_g' S_g^{-1} mu_g + 1)``
    """
    r0, r3, r4 = tl.b0, tl.b3, tl.b4
    for p, w in zip(params, weights):
        r0 -= p.gamma - p.mu @ p.sigma_inv @ p.beta - 0.5 * p.logdet + np.log(w)
        r3 += 0.5 * (p.beta @ p.sigma_inv @ p.beta + p.gamma**2)
        r4 += 0.5 * (p.mu @ p.sigma_inv @ p.mu + 1.0)
    return r0, r3, r4


def sample_common_hypers(params, weights, tl, rng, rate_floor=1e-6, diag=None):
    """
    One draw of the common hyperparameters from their conditional posteriors.

    ``a0``, ``a3``, ``a4`` are exponential with the rates of
    :func:`common_hyper_rates` (a rate below ``rate_floor`` is floored and
    counted as ``rate_floor``); ``a1 ~ N(c1 + B1 sum_g S_g^{-1} beta_g, B1)``;
    ``a2 ~ N(c2 + B2 sum_g S_g^{-1} mu_g, B2)``;
    ``a5 ~ Wishart(nu0 + G a0, (Lambda0^{-1} + sum_g S_g^{-1})^{-1})``.

    Parameters
    ----------
    params : sequence of ComponentParams
    weights : sequence of float
        Current mixing proportions, one per component.
    tl : ThirdLayer
    rng : numpy.random.Generator
    """
    if len(params) < 1 or len(params) != len(weights):
        raise ValueError("need one weight per component and at least one component")
    g = len(params)
    rates = list(common_hyper_rates(params, weights, tl))
    for k, r in enumerate(rates):
        if not r >= rate_floor:
            rates[k] = rate_floor
            if diag is not None:
                diag.flag("rate_floor")
    a0 = rng.exponential(1.0 / rates[0])
    a3 = rng.exponential(1.0 / rates[1])
    a4 = rng.exponential(1.0 / rates[2])
    sum_tb = sum(p.sigma_inv @ p.beta for p in params)
    sum_tm = sum(p.sigma_inv @ p.mu for p in params)
    a1 = rng.multivariate_normal(tl.c1 + tl.bmat1 @ sum_tb, tl.bmat1)
    a2 = rng.multivariate_normal(tl.c2 + tl.bmat2 @ sum_tm, tl.bmat2)
    a5 = sample_a5([p.sigma_inv for p in params], a0, tl, rng, diag)
    return CommonHyper(a0, a1, a2, a3, a4, a5)


def sample_a5(precisions, df0, tl, rng, diag=None):
    """
    Draw ``a5`` given the component precision matrices.

    With ``Sigma_g^{-1} ~ Wishart(df0, a5^{-1})`` and
    ``a5 ~ Wishart(nu0, Lambda0)`` the conditional is
    ``Wishart(nu0 + G df0, (Lambda0^{-1} + sum_g Sigma_g^{-1})^{-1})``.
    """
    g = len(precisions)
    scale = np.linalg.inv(np.linalg.inv(tl.lambda0) + sum(precisions))
    scale = _regularize_spd(scale, diag, "a5_jitter")
    return sample_wishart(tl.nu0 + g * df0, scale, rng)
