"""
Log-space modified Bessel function of the second kind.

``log_bessel_k(nu, x)`` returns :math:`\\ln K_\\nu(x)` for a scalar order
:math:`\\nu \\ge 0` and a scalar or array argument :math:`x > 0`.  The value is
never formed in linear space, so arguments where :math:`K_\\nu(x)` over- or
underflows double precision are handled.

Two routes are used:

* half-integer orders, :math:`\\nu = n + 1/2`, use the terminating sum

  .. math::
      K_{n+1/2}(x) = \\sqrt{\\frac{\\pi}{2x}} e^{-x}
      \\sum_{k=0}^{n} \\frac{(n+k)!}{k!\\,(n-k)!\\,(2x)^k}

  evaluated with a log-sum-exp;
* every other order goes through Temme's method: :math:`K_\\mu` and
  :math:`K_{\\mu+1}` with :math:`|\\mu| \\le 1/2` from Temme's series when
  :math:`x < 2` and from Steed's continued fraction otherwise, followed by
  forward recurrence on the ratio :math:`K_{\\mu+k+1}/K_{\\mu+k}`.

Negative orders are not accepted.  Callers needing :math:`K_{-\\nu}` use the
reflection :math:`K_{-\\nu}(x) = K_\\nu(x)` and pass ``abs(nu)``.
"""

import numpy as np
from scipy.special import gammaln

__all__ = ["BesselDomainError", "log_bessel_k", "log_bessel_k_temme"]

_EPS = 1e-16
_MAX_ITER = 10000
_SERIES_CROSSOVER = 2.0

# Taylor coefficients of 1/Gamma(1 + z) about z = 0.
_RGAMMA1P = np.array([
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
])


class BesselDomainError(ValueError):
    """Raised for an order or argument outside the supported domain."""


def _check_args(nu, x):
    nu = float(nu)
    if not np.isfinite(nu) or nu < 0.0:
        raise BesselDomainError(f"order must be finite and >= 0, got {nu!r}")
    x = np.asarray(x, dtype=float)
    if x.size and not (np.all(np.isfinite(x)) and np.all(x > 0.0)):
        raise BesselDomainError("argument must be finite and > 0")
    return nu, x


def _temme_gammas(mu):
    """Return (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)) for |mu| <= 1/2."""
    powers = mu ** np.arange(_RGAMMA1P.size)
    odd = _RGAMMA1P[1::2] * powers[0::2][: _RGAMMA1P[1::2].size]
    gam1 = -np.sum(odd)
    gam2 = np.sum(_RGAMMA1P[0::2] * powers[0::2])
    gampl = np.sum(_RGAMMA1P * powers)
    signs = np.where(np.arange(_RGAMMA1P.size) % 2 == 0, 1.0, -1.0)
    gammi = np.sum(_RGAMMA1P * powers * signs)
    return gam1, gam2, gampl, gammi


def _log_k_pair_series(mu, x):
    """Temme's series for ln K_mu(x), ln K_{mu+1}(x); valid for x < 2."""
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    x2 = 0.5 * x
    pimu = np.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / np.sin(pimu)
    d = -np.log(x2)
    e = mu * d
    fact2 = np.where(np.abs(e) < _EPS, 1.0, np.sinh(e) / np.where(e == 0.0, 1.0, e))
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.copy()
    e = np.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = np.ones_like(x)
    dd = x2 * x2
    total1 = p.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAX_ITER):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c = c * dd / i
        p = p / (i - mu)
        q = q / (i + mu)
        delta = c * ff
        total = np.where(active, total + delta, total)
        total1 = np.where(active, total1 + c * (p - i * ff), total1)
        active &= np.abs(delta) >= np.abs(total) * _EPS
        if not active.any():
            break
    log_kmu = np.log(total)
    log_kmu1 = np.log(total1) + np.log(2.0 / x)
    return log_kmu, log_kmu1


def _log_k_pair_cf2(mu, x):
    """Steed's continued fraction for ln K_mu(x), ln K_{mu+1}(x); x >= 2."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25 - mu * mu
    q = np.full_like(x, a1)
    c = a1
    a = -a1
    s = 1.0 + q * delh
    active = np.ones(x.shape, dtype=bool)
    for i in range(2, _MAX_ITER):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = np.where(active, h + delh, h)
        dels = q * delh
        s = np.where(active, s + dels, s)
        active &= np.abs(dels / s) >= _EPS
        if not active.any():
            break
    log_kmu = 0.5 * np.log(np.pi / (2.0 * x)) - x - np.log(s)
    log_kmu1 = log_kmu + np.log((mu + x + 0.5 - a1 * h) / x)
    return log_kmu, log_kmu1


def log_bessel_k_temme(nu, x):
    """
    ``ln K_nu(x)`` through Temme's method for any real order ``nu >= 0``.

    This is the general route used by :func:`log_bessel_k` for orders that
    are not half-integers.  It is exposed so the two routes can be checked
    against each other.
    """
    nu, x = _check_args(nu, x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    n = int(nu + 0.5)
    mu = nu - n
    out = np.empty_like(x)
    small = x < _SERIES_CROSSOVER
    log_k = np.empty_like(x)
    log_k1 = np.empty_like(x)
    if small.any():
        log_k[small], log_k1[small] = _log_k_pair_series(mu, x[small])
    if (~small).any():
        log_k[~small], log_k1[~small] = _log_k_pair_cf2(mu, x[~small])
    # ratio r_k = K_{mu+k+1} / K_{mu+k} obeys r_k = 1 / r_{k-1} + 2 (mu + k) / x
    out[:] = log_k
    if n > 0:
        ratio = np.exp(log_k1 - log_k)
        out += np.log(ratio)
        for k in range(1, n):
            ratio = 1.0 / ratio + 2.0 * (mu + k) / x
            out += np.log(ratio)
    return float(out[0]) if scalar else out


def _log_bessel_k_half(n, x):
    k = np.arange(n + 1, dtype=float)
    log_coef = gammaln(n + k + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    terms = log_coef[:, None] - k[:, None] * np.log(2.0 * x)[None, :]
    top = terms.max(axis=0)
    log_sum = top + np.log(np.exp(terms - top).sum(axis=0))
    return 0.5 * np.log(np.pi / (2.0 * x)) - x + log_sum


def log_bessel_k(nu, x):
    """
    Natural log of the modified Bessel function of the second kind.

    Parameters
    ----------
    nu : float
        Order, ``nu >= 0``.  Use ``abs(nu)`` for negative orders.
    x : float or ndarray
        Argument(s), finite and strictly positive.

    Returns
    -------
    float or ndarray
        ``ln K_nu(x)``, same shape as ``x``.

    Raises
    ------
    BesselDomainError
        If ``nu`` is negative or not finite, or any ``x`` is not a finite
        positive number.

    Examples
    --------
    >>> round(log_bessel_k(0.5, 1.0), 6)
    -0.774219
    """
    nu, x = _check_args(nu, x)
    twice = 2.0 * nu
    if twice == np.floor(twice) and int(twice) % 2 == 1:
        scalar = x.ndim == 0
        out = _log_bessel_k_half(int(nu - 0.5), np.atleast_1d(x))
        return float(out[0]) if scalar else out
    return log_bessel_k_temme(nu, x)
