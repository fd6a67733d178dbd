"""
Post-processing of relabeled posterior draws.

Components are matched across sweeps by their rank on the first coordinate of
``mu`` (the relabeling applied by :func:`dpmnig.sampler.run`); no other
matching is attempted.
"""

from dataclasses import dataclass, field

import numpy as np

from .distributions import ComponentParams

__all__ = [
    "FitResult",
    "PARAM_NAMES",
    "credible_intervals",
    "estimate_params",
    "fit",
    "map_allocation",
    "mc_standard_errors",
    "modal_g",
    "replicate_standard_errors",
    "summarize",
]

PARAM_NAMES = ("gamma", "mu", "beta", "sigma")
MIN_INTERVAL_SWEEPS = 40


@dataclass
class FitResult:
    """
    Summary of one run.

    Attributes
    ----------
    labels_map : ndarray of int, shape (N,)
        MAP component id per observation.
    g_hat : int
        Number of distinct ids in ``labels_map``.
    params_hat : list of ComponentParams
        Posterior means at the modal component count, in relabeled order.
    intervals : dict or None
        ``{name: (lower, upper)}`` at ``level``; ``None`` if too few sweeps
        had the modal component count.
    mc_se : dict
        Within-run Monte Carlo standard errors of ``params_hat`` (batch means).
    diagnostics : dict
    """

    labels_map: np.ndarray
    g_hat: int
    params_hat: list
    intervals: dict = None
    mc_se: dict = field(default_factory=dict)
    level: float = 0.95
    diagnostics: dict = field(default_factory=dict)


def _check_draws(draws):
    if draws is None or len(draws) == 0:
        raise ValueError("no posterior draws")


def modal_g(draws):
    """Most frequent component count over retained sweeps; ties go to the smaller count."""
    _check_draws(draws)
    values, counts = np.unique(draws.n_components, return_counts=True)
    return int(values[np.argmax(counts)])


def map_allocation(draws, sweeps="all"):
    """
    Most frequent relabeled component of each observation.

    Parameters
    ----------
    draws : PosteriorDraws
    sweeps : {"all", "modal"}
        Count over every retained sweep, or only over sweeps whose component
        count equals the modal one.

    Returns
    -------
    ndarray of int, shape (N,)
        Ties are broken towards the lowest id.
    """
    _check_draws(draws)
    labels = np.asarray(draws.labels)
    if sweeps == "modal":
        labels = labels[draws.n_components == modal_g(draws)]
    elif sweeps != "all":
        raise ValueError("sweeps must be 'all' or 'modal'")
    k = int(labels.max()) + 1
    counts = np.zeros((k, labels.shape[1]), dtype=np.int64)
    for g in range(k):
        counts[g] = (labels == g).sum(axis=0)
    # argmax returns the first maximum, i.e. the lowest id
    return counts.argmax(axis=0)


def _modal_stack(draws):
    g = modal_g(draws)
    keep = np.flatnonzero(draws.n_components == g)
    return {
        "gamma": np.array([draws.gamma[s] for s in keep]),
        "mu": np.array([draws.mu[s] for s in keep]),
        "beta": np.array([draws.beta[s] for s in keep]),
        "sigma": np.array([draws.sigma[s] for s in keep]),
    }


def estimate_params(draws):
    """
    Posterior means of every parameter over sweeps with the modal component count.

    Returns
    -------
    list of ComponentParams
        One entry per relabeled component.
    """
    _check_draws(draws)
    st = _modal_stack(draws)
    mean = {k: v.mean(axis=0) for k, v in st.items()}
    return [
        ComponentParams(mean["mu"][g], mean["beta"][g], mean["gamma"][g], mean["sigma"][g])
        for g in range(mean["gamma"].shape[0])
    ]


def credible_intervals(draws, level=0.95, min_sweeps=MIN_INTERVAL_SWEEPS):
    """
    Equal-tailed empirical intervals for every scalar parameter.

    Percentiles use linear interpolation between order statistics over the
    sweeps with the modal component count.

    Returns
    -------
    dict
        ``{name: (lower, upper)}`` with arrays shaped like the parameter stack
        of one sweep, e.g. ``(G, d)`` for ``mu``.

    Raises
    ------
    ValueError
        If ``level`` is outside (0, 1) or fewer than ``min_sweeps`` sweeps
        have the modal component count.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    _check_draws(draws)
    st = _modal_stack(draws)
    n = st["gamma"].shape[0]
    if n < min_sweeps:
        raise ValueError(f"only {n} sweeps at the modal component count; need {min_sweeps}")
    q = 100.0 * np.array([(1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0])
    out = {}
    for name, v in st.items():
        lo, hi = np.percentile(v, q, axis=0, method="linear")
        out[name] = (lo, hi)
    return out


def mc_standard_errors(draws, n_batches=20):
    """
    Batch-means Monte Carlo standard errors of the posterior means.

    This is the within-run error of ``estimate_params``; it says nothing about
    variability across datasets (see :func:`replicate_standard_errors`).
    """
    _check_draws(draws)
    st = _modal_stack(draws)
    n = st["gamma"].shape[0]
    b = min(n_batches, n)
    if b < 2:
        return {k: np.full(v.shape[1:], np.nan) for k, v in st.items()}
    out = {}
    for name, v in st.items():
        means = np.array([chunk.mean(axis=0) for chunk in np.array_split(v, b)])
        out[name] = means.std(axis=0, ddof=1) / np.sqrt(b)
    return out


def replicate_standard_errors(results):
    """
    Across-replicate standard deviations of point estimates.

    Only results whose ``g_hat`` equals the most common ``g_hat`` and whose
    estimate count matches it are used.
    """
    gs = [len(r.params_hat) for r in results]
    if not gs:
        raise ValueError("no results")
    values, counts = np.unique(gs, return_counts=True)
    g = int(values[np.argmax(counts)])
    use = [r for r in results if len(r.params_hat) == g]
    out = {}
    for name in PARAM_NAMES:
        stack = np.array([[getattr(p, name) for p in r.params_hat] for r in use])
        out[name] = stack.std(axis=0, ddof=1) if len(use) > 1 else np.full(stack.shape[1:], np.nan)
    return out


def summarize(draws, run_diag=None, level=0.95, map_sweeps="all"):
    """Build a :class:`FitResult` from relabeled draws."""
    labels = map_allocation(draws, map_sweeps)
    try:
        intervals = credible_intervals(draws, level)
    except ValueError:
        intervals = None
    diag = {"modal_g": modal_g(draws), "n_retained": len(draws)}
    if run_diag is not None:
        diag.update(converged=run_diag.converged, n_sweeps=run_diag.n_sweeps,
                    burn_in=run_diag.burn_in)
    return FitResult(
        labels_map=labels,
        g_hat=int(np.unique(labels).size),
        params_hat=estimate_params(draws),
        intervals=intervals,
        mc_se=mc_standard_errors(draws),
        level=level,
        diagnostics=diag,
    )


def fit(data, cfg=None, callback=None, level=0.95):
    """
    Run the sampler and summarize it.

    Returns
    -------
    (FitResult, PosteriorDraws, RunDiagnostics)
    """
    from .sampler import GibbsConfig, run

    cfg = GibbsConfig() if cfg is None else cfg
    draws, diag = run(data, cfg, callback)
    return summarize(draws, diag, level), draws, diag
