"""
Marginal Gibbs sampler for the Dirichlet process mixture of MNIG distributions.

One sweep performs

1. Polya-urn label updates, one observation at a time.  The weight of a live
   component is ``n_{-i,g} f(x_i | theta_g)``.  The weight of a new component is
   ``alpha`` times a Monte Carlo average of ``f(x_i | theta)`` over fresh prior
   draws.  All weights are handled in log space.
2. Parameter updates: empirical mixing proportions, latent ``u`` at its
   conditional expectation (or a GIG draw), group hyperparameters, component
   parameters and, depending on ``hyper_update``, the common hyperparameters.

Three chains are started from one group, from singletons and from a random
number of groups.  They run in lockstep until the potential scale reduction
factor of their log-likelihood traces falls below the threshold, and then
``post_samples`` further sweeps are kept from each.
"""

import dataclasses
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import geninvgauss

from .distributions import ComponentParams, gig_expectations, GigParams, mnig_logpdf_batch, sample_wishart_batch
from .model import (
    CommonHyper,
    DegenerateHyperError,
    Diagnostics,
    _regularize_spd,
    compute_third_layer,
    sample_a5,
    sample_common_hypers,
    sample_component_params,
    sample_prior_batch,
    sufficient_stats,
    df_floor,
    update_group_hypers,
    wishart_df,
)

__all__ = [
    "ChainState",
    "GibbsConfig",
    "INIT_MODES",
    "PosteriorDraws",
    "RunDiagnostics",
    "gibbs_sweep",
    "init_chain",
    "initial_common",
    "log_likelihood",
    "psrf",
    "run",
    "update_labels",
    "update_latent",
]

INIT_MODES = ("single", "singleton", "random_k")
_N_INIT_DRAWS = 10000
PRIOR_WEIGHT = 0.01


@dataclass(frozen=True)
class GibbsConfig:
    """
    Sampler settings.

    ``hyper_update`` selects how the common hyperparameters evolve:

    * ``"hybrid"`` (default) starts from the data-driven values, rescales the
      ``(mu, beta)`` block to ``prior_weight`` pseudo-observations and redraws
      the Wishart scale ``a5`` every sweep;
    * ``"fixed"`` keeps the rescaled starting values;
    * ``"full"`` redraws all of them every sweep from the conditionals of
      :func:`dpmnig.model.sample_common_hypers` at whole-sample scale.

    Outside ``"full"`` mode the prior of ``gamma`` keeps its whole-sample
    centring, multiplied by ``gamma_prior_weight``.  ``prior_weight = 0``
    selects ``PRIOR_WEIGHT``.
    """

    alpha: float = 1.0
    mc_new_cluster: int = 10
    psrf_threshold: float = 1.1
    post_samples: int = 400
    burn_in_min: int = 200
    max_iter: int = 3000
    seed: int = 0
    rate_floor: float = 1e-6
    sample_u: bool = False
    sweep_order: str = "data"
    psrf_every: int = 10
    hyper_update: str = "hybrid"
    prior_weight: float = 0.0
    gamma_prior_weight: float = 1.0
    exact_df: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.mc_new_cluster < 1:
            raise ValueError("mc_new_cluster must be >= 1")
        if not self.psrf_threshold > 1:
            raise ValueError("psrf_threshold must be > 1")
        if self.post_samples < 1:
            raise ValueError("post_samples must be >= 1")
        if self.burn_in_min < 0 or self.max_iter < 1 or self.psrf_every < 1:
            raise ValueError("burn_in_min, max_iter and psrf_every must be nonnegative/positive")
        if not self.rate_floor > 0:
            raise ValueError("rate_floor must be > 0")
        if self.sweep_order not in ("data", "random"):
            raise ValueError("sweep_order must be 'data' or 'random'")
        if self.hyper_update not in ("hybrid", "fixed", "full"):
            raise ValueError("hyper_update must be 'hybrid', 'fixed' or 'full'")
        if self.prior_weight < 0:
            raise ValueError("prior_weight must be >= 0 (0 selects the default)")
        if not self.gamma_prior_weight > 0:
            raise ValueError("gamma_prior_weight must be > 0")

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class Component:
    params: ComponentParams
    hyper: object = None


@dataclass
class ChainState:
    """
    Mutable state of one chain.

    ``components`` maps a component id to its parameters and (after the first
    parameter update) group hyperparameters.  Ids are never reused within a
    chain.  ``weights`` holds the empirical proportions set in the last
    parameter update.
    """

    data: np.ndarray
    labels: np.ndarray
    u: np.ndarray
    u_inv: np.ndarray
    components: dict
    common: CommonHyper
    third: object
    loglik_trace: list = field(default_factory=list)
    iteration: int = 0
    next_id: int = 0
    weights: dict = field(default_factory=dict)
    diag: Diagnostics = field(default_factory=Diagnostics)
    mode: str = "single"
    # log f(x_i | theta_g) columns ordered as components, reused by the next label update
    _cache: tuple = field(default=None, repr=False)

    @property
    def n_components(self):
        return len(self.components)

    def counts(self):
        ids, n = np.unique(self.labels, return_counts=True)
        return dict(zip(ids.tolist(), n.tolist()))


@dataclass
class PosteriorDraws:
    """
    Retained sweeps, relabeled so that components are ordered by ascending
    first coordinate of ``mu``.

    Attributes
    ----------
    labels : ndarray, shape (S, N)
        Relabeled component index per observation per sweep.
    n_components : ndarray, shape (S,)
    chain : ndarray, shape (S,)
    mu, beta, sigma, gamma : list of ndarray
        Per-sweep arrays of shape ``(G_s, d)``, ``(G_s, d)``, ``(G_s, d, d)``
        and ``(G_s,)``.
    """

    labels: np.ndarray
    n_components: np.ndarray
    chain: np.ndarray
    mu: list
    beta: list
    sigma: list
    gamma: list

    def __len__(self):
        return self.labels.shape[0]


@dataclass
class RunDiagnostics:
    converged: bool
    n_sweeps: int
    burn_in: int
    psrf_trace: list
    diag: list
    loglik_traces: list
    sweep_records: list = field(default_factory=list, repr=False)


def _mahalanobis_and_lin(x, p):
    diff = x - p.mu
    maha = np.einsum("ij,jk,ik->i", diff, p.sigma_inv, diff)
    return maha


def _stack(params):
    mu = np.array([p.mu for p in params])
    beta = np.array([p.beta for p in params])
    gamma = np.array([p.gamma for p in params])
    prec = np.array([p.sigma_inv for p in params])
    return mu, beta, gamma, prec


def _logpdf_matrix(data, params):
    """``log f(x_i | theta_g)`` for every observation and component, shape (N, G)."""
    mu, beta, gamma, prec = _stack(params)
    return mnig_logpdf_batch(data[:, None, :], mu[None], beta[None], gamma[None], prec[None])


def _latent_moments(data, p):
    d = data.shape[1]
    chi = 1.0 + _mahalanobis_and_lin(data, p)
    psi = np.full_like(chi, p.alpha_star**2)
    return GigParams(-0.5 * (d + 1), chi, psi)


def _prior_means(third, rng, diag=None):
    """Average of ``_N_INIT_DRAWS`` draws of the common hyperparameters from their hyperpriors."""
    m = _N_INIT_DRAWS
    d = third.c1.shape[0]
    a0 = rng.exponential(1.0 / third.b0, m).mean()
    a3 = rng.exponential(1.0 / third.b3, m).mean()
    a4 = rng.exponential(1.0 / third.b4, m).mean()
    a1 = rng.multivariate_normal(third.c1, third.bmat1, m).mean(axis=0)
    a2 = rng.multivariate_normal(third.c2, third.bmat2, m).mean(axis=0)
    chol = np.linalg.cholesky(third.lambda0)
    a5 = sample_wishart_batch_mean(third.nu0, chol, m, rng)
    return a0, a1, a2, a3, a4, _regularize_spd(a5, diag, "a5_jitter")


def sample_wishart_batch_mean(df, chol, m, rng):
    return sample_wishart_batch(np.full(m, df), chol, rng).mean(axis=0)


def _initial_common(third, n, d, cfg, rng, diag):
    a0, a1, a2, a3, a4, a5 = _prior_means(third, rng, diag)
    g0 = g3 = None
    if cfg.hyper_update != "full":
        # the gamma factor keeps whole-sample centring, scaled by gamma_prior_weight
        g0, g3 = cfg.gamma_prior_weight * a0, cfg.gamma_prior_weight * a3
        # a0..a4 are centred on whole-sample sums; rescale them to kappa
        # pseudo-observations.  a5 keeps its centring on the sample covariance.
        kappa = cfg.prior_weight if cfg.prior_weight > 0 else PRIOR_WEIGHT
        s = kappa / n
        a0, a1, a2, a3, a4 = a0 * s, a1 * s, a2 * s, a3 * s, a4 * s
    try:
        return CommonHyper(a0, a1, a2, a3, a4, a5, g0, g3)
    except DegenerateHyperError:
        # a3 a4 > a0^2 failed through sampling noise of the averages; move a0 inside
        diag.flag("common_degenerate")
        a0 = 0.99 * np.sqrt(a3 * a4)
        return CommonHyper(a0, a1, a2, a3, a4, a5, g0, g3)


def _initial_partition(data, mode, rng):
    n = data.shape[0]
    if mode == "single":
        return np.zeros(n, dtype=np.int64)
    if mode == "singleton":
        return np.arange(n, dtype=np.int64)
    if mode == "random_k":
        k = int(rng.integers(1, n + 1))
        centred = data - data.mean(axis=0)
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        score = centred @ vt[0]
        rank = np.empty(n, dtype=np.int64)
        rank[np.argsort(score, kind="stable")] = np.arange(n)
        return (rank * k) // n
    raise ValueError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")


def initial_common(data, cfg, rng):
    """
    Third layer and starting common hyperparameters from the one-group fit.

    The data are treated as a single group with ``gamma = 1``, ``mu`` = sample
    mean, ``beta = 0.01`` and ``Sigma`` = sample covariance; ``u`` and ``1/u``
    are the resulting conditional expectations.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    if n < 2:
        raise ValueError("need at least two observations")
    diag = Diagnostics()
    cov = _regularize_spd(np.atleast_2d(np.cov(data, rowvar=False)), diag, "cov_jitter")
    p = ComponentParams(data.mean(axis=0), np.full(d, 0.01), 1.0, cov)
    u, u_inv = gig_expectations(_latent_moments(data, p))
    third = compute_third_layer(data, u, u_inv, diag)
    return third, _initial_common(third, n, d, cfg, rng, diag), diag


def init_chain(data, mode, cfg, rng, start=None):
    """
    Build the starting state of a chain.

    Every initial group gets ``gamma = 1``, ``mu`` = group mean,
    ``beta = 0.01`` in every coordinate and ``Sigma`` = group sample covariance.
    Groups with at most ``d`` members fall back to the covariance of the whole
    sample.  ``u`` and ``1/u`` are set to their conditional expectations, the
    third layer is computed from the data and those moments, and the common
    hyperparameters start at the average of 10000 draws from their hyperpriors.

    Parameters
    ----------
    data : ndarray, shape (N, d)
    mode : {"single", "singleton", "random_k"}
    cfg : GibbsConfig
    rng : numpy.random.Generator
    start : tuple, optional
        ``(third, common, diag)`` from :func:`initial_common`, shared between
        chains so that they target the same posterior.  Computed from ``rng``
        when omitted.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    if n < 2:
        raise ValueError("need at least two observations")
    if start is None:
        start = initial_common(data, cfg, rng)
    third, common, start_diag = start
    diag = Diagnostics(start_diag)
    labels = _initial_partition(data, mode, rng)
    overall_cov = _regularize_spd(np.atleast_2d(np.cov(data, rowvar=False)), diag, "cov_jitter")
    components = {}
    u = np.empty(n)
    u_inv = np.empty(n)
    for g in np.unique(labels):
        members = labels == g
        block = data[members]
        if block.shape[0] > d:
            cov = _regularize_spd(np.atleast_2d(np.cov(block, rowvar=False)), diag, "cov_jitter")
        else:
            cov = overall_cov
        p = ComponentParams(block.mean(axis=0), np.full(d, 0.01), 1.0, cov)
        components[int(g)] = Component(p)
        u[members], u_inv[members] = gig_expectations(_latent_moments(block, p))
    state = ChainState(
        data=data, labels=labels, u=u, u_inv=u_inv, components=components,
        common=common, third=third, next_id=int(labels.max()) + 1, diag=diag, mode=mode,
    )
    state.weights = {g: c / n for g, c in state.counts().items()}
    return state


def _current_logpdf(state):
    ids = list(state.components)
    if state._cache is not None and state._cache[0] == ids:
        return ids, state._cache[1]
    mat = _logpdf_matrix(state.data, [state.components[g].params for g in ids])
    return ids, mat


def update_labels(state, cfg, rng):
    """
    One pass of Polya-urn label updates; modifies ``state`` in place and returns it.

    Removing ``x_i`` from a component that it alone occupied deletes that
    component.  The new-component option is scored by averaging
    ``f(x_i | theta_m)`` over ``mc_new_cluster`` fresh prior draws; if it wins,
    one of those draws is picked with probability proportional to its density
    and becomes the new component's parameters.
    """
    data = state.data
    n, d = data.shape
    m = cfg.mc_new_cluster
    ids, mat = _current_logpdf(state)
    g0 = len(ids)
    cap = g0 + n
    loglik = np.empty((n, cap))
    loglik[:, :g0] = mat
    slot_of = {g: k for k, g in enumerate(ids)}
    slot_params = [state.components[g].params for g in ids] + [None] * n
    lab = np.array([slot_of[g] for g in state.labels], dtype=np.int64)
    counts = np.bincount(lab, minlength=cap).astype(float)
    alive = counts > 0

    batch = sample_prior_batch(state.common, n * m, rng, state.diag, cfg.exact_df)
    lp_new = mnig_logpdf_batch(
        data[:, None, :],
        batch.mu.reshape(n, m, d),
        batch.beta.reshape(n, m, d),
        batch.gamma.reshape(n, m),
        batch.precision.reshape(n, m, d, d),
    )
    log_new = np.log(cfg.alpha) + logsumexp(lp_new, axis=1) - np.log(m)
    order = rng.permutation(n) if cfg.sweep_order == "random" else np.arange(n)
    unif = rng.random((n, 2))
    next_slot = g0

    for step, i in enumerate(order):
        s = lab[i]
        counts[s] -= 1.0
        if counts[s] == 0.0:
            alive[s] = False
        live = np.flatnonzero(alive)
        logw = np.empty(live.size + 1)
        logw[:-1] = np.log(counts[live]) + loglik[i, live]
        logw[-1] = log_new[i]
        w = np.exp(logw - logw.max())
        cum = np.cumsum(w)
        pick = int(np.searchsorted(cum, unif[step, 0] * cum[-1], side="right"))
        pick = min(pick, live.size)
        if pick < live.size:
            s = live[pick]
        else:
            row = lp_new[i]
            pw = np.cumsum(np.exp(row - row.max()))
            k = min(int(np.searchsorted(pw, unif[step, 1] * pw[-1], side="right")), m - 1)
            p = batch.params(i * m + k)
            s = next_slot
            next_slot += 1
            slot_params[s] = p
            loglik[:, s] = _logpdf_matrix(data, [p])[:, 0]
            alive[s] = True
        lab[i] = s
        counts[s] += 1.0

    live = np.flatnonzero(alive)
    new_components = {}
    new_labels = np.empty(n, dtype=np.int64)
    for s in live:
        if s < g0:
            gid = ids[s]
            new_components[gid] = state.components[gid]
        else:
            gid = state.next_id
            state.next_id += 1
            new_components[gid] = Component(slot_params[s])
        new_labels[lab == s] = gid
    state.components = new_components
    state.labels = new_labels
    state._cache = None
    return state


def update_latent(state, rng=None, sample_u=False):
    """
    Set ``u_i`` and ``1/u_i`` from the GIG conditional of each observation's component.

    By default both are conditional expectations.  With ``sample_u`` a GIG
    draw ``u_i`` is taken (requires ``rng``) and ``1/u_i`` is its reciprocal.
    """
    data = state.data
    for g, comp in state.components.items():
        members = state.labels == g
        gig = _latent_moments(data[members], comp.params)
        if sample_u:
            omega = np.sqrt(gig.chi * gig.psi)
            scale = np.sqrt(gig.chi / gig.psi)
            draw = geninvgauss.rvs(gig.lam, omega, scale=scale, random_state=rng)
            state.u[members] = draw
            state.u_inv[members] = 1.0 / draw
        else:
            state.u[members], state.u_inv[members] = gig_expectations(gig)
    return state


def log_likelihood(data, state):
    """``sum_i log sum_g pi_g f(x_i | theta_g)`` with the state's current proportions."""
    ids = list(state.components)
    mat = _logpdf_matrix(np.atleast_2d(data), [state.components[g].params for g in ids])
    logw = np.log(np.array([state.weights[g] for g in ids]))
    return float(logsumexp(mat + logw, axis=1).sum()), ids, mat


def gibbs_sweep(state, cfg, rng):
    """Label updates followed by the parameter updates; modifies and returns ``state``."""
    update_labels(state, cfg, rng)
    n = state.data.shape[0]
    counts = state.counts()
    state.weights = {g: counts[g] / n for g in state.components}
    update_latent(state, rng, cfg.sample_u)
    for g, comp in state.components.items():
        stats = sufficient_stats(state.data, state.u, state.u_inv, state.labels == g)
        comp.hyper = update_group_hypers(state.common, stats, state.diag)
        comp.params = sample_component_params(comp.hyper, rng, state.diag, cfg.exact_df)
    if cfg.hyper_update == "hybrid":
        d = state.data.shape[1]
        df0 = max(wishart_df(state.common.a0, d, cfg.exact_df), df_floor(d, cfg.exact_df))
        a5 = sample_a5([c.params.sigma_inv for c in state.components.values()],
                       df0, state.third, rng, state.diag)
        state.common = dataclasses.replace(state.common, a5=a5)
    elif cfg.hyper_update == "full":
        ids = list(state.components)
        try:
            state.common = sample_common_hypers(
                [state.components[g].params for g in ids],
                [state.weights[g] for g in ids],
                state.third, rng, cfg.rate_floor, state.diag,
            )
        except DegenerateHyperError:
            state.diag.flag("common_degenerate")
    ll, ids, mat = log_likelihood(state.data, state)
    state._cache = (ids, mat)
    state.loglik_trace.append(ll)
    state.iteration += 1
    return state


def psrf(traces):
    """
    Potential scale reduction factor of two or more equal-length traces.

    ``sqrt(((n - 1)/n W + B/n) / W)`` with ``W`` the mean within-chain variance
    and ``B`` ``n`` times the variance of the chain means.  Returns 1.0 when
    every chain is the same constant and ``inf`` when the chains are constant
    at different values.
    """
    x = np.asarray(traces, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two chains of equal length")
    m, n = x.shape
    if n < 10:
        raise ValueError("chains must have at least 10 values")
    means = x.mean(axis=1)
    b = n * means.var(ddof=1)
    w = x.var(axis=1, ddof=1).mean()
    if w == 0.0:
        return 1.0 if b == 0.0 else np.inf
    return float(np.sqrt(((n - 1) / n * w + b / n) / w))


def _snapshot(state, chain_id):
    ids = list(state.components)
    params = [state.components[g].params for g in ids]
    order = np.argsort([p.mu[0] for p in params], kind="stable")
    rank = {ids[k]: r for r, k in enumerate(order)}
    lookup = np.vectorize(rank.__getitem__, otypes=[np.int32])
    sorted_params = [params[k] for k in order]
    return (
        lookup(state.labels),
        len(ids),
        chain_id,
        np.array([p.mu for p in sorted_params]),
        np.array([p.beta for p in sorted_params]),
        np.array([p.sigma for p in sorted_params]),
        np.array([p.gamma for p in sorted_params]),
    )


def _collect(buffers):
    rows = [r for buf in buffers for r in buf]
    return PosteriorDraws(
        labels=np.array([r[0] for r in rows]),
        n_components=np.array([r[1] for r in rows]),
        chain=np.array([r[2] for r in rows]),
        mu=[r[3] for r in rows],
        beta=[r[4] for r in rows],
        sigma=[r[5] for r in rows],
        gamma=[r[6] for r in rows],
    )


def run(data, cfg, callback=None):
    """
    Run the three chains to convergence and keep ``post_samples`` sweeps from each.

    PSRF is evaluated on the second half of the log-likelihood traces every
    ``psrf_every`` sweeps once ``burn_in_min`` sweeps are done.  When it drops
    below ``psrf_threshold`` each chain runs ``post_samples`` more sweeps.  If
    ``max_iter`` sweeps pass without that happening the last ``post_samples``
    sweeps are returned and ``RunDiagnostics.converged`` is False.

    ``callback``, if given, receives one dict per chain per sweep.

    Returns
    -------
    (PosteriorDraws, RunDiagnostics)
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if not np.all(np.isfinite(data)):
        raise ValueError("data contain non-finite values")
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(INIT_MODES) + 1)
    rngs = [np.random.default_rng(s) for s in seeds[1:]]
    start = initial_common(data, cfg, np.random.default_rng(seeds[0]))
    chains = [init_chain(data, mode, cfg, r, start) for mode, r in zip(INIT_MODES, rngs)]
    buffers = [deque(maxlen=cfg.post_samples) for _ in chains]
    psrf_trace = []
    records = []
    converged = False
    burn_in = None
    remaining = None
    sweep = 0
    while True:
        sweep += 1
        for c, (state, rng) in enumerate(zip(chains, rngs)):
            gibbs_sweep(state, cfg, rng)
            buffers[c].append(_snapshot(state, c))
            rec = {
                "iteration": sweep, "chain": c, "G": state.n_components,
                "loglik": state.loglik_trace[-1], **dict(state.diag),
            }
            records.append(rec)
            if callback is not None:
                callback(rec)
        if remaining is not None:
            remaining -= 1
            if remaining == 0:
                break
            continue
        if sweep >= cfg.burn_in_min and sweep % cfg.psrf_every == 0 and sweep >= 20:
            half = sweep // 2
            value = psrf([s.loglik_trace[half:] for s in chains])
            psrf_trace.append((sweep, value))
            if value < cfg.psrf_threshold:
                converged = True
                burn_in = sweep
                remaining = cfg.post_samples
                continue
        if sweep >= cfg.max_iter:
            break
    diags = RunDiagnostics(
        converged=converged,
        n_sweeps=sweep,
        burn_in=burn_in if burn_in is not None else sweep,
        psrf_trace=psrf_trace,
        diag=[dict(s.diag) for s in chains],
        loglik_traces=[list(s.loglik_trace) for s in chains],
        sweep_records=records,
    )
    return _collect(buffers), diags
