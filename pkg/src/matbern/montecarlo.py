"""Empirical tail estimation and bound-dominance certification.

Trials are processed in fixed-size chunks.  Each chunk regenerates its
trials from the per-trial key schedule in :mod:`matbern.rng`, so the hit
counts are identical for any number of worker threads: workers only decide
which chunk runs where, and the reduction is integer addition.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import bounds, ensembles, spectral
from .bounds import BoundRequest, BoundResult
from .ensembles import EnsembleParams, EnsembleSpec, MartingaleAdapted
from .errors import DomainError
from .rng import check_seed

CHUNK = 2048


@dataclass(frozen=True)
class SimConfig:
    spec: EnsembleSpec
    t_grid: tuple
    trials: int
    seed: int = 0
    confidence: float = 0.99

    def __post_init__(self):
        t = tuple(float(x) for x in self.t_grid)
        if not t:
            raise DomainError("t_grid is empty")
        if t[0] <= 0 or any(b <= a for a, b in zip(t, t[1:])):
            raise DomainError("t_grid must be strictly increasing and positive")
        if self.trials < 1:
            raise DomainError("trials must be positive")
        if not 0 < self.confidence < 1:
            raise DomainError("confidence must lie in (0, 1)")
        check_seed(self.seed)
        object.__setattr__(self, "t_grid", t)


def clopper_pearson(hits: int, trials: int, confidence: float = 0.99):
    """Exact two-sided binomial interval from Beta quantiles."""
    alpha = 1.0 - confidence
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(alpha / 2, hits, trials - hits + 1))
    hi = 1.0 if hits == trials else float(stats.beta.ppf(1 - alpha / 2, hits + 1, trials - hits))
    return lo, hi


@dataclass(frozen=True)
class TailEstimate:
    t: float
    hits: int
    trials: int
    ci_low: float
    ci_high: float

    @property
    def p_hat(self) -> float:
        return self.hits / self.trials

    @classmethod
    def from_counts(cls, t, hits, trials, confidence):
        lo, hi = clopper_pearson(int(hits), int(trials), confidence)
        return cls(float(t), int(hits), int(trials), lo, hi)


def _run_chunks(fn: Callable[[int, int], np.ndarray], trials: int, threads: int) -> np.ndarray:
    spans = [(a, min(trials, a + CHUNK)) for a in range(0, trials, CHUNK)]
    if threads <= 1 or len(spans) == 1:
        parts = [fn(a, b) for a, b in spans]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), spans))
    return np.sum(parts, axis=0)


def _norm_hits(norms: np.ndarray, t: np.ndarray) -> np.ndarray:
    return (norms[:, None] > t[None, :]).sum(axis=0).astype(np.int64)


def estimate_tail(cfg: SimConfig, threads: int = 1) -> list:
    """Estimate ``P(||S_n|| > t)`` on the whole grid from one pass over the trials."""
    t = np.asarray(cfg.t_grid)
    spec = cfg.spec

    def work(a, b):
        noise = ensembles.noise_batch(spec, cfg.seed, range(a, b))
        return _norm_hits(spectral.sym_batch_norms(spec.sums_from_noise(noise)), t)

    hits = _run_chunks(work, cfg.trials, threads)
    return [TailEstimate.from_counts(tk, h, cfg.trials, cfg.confidence) for tk, h in zip(t, hits)]


def estimate_joint_tail_martingale(cfg: SimConfig, sigma2: float, threads: int = 1) -> list:
    """Estimate ``P(||S_n|| > t, lambda_max(W_n) <= sigma2)`` for a martingale ensemble."""
    spec = cfg.spec
    if not isinstance(spec, MartingaleAdapted):
        raise DomainError("joint tail needs a MartingaleAdapted ensemble")
    if sigma2 < 0:
        raise DomainError("sigma2 must be nonnegative")
    t = np.asarray(cfg.t_grid)

    def work(a, b):
        noise = ensembles.noise_batch(spec, cfg.seed, range(a, b))
        _, S, W = spec.paths_from_noise(noise)
        norms = spectral.sym_batch_norms(S)
        keep = np.linalg.eigvalsh(W)[:, -1] <= sigma2
        return _norm_hits(np.where(keep, norms, -np.inf), t)

    hits = _run_chunks(work, cfg.trials, threads)
    return [TailEstimate.from_counts(tk, h, cfg.trials, cfg.confidence) for tk, h in zip(t, hits)]


def estimate_mean_norm(spec: EnsembleSpec, trials: int, seed: int, threads: int = 1):
    """Sample mean of ``||S_n||`` and its standard error."""
    if trials < 2:
        raise DomainError("need at least two trials")

    def work(a, b):
        noise = ensembles.noise_batch(spec, seed, range(a, b))
        norms = spectral.sym_batch_norms(spec.sums_from_noise(noise))
        return np.array([norms.sum(), (norms * norms).sum()])

    s, s2 = _run_chunks(work, trials, threads)
    mean = s / trials
    var = max(s2 / trials - mean * mean, 0.0) * trials / (trials - 1)
    return float(mean), float(math.sqrt(var / trials))


# ---------------------------------------------------------------------------
# dominance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DominanceRow:
    t: float
    p_hat: float
    ci_low: float
    ci_high: float
    bound_raw: float
    bound_clipped: float
    regime: str
    exact_p: float = None
    dominated: bool = True


@dataclass
class DominanceReport:
    rows: list
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.dominated for r in self.rows)


def certify_dominance(
    estimates: Sequence[TailEstimate],
    bound_fn: Callable[[float], BoundResult],
    exact_p: Sequence[float] = None,
    meta: dict = None,
) -> DominanceReport:
    """Compare each estimate's lower confidence limit with the clipped bound.

    With ``exact_p`` the exact probability replaces the confidence limit,
    so the comparison carries no statistical slack at all.  ``estimates``
    may be empty in exact mode, in which case ``exact_p`` must be paired
    with ``t_grid`` in ``meta``.
    """
    rows = []
    if estimates:
        grid = [e.t for e in estimates]
    else:
        if exact_p is None:
            raise DomainError("nothing to certify")
        grid = list(meta["t_grid"])
    if exact_p is not None and len(exact_p) != len(grid):
        raise DomainError("exact probabilities and t-grid differ in length")
    for k, t in enumerate(grid):
        b = bound_fn(t)
        e = estimates[k] if estimates else None
        ex = None if exact_p is None else float(exact_p[k])
        lower = ex if ex is not None else e.ci_low
        rows.append(
            DominanceRow(
                t=t,
                p_hat=math.nan if e is None else e.p_hat,
                ci_low=math.nan if e is None else e.ci_low,
                ci_high=math.nan if e is None else e.ci_high,
                bound_raw=b.raw,
                bound_clipped=b.clipped,
                regime=b.regime,
                exact_p=ex,
                dominated=lower <= b.clipped,
            )
        )
    return DominanceReport(rows, dict(meta or {}))


# ---------------------------------------------------------------------------
# bounds attached to ensembles
# ---------------------------------------------------------------------------

REGIME_CHOICES = ("bounded", "subexp", "martingale", "vector_l2", "vector_linf")
_TAG = {"bounded": "bounded", "subexp": "subgaussian", "martingale": "martingale",
        "vector_l2": "vector_l2", "vector_linf": "vector_linf"}


def bound_for_params(
    params: EnsembleParams,
    regime: str,
    t: float,
    EWn=None,
    sigma2_event: float = None,
) -> BoundResult:
    """Evaluate the selected tail bound for an ensemble's parameters at ``t``.

    A zero-variance ensemble has ``S_n = 0`` almost surely; its bound is
    reported as exactly 0.
    """
    if regime not in REGIME_CHOICES:
        raise DomainError(f"unknown regime {regime!r}")
    if t <= 0:
        raise DomainError("t must be positive")
    if regime == "martingale":
        if EWn is None or sigma2_event is None:
            raise DomainError("martingale bound needs E W_n and the event level sigma2")
        if sigma2_event == 0:
            return BoundResult(0.0, "martingale", reason="event lambda_max(W_n) <= 0 is null")
        return bounds.martingale_tail(EWn, sigma2_event, t, params.U)
    if params.degenerate:
        return BoundResult(0.0, _TAG[regime], reason="zero variance: S_n = 0 almost surely")
    if regime == "vector_l2":
        return bounds.vector_bernstein_l2(params.sigma2, t, params.U)
    if regime == "vector_linf":
        return bounds.vector_bernstein_linf(params.trace_var, params.sigma2, t, params.U)
    req = BoundRequest(params.n, params.d, params.sigma2, params.U, params.trace_var, t)
    if regime == "subexp":
        return bounds.bernstein_subexp_tail(req)
    return bounds.bernstein_bounded_tail(req)


def default_t_grid(params: EnsembleParams, points: int = 20, hi_sigmas: float = 8.0) -> tuple:
    """A grid from a quarter standard deviation up to ``hi_sigmas`` of them.

    For bounded families the top is capped at ``n U`` (beyond it the tail is 0).
    """
    sigma = math.sqrt(params.sigma2) if params.sigma2 > 0 else 1.0
    lo = 0.25 * sigma
    hi = min(hi_sigmas * sigma, params.n * params.U)
    if hi <= lo:
        hi = 2.0 * lo
    return tuple(float(x) for x in np.linspace(lo, hi, points))


def run_dominance(
    spec: EnsembleSpec,
    t_grid,
    regime: str = "bounded",
    trials: int = 100_000,
    seed: int = 0,
    confidence: float = 0.99,
    threads: int = 1,
    exact: bool = False,
    sigma2_event: float = None,
    params: EnsembleParams = None,
) -> DominanceReport:
    """Simulate (or enumerate) the tail and certify it against a bound."""
    if params is None:
        params = ensembles.ensemble_params(spec, trials=min(trials, 20_000), seed=seed)
    EW = None
    if regime == "martingale":
        EW = params.variance
        if sigma2_event is None:
            sigma2_event = float(spec.n)
    exact_p = None
    if ensembles.enumerable(spec):
        exact_p = ensembles.exact_tail(ensembles.enumerate_sum_distribution(spec), t_grid)
    elif exact:
        raise DomainError(f"exact mode is not feasible for {spec.family}")
    estimates = []
    if not exact:
        cfg = SimConfig(spec, tuple(t_grid), trials, seed, confidence)
        if regime == "martingale":
            estimates = estimate_joint_tail_martingale(cfg, sigma2_event, threads)
        else:
            estimates = estimate_tail(cfg, threads)
    meta = {
        "family": spec.family,
        "regime": regime,
        "params": params,
        "t_grid": tuple(float(x) for x in t_grid),
        "sigma2_event": sigma2_event,
        "exact_mode": exact,
    }

    def bound_fn(t):
        return bound_for_params(params, regime, t, EWn=EW, sigma2_event=sigma2_event)

    report = certify_dominance(estimates, bound_fn, exact_p if exact else None, meta)
    if exact_p is not None and not exact:
        rows = [
            DominanceRow(**{**r.__dict__, "exact_p": float(p)}) for r, p in zip(report.rows, exact_p)
        ]
        report = DominanceReport(rows, report.meta)
    return report
