"""Closed-form tail bounds for sums of random self-adjoint matrices.

All evaluators return a :class:`BoundResult` carrying both the raw formula
value and its clip to ``[0, 1]``.  Bounds stated for ``||X_i|| <= 1`` are
extended to ``||X_i|| <= U`` by evaluating the unit formula on ``X_i / U``,
i.e. with ``sigma2 / U**2`` and ``t / U``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import spectral
from .errors import DomainError

REGIMES = (
    "bounded",
    "subgaussian",
    "subexponential",
    "martingale",
    "vector_l2",
    "vector_linf",
    "kernel",
)

_REL = 1e-9


@dataclass(frozen=True)
class BoundRequest:
    """Inputs shared by the independent-sum bounds.

    ``trace_var`` is ``tr(sum E X_i^2)`` and ``sigma2`` an upper bound on its
    operator norm, so ``sigma2 <= trace_var <= d * sigma2`` up to rounding.
    """

    n: int
    d: int
    sigma2: float
    U: float
    trace_var: float
    t: float

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise DomainError("n and d must be positive integers")
        for name in ("sigma2", "U", "trace_var", "t"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite, got {v!r}")
        if self.trace_var < self.sigma2 * (1 - _REL):
            raise DomainError("trace_var must be at least sigma2")
        if self.trace_var / self.sigma2 > self.d + _REL:
            raise DomainError("trace_var / sigma2 exceeds the dimension")

    @property
    def intdim(self) -> float:
        return self.trace_var / self.sigma2


@dataclass(frozen=True)
class BoundResult:
    raw: float
    regime: str
    valid: bool = True
    reason: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not (self.raw >= 0):
            raise ValueError(f"raw bound must be nonnegative, got {self.raw!r}")

    @property
    def clipped(self) -> float:
        return min(1.0, self.raw)


# ---------------------------------------------------------------------------
# scalar helpers
# ---------------------------------------------------------------------------


def psi(sigma2: float, t: float) -> float:
    """Bernstein exponent ``(t^2/2) / (sigma2 + t/3)``."""
    if sigma2 <= 0:
        raise DomainError("sigma2 must be positive")
    return (t * t / 2.0) / (sigma2 + t / 3.0)


def phi(theta: float) -> float:
    """``e^theta - theta - 1``, by Taylor series near 0 to avoid cancellation."""
    if abs(theta) < 1e-3:
        return theta * theta * (0.5 + theta * (1 / 6 + theta * (1 / 24 + theta * (1 / 120 + theta / 720))))
    if theta > 709.0:
        return math.inf
    return math.expm1(theta) - theta


def p_trunc(t: float) -> float:
    """``min(-t, 1)``."""
    return min(-t, 1.0)


def g(theta: float) -> float:
    """``e^theta - 1 + min(-theta, 1)``; nonnegative and equal to phi for theta >= 0."""
    if theta > 709.0:
        return math.inf
    return math.expm1(theta) + p_trunc(theta)


def theta_star(sigma2: float, t: float) -> float:
    """Minimizer ``log(1 + t/sigma2)`` of ``phi(theta) sigma2 - theta t``."""
    if sigma2 <= 0 or t < 0:
        raise DomainError("need sigma2 > 0 and t >= 0")
    return math.log1p(t / sigma2)


def r_factor(sigma2: float, t: float) -> float:
    """``1 + 6 / (t^2 log^2(1 + t/sigma2))``; singular at ``t = 0``."""
    if t <= 0:
        raise DomainError("r_factor is singular at t <= 0")
    den = (t * math.log1p(t / sigma2)) ** 2
    return math.inf if den == 0.0 else 1.0 + 6.0 / den


def v_factor(sigma2: float, t: float) -> float:
    """``1 + 6 / psi(sigma2, t)^2``; singular at ``t = 0``."""
    if t <= 0:
        raise DomainError("v_factor is singular at t <= 0")
    p = psi(sigma2, t)
    return math.inf if p * p == 0.0 else 1.0 + 6.0 / (p * p)


def intrinsic_dimension(trace_var: float, sigma2: float) -> float:
    """``trace_var / sigma2``, clamped below at 1."""
    if sigma2 <= 0:
        raise DomainError("sigma2 must be positive")
    if trace_var < sigma2 * (1 - _REL):
        raise DomainError("trace_var must be at least sigma2")
    return max(1.0, trace_var / sigma2)


def intrinsic_dimension_of(V) -> float:
    """Intrinsic dimension ``tr(V) / ||V||`` of a nonnegative definite matrix."""
    w = spectral.eigvals_sym(V)
    top = float(w[-1])
    if top <= 0:
        raise DomainError("variance proxy has no positive eigenvalue")
    return intrinsic_dimension(float(np.sum(w)), top)


def k_factor(sigma2: float, d: int, n: int, U: float) -> float:
    """``log(16 sqrt(2) d) + log(n U^2 / sigma2)``; requires ``n U^2 >= sigma2``."""
    if sigma2 <= 0 or d < 1 or n < 1 or U <= 0:
        raise DomainError("k_factor needs positive arguments")
    ratio = n * U * U / sigma2
    if ratio < 1.0:
        raise DomainError(f"n*U^2/sigma2 = {ratio:.6g} < 1 makes the log term negative")
    return math.log(16.0 * math.sqrt(2.0) * d) + math.log(ratio)


def subexp_threshold(sigma2: float, d: int, n: int, U: float) -> float:
    """Crossover ``sigma2 (1 + 1/d) / (2 U K)`` between the two tail regimes."""
    K = k_factor(sigma2, d, n, U)
    return sigma2 * (1.0 + 1.0 / d) / (2.0 * U * K)


# ---------------------------------------------------------------------------
# tail bounds
# ---------------------------------------------------------------------------


def _unit_tail(ratio: float, s2: float, tau: float) -> float:
    # 2 * ratio * exp(-psi) * r on unit-normalized parameters
    return 2.0 * ratio * math.exp(-psi(s2, tau)) * r_factor(s2, tau)


def bernstein_bounded_tail(req: BoundRequest) -> BoundResult:
    """Tail bound for independent, mean-zero, ``||X_i|| <= U`` summands."""
    s2 = req.sigma2 / req.U**2
    tau = req.t / req.U
    raw = _unit_tail(req.trace_var / req.sigma2, s2, tau)
    return BoundResult(raw, "bounded", meta={"intdim": req.intdim})


def bernstein_subexp_tail(req: BoundRequest) -> BoundResult:
    """Two-regime tail bound for summands with ``U >= 2 max ||X_i||_psi1``.

    The caller is responsible for choosing ``U`` from the Orlicz norms.
    """
    K = k_factor(req.sigma2, req.d, req.n, req.U)
    inflate = 1.0 + 1.0 / req.d
    threshold = req.sigma2 * inflate / (2.0 * req.U * K)
    if req.t <= threshold:
        expo = req.t * req.t / (2.0 * req.sigma2 * inflate)
        regime = "subgaussian"
    else:
        expo = req.t / (4.0 * req.U * K)
        regime = "subexponential"
    raw = 4.0 * (req.trace_var / req.sigma2) * math.exp(-expo) * r_factor(req.sigma2, req.t)
    return BoundResult(
        raw,
        regime,
        meta={"K": K, "threshold": threshold, "exponent": expo, "U_from": "psi1"},
    )


def martingale_tail(EWn, sigma2: float, t: float, U: float = 1.0) -> BoundResult:
    """Bound on ``P(||S_n|| > t, lambda_max(W_n) <= sigma2)`` for martingale differences.

    ``EWn`` is the expected predictable quadratic variation.  The dimension
    factor is the unit-truncated trace of ``(t/sigma2) E W_n`` after
    normalizing by ``U``.
    """
    if sigma2 <= 0 or t <= 0 or U <= 0:
        raise DomainError("sigma2, t and U must be positive")
    EW = spectral.as_sym(EWn)
    s2 = sigma2 / U**2
    tau = t / U
    trunc = spectral.trace_unit_truncation((tau / s2) * (EW / U**2))
    if trunc == 0.0:
        raw = 0.0
    else:
        raw = 2.0 * trunc * math.exp(-psi(s2, tau)) * v_factor(s2, tau)
    return BoundResult(raw, "martingale", meta={"truncated_trace": trunc})


def vector_bernstein_l2(sigma2: float, t: float, U: float = 1.0) -> BoundResult:
    """Dimension-free bound on ``P(||sum Y_i||_2 > t)`` with ``sigma2 = sum E||Y_i||^2``.

    Through the self-adjoint dilation the trace doubles while the norm is
    unchanged, so this is the bounded-summand bound with intrinsic ratio 2.
    """
    if sigma2 <= 0 or t <= 0 or U <= 0:
        raise DomainError("sigma2, t and U must be positive")
    raw = _unit_tail(2.0, sigma2 / U**2, t / U)
    return BoundResult(raw, "vector_l2")


def vector_bernstein_linf(trace_sum_Q: float, sigma2: float, t: float, U: float = 1.0) -> BoundResult:
    """Bound on ``P(||sum Y_i||_inf > t)`` via the diagonal embedding.

    ``sigma2`` is the largest coordinate variance of the sum and
    ``trace_sum_Q`` the trace of the summed covariances.
    """
    if trace_sum_Q <= 0 or sigma2 <= 0 or t <= 0 or U <= 0:
        raise DomainError("inputs must be positive")
    raw = _unit_tail(trace_sum_Q / sigma2, sigma2 / U**2, t / U)
    return BoundResult(raw, "vector_linf")


def kernel_validity_threshold(n: int, kappa: float, Lk_norm: float) -> float:
    return max(math.sqrt(kappa * Lk_norm / n), 1.0 / n)


def kernel_operator_tail(n: int, kappa: float, Lk_norm: float, xi_intdim: float, t: float) -> BoundResult:
    """Bound on ``P(||L_{K,n} - L_K|| > t)`` for an empirical integral operator."""
    if n < 1 or kappa <= 0 or Lk_norm <= 0 or t <= 0:
        raise DomainError("inputs must be positive")
    if xi_intdim < 1.0 - _REL:
        raise DomainError("intrinsic dimension must be at least 1")
    expo = n * t * t / (2.0 * kappa * (Lk_norm + 2.0 * t / 3.0))
    raw = 25.0 * xi_intdim * math.exp(-expo)
    lo = kernel_validity_threshold(n, kappa, Lk_norm)
    valid = t >= lo
    reason = "" if valid else f"t={t:.6g} below validity threshold {lo:.6g}"
    return BoundResult(raw, "kernel", valid=valid, reason=reason, meta={"t_min": lo})


def expectation_bound_by_integration(
    tail: Callable[[float], float], t_max: float, steps: int
) -> float:
    """Composite trapezoid value of ``int_0^t_max min(1, tail(t)) dt``.

    A tail that is singular at zero (raises :class:`DomainError`) is taken
    as 1 there, which is the trivial probability bound.
    """
    if t_max <= 0 or steps < 1:
        raise DomainError("t_max and steps must be positive")
    ts = np.linspace(0.0, t_max, steps + 1)
    vals = np.empty_like(ts)
    for k, t in enumerate(ts):
        try:
            vals[k] = min(1.0, float(tail(float(t))))
        except DomainError:
            vals[k] = 1.0
    h = t_max / steps
    return float(h * (vals.sum() - 0.5 * (vals[0] + vals[-1])))


# ---------------------------------------------------------------------------
# baselines for side-by-side reports
# ---------------------------------------------------------------------------


def classical_dimension_baseline(d: int, sigma2: float, t: float, U: float = 1.0) -> float:
    """The ambient-dimension bound ``2 d exp(-psi)`` on unit-normalized parameters."""
    return 2.0 * d * math.exp(-psi(sigma2 / U**2, t / U))


def intdim_baseline(intdim: float, sigma2: float, t: float, U: float = 1.0) -> float:
    """Classical intrinsic-dimension two-sided bound ``2 intdim s / (e^s - s - 1)``.

    ``s`` solves ``sqrt(2 sigma2 s) + U s / 3 = t``.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    a = U / 3.0
    b = math.sqrt(2.0 * sigma2)
    y = t / b if a == 0 else (-b + math.sqrt(b * b + 4.0 * a * t)) / (2.0 * a)
    s = y * y
    den = phi(s)
    return math.inf if den == 0.0 else 2.0 * intdim * s / den
