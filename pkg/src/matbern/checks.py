"""Numerical checks of the scalar and semidefinite inequalities behind the bounds.

Each check returns a :class:`Check` with the worst observed slack (negative
means violated).  The ``inequalities`` CLI subcommand runs :func:`run_all`.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import bounds, ensembles, spectral
from .ensembles import FiniteSupport, MartingaleAdapted


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    worst_slack: float
    cases: int
    detail: str = ""


def _result(name, slacks, detail=""):
    slacks = np.asarray(slacks, dtype=float)
    worst = float(slacks.min()) if slacks.size else math.inf
    return Check(name, bool(np.all(slacks >= 0)), worst, int(slacks.size), detail)


def log_grid(lo=1e-6, hi=1e4, points=2001):
    return np.logspace(math.log10(lo), math.log10(hi), points)


def random_sym(rng, d, scale=1.0):
    A = rng.uniform(-scale, scale, (d, d))
    return 0.5 * (A + A.T)


def random_pd(rng, d, lo=0.1, hi=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (Q * rng.uniform(lo, hi, d)) @ Q.T


def random_finite_support(rng, d=None, k=None, n=1, max_norm=1.0) -> FiniteSupport:
    """A random mean-zero atom list with every atom of norm at most ``max_norm``."""
    d = d or int(rng.integers(1, 4))
    k = k or int(rng.integers(2, 4))
    A = np.array([random_sym(rng, d) for _ in range(k)])
    p = rng.dirichlet(np.ones(k))
    A = A - np.tensordot(p, A, axes=1)
    A *= max_norm / spectral.sym_batch_norms(A).max()
    return FiniteSupport(A, p, n)


# ---------------------------------------------------------------------------
# scalar inequalities
# ---------------------------------------------------------------------------


def check_entropy_bound(ys=None) -> Check:
    """``(1+y) log(1+y) - y >= (y^2/2) / (1 + y/3)``."""
    ys = log_grid() if ys is None else ys
    sl = []
    for y in ys:
        lhs = (1 + y) * math.log1p(y) - y
        if y < 1e-3:
            # series: y^2/2 - y^3/6 + y^4/12 - y^5/20
            lhs = y * y * (0.5 - y / 6 + y * y / 12 - y**3 / 20)
        rhs = (y * y / 2) / (1 + y / 3)
        sl.append(lhs - rhs + 1e-12 * (1 + y * y))
    return _result("entropy lower bound", sl)


def check_exp_ratio(ys=None) -> Check:
    """``e^y / phi(y) <= 1 + 6/y^2``, checked as ``(1+y) y^2 <= 6 phi(y)``."""
    ys = log_grid() if ys is None else ys
    sl = [(6 * bounds.phi(y) - (1 + y) * y * y) / (y * y) for y in ys]
    return _result("exponential ratio", sl)


def check_theta_star(rng, draws=1000) -> Check:
    sl = []
    for _ in range(draws):
        s2 = float(rng.uniform(0.1, 10))
        t = float(rng.uniform(0.01, 20))
        th = bounds.theta_star(s2, t)

        def obj(x):
            return bounds.phi(x) * s2 - x * t

        dlt = 1e-4 * th
        sl.append(min(obj(th + dlt), obj(th - dlt)) - obj(th))
    return _result("theta* minimizes phi(theta) sigma^2 - theta t", sl)


def check_chernoff_exponent(rng, draws=1000) -> Check:
    """``exp(phi(theta*) sigma^2 - theta* t) <= exp(-psi(sigma^2, t))``."""
    sl = []
    for _ in range(draws):
        s2 = float(rng.uniform(0.1, 10))
        t = float(rng.uniform(0.01, 20))
        th = bounds.theta_star(s2, t)
        sl.append(-bounds.psi(s2, t) - (bounds.phi(th) * s2 - th * t) + 1e-12)
    return _result("Chernoff exponent vs psi", sl)


def check_monotone(points=400) -> Check:
    sl = []
    for s2 in (0.25, 1.0, 4.0, 16.0):
        ts = np.linspace(0.01, 50, points)
        r = [bounds.r_factor(s2, t) for t in ts]
        v = [bounds.v_factor(s2, t) for t in ts]
        p = [bounds.psi(s2, t) for t in ts]
        sl += list(-np.diff(r)) + list(-np.diff(v)) + list(np.diff(p))
    return _result("r, v decreasing and psi increasing", np.sign(sl) - 0.5)


def check_branch_continuity(rng, draws=100) -> Check:
    sl = []
    for _ in range(draws):
        d = int(rng.integers(1, 64))
        n = int(rng.integers(1, 200))
        U = float(rng.uniform(0.1, 5))
        s2 = float(rng.uniform(0.01, 1.0)) * n * U * U
        K = bounds.k_factor(s2, d, n, U)
        ts = s2 * (1 + 1 / d) / (2 * U * K)
        a = ts * ts / (2 * s2 * (1 + 1 / d))
        b = ts / (4 * U * K)
        sl.append(1e-12 - abs(a - b) / abs(b))
    return _result("subexponential branch continuity", sl)


def check_v_constant(rng, draws=10_000) -> Check:
    """``v_sigma(t) <= 44`` whenever ``sigma >= 1`` and ``t >= sigma``."""
    sig = rng.uniform(1.0, 20.0, draws)
    t = sig * rng.uniform(1.0, 20.0, draws)
    sl = [44.0 - bounds.v_factor(s * s, tt) for s, tt in zip(sig, t)]
    return _result("v_sigma(t) <= 44", sl)


# ---------------------------------------------------------------------------
# semidefinite and trace inequalities
# ---------------------------------------------------------------------------


def check_mgf_domination(rng, specs=200, thetas=(0.1, 0.5, 1.0, 2.0)) -> Check:
    """``log E exp(theta X) <= phi(theta) E X^2`` in the semidefinite order."""
    sl = []
    for _ in range(specs):
        spec = random_finite_support(rng)
        EX2 = ensembles.exact_variance(spec) / spec.n
        for th in thetas:
            L = spectral.matrix_log(ensembles.exact_mgf(spec, th))
            sl.append(spectral.lambda_min(bounds.phi(th) * EX2 - L) + 1e-9)
    return _result("semidefinite mgf domination", sl)


def check_lieb(rng, draws=1000) -> Check:
    """Midpoint concavity of ``A -> tr exp(H + log A)``."""
    sl = []
    for _ in range(draws):
        d = int(rng.integers(2, 6))
        H = random_sym(rng, d)
        A1, A2 = random_pd(rng, d), random_pd(rng, d)

        def f(A):
            return float(np.trace(spectral.matrix_exp(H + spectral.matrix_log(A))))

        sl.append(f(0.5 * (A1 + A2)) - 0.5 * (f(A1) + f(A2)) + 1e-8)
    return _result("Lieb concavity (midpoint)", sl)


def check_peierls(rng, draws=1000) -> Check:
    sl = []
    fns = (np.exp, np.square)
    for k in range(draws):
        d = int(rng.integers(2, 9))
        A = random_sym(rng, d)
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        f = fns[k % 2]
        diag = np.einsum("ji,jk,ki->i", Q, A, Q)
        lhs = float(np.sum(f(diag)))
        rhs = float(np.trace(spectral.apply_spectral_fn(A, f)))
        sl.append(rhs - lhs + 1e-8)
    return _result("Peierls inequality", sl)


def check_lieb_chain(rng, specs=60, thetas=(0.25, 0.5, 1.0)) -> list:
    """Iterated Lieb bound and the variance wrap, both by exact enumeration."""
    s1, s2 = [], []
    for _ in range(specs):
        n = int(rng.integers(1, 5))
        spec = random_finite_support(rng, n=n)
        dist = ensembles.enumerate_sum_distribution(spec)
        V = ensembles.exact_variance(spec)
        w = spectral.eigvals_sym(V)
        sigma2, tr = float(w[-1]), float(w.sum())
        d = spec.d
        for th in thetas:
            lhs = sum(
                p * (np.trace(spectral.matrix_exp(th * S)) - th * np.trace(S) - d) for S, p in dist
            )
            logm = spectral.matrix_log(ensembles.exact_mgf(spec, th))
            rhs1 = np.trace(spectral.matrix_exp(n * logm)) - d
            s1.append(rhs1 - lhs + 1e-8)
            ph = bounds.phi(th)
            lhs2 = np.trace(spectral.matrix_exp(ph * V)) - d
            if sigma2 > 0:
                s2.append((tr / sigma2) * math.exp(ph * sigma2) - lhs2 + 1e-8)
    return [_result("iterated Lieb bound", s1), _result("variance wrap", s2)]


def check_supermartingale(rng, specs=40, thetas=(0.25, 0.5, 1.0, 2.0)) -> Check:
    """``E tr exp(theta S_n - phi(theta) W_n) <= d`` over all sign paths."""
    sl = []
    for _ in range(specs):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 7))
        B = random_sym(rng, d)
        B /= spectral.op_norm(B)
        paths = ensembles.enumerate_martingale_paths(MartingaleAdapted(B, n))
        for th in thetas:
            ph = bounds.phi(th)
            val = sum(p * np.trace(spectral.matrix_exp(th * S - ph * W)) for S, W, p in paths)
            sl.append(d - val + 1e-8)
    return _result("supermartingale trace bound", sl)


def check_truncated_mgf(b=0.5, n=32, points=25) -> Check:
    """Truncated moment generating function bound for ``X = eps E b``."""
    spec = ensembles.SubExpScaled(np.array([[b]]), n)
    par = ensembles.ensemble_params(spec)
    U, sigma2, d = par.U, par.sigma2, 1
    gamma = 2 * U * math.log(16 * math.sqrt(2) * d * n * U * U / sigma2)
    EX2 = 2 * b * b
    sl = []
    for th in np.linspace(1e-3, 1 / (2 * U), points):
        mgf, _ = integrate.quad(lambda x: math.cosh(th * b * x) * math.exp(-x), 0, math.inf)
        u = th * gamma
        rhs = 1 + th * th * EX2 * bounds.phi(u) / (u * u) + 8 * math.sqrt(2) * th * th * U * U * math.exp(
            -gamma / (2 * U)
        )
        sl.append(rhs - mgf + 1e-9)
    return _result("truncated mgf", sl)


def check_dilation(rng, draws=10_000) -> Check:
    sl = []
    for _ in range(draws):
        d = int(rng.integers(1, 9))
        y = rng.standard_normal(d) * rng.uniform(0.1, 10)
        L = spectral.paulsen_dilate(y)
        ny = float(np.linalg.norm(y))
        L2 = L @ L
        block = np.zeros((d + 1, d + 1))
        block[0, 0] = ny * ny
        block[1:, 1:] = np.outer(y, y)
        err = max(abs(spectral.op_norm(L) - ny), np.max(np.abs(L2 - block)))
        sl.append(1e-12 * max(1.0, ny * ny) - err)
    return _result("dilation norm and square", sl)


def check_projection_domination(rng, draws=500) -> Check:
    sl = []
    for _ in range(draws):
        d = int(rng.integers(2, 9))
        A = random_sym(rng, d)
        j = int(rng.integers(1, d + 1))
        PA = spectral.project_leading(A, j)
        lhs = spectral.project_leading(A @ A, j)
        sl.append(spectral.lambda_min(lhs - PA @ PA) + 1e-10)
    return _result("(PAP)^2 <= P A^2 P", sl)


def truncation_slope(d=64, p=2.0, sigma2=1.0, t_lo=1.0, t_hi=100.0, points=50):
    """Log-log slope of the unit-truncated trace under polynomial eigenvalue decay."""
    EW = np.diag(sigma2 / (np.arange(1, d + 1) ** p))
    ts = np.logspace(math.log10(t_lo), math.log10(t_hi), points)
    vals = np.array([spectral.trace_unit_truncation((t / sigma2) * EW) for t in ts])
    slope = np.polyfit(np.log(ts), np.log(vals), 1)[0]
    return float(slope), vals


def check_truncation_slope() -> Check:
    slope, vals = truncation_slope()
    sl = [slope - 0.4, 0.6 - slope, 64 - vals.max()]
    return _result("truncated trace grows like t^(1/2)", sl, f"slope={slope:.4f}")


def projection_chain(d=256, n=32, js=(4, 16, 64, 256), decay=2.0, seed=7, trial=0):
    """Residuals ``||S_n - P_j S_n P_j||`` and intrinsic dimensions of ``P_j V P_j``.

    Uses a Rademacher ensemble whose bases decay like ``k ** -decay`` along the
    coordinates, so the compressions to the leading coordinates converge.
    """
    spec = ensembles.FixedBasisRademacher.random(d, n, seed, decay=decay)
    S = ensembles.sample(spec, seed, trial).sum(axis=0)
    V = ensembles.exact_variance(spec)
    res = [spectral.op_norm(S - spectral.project_leading(S, j)) for j in js]
    idims = [bounds.intrinsic_dimension_of(spectral.project_leading(V, j)) for j in js]
    return np.array(res), np.array(idims), bounds.intrinsic_dimension_of(V)


def check_projection_convergence() -> Check:
    res, idims, full = projection_chain()
    sl = list(res[:-1] - res[1:]) + [1e-6 * res[0] - res[-1], 1e-6 - abs(idims[-1] - full)]
    return _result(
        "projection residuals decrease to zero",
        sl,
        "residuals=" + ",".join(f"{r:.3e}" for r in res),
    )


def run_all(seed: int = 20240101) -> list:
    rng = np.random.default_rng(seed)
    out = [
        check_entropy_bound(),
        check_exp_ratio(),
        check_theta_star(rng),
        check_chernoff_exponent(rng),
        check_monotone(),
        check_branch_continuity(rng),
        check_v_constant(rng),
        check_mgf_domination(rng),
        check_lieb(rng),
        check_peierls(rng),
    ]
    out += check_lieb_chain(rng)
    out += [
        check_supermartingale(rng),
        check_truncated_mgf(),
        check_dilation(rng),
        check_projection_domination(rng),
        check_truncation_slope(),
        check_projection_convergence(),
    ]
    return out
