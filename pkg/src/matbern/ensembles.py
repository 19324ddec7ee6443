"""Random matrix ensembles: samplers, exact moments and enumeration oracles.

An ensemble is a frozen description of a length-``n`` sequence of random
``d x d`` symmetric matrices.  Sampling is split in two so that trials can
be generated one at a time (reproducible per trial) and then reduced in
batches (fast):

* ``draw_noise(rng)`` pulls one trial's worth of primitive randomness;
* ``sums_from_noise(noise)`` maps a stacked batch of noise to the sums
  ``S_n`` with shape ``(T, d, d)``.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from . import spectral
from .errors import DomainError, InvalidMatrix, NoFiniteNorm, NotExact, OutcomeExplosion
from .rng import STREAM_VARIANCE, TrialStreams, trial_rng

NORM_TOL = 1e-12
MEAN_TOL = 1e-12
MAX_OUTCOMES = 10**7


def _stack_sym(mats, d=None) -> np.ndarray:
    out = np.array([spectral.as_sym(m) for m in mats], dtype=float)
    if out.ndim != 3:
        raise InvalidMatrix("expected a list of square matrices")
    if d is not None and out.shape[1] != d:
        raise InvalidMatrix(f"expected {d}x{d} matrices, got {out.shape[1:]}")
    out.setflags(write=False)
    return out


class EnsembleSpec:
    """Common interface of all ensemble families."""

    family: ClassVar[str] = ""
    n: int

    @property
    def d(self) -> int:
        raise NotImplementedError

    def draw_noise(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def matrices_from_noise(self, noise: np.ndarray) -> np.ndarray:
        """Summands ``X_1..X_n`` of a single trial, shape ``(n, d, d)``."""
        raise NotImplementedError

    def sums_from_noise(self, noise: np.ndarray) -> np.ndarray:
        return np.stack([self.matrices_from_noise(z).sum(axis=0) for z in noise])

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class FixedBasisRademacher(EnsembleSpec):
    """``X_i = eps_i B_i`` with fixed ``||B_i|| <= 1`` and iid signs."""

    bases: np.ndarray
    family: ClassVar[str] = "FixedBasisRademacher"

    def __post_init__(self):
        B = _stack_sym(self.bases)
        norms = spectral.sym_batch_norms(B)
        if np.any(norms > 1 + NORM_TOL):
            raise InvalidMatrix("every basis matrix needs operator norm <= 1")
        object.__setattr__(self, "bases", B)

    @classmethod
    def random(cls, d: int, n: int, seed: int, decay: float = 0.0) -> "FixedBasisRademacher":
        """Random symmetric bases with unit norm.

        ``decay > 0`` scales coordinate ``k`` by ``(k + 1) ** -decay`` before
        normalizing, which gives a variance with a decaying spectrum.
        """
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((n, d, d))
        G = 0.5 * (G + G.transpose(0, 2, 1))
        if decay:
            s = (np.arange(d) + 1.0) ** -decay
            G = G * s[None, :, None] * s[None, None, :]
        G /= spectral.sym_batch_norms(G)[:, None, None]
        return cls(G)

    @property
    def n(self) -> int:
        return self.bases.shape[0]

    @property
    def d(self) -> int:
        return self.bases.shape[1]

    def draw_noise(self, rng):
        return np.where(rng.random(self.n) < 0.5, -1.0, 1.0)

    def matrices_from_noise(self, noise):
        return noise[:, None, None] * self.bases

    def sums_from_noise(self, noise):
        return np.einsum("ti,ijk->tjk", noise, self.bases)

    def to_dict(self):
        return {"family": self.family, "bases": self.bases.tolist()}


@dataclass(frozen=True, eq=False)
class RankOneSphere(EnsembleSpec):
    """``X_i = u u^T - I/d`` with ``u`` uniform on the unit sphere."""

    dim: int
    n: int
    family: ClassVar[str] = "RankOneSphere"

    def __post_init__(self):
        if self.dim < 1 or self.n < 1:
            raise DomainError("dim and n must be positive")

    @property
    def d(self):
        return self.dim

    def draw_noise(self, rng):
        return rng.standard_normal((self.n, self.dim))

    @staticmethod
    def _unit(z):
        return z / np.linalg.norm(z, axis=-1, keepdims=True)

    def matrices_from_noise(self, noise):
        u = self._unit(noise)
        return u[:, :, None] * u[:, None, :] - np.eye(self.dim) / self.dim

    def sums_from_noise(self, noise):
        u = self._unit(noise)
        return np.einsum("tia,tib->tab", u, u) - (self.n / self.dim) * np.eye(self.dim)

    def to_dict(self):
        return {"family": self.family, "d": self.dim, "n": self.n}


@dataclass(frozen=True, eq=False)
class FiniteSupport(EnsembleSpec):
    """iid summands drawn from an explicit atom list with mean zero."""

    atoms: np.ndarray
    probs: np.ndarray
    n: int
    family: ClassVar[str] = "FiniteSupport"

    def __post_init__(self):
        A = _stack_sym(self.atoms)
        p = np.array(self.probs, dtype=float)
        if p.shape != (A.shape[0],) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("probs must be a distribution over the atoms")
        if self.n < 1:
            raise DomainError("n must be positive")
        mean = np.tensordot(p, A, axes=1)
        if np.max(np.abs(mean)) > MEAN_TOL * max(1.0, float(np.max(np.abs(A)))):
            raise DomainError("atoms must have mean zero")
        p.setflags(write=False)
        object.__setattr__(self, "atoms", A)
        object.__setattr__(self, "probs", p)

    @classmethod
    def scalar_rademacher(cls, n: int) -> "FiniteSupport":
        return cls([[[1.0]], [[-1.0]]], [0.5, 0.5], n)

    @property
    def d(self):
        return self.atoms.shape[1]

    @property
    def k(self) -> int:
        return self.atoms.shape[0]

    def draw_noise(self, rng):
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, rng.random(self.n) * cdf[-1], side="right")
        return np.minimum(idx, self.k - 1).astype(float)

    def matrices_from_noise(self, noise):
        return self.atoms[noise.astype(int)]

    def sums_from_noise(self, noise):
        idx = noise.astype(int)
        counts = np.stack([(idx == j).sum(axis=1) for j in range(self.k)], axis=1)
        return np.einsum("tj,jab->tab", counts.astype(float), self.atoms)

    def to_dict(self):
        return {
            "family": self.family,
            "atoms": self.atoms.tolist(),
            "probs": self.probs.tolist(),
            "n": self.n,
        }


@dataclass(frozen=True, eq=False)
class SubExpScaled(EnsembleSpec):
    """``X_i = eta_i B`` with ``eta_i = eps_i E_i``, ``E_i ~ Exp(1)``."""

    B: np.ndarray
    n: int
    family: ClassVar[str] = "SubExpScaled"

    def __post_init__(self):
        B = spectral.as_sym(self.B)
        if spectral.op_norm(B) > 1 + NORM_TOL:
            raise InvalidMatrix("B needs operator norm <= 1")
        if self.n < 1:
            raise DomainError("n must be positive")
        object.__setattr__(self, "B", B)

    @property
    def d(self):
        return self.B.shape[0]

    def draw_noise(self, rng):
        signs = np.where(rng.random(self.n) < 0.5, -1.0, 1.0)
        return signs * rng.standard_exponential(self.n)

    def matrices_from_noise(self, noise):
        return noise[:, None, None] * self.B

    def sums_from_noise(self, noise):
        return noise.sum(axis=1)[:, None, None] * self.B

    def to_dict(self):
        return {"family": self.family, "B": self.B.tolist(), "n": self.n}


def adapt_scale(norm_S):
    """Predictable step size ``1 / (1 + ||S||)`` used by the martingale family."""
    return 1.0 / (1.0 + norm_S)


@dataclass(frozen=True, eq=False)
class MartingaleAdapted(EnsembleSpec):
    """``X_i = eps_i c(S_{i-1}) B`` with ``c(S) = 1/(1 + ||S||)``.

    The conditional second moment is ``c(S_{i-1})^2 B^2`` in closed form,
    so the predictable quadratic variation is tracked exactly per path.
    """

    B: np.ndarray
    n: int
    family: ClassVar[str] = "MartingaleAdapted"

    def __post_init__(self):
        B = spectral.as_sym(self.B)
        if spectral.op_norm(B) > 1 + NORM_TOL:
            raise InvalidMatrix("B needs operator norm <= 1")
        if self.n < 1:
            raise DomainError("n must be positive")
        object.__setattr__(self, "B", B)

    @property
    def d(self):
        return self.B.shape[0]

    def draw_noise(self, rng):
        return np.where(rng.random(self.n) < 0.5, -1.0, 1.0)

    def paths_from_noise(self, noise):
        """Return ``(X, S_n, W_n)`` for a batch of sign sequences ``(T, n)``."""
        T = noise.shape[0]
        d = self.d
        B2 = self.B @ self.B
        S = np.zeros((T, d, d))
        W = np.zeros((T, d, d))
        X = np.empty((T, self.n, d, d))
        for i in range(self.n):
            c = adapt_scale(spectral.sym_batch_norms(S))
            X[:, i] = (noise[:, i] * c)[:, None, None] * self.B
            S = S + X[:, i]
            W = W + (c * c)[:, None, None] * B2
        return X, S, W

    def matrices_from_noise(self, noise):
        return self.paths_from_noise(noise[None, :])[0][0]

    def sums_from_noise(self, noise):
        return self.paths_from_noise(noise)[1]

    def to_dict(self):
        return {"family": self.family, "B": self.B.tolist(), "n": self.n}


@dataclass(frozen=True, eq=False)
class SphereVectors(EnsembleSpec):
    """Vectors ``Y_i = radius * u_i`` (``u_i`` uniform on the sphere), carried as dilations.

    Each summand is the ``(dim + 1) x (dim + 1)`` self-adjoint dilation of
    ``Y_i``, so the operator norm of ``S_n`` is ``||sum Y_i||_2``.
    """

    dim: int
    n: int
    radius: float = 1.0
    family: ClassVar[str] = "SphereVectors"

    def __post_init__(self):
        if self.dim < 1 or self.n < 1 or not 0 < self.radius <= 1 + NORM_TOL:
            raise DomainError("need dim, n >= 1 and 0 < radius <= 1")

    @property
    def d(self):
        return self.dim + 1

    def draw_noise(self, rng):
        return rng.standard_normal((self.n, self.dim))

    def vectors_from_noise(self, noise):
        return self.radius * noise / np.linalg.norm(noise, axis=-1, keepdims=True)

    @staticmethod
    def _dilate(Y):
        out = np.zeros(Y.shape[:-1] + (Y.shape[-1] + 1, Y.shape[-1] + 1))
        out[..., 0, 1:] = Y
        out[..., 1:, 0] = Y
        return out

    def matrices_from_noise(self, noise):
        return self._dilate(self.vectors_from_noise(noise))

    def sums_from_noise(self, noise):
        return self._dilate(self.vectors_from_noise(noise).sum(axis=1))

    def to_dict(self):
        return {"family": self.family, "d": self.dim, "n": self.n, "radius": self.radius}


FAMILIES = {
    cls.family: cls
    for cls in (
        FixedBasisRademacher,
        RankOneSphere,
        FiniteSupport,
        SubExpScaled,
        MartingaleAdapted,
        SphereVectors,
    )
}


def ensemble_from_dict(data: dict) -> EnsembleSpec:
    """Build an ensemble from its canonical dictionary form (see ``to_dict``)."""
    data = dict(data)
    family = data.pop("family")
    if family == "FixedBasisRademacher":
        return FixedBasisRademacher(np.array(data["bases"], dtype=float))
    if family == "RankOneSphere":
        return RankOneSphere(int(data["d"]), int(data["n"]))
    if family == "FiniteSupport":
        atoms = [np.atleast_2d(np.array(a, dtype=float)) for a in data["atoms"]]
        return FiniteSupport(atoms, data["probs"], int(data["n"]))
    if family == "SubExpScaled":
        return SubExpScaled(np.atleast_2d(np.array(data["B"], dtype=float)), int(data["n"]))
    if family == "MartingaleAdapted":
        return MartingaleAdapted(np.atleast_2d(np.array(data["B"], dtype=float)), int(data["n"]))
    if family == "SphereVectors":
        return SphereVectors(int(data["d"]), int(data["n"]), float(data.get("radius", 1.0)))
    raise DomainError(f"unknown ensemble family {family!r}")


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample(spec: EnsembleSpec, seed: int, trial_index: int) -> np.ndarray:
    """The summands of one trial as an ``(n, d, d)`` array; pure in its arguments."""
    noise = spec.draw_noise(trial_rng(seed, trial_index))
    return spec.matrices_from_noise(noise)


def sample_martingale_path(spec: MartingaleAdapted, seed: int, trial: int):
    """``(S_n, W_n)`` for one trial of a martingale ensemble."""
    noise = spec.draw_noise(trial_rng(seed, trial))
    _, S, W = spec.paths_from_noise(noise[None, :])
    return S[0], W[0]


def noise_batch(spec: EnsembleSpec, seed: int, trials: range, stream: int = 0) -> np.ndarray:
    streams = TrialStreams(seed, stream)
    return np.stack([spec.draw_noise(streams.at(i)) for i in trials])


# ---------------------------------------------------------------------------
# exact moments
# ---------------------------------------------------------------------------


def exact_variance(spec: EnsembleSpec) -> np.ndarray:
    """``sum_i E X_i^2`` in closed form."""
    if isinstance(spec, FixedBasisRademacher):
        V = np.einsum("iab,ibc->ac", spec.bases, spec.bases)
    elif isinstance(spec, FiniteSupport):
        V = spec.n * np.einsum("k,kab,kbc->ac", spec.probs, spec.atoms, spec.atoms)
    elif isinstance(spec, SubExpScaled):
        # E eta^2 = E E^2 = 2 for a unit-rate exponential
        V = spec.n * 2.0 * (spec.B @ spec.B)
    elif isinstance(spec, RankOneSphere):
        # E (uu^T - I/d)^2 = E uu^T (1 - 2/d) + I/d^2 = (d - 1)/d^2 I
        d = spec.dim
        V = spec.n * (d - 1) / d**2 * np.eye(d)
    elif isinstance(spec, SphereVectors):
        # dilation squared is diag(||Y||^2, Y Y^T); E Y Y^T = radius^2 I / dim
        r2 = spec.radius**2
        V = spec.n * r2 * np.diag(np.r_[1.0, np.full(spec.dim, 1.0 / spec.dim)])
    else:
        raise NotExact(f"no closed-form variance for {spec.family}")
    return spectral.as_sym(V)


def estimate_variance(spec: EnsembleSpec, trials: int, seed: int, chunk: int = 256):
    """Monte Carlo mean of ``sum_i X_i^2`` and its entrywise standard error."""
    if trials < 2:
        raise DomainError("need at least two trials")
    d = spec.d
    total = np.zeros((d, d))
    total_sq = np.zeros((d, d))
    for start in range(0, trials, chunk):
        noise = noise_batch(spec, seed, range(start, min(trials, start + chunk)), STREAM_VARIANCE)
        if isinstance(spec, MartingaleAdapted):
            X = spec.paths_from_noise(noise)[0]
        else:
            X = np.stack([spec.matrices_from_noise(z) for z in noise])
        Q = np.einsum("tiab,tibc->tac", X, X)
        total += Q.sum(axis=0)
        total_sq += (Q * Q).sum(axis=0)
    mean = total / trials
    var = np.maximum(total_sq / trials - mean * mean, 0.0) * trials / (trials - 1)
    return mean, np.sqrt(var / trials)


def estimate_expected_w(spec: MartingaleAdapted, trials: int, seed: int) -> np.ndarray:
    """Monte Carlo estimate of ``E W_n`` (the mean predictable quadratic variation)."""
    mean, _ = estimate_variance(spec, trials, seed)
    return spectral.as_sym(mean)


def exact_mgf(spec: FiniteSupport, theta: float) -> np.ndarray:
    """``E exp(theta X) = sum_k p_k exp(theta A_k)`` by enumeration of the atoms."""
    if not isinstance(spec, FiniteSupport):
        raise NotExact("exact_mgf needs a finite-support ensemble")
    M = sum(p * spectral.matrix_exp(theta * A) for p, A in zip(spec.probs, spec.atoms))
    return spectral.as_sym(M)


# ---------------------------------------------------------------------------
# Orlicz psi_1 norm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    c: float

    def mean_exp_abs(self, s):
        return math.exp(s * abs(self.c)) if s * abs(self.c) < 700 else math.inf

    def scale(self):
        return abs(self.c)


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0

    def mean_exp_abs(self, s):
        return self.rate / (self.rate - s) if s < self.rate else math.inf

    def scale(self):
        return 1.0 / self.rate


@dataclass(frozen=True)
class FiniteDist:
    values: tuple
    probs: tuple

    def mean_exp_abs(self, s):
        v = np.abs(np.asarray(self.values, dtype=float))
        with np.errstate(over="ignore"):
            return float(np.dot(self.probs, np.exp(s * v)))

    def scale(self):
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class Pareto:
    """Pareto tail with index ``alpha``: no exponential moment of any order."""

    alpha: float = 3.0
    xm: float = 1.0

    def mean_exp_abs(self, s):
        return 1.0 if s == 0 else math.inf

    def scale(self):
        return self.xm


def orlicz_psi1_norm(dist, rtol: float = 1e-9, max_iter: int = 200) -> float:
    """``inf {C > 0 : E exp(|xi| / C) <= 2}`` by bisection on ``log C``."""
    scale = dist.scale()
    if scale == 0:
        return 0.0

    def ok(C):
        return dist.mean_exp_abs(1.0 / C) <= 2.0

    lo, hi = 1e-9, 1e3 * scale
    if not ok(hi):
        raise NoFiniteNorm(f"E exp(|xi|/C) > 2 even at C = {hi:.3g}")
    if ok(lo):
        return lo
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi / lo - 1.0 <= rtol:
            break
    return hi


# ---------------------------------------------------------------------------
# summary parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleParams:
    """Variance and scale parameters feeding the tail bounds.

    ``sigma2 = ||sum E X_i^2||``, ``trace_var = tr(sum E X_i^2)``.  ``U`` is
    the almost-sure norm bound for bounded families and twice the psi_1 norm
    of ``||X_i||`` for the sub-exponential family.  A zero-variance ensemble
    (``S_n = 0`` almost surely) reports ``sigma2 = intdim = 0``.
    """

    d: int
    n: int
    sigma2: float
    U: float
    trace_var: float
    intdim: float
    exact: bool
    samples: int = 0
    variance: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def degenerate(self) -> bool:
        return self.sigma2 == 0.0


def ensemble_params(spec: EnsembleSpec, trials: int = 100_000, seed: int = 0) -> EnsembleParams:
    """Exact parameters where a closed form exists, otherwise Monte Carlo estimates."""
    samples = 0
    try:
        V = exact_variance(spec)
        exact = True
    except NotExact:
        V, _ = estimate_variance(spec, trials, seed)
        V = spectral.as_sym(V)
        exact = False
        samples = trials
    w = spectral.eigvals_sym(V)
    sigma2 = float(max(w[-1], 0.0))
    trace_var = float(np.sum(np.clip(w, 0.0, None)))
    if sigma2 <= 1e-14 * max(1.0, trace_var):
        sigma2, trace_var, intdim = 0.0, 0.0, 0.0
    else:
        intdim = trace_var / sigma2

    if isinstance(spec, FixedBasisRademacher):
        U = float(np.max(spectral.sym_batch_norms(spec.bases)))
    elif isinstance(spec, FiniteSupport):
        U = float(np.max(spectral.sym_batch_norms(spec.atoms)))
    elif isinstance(spec, RankOneSphere):
        d = spec.dim
        U = max(1.0 - 1.0 / d, 1.0 / d) if d > 1 else 1.0
    elif isinstance(spec, SubExpScaled):
        # ||X_i|| = E_i ||B|| with E_i ~ Exp(1)
        U = 2.0 * orlicz_psi1_norm(Exponential(rate=1.0 / spectral.op_norm(spec.B)))
    elif isinstance(spec, MartingaleAdapted):
        U = spectral.op_norm(spec.B)
    elif isinstance(spec, SphereVectors):
        U = spec.radius
    else:
        raise DomainError(f"unsupported family {spec.family}")
    if U == 0.0:
        U = 1.0
    return EnsembleParams(spec.d, spec.n, sigma2, U, trace_var, intdim, exact, samples, V)


# ---------------------------------------------------------------------------
# exhaustive enumeration
# ---------------------------------------------------------------------------


def enumerate_sum_distribution(spec: FiniteSupport, max_outcomes: int = MAX_OUTCOMES):
    """Exact law of ``S_n`` as a list of ``(matrix, probability)`` pairs.

    Built by repeated convolution with the atom list; outcomes whose
    matrices coincide bit-for-bit are merged.
    """
    if not isinstance(spec, FiniteSupport):
        raise NotExact("enumeration needs a finite-support ensemble")
    if spec.k**spec.n > max_outcomes:
        raise OutcomeExplosion(f"{spec.k}^{spec.n} outcomes exceed {max_outcomes}")
    dist = {np.zeros((spec.d, spec.d)).tobytes(): (np.zeros((spec.d, spec.d)), 1.0)}
    for _ in range(spec.n):
        nxt = {}
        for S, p in dist.values():
            for A, q in zip(spec.atoms, spec.probs):
                if q == 0:
                    continue
                T = S + A
                key = T.tobytes()
                if key in nxt:
                    nxt[key] = (T, nxt[key][1] + p * q)
                else:
                    nxt[key] = (T, p * q)
        dist = nxt
    return [(spectral.as_sym(S), p) for S, p in dist.values()]


def enumerable(spec: EnsembleSpec, max_outcomes: int = MAX_OUTCOMES) -> bool:
    return isinstance(spec, FiniteSupport) and spec.k**spec.n <= max_outcomes


def exact_tail(distribution, t_grid) -> np.ndarray:
    """``P(||S_n|| > t)`` at each ``t`` from an enumerated distribution."""
    norms = np.array([spectral.op_norm(S) for S, _ in distribution])
    probs = np.array([p for _, p in distribution])
    return np.array([float(probs[norms > t].sum()) for t in t_grid])


def enumerate_martingale_paths(spec: MartingaleAdapted, max_paths: int = 1 << 20):
    """Every sign path of a martingale ensemble as ``(S_n, W_n, probability)``."""
    if 2**spec.n > max_paths:
        raise OutcomeExplosion(f"2^{spec.n} paths exceed {max_paths}")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=spec.n)))
    _, S, W = spec.paths_from_noise(signs)
    p = 0.5**spec.n
    return [(S[k], W[k], p) for k in range(len(signs))]
