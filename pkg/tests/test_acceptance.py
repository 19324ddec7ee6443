"""Acceptance suite: ten end-to-end criteria, one PASS/FAIL line each.

Run directly (``python3 tests/test_acceptance.py``) or through pytest; in
both cases the per-criterion lines are printed.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from matbern import bounds, checks, cli, ensembles, kernelops, montecarlo
from matbern.bounds import BoundRequest
from matbern.ensembles import (
    FiniteSupport,
    FixedBasisRademacher,
    MartingaleAdapted,
    RankOneSphere,
    SphereVectors,
    SubExpScaled,
)
from matbern.kernelops import KernelSpec
from matbern.rng import STREAM_KERNEL, trial_rng

TRIALS = 100_000
CONFIDENCE = 0.99
RESULTS = {}

# every ensemble constructed by the suite, for the intrinsic-dimension check
BUILT = []


def record(k, passed, detail, seconds):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {k:>2}: {detail} [{seconds:.1f}s]"
    RESULTS[k] = line
    print(line)
    return passed


def keep(spec):
    BUILT.append(spec)
    return spec


def failing_rows(report):
    return [(r.t, r.ci_low, r.exact_p, r.bound_clipped) for r in report.rows if not r.dominated]


# ---------------------------------------------------------------------------


def criterion_1():
    """Exact dominance of the bounded-summand bound for Rademacher sign sums."""
    t0 = time.perf_counter()
    ok = True
    worst = math.inf
    for n in (4, 8, 12):
        spec = keep(FiniteSupport.scalar_rademacher(n))
        grid = n * np.arange(1, 21) / 20.0
        rep = montecarlo.run_dominance(spec, grid, exact=True)
        ok &= rep.passed and all(r.exact_p <= r.bound_clipped for r in rep.rows)
        worst = min(worst, min(r.bound_clipped - r.exact_p for r in rep.rows))
    dt = time.perf_counter() - t0
    ok &= dt < 10
    return record(1, ok, f"exact +-1 sums n=4,8,12, min slack {worst:.3e}", dt)


def criterion_2():
    """Statistical dominance for Rademacher-basis and rank-one sphere ensembles."""
    t0 = time.perf_counter()
    ok = True
    runs = 0
    for d in (1, 4, 16):
        for n in (16, 64):
            for spec in (FixedBasisRademacher.random(d, n, seed=100 * d + n), RankOneSphere(d, n)):
                keep(spec)
                params = ensembles.ensemble_params(spec)
                grid = montecarlo.default_t_grid(params)
                rep = montecarlo.run_dominance(
                    spec, grid, "bounded", TRIALS, seed=d * 1000 + n, confidence=CONFIDENCE, params=params
                )
                runs += 1
                if not rep.passed:
                    ok = False
                    print(f"  {spec.family} d={d} n={n} failing rows: {failing_rows(rep)}")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    return record(2, ok, f"{runs} runs x {TRIALS} trials, ci_low <= clipped bound everywhere", dt)


def criterion_3():
    """Two-regime bound for symmetrized-exponential scaling."""
    t0 = time.perf_counter()
    ok = True
    seen = set()
    cont = 0.0
    for d in (2, 8):
        spec = keep(SubExpScaled(np.eye(d) / 2, 32))
        params = ensembles.ensemble_params(spec)
        ok &= abs(params.U - 2.0) <= 1e-8
        thr = bounds.subexp_threshold(params.sigma2, d, 32, params.U)
        grid = np.unique(np.r_[np.geomspace(0.1, 200.0, 24), thr])
        rep = montecarlo.run_dominance(spec, grid, "subexp", TRIALS, seed=30 + d, confidence=CONFIDENCE, params=params)
        ok &= rep.passed
        seen |= {r.regime for r in rep.rows}
        # the two exponents agree at the threshold
        req = BoundRequest(32, d, params.sigma2, params.U, params.trace_var, thr)
        below = bounds.bernstein_subexp_tail(req)
        above = bounds.bernstein_subexp_tail(BoundRequest(32, d, params.sigma2, params.U, params.trace_var, np.nextafter(thr, np.inf)))
        K = below.meta["K"]
        sub_exp_at_thr = thr / (4 * params.U * K)
        rel = abs(below.meta["exponent"] - sub_exp_at_thr) / sub_exp_at_thr
        cont = max(cont, rel, abs(above.raw - below.raw) / below.raw)
        ok &= below.regime == "subgaussian" and above.regime == "subexponential"
    ok &= seen == {"subgaussian", "subexponential"} and cont <= 1e-12
    dt = time.perf_counter() - t0
    return record(3, ok, f"regimes {sorted(seen)}, branch mismatch {cont:.1e}", dt)


def criterion_4():
    """Martingale bound on the joint event with the predictable variation."""
    t0 = time.perf_counter()
    ok = True
    spec = keep(MartingaleAdapted(np.diag([1.0, 0.5, 0.25, 0.125]), 32))
    params = ensembles.ensemble_params(spec, trials=TRIALS, seed=4)
    max_trunc = 0.0
    for s2 in (16.0, 32.0):
        grid = np.linspace(0.5, 16.0, 20)
        rep = montecarlo.run_dominance(
            spec, grid, "martingale", TRIALS, seed=int(s2), confidence=CONFIDENCE, sigma2_event=s2, params=params
        )
        ok &= rep.passed
        for t in grid:
            res = bounds.martingale_tail(params.variance, s2, t, params.U)
            max_trunc = max(max_trunc, res.meta["truncated_trace"])
    ok &= max_trunc <= spec.d
    dt = time.perf_counter() - t0
    return record(4, ok, f"joint event at sigma2=16,32; max truncated trace {max_trunc:.3f} <= {spec.d}", dt)


def criterion_5():
    """Proof-level scalar and semidefinite inequalities."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    res = [
        checks.check_entropy_bound(),
        checks.check_exp_ratio(),
        checks.check_mgf_domination(rng),
        checks.check_lieb(rng),
        checks.check_peierls(rng),
        *checks.check_lieb_chain(rng),
        checks.check_supermartingale(rng),
        checks.check_truncated_mgf(),
    ]
    dt = time.perf_counter() - t0
    bad = [c.name for c in res if not c.passed]
    ok = not bad and dt < 120
    return record(5, ok, f"{len(res)} inequality families, failures: {bad or 'none'}", dt)


def criterion_6():
    """Stated constants: v <= 44, intrinsic dimension <= d, r decreasing."""
    t0 = time.perf_counter()
    v = checks.check_v_constant(np.random.default_rng(6), 10_000)
    mono = checks.check_monotone()
    specs = BUILT or [FixedBasisRademacher.random(4, 16, 0), RankOneSphere(4, 16)]
    specs = specs + [SphereVectors(5, 8), SphereVectors(5, 8, 0.5), FiniteSupport.scalar_rademacher(3)]
    worst = -math.inf
    for spec in specs:
        p = ensembles.ensemble_params(spec, trials=20_000)
        if not p.degenerate:
            worst = max(worst, p.intdim - spec.d)
    ok = v.passed and mono.passed and worst <= 1e-12
    dt = time.perf_counter() - t0
    return record(6, ok, f"max v {44 - v.worst_slack:.3f}, max(intdim - d) {worst:.3g} over {len(specs)} ensembles", dt)


def criterion_7():
    """Dilation identities and the doubled-trace vector bound."""
    t0 = time.perf_counter()
    dil = checks.check_dilation(np.random.default_rng(7), 10_000)
    rng = np.random.default_rng(77)
    exact = True
    for _ in range(1000):
        s2, t, U = rng.uniform(0.1, 10), rng.uniform(0.01, 30), rng.uniform(0.2, 3)
        l2 = bounds.vector_bernstein_l2(s2, t, U).raw
        single = bounds.bernstein_bounded_tail(BoundRequest(1, 1, s2, U, s2, t)).raw
        doubled = bounds.bernstein_bounded_tail(BoundRequest(1, 2, s2, U, 2 * s2, t)).raw
        exact &= l2 == 2 * single == doubled
    # the sphere-vector ensemble realizes the doubled trace and obeys the vector bound
    spec = keep(SphereVectors(8, 32))
    params = ensembles.ensemble_params(spec)
    exact &= params.trace_var == 2 * params.sigma2
    rep = montecarlo.run_dominance(spec, montecarlo.default_t_grid(params), "vector_l2", TRIALS, seed=71, params=params)
    ok = dil.passed and exact and rep.passed
    dt = time.perf_counter() - t0
    return record(7, ok, f"dilation error slack {dil.worst_slack:.1e}, l2 == 2 x bounded exactly: {exact}, sphere-vector dominance: {rep.passed}", dt)


def criterion_8():
    """Kernel integral operator pipeline."""
    t0 = time.perf_counter()
    spec = KernelSpec("gaussian", bandwidth=0.5)
    n, m, samples, seed = 200, 4000, 2000, 8
    rng = np.random.default_rng(80)
    equiv = 0.0
    for size in (5, 20, 50):
        pts = spec.sample(rng, size)
        g = kernelops.empirical_operator_eigs(kernelops.gram(spec, pts))
        full = kernelops.empirical_operator_spectrum(spec, pts, 64)
        k = int((g > 1e-8).sum())
        equiv = max(equiv, float(np.max(np.abs(g[:k] - full[:k]))))
    ok = equiv <= 1e-8

    params = kernelops.xi_parameters(spec, m)
    lo = bounds.kernel_validity_threshold(n, params.kappa, params.Lk_norm)
    hi = lo + 6.0 * math.sqrt(params.kappa * params.Lk_norm / n)
    grid = np.linspace(lo, hi, 10)
    rep = kernelops.kernel_dominance(spec, n, grid, samples, m, seed=seed, confidence=CONFIDENCE)
    ok &= rep.passed and all(kernelops.cor10_certificate(spec, n, t, m, params=params).valid for t in grid)

    ref = kernelops.nystrom_reference(spec, m)
    gap_ok = True
    for s in range(samples):
        pts = spec.sample(trial_rng(seed, s, STREAM_KERNEL), n)
        dev, _ = ref.deviation(pts)
        emp = kernelops.empirical_operator_eigs(kernelops.gram(spec, pts))[:10]
        gap_ok &= bool(np.max(np.abs(emp - ref.eigenvalues[:10])) <= dev + 1e-6)
    ok &= gap_ok

    worked = bounds.kernel_operator_tail(100, 1.0, 0.5, 4.0, 0.3).raw
    ok &= abs(worked - 0.161477) <= 1e-5
    dt = time.perf_counter() - t0
    ok &= dt < 900
    return record(
        8,
        ok,
        f"gram equivalence {equiv:.1e}, {samples} samples dominated: {rep.passed}, eigen gaps ok: {gap_ok}, worked value {worked:.6f}",
        dt,
    )


def criterion_9():
    """Convergence of nested projections."""
    t0 = time.perf_counter()
    res, idims, full = checks.projection_chain()
    mono = bool(np.all(np.diff(res) < 0))
    ok = mono and res[-1] < 1e-6 * res[0] and abs(idims[-1] - full) <= 1e-6
    dt = time.perf_counter() - t0
    ok &= dt < 60
    return record(9, ok, f"residuals {np.array2string(res, precision=3)}, intdim chain -> {idims[-1]:.6f} (full {full:.6f})", dt)


def criterion_10(tmp_dir: Path):
    """Byte-identical CLI output across thread counts and repeated runs."""
    t0 = time.perf_counter()
    cfg = tmp_dir / "repro.yaml"
    cfg.write_text(
        "kind: compare\n"
        "ensemble: {family: RankOneSphere, d: 4, n: 16}\n"
        "sim: {trials: 12000, seed: 1234}\n"
    )
    outs = []
    for threads in (1, 8, 1, 4):
        out = tmp_dir / f"repro_{len(outs)}.csv"
        code = cli.main(["compare", str(cfg), "--threads", str(threads), "--out", str(out)])
        outs.append((code, out.read_bytes(), (tmp_dir / f"repro_{len(outs)}.baselines.csv").read_bytes()))
    # one fresh interpreter as well
    out = tmp_dir / "repro_proc.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "matbern.cli", "compare", str(cfg), "--threads", "8", "--out", str(out)],
        capture_output=True,
    )
    ok = proc.returncode == 0 and all(o[0] == 0 for o in outs)
    ok &= len({o[1] for o in outs} | {out.read_bytes()}) == 1 and len({o[2] for o in outs}) == 1
    dt = time.perf_counter() - t0
    return record(10, ok, "compare output identical for threads 1, 8, 1, 4 and a fresh process", dt)


# ---------------------------------------------------------------------------
# pytest entry points
# ---------------------------------------------------------------------------


def test_criterion_01_exact_dominance():
    assert criterion_1()


def test_criterion_02_bounded_dominance():
    assert criterion_2()


def test_criterion_03_subexponential_dominance():
    assert criterion_3()


def test_criterion_04_martingale_dominance():
    assert criterion_4()


def test_criterion_05_inequality_suite():
    assert criterion_5()


def test_criterion_06_constants():
    assert criterion_6()


def test_criterion_07_dilation():
    assert criterion_7()


def test_criterion_08_kernel_pipeline():
    assert criterion_8()


def test_criterion_09_projection_convergence():
    assert criterion_9()


def test_criterion_10_reproducibility(tmp_path):
    assert criterion_10(tmp_path)


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        fns = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9]
        passed = [f() for f in fns] + [criterion_10(Path(tmp))]
    print(f"{sum(passed)}/{len(passed)} criteria passed")
    sys.exit(0 if all(passed) else 1)
