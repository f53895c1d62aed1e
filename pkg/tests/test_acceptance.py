"""Acceptance checks.  Each test prints one PASS/FAIL line.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest.
"""

import itertools
import math
import statistics
import sys
import time

import numpy as np
import pytest

from expdesign.baselines import brute_force, uniform_select
from expdesign.bench import SyntheticSpec, gen_synthetic, run_bench
from expdesign.core import EigenDecomp
from expdesign.criteria import KINDS, Criterion, evaluate, grad_sigma
from expdesign.relaxation import (FractionalDesign, MdConfig, kl_divergence, project_box_simplex,
                                  smoothed_covariance, smoothed_objective, solve_relaxation)
from expdesign.rounding import (find_constant, regret_certificate, round_design, select,
                                top_k_counts, whiten)


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, f"{label}: {detail}"
    return emit


def _certificate_failures(diag, eps, k):
    p = diag.initial_Z.shape[0]
    bad = 0
    for r in diag.records:
        bad += r.alpha_root_inner > p + diag.alpha * math.sqrt(p) + 1e-6
        bad += r.player_inner > math.sqrt(p) / diag.alpha + r.lambda_min + 1e-6
        bad += r.insertion_score - r.removal_score < eps / k - 1e-12
    cert = regret_certificate(diag, diag.initial_Z, diag.swap_vectors, diag.alpha)
    return bad, cert


@pytest.fixture(scope="module")
def theory_run():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((600, 3))
    k, eps = 240, 0.25
    t0 = time.perf_counter()
    pi, _ = solve_relaxation("A", X, k, 1, MdConfig(target_delta=0.125))
    wp = whiten(X, pi)
    d, diag = round_design(wp, pi, eps, "theory")
    return X, pi, wp, d, diag, eps, k, time.perf_counter() - t0


def test_ac01_theory_rounding_guarantee(theory_run, report):
    X, pi, wp, d, diag, eps, k, secs = theory_run
    lmin = float(np.linalg.eigvalsh(wp.gram(d.counts))[0])
    ratio = evaluate(Criterion("A"), d.covariance(X)) / evaluate(Criterion("A"), (X.T * pi.weights) @ X)
    ok = lmin >= 1 - 3 * eps - 1e-6 and ratio <= 1 + 6 * eps + 1e-6 and secs < 30
    report("AC01 theory rounding guarantee", ok,
           f"lambda_min={lmin:.6f} (>= 0.25), ratio={ratio:.6f} (<= 2.5), "
           f"swaps={len(diag.swaps)}, {secs:.1f}s")


def _split_oracle(w, cap):
    """Minimize KL over every subset of coordinates pinned at the cap."""
    n = w.size
    best, best_y = math.inf, None
    for mask in itertools.product((False, True), repeat=n):
        m = np.array(mask)
        rest = w[~m].sum()
        left = 1 - cap * m.sum()
        if rest <= 0 or left <= 0:
            if abs(left) < 1e-15 and rest >= 0:
                y = np.where(m, cap, 0.0)
            else:
                continue
        else:
            y = np.where(m, cap, w * (left / rest))
        if np.any(y > cap * (1 + 1e-12)):
            continue
        v = kl_divergence(y, w)
        if v < best:
            best, best_y = v, y
    return best, best_y


def test_ac02_projection_oracle(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst_kl = worst_coord = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 13))
        w = rng.dirichlet(np.full(n, rng.choice([0.2, 1.0, 5.0])))
        cap = rng.uniform(1 / n, 1.0)
        y = project_box_simplex(w, cap)
        kl_ref, y_ref = _split_oracle(w, cap)
        worst_kl = max(worst_kl, abs(kl_divergence(y, w) - kl_ref))
        worst_coord = max(worst_coord, float(np.max(np.abs(y - y_ref))))
    secs = time.perf_counter() - t0
    ok = worst_kl <= 1e-8 and worst_coord <= 1e-6
    # the exhaustive oracle itself dominates the runtime; report it for information
    report("AC02 projection vs split enumeration", ok,
           f"max KL diff={worst_kl:.2e}, max coord diff={worst_coord:.2e}, {secs:.1f}s incl. oracle")


def test_ac03_find_constant(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst, bracket_ok = 0.0, True
    for _ in range(500):
        p = int(rng.integers(1, 21))
        r = int(rng.integers(1, p + 1))
        G = rng.standard_normal((p, r))
        Z = G @ G.T * rng.uniform(0.01, 10)
        alpha = rng.uniform(0.1, 100)
        w, V = np.linalg.eigh(Z)
        c = find_constant(EigenDecomp(w, V), alpha)
        M = np.linalg.inv(c * np.eye(p) + alpha * Z)
        worst = max(worst, abs(np.trace(M @ M) - 1))
        bracket_ok &= -alpha * w[0] < c <= math.sqrt(p)
    secs = time.perf_counter() - t0
    ok = worst <= 1e-6 and bracket_ok and secs < 5
    report("AC03 find_constant", ok, f"max |tr-1|={worst:.2e}, bracket ok={bracket_ok}, {secs:.2f}s")


def test_ac04_iteration_certificates(theory_run, report):
    *_, diag, eps, k, _ = theory_run
    bad, cert = _certificate_failures(diag, eps, k)
    # the run above starts from the top-k set, which already clears the
    # threshold; repeat from the lowest-weight start so every check has work
    rng = np.random.default_rng(7)
    X = rng.standard_normal((400, 2)) * rng.exponential(1, (400, 1))
    k2 = 180
    pi, _ = solve_relaxation("A", X, k2, 1)
    _, diag2 = round_design(whiten(X, pi), pi, eps, "theory",
                            init=top_k_counts(-pi.weights, k2, 1))
    bad2, cert2 = _certificate_failures(diag2, eps, k2)
    ok = bad == 0 and cert.ok and bad2 == 0 and cert2.ok and len(diag2.records) > 0
    report("AC04 per-iteration certificates", ok,
           f"main run: {len(diag.records)} iterations, slack={cert.slack:.3g}; "
           f"hard start: {len(diag2.records)} iterations, violations={bad2}, "
           f"slack={cert2.slack:.3g}")


def _rand_psd(rng, p):
    r = int(rng.integers(1, p + 1))
    G = rng.standard_normal((p, r))
    return G @ G.T


def test_ac05_criterion_properties(report):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    fails = []
    for kind in KINDS:
        for c in (Criterion(kind), Criterion(kind, 0.5, 1.5)):
            for _ in range(200):
                p = int(rng.integers(1, 6))
                X = rng.standard_normal((p + 3, p))
                A = X.T @ X + _rand_psd(rng, p) * 0.1
                B = A + _rand_psd(rng, p)
                fa, fb = evaluate(c, A, X), evaluate(c, B, X)
                if not fa >= fb - 1e-9 * abs(fa):
                    fails.append((c.name, "monotone"))
                t = rng.uniform(0.05, 0.95)
                ft = evaluate(c, t * A, X)
                if not ft <= fa / t * (1 + 1e-9):
                    fails.append((c.name, "sublinear"))
                if not c.bayes and not math.isclose(ft, fa / t, rel_tol=1e-9):
                    fails.append((c.name, "homogeneous"))
                if c.bayes and not ft < fa / t:
                    fails.append((c.name, "strict"))
    secs = time.perf_counter() - t0
    ok = not fails and secs < 10
    report("AC05 criterion properties", ok,
           f"{len(KINDS) * 2 * 200} pairs, failures={fails[:3]}, {secs:.2f}s")


def test_ac06_gradients(report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for kind in "ATVD":
        c = Criterion(kind)
        for _ in range(50):
            p = int(rng.integers(2, 6))
            X = rng.standard_normal((p + 4, p))
            S = X.T @ X + 0.5 * np.eye(p)
            G = grad_sigma(c, S, X)
            E = rng.standard_normal((p, p))
            E = (E + E.T) / 2
            h = 1e-6
            f = (lambda M: evaluate(c, M, X, log=True)) if kind == "D" else \
                (lambda M: evaluate(c, M, X))
            fd = (f(S + h * E) - f(S - h * E)) / (2 * h)
            an = float(np.sum(G * E))
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    report("AC06 gradient finite differences", worst <= 1e-5, f"max rel err={worst:.2e}")


def _small_instances(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(3, 13))
        p = int(rng.integers(1, 4))
        b = int(rng.integers(1, 4))
        if b * n > 16 or n < p:
            continue
        k = int(rng.integers(p, b * n + 1))
        out.append((rng.standard_normal((n, p)), k, b))
    return out


def test_ac07_small_instance_exactness(report):
    worst = -math.inf
    for X, k, b in _small_instances(20, 71):
        for kind in "ADTV":
            c = Criterion(kind)
            pi, _ = solve_relaxation(c, X, k, b, MdConfig(smoothing_lambda=1e-9, iterations=2000,
                                                          step_mode="line_search"))
            rel = evaluate(c, (X.T * pi.weights) @ X, X)
            opt = evaluate(c, brute_force(X, c, k, b).covariance(X), X)
            worst = max(worst, rel - opt)
    t_exact = True
    for X, k, b in _small_instances(30, 72):
        d, _ = select(X, "T", k, b)
        bf = brute_force(X, "T", k, b)
        t_exact &= evaluate(Criterion("T"), d.covariance(X)) == evaluate(Criterion("T"), bf.covariance(X))
    swap, unif = [], []
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        n, p = int(rng.integers(6, 13)), int(rng.integers(2, 4))
        k = int(rng.integers(p + 1, n))
        X = rng.standard_normal((n, p))
        ds, _ = select(X, "A", k, 1, mode="practical")
        du = uniform_select(X, "A", k, repeats=10, rng=seed)
        swap.append(evaluate(Criterion("A"), ds.covariance(X)))
        unif.append(evaluate(Criterion("A"), du.covariance(X)))
    ms, mu = statistics.median(swap), statistics.median(unif)
    ok = worst <= 1e-6 and t_exact and ms <= mu
    report("AC07 small-instance exactness", ok,
           f"(a) max relaxation - optimum={worst:.2e}; (b) T exact={t_exact}; "
           f"(c) median A swap={ms:.4f} vs uniform={mu:.4f}")


def test_ac08_convergence_shape(report):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 5))
    k, lam = 10, 0.05
    c = Criterion("A")

    def run(T):
        pi, _ = solve_relaxation(c, X, k, 1, MdConfig(step_mode="sqrt_decay", iterations=T,
                                                      smoothing_lambda=lam))
        return smoothed_objective(c, X, pi.weights / k, k, 1, lam)

    t0 = time.perf_counter()
    ref = run(10**6)
    gaps = {T: (run(T) - ref) / ref for T in (100, 400, 1000, 4000, 10**4)}
    ok = gaps[400] <= gaps[100] and gaps[4000] <= gaps[1000] and gaps[10**4] <= 1e-2
    report("AC08 convergence shape", ok,
           ", ".join(f"gap@{T}={g:.2e}" for T, g in gaps.items())
           + f", ref={ref:.7f}, {time.perf_counter() - t0:.0f}s")


def _fw_gap(c, X, w, k, b, lam=None):
    """Linear-minimization duality gap of ``w`` for the (smoothed) relaxation."""
    if lam is None:
        S, scale = (X.T * (k * w)) @ X, k
    else:
        S, scale = smoothed_covariance(X, w, k, lam), k / (1 + lam)
    g = scale * np.einsum("ij,jk,ik->i", X, grad_sigma(c, S, X), X)
    cap = min(1.0, b / k)
    y = np.zeros_like(w)
    left = 1.0
    for i in np.argsort(g, kind="stable"):
        y[i] = min(cap, left)
        left -= y[i]
    return float(g @ (w - y))


def test_ac09_smoothing_sandwich(report):
    delta = 1e-3
    rng = np.random.default_rng(9)
    bad, certified = [], True
    for _ in range(20):
        n, p = int(rng.integers(8, 16)), int(rng.integers(2, 4))
        X = rng.standard_normal((n, p))
        k = int(rng.integers(p + 1, n))
        for kind in "AV":
            c = Criterion(kind)
            cfg = MdConfig(smoothing_lambda=1e-9, iterations=3000, step_mode="line_search")
            w = solve_relaxation(c, X, k, 1, cfg)[0].weights / k
            F = evaluate(c, (X.T * (k * w)) @ X, X)
            certified &= _fw_gap(c, X, w, k, 1) <= delta * F
            for lam in (0.1, 0.3):
                cfg = MdConfig(smoothing_lambda=lam, iterations=3000, step_mode="line_search")
                wl = solve_relaxation(c, X, k, 1, cfg)[0].weights / k
                Fl = evaluate(c, smoothed_covariance(X, wl, k, lam), X)
                certified &= _fw_gap(c, X, wl, k, 1, lam) <= delta * Fl
                if not (F <= Fl * (1 + delta) and Fl <= (1 + lam) * (1 + delta) ** 2 * F):
                    bad.append((kind, lam, F, Fl))
    ok = not bad and certified
    report("AC09 smoothing sandwich", ok,
           f"80 checks, violations={len(bad)}, optimizers certified within delta={certified}")


def test_ac10_benchmark_ordering(report):
    t0 = time.perf_counter()
    rows = []
    for seed in range(5):
        X = gen_synthetic(SyntheticSpec(1000, 50, seed))
        rows += run_bench([X], ["A", "D", "V"], [60, 100], ["UNIFORM", "WEIGHTED", "SWAPPING"],
                          [seed])
    cells, bad = [], []
    for crit in "ADV":
        for k in (60, 100):
            med = {m: statistics.median(r.objective for r in rows
                                        if r.criterion == crit and r.k == k and r.method == m)
                   for m in ("UNIFORM", "WEIGHTED", "SWAPPING")}
            cells.append(f"{crit}/k={k}: S={med['SWAPPING']:.4g} U={med['UNIFORM']:.4g} "
                         f"W={med['WEIGHTED']:.4g}")
            if not (med["SWAPPING"] <= med["UNIFORM"] and med["SWAPPING"] <= med["WEIGHTED"]):
                bad.append((crit, k))
    secs = time.perf_counter() - t0
    failed = sum(r.failed for r in rows)
    ok = not bad and failed == 0 and secs < 600
    report("AC10 benchmark ordering", ok, "; ".join(cells) + f"; {secs:.0f}s")


def test_ac11_multiplicity_equivalence(report):
    rng = np.random.default_rng(11)
    worst, multiset_ok = 0.0, True
    c = Criterion("A")
    for _ in range(20):
        b = int(rng.integers(2, 4))
        n, p = int(rng.integers(5, 11)), int(rng.integers(2, 4))
        X = rng.standard_normal((n, p))
        k = int(rng.integers(p + 1, b * n))
        pi, _ = solve_relaxation(c, X, k, b)
        d, _ = round_design(whiten(X, pi), pi, None, "practical")
        Xp = np.repeat(X, b, axis=0)
        pip = FractionalDesign(np.repeat(pi.weights / b, b), k, 1)
        dp, _ = round_design(whiten(Xp, pip), pip, None, "practical")
        agg = dp.counts.reshape(n, b).sum(axis=1)
        multiset_ok &= bool(np.array_equal(agg, d.counts))
        fa, fb = evaluate(c, d.covariance(X)), evaluate(c, dp.covariance(Xp))
        worst = max(worst, abs(fa - fb) / max(abs(fa), 1e-300))
    ok = worst <= 1e-9 and multiset_ok
    report("AC11 multiplicity equivalence", ok,
           f"max rel objective diff={worst:.2e}, multisets equal={multiset_ok}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
