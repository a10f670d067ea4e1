"""Acceptance checks, one test per property.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting; the lines are repeated in the pytest terminal summary.
Configurations (paths, seeds, sizes) are fixed up front.
"""
from __future__ import annotations

import configparser
import filecmp
import time

import numpy as np
import pytest

from modisperse.cli import run
from modisperse.imethod import (
    AlmostConservationConfig,
    IMultiplier,
    almost_conservation_run,
    commutator_norm,
    commutator_scan,
    mean_window_increment,
)
from modisperse.modop import ModulatedOperator, operator_norm_probe, x_apply, x_kdv, x_mkdv
from modisperse.modpath import (
    brownian,
    constant,
    dyadic_pairs,
    estimate_rho,
    geometric_a_grid,
    linear,
    phi_many,
    sample_fbm,
)
from modisperse.oracle import quadrature_x
from modisperse.spectral import inner, project, random_field, sobolev_norm
from modisperse.young import galerkin_convergence_study, solve_global

VERDICTS: list[str] = []


def verdict(name: str, checks: dict[str, bool], detail: str, elapsed: float, budget: float | None):
    if budget is not None:
        checks = dict(checks, runtime=elapsed < budget)
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail} [{elapsed:.1f}s]"
    if failed:
        line += " failed: " + ", ".join(failed)
    print(line)
    VERDICTS.append(line)
    assert ok, line


def _dyadic_time_pairs(T: float, levels: int = 2):
    return [(T * i / 2**lvl, T * (i + 1) / 2**lvl) for lvl in range(levels + 1) for i in range(2**lvl)]




def test_phi_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    path = brownian(2**10, 1.0, seed=7)
    worst = {"additivity": 0.0, "conjugation": 0.0, "bound": 0.0, "a=0": 0.0, "constant": 0.0, "linear": 0.0}
    # closed forms are compared relative to t - s, the integral of the
    # unit-modulus integrand; near zeros of Phi the pointwise relative error
    # only measures the conditioning of the zero, so it is reported, not tested
    pointwise = 0.0
    c, v = 0.37, 1.9
    flat, ramp = constant(c, 64), linear(v, 64)
    for _ in range(100):  # 100 intervals x 100 frequencies = 10^4 triples
        s, u, t = np.sort(rng.uniform(0.0, 1.0, 3))
        a = rng.choice([-1.0, 1.0], 100) * 10.0 ** rng.uniform(-3, 4, 100)
        whole = phi_many(path, s, t, a)
        left, right = phi_many(path, s, u, a), phi_many(path, u, t, a)
        scale = np.abs(left) + np.abs(right)
        worst["additivity"] = max(worst["additivity"], np.max(np.abs(left + right - whole) / scale))
        worst["conjugation"] = max(worst["conjugation"],
                                   np.max(np.abs(phi_many(path, s, t, -a) - np.conj(whole)) / np.abs(whole)))
        worst["bound"] = max(worst["bound"], np.max(np.abs(whole)) / (t - s) - 1.0)
        worst["a=0"] = max(worst["a=0"], abs(phi_many(path, s, t, [0.0])[0] - (t - s)) / (t - s))
        ref = np.exp(1j * a * c) * (t - s)
        worst["constant"] = max(worst["constant"], np.max(np.abs(phi_many(flat, s, t, a) - ref)) / (t - s))
        x = a * v
        # (e^{ixt} - e^{ixs}) / (ix) without cancellation
        ref = np.exp(0.5j * x * (s + t)) * 2.0 * np.sin(0.5 * x * (t - s)) / x
        err = np.abs(phi_many(ramp, s, t, a) - ref)
        worst["linear"] = max(worst["linear"], np.max(err) / (t - s))
        pointwise = max(pointwise, np.max(err / np.abs(ref)))
    elapsed = time.perf_counter() - start
    checks = {k: (val <= 1e-12) for k, val in worst.items()}
    detail = ", ".join(f"{k} {val:.1e}" for k, val in worst.items())
    detail += f" (linear pointwise relative {pointwise:.1e})"
    verdict("phi exactness", checks, detail, elapsed, 5.0)




def test_irregularity_recovery():
    start = time.perf_counter()
    a_grid = geometric_a_grid(0.5, 500.0, 6)
    lin = linear(1.0, 2**12)
    lin_pairs = dyadic_pairs(lin, 64)
    lin_rho = {g: estimate_rho(lin, g, a_grid, lin_pairs).rho_hat for g in (0.3, 0.5, 0.7)}
    n = 2**18
    bm, fb = [], []
    for seed in range(5):
        p = brownian(n, 1.0, seed=seed)
        bm.append(estimate_rho(p, 0.55, a_grid, dyadic_pairs(p, 64)).rho_hat)
        q = sample_fbm(0.75, n, 1.0, seed=seed)
        fb.append(estimate_rho(q, 0.55, a_grid, dyadic_pairs(q, 64)).rho_hat)
    elapsed = time.perf_counter() - start
    checks = {
        "linear": all(abs(r - (1 - g)) <= 0.1 for g, r in lin_rho.items()),
        "brownian in [0.8, 1.1]": all(0.8 <= r <= 1.1 for r in bm),
        "fbm below brownian": all(f < b for f, b in zip(fb, bm)),
    }
    detail = ("linear " + " ".join(f"{g}:{r:.3f}" for g, r in lin_rho.items())
              + "; brownian " + " ".join(f"{r:.3f}" for r in bm)
              + "; fbm(0.75) " + " ".join(f"{r:.3f}" for r in fb))
    verdict("irregularity recovery", checks, detail, elapsed, 60.0)




def test_operator_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    errors = {"kdv": [], "mkdv": []}
    for equation, K in (("kdv", 8), ("mkdv", 6)):
        for case in range(20):
            path = brownian(64, 2.0**-10, seed=100 + case)
            op = ModulatedOperator(equation, path, K)
            fields = [random_field(1.0, K, seed=1000 * case + i) for i in range(op.arity)]
            s, t = np.sort(rng.uniform(0.0, path.horizon, 2))
            got = x_apply(op, s, t, fields, truncate=False)
            ref = quadrature_x(equation, path, s, t, fields, order=16)
            errors[equation].append(sobolev_norm(got - ref) / sobolev_norm(ref))
    elapsed = time.perf_counter() - start
    checks = {eq: max(e) <= 1e-5 for eq, e in errors.items()}
    detail = ", ".join(f"{eq} max rel err {max(e):.1e}" for eq, e in errors.items())
    verdict("operator oracle", checks, detail, elapsed, 120.0)




def test_exact_invariants():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    path = brownian(512, 1.0, seed=8)
    kdv = ModulatedOperator("kdv", path, 8)
    mkdv = ModulatedOperator("mkdv", path, 4)
    # a pool of split intervals keeps the phase cache warm; fields are fresh per case
    pool = [tuple(np.sort(rng.uniform(0.0, 1.0, 3))) for _ in range(40)]
    worst = {"orthogonality": 0.0, "additivity": 0.0, "reality": 0.0}
    symmetric = True
    for case in range(1000):
        s, u, t = pool[case % len(pool)]
        f, g, h = (random_field(1.0, 8, seed=10 * case + i) for i in range(3))
        out = x_kdv(kdv, s, t, f, f)
        worst["orthogonality"] = max(worst["orthogonality"],
                                     abs(inner(f, out)) / (sobolev_norm(f) * sobolev_norm(out)))
        whole = x_kdv(kdv, s, t, f, g)
        split = x_kdv(kdv, s, u, f, g) + x_kdv(kdv, u, t, f, g)
        worst["additivity"] = max(worst["additivity"],
                                  np.max(np.abs(split.coeffs - whole.coeffs)) / np.max(np.abs(whole.coeffs)))
        symmetric &= np.array_equal(whole.coeffs, x_kdv(kdv, s, t, g, f).coeffs)
        worst["reality"] = max(worst["reality"], out.hermitian_defect() / sobolev_norm(out))
        a, b, c = (x.resized(4) for x in (f, g, h))
        m_out = x_mkdv(mkdv, s, t, a, a, a)
        worst["orthogonality"] = max(worst["orthogonality"],
                                     abs(inner(a, m_out)) / (sobolev_norm(a) * sobolev_norm(m_out)))
        m_whole = x_mkdv(mkdv, s, t, a, b, c)
        m_split = x_mkdv(mkdv, s, u, a, b, c) + x_mkdv(mkdv, u, t, a, b, c)
        worst["additivity"] = max(worst["additivity"],
                                  np.max(np.abs(m_split.coeffs - m_whole.coeffs)) / np.max(np.abs(m_whole.coeffs)))
        symmetric &= all(np.array_equal(m_whole.coeffs, x_mkdv(mkdv, s, t, *p).coeffs)
                         for p in ((b, a, c), (c, b, a), (a, c, b)))
        worst["reality"] = max(worst["reality"], m_out.hermitian_defect() / sobolev_norm(m_out))
    elapsed = time.perf_counter() - start
    checks = {k: v <= 1e-12 for k, v in worst.items()}
    checks["symmetry"] = bool(symmetric)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", symmetry exact {bool(symmetric)}"
    verdict("exact invariants", checks, detail, elapsed, 30.0)




def test_conservation():
    start = time.perf_counter()
    gamma = 0.55
    # the path must be much finer than the solver step: the drift is set by
    # the resolution of the piecewise-linear path, not by h
    path = brownian(2**21, 1.0, seed=1)
    op = ModulatedOperator("kdv", path, 32)
    psi0 = random_field(1.0, 32, 0.0, seed=3, norm=1.0)
    X = op.increment()
    drifts = [solve_global(X, psi0, 1.0, tol=1e-10, h=h, gamma=gamma).max_drift()
              for h in (2.0**-10, 2.0**-11)]
    elapsed = time.perf_counter() - start
    ratio = drifts[0] / drifts[1]
    target = 2.0 ** (2 * gamma - 1 - 0.2)
    checks = {"drift <= 1e-4": drifts[0] <= 1e-4, "halving ratio": ratio >= target}
    detail = f"drift h=2^-10 {drifts[0]:.3e}, h=2^-11 {drifts[1]:.3e}, ratio {ratio:.3f} (>= {target:.3f})"
    verdict("conservation", checks, detail, elapsed, 600.0)




def test_galerkin_convergence():
    start = time.perf_counter()
    path = brownian(2**14, 1.0, seed=2)
    op = ModulatedOperator("kdv", path, 64)
    psi0 = random_field(1.0, 64, 0.0, seed=5, norm=1.0)
    rows = galerkin_convergence_study(op, psi0, 1.0, [8, 16, 32], h=2.0**-8)
    elapsed = time.perf_counter() - start
    c0 = [r["gap_c0"] for r in rows]
    ch = [r["gap_c_half"] for r in rows]
    checks = {"C0 decreasing": c0[0] > c0[1], "C1/2 decreasing": ch[0] > ch[1]}
    detail = f"C0 gaps {c0[0]:.3g} -> {c0[1]:.3g}, C1/2 gaps {ch[0]:.3g} -> {ch[1]:.3g}"
    verdict("galerkin convergence", checks, detail, elapsed, 600.0)




def test_smoothing_threshold():
    start = time.perf_counter()
    path = brownian(2**14, 1.0, seed=4)
    pairs = _dyadic_time_pairs(1.0)
    ratios = {0.4: [], 1.2: []}
    for K in (16, 32, 64):
        res = operator_norm_probe(ModulatedOperator("kdv", path, K), 0.0, [0.4, 1.2], 4, pairs)
        for b in ratios:
            ratios[b].append(res["summary"][b]["max"])
    elapsed = time.perf_counter() - start
    low, high = ratios[0.4], ratios[1.2]
    checks = {
        "beta=0.4 stable": max(low) <= 2 * min(low),
        "beta=1.2 grows": all(x < y for x, y in zip(high, high[1:])),
    }
    detail = ("K=16,32,64 beta=0.4 " + " ".join(f"{x:.3g}" for x in low)
              + "; beta=1.2 " + " ".join(f"{x:.3g}" for x in high))
    verdict("smoothing threshold", checks, detail, elapsed, 300.0)




def test_commutator_decay():
    start = time.perf_counter()
    path = brownian(2**18, 1.0, seed=1)
    rho_hat = estimate_rho(path, 0.55, geometric_a_grid(0.5, 500.0, 6), dyadic_pairs(path, 64)).rho_hat
    op = ModulatedOperator("kdv", path, 64)
    scan = commutator_scan(op, -0.25, [4, 8, 16, 32], samples=4, seed=0)
    slope = scan["slope"]
    N = 32.0
    f = project(random_field(1.0, 64, -0.25, seed=1), 15)  # outputs stay below N
    g = project(random_field(1.0, 64, -0.25, seed=2), 15)
    zero_region = commutator_norm(op, IMultiplier(-0.25, N), 0.0, 1.0, f, g)
    null = commutator_norm(op, IMultiplier(0.0, 4.0), 0.0, 1.0,
                           random_field(1.0, 64, seed=3), random_field(1.0, 64, seed=4))
    elapsed = time.perf_counter() - start
    checks = {
        "slope <= -0.7": slope <= -0.7,
        "slope within 0.3 of -rho_hat": abs(slope + rho_hat) <= 0.3,
        "zero region": zero_region == 0.0,
        "m=1 null": null == 0.0,
    }
    detail = (f"slope {slope:.3f}, rho_hat {rho_hat:.3f}, medians "
              + " ".join(f"{r['median']:.3g}" for r in scan["rows"])
              + f", zero-region {zero_region:g}, null {null:g}")
    verdict("commutator decay", checks, detail, elapsed, 600.0)




def test_almost_conservation():
    start = time.perf_counter()
    reports = {N: almost_conservation_run(AlmostConservationConfig(alpha=-0.25, epsilon0=0.1, N=N, K=64,
                                                                   windows=8, h=2.0**-6))
               for N in (1.0, 2.0, 4.0, 8.0)}
    elapsed = time.perf_counter() - start
    top = reports[8.0]
    peak = max(max(w["energy0"], w["energy1"]) for w in top["windows"]) if top["windows"] else float("inf")
    incs = [mean_window_increment(r) for r in reports.values()]
    checks = {
        "8 windows below 2 eps0": top["ok"] and len(top["windows"]) >= 8 and peak < 0.2,
        "increments decrease with N": all(a > b for a, b in zip(incs, incs[1:])),
    }
    detail = (f"N=8: {len(top['windows'])} windows, peak energy {peak:.6f}, lambda {top['lambda']:.3f}; "
              "mean increments N=1,2,4,8 " + " ".join(f"{x:.3g}" for x in incs))
    verdict("almost conservation", checks, detail, elapsed, 900.0)




REPLAY_COMMANDS = [
    ["path", "--kind", "fbm", "--hurst", "0.7", "--n", "1024", "--seed", "3"],
    ["irregularity", "--n", "4096", "--depth", "12"],
    ["operator", "--mode", "oracle", "--n", "64", "--horizon", "0.0009765625", "--K", "6", "--cases", "2",
     "--panels", "1024"],
    ["operator", "--mode", "probe", "--n", "512", "--K-list", "8,16", "--samples", "2"],
    ["operator", "--mode", "truncation", "--n", "512", "--K", "16", "--L-list", "4,8"],
    ["solve", "--n", "512", "--K", "12", "--h", "0.03125", "--snapshots", "0.5"],
    ["solve", "--equation", "mkdv", "--n", "512", "--K", "6", "--norm", "0.5", "--h", "0.0625"],
    ["solve", "--n", "512", "--K", "16", "--h", "0.0625", "--galerkin", "4,8,16"],
    ["imethod", "--mode", "scan", "--n", "512", "--K", "32", "--N-list", "2,4", "--samples", "2"],
    ["imethod", "--mode", "run", "--n", "1024", "--K", "16", "--N-list", "2", "--windows", "2"],
]


def _manifest_outputs(d):
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read(d / "manifest.ini")
    return [x for x in cfg.get("run", "outputs").split(",") if x]


def test_determinism(tmp_path, monkeypatch):
    start = time.perf_counter()
    mismatches = []
    for i, argv in enumerate(REPLAY_COMMANDS):
        first = tmp_path / f"c{i}" / "first"
        assert run(["--threads", "1"] + argv + ["--out", str(first)]) == 0, argv
        for label, head, env in (("threads 3", ["--threads", "3"], None), ("env auto", ["--threads", "0"], "2")):
            if env is None:
                monkeypatch.delenv("MODISPERSE_THREADS", raising=False)
            else:
                monkeypatch.setenv("MODISPERSE_THREADS", env)
            again = tmp_path / f"c{i}" / label.replace(" ", "_")
            code = run(head + ["replay", str(first / "manifest.ini"), "--out", str(again)])
            names = _manifest_outputs(first)
            same = (code == 0 and names == _manifest_outputs(again)
                    and all(filecmp.cmp(first / n, again / n, shallow=False) for n in names))
            if not same:
                mismatches.append(f"{argv[0]} {label}")
    monkeypatch.delenv("MODISPERSE_THREADS", raising=False)
    elapsed = time.perf_counter() - start
    detail = f"{len(REPLAY_COMMANDS)} commands replayed under 2 thread settings"
    if mismatches:
        detail += "; mismatched: " + ", ".join(mismatches)
    verdict("determinism", {"bit-identical": not mismatches}, detail, elapsed, None)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
