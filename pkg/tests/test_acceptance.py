"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion <n> <name>: PASS|FAIL <detail>`` line;
the same lines are repeated in the terminal summary.
"""

import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fractal_rd import assembly, dynamics, geometry, meshing, spectrum
from fractal_rd import evolve as ev
from fractal_rd.cli import Problem
from fractal_rd.config import load_config

from conftest import ACCEPTANCE_LINES, make_problem

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CI = ev.get_nonlinearity("chaffee_infante")
ZERO = ev.get_nonlinearity("zero")
SUITE = dynamics.SuiteConfig()
DOMAINS = ("square", "koch", "tree")


def report(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {name}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def domain_problem(name, kind="sigma", s=0.5):
    poly, levels = dynamics.build_domain(name, SUITE)
    return make_problem(poly, kind, levels=levels, s=s)


def test_01_matrix_invariants():
    rng = np.random.default_rng(1)
    worst, bad = 0.0, []
    for d in DOMAINS:
        for kind in ("sigma", "hausdorff-d", "dirichlet"):
            for s in (0.25, 0.5, 0.75):
                _, _, op = domain_problem(d, kind, s)
                ok, defect = dynamics.matrix_invariants(op, rng)
                worst = max(worst, defect)
                if not ok:
                    bad.append(f"{d}/{kind}/{s}")
    report(1, "matrix_invariants", not bad and worst <= 1e-12,
           f"27 rows, worst scaled defect {worst:.2e}, failing {bad or 'none'}")


def test_02_dirichlet_oracle():
    pr = Problem(load_config(CONFIGS / "square_dirichlet_spectrum.ini"))
    lam = spectrum.solve_eigs(pr.op, pr.M, k=1)[0].value
    rel = abs(lam / (2 * math.pi ** 2) - 1)
    report(2, "dirichlet_oracle", rel <= 0.02, f"lambda1 {lam:.6f} vs 2pi^2 {2 * math.pi ** 2:.6f}, rel {rel:.2e}")


def test_03_robin_oracle():
    eta = spectrum.robin_root(1.0, 1.0)
    target = 2 * eta ** 2
    _, _, op = make_problem(geometry.build_square(), "sigma", levels=5, s=None)
    lam = spectrum.solve_eigs(op, k=1)[0].value
    rel = abs(lam / target - 1)
    report(3, "robin_oracle", rel <= 0.02, f"lambda1 {lam:.6f} vs 2*root^2 {target:.6f}, rel {rel:.2e}")


def test_04_semigroup_contraction():
    worst = -math.inf
    for i, d in enumerate(DOMAINS):
        _, _, op = domain_problem(d)
        rng = np.random.default_rng([4, i])
        for _ in range(50):
            u0 = op.prolong(rng.normal(size=len(op.free)))
            for scheme in ("imex", "implicit"):
                tr = ev.evolve(op, op.M, u0, ZERO, SUITE.dt, 20 * SUITE.dt, scheme, snapshot_stride=10 ** 9)
                worst = max(worst, float(np.max(np.diff(tr.l2))) / tr.l2[0])
    report(4, "semigroup_contraction", worst <= 1e-10,
           f"3 domains x 50 seeds x 2 schemes, max relative step increase {worst:.2e}")


def test_05_linf_and_order():
    worst_inf, worst_order, rows, reported = -math.inf, math.inf, 0, []
    dt, steps = SUITE.dt, 40
    for i, (d, kind, s) in enumerate((d, k, s) for d in DOMAINS for k in ("sigma", "hausdorff-d")
                                     for s in (0.25, 0.5, 0.75)):
        _, _, op = domain_problem(d, kind, s)
        ML = assembly.lump(op.M)
        gated = assembly.is_m_matrix(op.reduce(ML) + dt * op.A_free, tol=1e-14)
        rng = np.random.default_rng([5, i])
        li, oi = -math.inf, math.inf
        for _ in range(5):
            u0 = op.prolong(rng.uniform(-1, 1, len(op.free)))
            v0 = u0 - op.prolong(rng.uniform(0, 1, len(op.free)))
            tu = ev.evolve(op, ML, u0, ZERO, dt, steps * dt, "imex", snapshot_stride=1)
            tv = ev.evolve(op, ML, v0, ZERO, dt, steps * dt, "imex", snapshot_stride=1)
            li = max(li, float(np.max(np.diff(tu.linf))))
            oi = min(oi, float((tu.snapshot_array() - tv.snapshot_array()).min()))
        if gated:
            rows += 1
            worst_inf, worst_order = max(worst_inf, li), min(worst_order, oi)
        else:
            reported.append(f"{d}/{kind}/{s}")
    square_rows = sum(1 for r in reported if r.startswith("square"))
    ok = rows > 0 and square_rows == 0 and worst_inf <= 1e-10 and worst_order >= -1e-10
    report(5, "linf_order", ok, f"{rows} M-matrix rows, max sup-norm increase {worst_inf:.2e}, "
                                f"min order gap {worst_order:.2e}; {len(reported)} rows reported only")


def test_06_lyapunov_descent():
    worst = -math.inf
    cases = [(geometry.build_square(), "sigma", 3), (geometry.build_koch(2), "hausdorff-d", 1)]
    for i, (poly, kind, levels) in enumerate(cases):
        _, _, op = make_problem(poly, kind, levels=levels)
        ML = assembly.lump(op.M)
        rng = np.random.default_rng([6, i])
        u0 = op.prolong(rng.uniform(-1.5, 1.5, len(op.free)))
        tr = ev.evolve(op, ML, u0, CI, 0.01, 5.0, "implicit", snapshot_stride=10 ** 9)
        assert tr.steps == 500
        L = tr.lyapunov
        worst = max(worst, float(np.max((L[1:] - L[:-1]) / (1 + np.abs(L[:-1])))))
    report(6, "lyapunov_descent", worst <= 1e-8, f"square and koch gen 2, 500 implicit steps, "
                                                 f"max relative increase {worst:.2e}")


def test_07_energy_order():
    ratios = []
    for kind in ("sigma", "hausdorff-d"):
        for s in (0.25, 0.5, 0.75):
            _, _, op = make_problem(geometry.build_square(), kind, levels=3, s=s)
            u0 = dynamics.smooth_start(op, op.M)
            dt = dynamics.energy_order_dt(op, op.M, u0, CI, 2 * SUITE.dt)
            r1 = ev.evolve(op, op.M, u0, CI, dt, 25 * dt, "implicit").en_residual[1:].max()
            r2 = ev.evolve(op, op.M, u0, CI, dt / 2, 25 * dt, "implicit").en_residual[1:].max()
            ratios.append(r1 / r2)
    ok = all(1.3 <= r <= 2.7 for r in ratios)
    report(7, "energy_order", ok, f"halving ratios {min(ratios):.3f}..{max(ratios):.3f} over 6 square rows")


def test_08_absorbing_ball():
    pr = Problem(load_config(CONFIGS / "square_bistable.ini"))
    op, M = pr.op, pr.M
    radii = []
    for amp in (1.0, 5.0, 25.0):
        for seed in range(3):
            rng = np.random.default_rng([8, seed])
            u0 = op.prolong(rng.uniform(-1, 1, len(op.free)))
            u0 *= amp / np.abs(u0).max()
            tr = ev.evolve(op, M, u0, CI, 0.01, 15.0, "implicit", snapshot_stride=10 ** 9)
            radii.append(dynamics.absorbing_radius(tr, 10.0))
    radii = np.array(radii)
    spread = radii.max() / radii.min() - 1
    report(8, "absorbing_ball", bool(np.all(np.isfinite(radii))) and spread <= 0.10,
           f"9 runs, radius after t=10 {radii.min():.6f}..{radii.max():.6f}, spread {spread:.2e}")


def test_09_pairwise_growth():
    worst = -math.inf
    for i, d in enumerate(DOMAINS):
        _, _, op = domain_problem(d)
        rng = np.random.default_rng([9, i])
        for _ in range(3):
            u0 = op.prolong(rng.uniform(-2, 2, len(op.free)))
            v0 = u0 + op.prolong(1e-2 * rng.normal(size=len(op.free)))
            a = ev.evolve(op, op.M, u0, CI, 0.01, 2.0, snapshot_stride=1)
            b = ev.evolve(op, op.M, v0, CI, 0.01, 2.0, snapshot_stride=1)
            worst = max(worst, dynamics.pairwise_growth_exponent(a, b, op.M))
    bound = 2 * CI.C_f * 1.1
    report(9, "pairwise_growth", worst <= bound, f"max fitted exponent {worst:.4f} vs bound {bound:.2f}")


def _equilibria(pr):
    ML = assembly.lump(pr.M)
    xi = spectrum.solve_eigs(pr.op, pr.M, k=1)[0]
    seed = xi.vector / np.abs(xi.vector).max()
    found = [dynamics.find_equilibrium(pr.op, ML, CI, x0) for x0 in (np.zeros(pr.op.n), seed, -seed)]
    return xi.value, dynamics.dedupe_equilibria(found, ML)


def test_10_bifurcation():
    details, ok = [], True
    for name, expect in (("square_bistable.ini", 3), ("square_chaffee_infante.ini", 1)):
        cfg = load_config(CONFIGS / name)
        pr = Problem(cfg)
        lam1, eqs = _equilibria(pr)
        ok &= (lam1 < 1 and len(eqs) >= 3) if expect == 3 else (lam1 > 1 and len(eqs) == 1
                                                                   and np.abs(eqs[0].x).max() < 1e-12)
        worst_rate, worst_dist = 0.0, 0.0
        for seed in range(4):
            rng = np.random.default_rng([10, seed])
            u0 = pr.op.prolong(rng.uniform(-1, 1, len(pr.op.free)))
            tr = ev.evolve(pr.op, pr.M, u0, CI, 0.01, 50.0, "implicit", snapshot_stride=500)
            probe = dynamics.probe_convergence(tr, eqs, pr.M)
            worst_rate = max(worst_rate, probe["dudt_final"])
            worst_dist = max(worst_dist, probe["final_distance"])
        ok &= worst_rate < 1e-6 and worst_dist < 1e-6
        details.append(f"{name.split('.')[0]}: lambda1 {lam1:.4f}, {len(eqs)} equilibria, "
                       f"max dudt(50) {worst_rate:.1e}, max distance {worst_dist:.1e}")
    report(10, "bifurcation", bool(ok), "; ".join(details))


def test_11_mazya_ratio():
    poly = geometry.build_koch(2)
    c = [assembly.empirical_mazya_constant(meshing.build_mesh(poly, lv), 1000, 0, "smooth") for lv in (1, 2)]
    change = c[1] / c[0] - 1
    ok = all(np.isfinite(x) and x > 0 for x in c) and abs(change) <= 0.2
    report(11, "mazya_ratio", ok, f"koch gen 2, 1000 samples: {c[0]:.5f} -> {c[1]:.5f}, change {change:+.2%}")


def _diagnose(tmp_path, tag, threads):
    out = tmp_path / tag
    env = dict(os.environ, FRACTAL_RD_NUM_THREADS=str(threads))
    r = subprocess.run([sys.executable, "-m", "fractal_rd", "diagnose", "--out", str(out)],
                       capture_output=True, env=env)
    return r.returncode, r.stdout, (out / "diagnose" / "suite_report.txt").read_bytes()


@pytest.mark.slow
def test_12_determinism(tmp_path):
    runs = [_diagnose(tmp_path, "a", 1), _diagnose(tmp_path, "b", 1), _diagnose(tmp_path, "c", 3)]
    codes = [r[0] for r in runs]
    same = all(r[1] == runs[0][1] and r[2] == runs[0][2] for r in runs)
    lines = runs[0][2].decode().splitlines()
    report(12, "determinism", same and codes == [0, 0, 0],
           f"3 diagnose runs (threads 1, 1, 3), exit codes {codes}, {len(lines)} report lines, "
           f"identical {same}")
