"""Command-line front end.

Each subcommand reads a run configuration, writes its artifacts into
``output.dir`` together with a manifest of every resolved parameter, and
exits with 0 (ok), 1 (a gated diagnostic failed), 2 (configuration or
precondition), 3 (blow-up) or 4 (numerical failure).

``FRACTAL_RD_NUM_THREADS`` caps the number of worker processes. Dense
linear algebra always runs on one BLAS thread so outputs do not depend on
the thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, assembly, dynamics, formats, geometry, kernels, meshing, spectrum
from .config import RunConfig, load_config, parse_init, render_config
from .errors import ConfigError, FractalRDError
from .evolve import default_dt, evolve, get_nonlinearity

THREADS_ENV = "FRACTAL_RD_NUM_THREADS"


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


# pipeline -----------------------------------------------------------------

def build_polygon(cfg: RunConfig) -> geometry.PrefractalPolygon:
    d = cfg["domain"]
    fam = d["family"]
    if fam == "square":
        return geometry.build_square(d["side"])
    if fam == "koch":
        return geometry.build_koch(d["generation"], d["side"])
    if fam == "tree":
        return geometry.build_tree(d["a"], d["alpha"], d["beta"], d["theta"], d["generation"])
    return geometry.build_cusp(d["gamma"], d["L"], d["l"], d["segments"])


def build_measure(cfg: RunConfig, poly) -> geometry.BoundaryMeasure:
    m = cfg["measure"]
    return geometry.attach_measure(poly, m["kind"], m["total_mass"], smooth_scale=m["smooth_scale"],
                                   fractal_dirichlet=m["fractal_dirichlet"])


class Problem:
    """Polygon, mesh, measure and assembled operator for one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.poly = build_polygon(cfg)
        self.measure = build_measure(cfg, self.poly)
        self.mesh = meshing.build_mesh(self.poly, cfg["mesh"]["refine"], cfg["mesh"]["smooth"])
        self.mesh_measure = meshing.transfer_measure(self.mesh, self.measure)
        s = cfg["form"]["s"]
        self.op = assembly.assemble(self.mesh, self.mesh_measure, s=None if s == "off" else s,
                                    eta=cfg["form"]["eta"])
        self.M = assembly.lump(self.op.M) if cfg["form"]["lumped"] else self.op.M

    def nonlinearity(self):
        nl = self.cfg["nonlinearity"]
        return get_nonlinearity("linear", kappa=nl["kappa"]) if nl["name"] == "linear" \
            else get_nonlinearity(nl["name"])


def run_dir(cfg: RunConfig, sub: str) -> Path:
    p = cfg.output_dir / sub
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_manifest(path: Path, cfg: RunConfig, command: str, **resolved) -> None:
    run = {"command": command, "version": __version__, "kernel_backend": kernels.BACKEND}
    run.update(resolved)
    path.write_text(render_config(cfg, {"run": run}))


def initial_state(kind_arg, problem: Problem, cfg: RunConfig) -> np.ndarray:
    kind, arg = kind_arg
    op = problem.op
    if kind == "zero":
        u = np.zeros(op.n)
    elif kind == "const":
        u = np.full(op.n, arg)
    elif kind == "random":
        rng = np.random.default_rng(cfg["output"]["seed"])
        u = rng.uniform(-arg, arg, op.n)
    elif kind == "eig":
        path = cfg.output_dir / "spectrum" / f"eigvec_{arg:03d}.txt"
        if not path.exists():
            raise ConfigError(f"time.init: eig:{arg} needs {path}; run the spectrum command first")
        u = formats.read_vector(path)
    else:
        u = formats.read_vector(arg)
    if u.shape != (op.n,):
        raise ConfigError(f"time.init: initial state has {u.size} values, mesh has {op.n} nodes")
    return op.prolong(op.restrict(u))


# subcommands --------------------------------------------------------------

def cmd_mesh(cfg: RunConfig) -> int:
    pr = Problem(cfg)
    out = run_dir(cfg, "mesh")
    formats.write_polygon(out / "polygon.txt", pr.poly)
    formats.write_measure(out / "measure.txt", pr.measure)
    formats.write_mesh(out / "mesh.txt", pr.mesh, pr.mesh_measure)
    stats = meshing.mesh_stats(pr.mesh)
    stats.update(dimension=pr.poly.dimension, area=float(pr.mesh.signed_areas().sum()),
                 boundary_mass=pr.mesh_measure.total_mass)
    lines = [f"{k} {formats.fmt(v) if isinstance(v, float) else v}" for k, v in stats.items()]
    (out / "stats.txt").write_text("\n".join(lines) + "\n")
    write_manifest(out / "manifest.txt", cfg, "mesh")
    print("\n".join(lines))
    return 0


def cmd_evolve(cfg: RunConfig) -> int:
    t = cfg["time"]
    init = parse_init(t["init"])
    pr = Problem(cfg)
    f = pr.nonlinearity()
    u0 = initial_state(init, pr, cfg)
    dt = default_dt(pr.op, pr.M) if t["dt"] == "auto" else t["dt"]
    out = run_dir(cfg, "evolve")
    resolved = {"dt_resolved": dt}
    write_manifest(out / "manifest.txt", cfg, "evolve", **resolved)
    traj = evolve(pr.op, pr.M, u0, f, dt, t["T"], t["scheme"], t["snapshot_stride"],
                  t["newton_tol"], t["newton_max"])
    formats.write_trajectory(out / "trajectory.csv", traj)
    formats.write_snapshots(out / "snapshots", traj.snapshots)
    holder = dynamics.holder_exponent(traj)
    print(f"steps {traj.steps} dt {formats.fmt(dt)} final_l2 {traj.l2[-1]:.6e} "
          f"final_dudt {traj.dudt[-1]:.3e} holder_fit {'-' if holder is None else f'{holder:.3f}'}")
    return 0


def cmd_spectrum(cfg: RunConfig, k: int | None = None) -> int:
    k = cfg["spectrum"]["k"] if k is None else k
    pr = Problem(cfg)
    pairs = spectrum.solve_eigs(pr.op, pr.M, k=k, method=cfg["spectrum"]["method"])
    out = run_dir(cfg, "spectrum")
    formats.write_eigenreport(out / "eigenreport.txt", pairs)
    for i, p in enumerate(pairs, 1):
        formats.write_vector(out / f"eigvec_{i:03d}.txt", p.vector)
    report = spectrum.check_principal_positivity(pairs, pr.op.free)
    (out / "positivity.txt").write_text(f"status {report['status']}\nsimple_gap {report['simple_gap']['status']}\n")
    write_manifest(out / "manifest.txt", cfg, "spectrum", k_resolved=k)
    print((out / "eigenreport.txt").read_text(), end="")
    return 0


def cmd_equilibria(cfg: RunConfig) -> int:
    eq = cfg["equilibria"]
    pr = Problem(cfg)
    f = pr.nonlinearity()
    ML = assembly.lump(pr.M)
    xi = spectrum.solve_eigs(pr.op, pr.M, k=1)[0].vector
    xi = eq["seed_scale"] * xi / np.abs(xi).max()
    found = [dynamics.find_equilibrium(pr.op, ML, f, x0, eq["tol"], eq["max_iter"])
             for x0 in (np.zeros(pr.op.n), xi, -xi)]
    kept = dynamics.dedupe_equilibria(found, ML, eq["min_distance"])
    out = run_dir(cfg, "equilibria")
    lines = []
    for i, r in enumerate(kept, 1):
        l2 = float(np.sqrt(max(r.x @ (ML @ r.x), 0.0)))
        lines.append(f"{i} {r.stability} l2 {l2:.10e} min_eig {r.min_eigenvalue:.6e} "
                     f"iterations {r.iterations} residual {r.residual:.3e}")
        formats.write_vector(out / f"equilibrium_{i:03d}.txt", r.x)
    (out / "equilibria.txt").write_text("\n".join(lines) + "\n")
    write_manifest(out / "manifest.txt", cfg, "equilibria")
    print("\n".join(lines))
    return 0


def suite_config(cfg: RunConfig) -> dynamics.SuiteConfig:
    su = cfg["suite"]
    return dynamics.SuiteConfig(
        domains=su["domains"], measures=su["measures"],
        s_values=tuple(None if s == "off" else s for s in su["s_values"]),
        seeds=su["seeds"], steps=su["steps"], dt=su["dt"], mazya_samples=su["mazya_samples"],
        seed=cfg["output"]["seed"], eta=cfg["form"]["eta"])


def cmd_diagnose(cfg: RunConfig, workers: int = 1) -> int:
    results = dynamics.property_suite(suite_config(cfg), workers=workers)
    out = run_dir(cfg, "diagnose")
    formats.write_suite_report(out / "suite_report.txt", results)
    write_manifest(out / "manifest.txt", cfg, "diagnose")
    for r in results:
        print(r.line())
    return 1 if dynamics.suite_failed(results) else 0


def svg_plot(t, y, title: str, width: int = 480, height: int = 300, pad: int = 40) -> str:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    tspan = (t.max() - t.min()) or 1.0
    ylo, yhi = float(y.min()), float(y.max())
    yspan = (yhi - ylo) or 1.0
    xs = pad + (t - t.min()) / tspan * (width - 2 * pad)
    ys = height - pad - (y - ylo) / yspan * (height - 2 * pad)
    pts = " ".join(f"{x:.2f},{v:.2f}" for x, v in zip(xs, ys))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n'
            f'<text x="{pad}" y="20" font-size="14">{title}</text>\n'
            f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n'
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
            f'<text x="{pad}" y="{height - 10}" font-size="11">t {t.min():.3g} .. {t.max():.3g}</text>\n'
            f'<text x="{width - pad - 140}" y="20" font-size="11">range {ylo:.3g} .. {yhi:.3g}</text>\n'
            f'<polyline fill="none" stroke="navy" points="{pts}"/>\n</svg>\n')


def cmd_plot(cfg: RunConfig) -> int:
    path = cfg.output_dir / "evolve" / "trajectory.csv"
    if not path.exists():
        raise ConfigError(f"no trajectory at {path}; run the evolve command first")
    data = formats.read_trajectory(path)
    out = run_dir(cfg, "plots")
    for col in formats.TRAJECTORY_COLUMNS[1:]:
        (out / f"{col}.svg").write_text(svg_plot(data["t"], data[col], col))
    print(f"wrote {len(formats.TRAJECTORY_COLUMNS) - 1} plots to {out}")
    return 0


COMMANDS = ("mesh", "evolve", "spectrum", "equilibria", "diagnose", "plot")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fractal-rd", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", nargs="?" if name == "diagnose" else None,
                        help="run configuration file")
        sp.add_argument("--out", help="override output.dir")
        if name == "spectrum":
            sp.add_argument("-k", type=int, help="number of eigenpairs (overrides spectrum.k)")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        workers = thread_cap()
        if args.config is None:
            from .config import defaults
            cfg = defaults()
        else:
            cfg = load_config(args.config)
        if args.out:
            cfg = cfg.with_value("output", "dir", args.out)
        with threadpool_limits(limits=1):
            if args.command == "mesh":
                return cmd_mesh(cfg)
            if args.command == "evolve":
                return cmd_evolve(cfg)
            if args.command == "spectrum":
                return cmd_spectrum(cfg, args.k)
            if args.command == "equilibria":
                return cmd_equilibria(cfg)
            if args.command == "diagnose":
                return cmd_diagnose(cfg, workers)
            return cmd_plot(cfg)
    except FractalRDError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if getattr(exc, "last_time", None) is not None:
            print(f"last finite time {exc.last_time:.17g}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
