"""Plain-text readers and writers for polygons, measures, meshes, matrices,
trajectories, snapshots, eigenreports and suite reports.

Floats are written with 17 significant digits so that text round-trips are
exact.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .geometry import BoundaryMeasure, PrefractalPolygon
from .meshing import MeshMeasure, TriMesh


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="ascii", newline="\n")


def _lines(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return [ln for ln in text.splitlines() if ln.strip()]


def _header(line: str, path, keys: tuple[str, ...]) -> list[str]:
    tok = line.split()
    if len(tok) < 2 * len(keys) - 1 or [tok[2 * i] for i in range(len(keys))] != list(keys):
        raise ConfigError(f"{path}: malformed header {line!r}, expected {' '.join(k + ' <n>' for k in keys)}")
    return tok


# polygon / measure -----------------------------------------------------------

def write_polygon(path, poly: PrefractalPolygon) -> None:
    out = [f"vertices {poly.n_edges}"]
    out += [f"{fmt(x)} {fmt(y)} {t}" for (x, y), t in zip(poly.vertices, poly.tags)]
    _write(path, "\n".join(out) + "\n")


def read_polygon(path, dimension: float = 1.0, family: str = "file") -> PrefractalPolygon:
    lines = _lines(path)
    n = int(_header(lines[0], path, ("vertices",))[1])
    if len(lines) != n + 1:
        raise ConfigError(f"{path}: expected {n} vertex lines, found {len(lines) - 1}")
    rows = [ln.split() for ln in lines[1:]]
    xy = np.array([[float(r[0]), float(r[1])] for r in rows])
    return PrefractalPolygon(xy, tuple(r[2] for r in rows), 0, dimension, family)


def write_measure(path, measure: BoundaryMeasure) -> None:
    out = [f"edges {len(measure.weights)} {fmt(measure.total_mass)}"]
    out += [f"{fmt(w)} {int(d)}" for w, d in zip(measure.weights, measure.edge_dirichlet)]
    _write(path, "\n".join(out) + "\n")


def read_measure(path, kind: str = "file") -> BoundaryMeasure:
    lines = _lines(path)
    n = int(_header(lines[0], path, ("edges",))[1])
    rows = [ln.split() for ln in lines[1:]]
    if len(rows) != n:
        raise ConfigError(f"{path}: expected {n} edge lines, found {len(rows)}")
    return BoundaryMeasure(np.array([float(r[0]) for r in rows]),
                           np.array([r[1] == "1" for r in rows]), kind)


# mesh ---------------------------------------------------------------------

def write_mesh(path, mesh: TriMesh, measure: MeshMeasure) -> None:
    out = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles} bedges {len(mesh.bedges)}"]
    out += [f"{fmt(x)} {fmt(y)}" for x, y in mesh.nodes]
    out += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    out += [f"{n1} {n2} {p} {fmt(w)} {int(d)}" for (n1, n2), p, w, d in
            zip(mesh.bedges, mesh.bedge_parent, measure.weights, measure.edge_dirichlet)]
    _write(path, "\n".join(out) + "\n")


def read_mesh(path, kind: str = "file") -> tuple[TriMesh, MeshMeasure]:
    """Boundary-edge fractions are rebuilt from lengths, since subdivided
    polygon edges stay straight."""
    lines = _lines(path)
    tok = _header(lines[0], path, ("nodes", "triangles", "bedges"))
    n, t, b = int(tok[1]), int(tok[3]), int(tok[5])
    if len(lines) != 1 + n + t + b:
        raise ConfigError(f"{path}: expected {n + t + b} body lines, found {len(lines) - 1}")
    nodes = np.array([[float(v) for v in ln.split()] for ln in lines[1:1 + n]])
    tris = np.array([[int(v) for v in ln.split()] for ln in lines[1 + n:1 + n + t]], dtype=np.int64)
    rows = [ln.split() for ln in lines[1 + n + t:]]
    bedges = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64)
    parent = np.array([int(r[2]) for r in rows], dtype=np.int64)
    weights = np.array([float(r[3]) for r in rows])
    flags = np.array([r[4] == "1" for r in rows])
    d = nodes[bedges[:, 1]] - nodes[bedges[:, 0]]
    lengths = np.hypot(d[:, 0], d[:, 1])
    fraction = lengths / np.bincount(parent, lengths)[parent]
    mesh = TriMesh(nodes, tris, bedges, parent, fraction)
    dirichlet = np.zeros(n, dtype=bool)
    dirichlet[bedges[flags].ravel()] = True
    return mesh, MeshMeasure(weights, flags, dirichlet, kind)


# matrices -----------------------------------------------------------------

def write_matrix(path, S) -> None:
    """Upper triangle (including diagonal) in lexicographic order."""
    U = sp.triu(sp.csr_matrix(S)).tocoo()
    order = np.lexsort((U.col, U.row))
    out = [f"{S.shape[0]} {S.shape[1]} {U.nnz}"]
    out += [f"{i} {j} {fmt(v)}" for i, j, v in zip(U.row[order], U.col[order], U.data[order])]
    _write(path, "\n".join(out) + "\n")


def read_matrix(path) -> sp.csr_matrix:
    """Rebuild the symmetric matrix from its stored upper triangle."""
    lines = _lines(path)
    rows, cols, nnz = (int(v) for v in lines[0].split())
    body = [ln.split() for ln in lines[1:1 + nnz]]
    i = np.array([int(r[0]) for r in body], dtype=np.int64)
    j = np.array([int(r[1]) for r in body], dtype=np.int64)
    v = np.array([float(r[2]) for r in body])
    U = sp.csr_matrix((v, (i, j)), shape=(rows, cols))
    return (U + sp.triu(U, k=1).T).tocsr()


# trajectories -------------------------------------------------------------

TRAJECTORY_COLUMNS = ("t", "l2", "linf", "energy", "lyapunov", "en_residual", "newton_iters")


def write_trajectory(path, traj) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for k in range(len(traj.t)):
        w.writerow([fmt(traj.t[k]), fmt(traj.l2[k]), fmt(traj.linf[k]), fmt(traj.energy[k]),
                    fmt(traj.lyapunov[k]), fmt(traj.en_residual[k]), int(traj.newton_iters[k])])
    _write(path, buf.getvalue())


def read_trajectory(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRAJECTORY_COLUMNS:
            raise ConfigError(f"{path}: unexpected columns {header}")
        rows = list(reader)
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    out = {c: data[:, i] for i, c in enumerate(header)}
    out["newton_iters"] = out["newton_iters"].astype(int)
    return out


def snapshot_name(step: int) -> str:
    return f"step_{step:08d}.txt"


def write_snapshots(directory, snapshots: dict) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in sorted(snapshots):
        p = directory / snapshot_name(k)
        write_vector(p, snapshots[k])
        paths.append(p)
    return paths


def write_vector(path, u) -> None:
    u = np.asarray(u, dtype=float)
    _write(path, f"values {len(u)}\n" + "".join(fmt(v) + "\n" for v in u))


def read_vector(path) -> np.ndarray:
    lines = _lines(path)
    n = int(_header(lines[0], path, ("values",))[1])
    if len(lines) != n + 1:
        raise ConfigError(f"{path}: expected {n} values, found {len(lines) - 1}")
    return np.array([float(v) for v in lines[1:]])


# reports ------------------------------------------------------------------

def write_eigenreport(path, pairs) -> None:
    out = [f"{i + 1} {fmt(p.value)} {p.residual:.3e} {p.sign_changes()}" for i, p in enumerate(pairs)]
    _write(path, "\n".join(out) + "\n")


def read_eigenreport(path) -> list[tuple[int, float, float, int]]:
    return [(int(r[0]), float(r[1]), float(r[2]), int(r[3])) for r in (ln.split() for ln in _lines(path))]


def write_suite_report(path, results) -> None:
    _write(path, "".join(r.line() + "\n" for r in results))
