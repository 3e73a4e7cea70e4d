import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fractal_rd import formats
from fractal_rd.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, body, name="run.ini"):
    p = tmp_path / name
    p.write_text(body + f"\n[output]\ndir = {tmp_path / 'out'}\n")
    return p


SQUARE = """
[domain]
family = square
[mesh]
refine = 2
[measure]
kind = sigma
[time]
dt = 0.01
T = 0.2
snapshot_stride = 5
"""


def test_mesh_reproducible(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SQUARE)
    assert main(["mesh", str(cfg)]) == 0
    out = tmp_path / "out" / "mesh"
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert set(first) == {"polygon.txt", "measure.txt", "mesh.txt", "stats.txt", "manifest.txt"}
    assert main(["mesh", str(cfg)]) == 0
    assert first == {p.name: p.read_bytes() for p in out.iterdir()}
    mesh, _ = formats.read_mesh(out / "mesh.txt")
    assert mesh.n_triangles == 2 * 4 ** 2


def test_koch_triangle_count(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[domain]\nfamily = koch\ngeneration = 2\n[mesh]\nrefine = 1\nsmooth = false\n")
    assert main(["mesh", str(cfg)]) == 0
    mesh, _ = formats.read_mesh(tmp_path / "out" / "mesh" / "mesh.txt")
    # 48-gon ear clipping gives 46 triangles, one refinement quadruples
    assert mesh.n_triangles == 4 * 46


def test_manifest_reparses(tmp_path, capsys):
    from fractal_rd.config import load_config, parse_config
    cfg = write_cfg(tmp_path, SQUARE)
    assert main(["evolve", str(cfg)]) == 0
    text = (tmp_path / "out" / "evolve" / "manifest.txt").read_text()
    assert "dt_resolved = 0.01" in text and "command = evolve" in text
    assert parse_config(text, manifest=True).values == load_config(cfg).values


@pytest.mark.parametrize("body, needle", [
    ("[measure]\nkind = lebesgue\n", "measure.kind"),
    ("[time]\ninit = eig:1\n", "spectrum"),
    ("[domain]\nfamily = sphere\n", "domain.family"),
])
def test_config_errors_exit_2(tmp_path, capsys, body, needle):
    cfg = write_cfg(tmp_path, body)
    assert main(["evolve", str(cfg)]) == 2
    assert needle in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path, capsys):
    assert main(["mesh", str(tmp_path / "none.ini")]) == 2


def test_evolve_heat_monotone(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SQUARE + "[nonlinearity]\nname = zero\n")
    assert main(["evolve", str(cfg)]) == 0
    data = formats.read_trajectory(tmp_path / "out" / "evolve" / "trajectory.csv")
    assert len(data["t"]) == 21 and data["t"][0] == 0
    assert np.all(np.diff(data["l2"]) <= 0)
    snaps = sorted((tmp_path / "out" / "evolve" / "snapshots").iterdir())
    assert [p.name for p in snaps] == [formats.snapshot_name(k) for k in (0, 5, 10, 15, 20)]


def test_blow_up_exit_3(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SQUARE.replace("T = 0.2", "T = 50") + "[nonlinearity]\nname = linear\nkappa = -80\n")
    assert main(["evolve", str(cfg)]) == 3
    assert "last finite time" in capsys.readouterr().err


def test_newton_failure_exit_4(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SQUARE.replace("T = 0.2", "T = 0.2\nscheme = implicit\nnewton_max = 0"))
    assert main(["evolve", str(cfg)]) == 4


def test_spectrum_then_eig_init(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SQUARE + "[spectrum]\nk = 3\n")
    assert main(["spectrum", str(cfg), "-k", "4"]) == 0
    rows = formats.read_eigenreport(tmp_path / "out" / "spectrum" / "eigenreport.txt")
    assert len(rows) == 4 and rows[0][1] > 0
    assert (tmp_path / "out" / "spectrum" / "positivity.txt").read_text().startswith("status pass")
    cfg.write_text(cfg.read_text().replace("snapshot_stride = 5", "snapshot_stride = 5\ninit = eig:2"))
    assert main(["evolve", str(cfg)]) == 0


def test_equilibria_single(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SQUARE)
    assert main(["equilibria", str(cfg)]) == 0
    lines = (tmp_path / "out" / "equilibria" / "equilibria.txt").read_text().splitlines()
    assert len(lines) == 1 and lines[0].split()[1] == "stable"


def test_plot(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SQUARE)
    assert main(["plot", str(cfg)]) == 2
    assert main(["evolve", str(cfg)]) == 0
    assert main(["plot", str(cfg)]) == 0
    svg = (tmp_path / "out" / "plots" / "l2.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_chaffee_infante_settles(tmp_path, capsys):
    cfg = tmp_path / "ci.ini"
    cfg.write_text((CONFIGS / "square_chaffee_infante.ini").read_text())
    assert main(["evolve", str(cfg), "--out", str(tmp_path / "ci")]) == 0
    tok = capsys.readouterr().out.split()
    assert float(tok[tok.index("final_dudt") + 1]) < 1e-6
    data = formats.read_trajectory(tmp_path / "ci" / "evolve" / "trajectory.csv")
    assert data["t"][-1] == pytest.approx(10.0)
    assert np.all(np.isfinite(data["l2"]))


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.ini")))
def test_shipped_configs_parse(name):
    from fractal_rd.config import load_config
    load_config(CONFIGS / name)


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, SQUARE)
    r = subprocess.run([sys.executable, "-m", "fractal_rd", "mesh", str(cfg)], capture_output=True, text=True)
    assert r.returncode == 0 and "triangle_count 32" in r.stdout.splitlines()
