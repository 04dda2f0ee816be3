import json
import os
import subprocess
import sys

import numpy as np
import pytest

from femforge.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main, thread_count
from femforge.errors import ConfigError
from femforge.io import read_csv, read_vtk
from femforge.mesh import load_mesh
from femforge.oracles import slab_temperature
from femforge.verification import shipped_configs


def shipped(name):
    return next(p for p in shipped_configs() if p.stem == name)


def write_config(tmp_path, data, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def plasticity_config(**solver):
    data = json.loads(shipped("plasticity_tension").read_text())
    data["solver"] = solver
    data["stepping"]["n_steps"] = 3
    return data


class TestThreads:
    def test_default(self):
        assert thread_count({}) == 1

    def test_value(self):
        assert thread_count({"FEMFORGE_THREADS": " 4 "}) == 4

    @pytest.mark.parametrize("raw", ["0", "-2", "many", "1.5"])
    def test_invalid(self, raw):
        with pytest.raises(ConfigError, match="FEMFORGE_THREADS"):
            thread_count({"FEMFORGE_THREADS": raw})


class TestMeshGen:
    def test_writes_mesh(self, tmp_path, capsys):
        out = tmp_path / "m.json"
        assert main(["mesh-gen", "4", "3", "2.0", "1.5", "-o", str(out)]) == EXIT_OK
        mesh = load_mesh(out)
        assert (mesh.n_nodes, mesh.n_elements) == (20, 12)
        assert "20 nodes" in capsys.readouterr().out

    def test_bad_dimensions(self, tmp_path):
        assert main(["mesh-gen", "0", "3", "1", "1", "-o", str(tmp_path / "m.json")]) == \
            EXIT_CONFIG

    def test_unwritable(self, tmp_path):
        assert main(["mesh-gen", "1", "1", "1", "1", "-o", str(tmp_path / "no" / "m.json")]) == \
            EXIT_CONFIG

    def test_usage_error(self):
        assert main(["mesh-gen", "1"]) == EXIT_CONFIG


class TestRun:
    def test_heat_slab_end_to_end(self, tmp_path):
        out = tmp_path / "out"
        assert main(["run", str(shipped("heat_slab")), "--output-dir", str(out), "--quiet"]) == \
            EXIT_OK
        rows = read_csv(out / "heat.csv")
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "completed" and len(manifest["steps"]) == len(rows) == 200
        t_end = float(rows[-1]["time"])
        mid = float(rows[-1]["T_mid"])
        assert mid == pytest.approx(slab_temperature(np.array([0.5]), t_end)[0], rel=2e-2)
        vtk = sorted(out.glob("heat_*.vtk"))
        assert vtk[0].name == "heat_0000.vtk" and vtk[-1].name == "heat_0200.vtk"
        assert read_vtk(vtk[-1])["point_data"]["T"].max() == pytest.approx(1.0)

    def test_progress_output(self, tmp_path, capsys):
        data = json.loads(shipped("heat_slab").read_text())
        data["stepping"]["n_steps"] = 2
        assert main(["run", write_config(tmp_path, data), "--output-dir",
                     str(tmp_path / "o")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "step 2/2" in out and "completed 2 steps" in out

    def test_missing_material_block(self, tmp_path, capsys):
        data = json.loads(shipped("heat_slab").read_text())
        del data["materials"]["heat"]
        assert main(["run", write_config(tmp_path, data)]) == EXIT_CONFIG
        assert "materials.heat" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_unknown_node_set(self, tmp_path, capsys):
        data = json.loads(shipped("heat_slab").read_text())
        data["bcs"]["dirichlet"][0]["node_set"] = "north"
        assert main(["run", write_config(tmp_path, data), "--output-dir",
                     str(tmp_path / "o")]) == EXIT_CONFIG
        assert "north" in capsys.readouterr().err

    def test_impossible_tolerance(self, tmp_path, capsys):
        path = write_config(tmp_path, plasticity_config(tol_r=0.0, newton_max_iter=5, max_cuts=1))
        assert main(["run", path, "--output-dir", str(tmp_path / "o"), "--quiet"]) == EXIT_SOLVER
        err = capsys.readouterr().err
        assert "step 1" in err and "residual_norms" in err
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["status"] == "failed"

    def test_threads_recorded(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FEMFORGE_THREADS", "3")
        data = json.loads(shipped("heat_slab").read_text())
        data["stepping"]["n_steps"] = 1
        assert main(["run", write_config(tmp_path, data), "--output-dir", str(tmp_path / "o"),
                     "--quiet"]) == EXIT_OK
        assert json.loads((tmp_path / "o" / "manifest.json").read_text())["threads"] == 3

    def test_invalid_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FEMFORGE_THREADS", "zero")
        assert main(["run", str(shipped("heat_slab"))]) == EXIT_CONFIG


class TestVerify:
    def test_patch_suite(self, capsys):
        assert main(["verify", "patch"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines and all(line.startswith("PASS") for line in lines)

    def test_unknown_suite(self, capsys):
        assert main(["verify", "everything"]) == EXIT_CONFIG
        assert "available" in capsys.readouterr().err


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "femforge", "mesh-gen", "2", "2", "1", "1",
                               "-o", str(tmp_path / "m.json")], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        env = dict(os.environ, FEMFORGE_THREADS="-1")
        bad = subprocess.run([sys.executable, "-m", "femforge", "run", str(shipped("heat_slab"))],
                             capture_output=True, text=True, env=env)
        assert bad.returncode == EXIT_CONFIG
        assert "FEMFORGE_THREADS" in bad.stderr
