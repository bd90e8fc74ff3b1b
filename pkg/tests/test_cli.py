"""End-to-end tests of the command-line driver, run in process."""

import json

import numpy as np
import pytest
from scipy.constants import c as c0

from cmadof.channel import effective_rank
from cmadof.cli import main
from cmadof.ga import PixelProblem, evaluate, phi_from_hex
from cmadof.mesh import PlateSpec, build_plate_mesh, mesh_from_json, mesh_from_text

FREQ = 27e9
PIX = 0.24 * c0 / FREQ

SMALL = """
tx_ports = 2
rx_ports = 2
tx_pixels_per_port = 2
rx_pixels_per_port = 2
separation = 0.01
n_keep = 8
"""


def write_config(tmp_path, extra="", name="run.ini"):
    path = tmp_path / name
    path.write_text(SMALL + extra)
    return str(path)


def run_cli(command, cfg_path, out_dir, *extra):
    return main([command, "--config", cfg_path, "--out", str(out_dir), *extra])


def small_problem(**kwargs):
    spec = PlateSpec(
        width=2 * PIX, height=2 * PIX, pixel_rows=2, pixel_cols=2, ports=2
    )
    args = dict(tx_spec=spec, rx_spec=spec, frequency=FREQ,
                separation=0.01, n_keep=8)
    args.update(kwargs)
    return PixelProblem(**args)


class TestModesCommand:
    def test_artifacts_and_consistency(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert run_cli("modes", cfg, out) == 0
        for name in ("modes.csv", "modal_significance.svg",
                     "modal_significance.csv", "run_meta.json"):
            assert (out / name).exists(), name
        lines = (out / "modes.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header[:3] == ["mode", "eigenvalue", "significance"]
        assert header[3:] == ["v_mag_port0", "v_mag_port1"]
        sigs = []
        for row in lines[1:]:
            cells = row.split(",")
            lam = float(cells[1])
            sig = float(cells[2])
            assert sig == pytest.approx(1.0 / np.sqrt(1.0 + lam * lam), rel=1e-12)
            assert 0.0 < sig <= 1.0
            assert all(float(c) >= 0.0 for c in cells[3:])
            sigs.append(sig)
        assert all(a >= b for a, b in zip(sigs, sigs[1:]))

    def test_meta_records_command_and_config(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        run_cli("modes", cfg, out)
        meta = json.loads((out / "run_meta.json").read_text())
        assert meta["command"] == "modes"
        assert meta["config"]["tx_ports"] == 2
        assert meta["config"]["out"] == str(out)
        assert "timestamp_utc" in meta


class TestDofCommand:
    def test_report_recomputes(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert run_cli("dof", cfg, out) == 0
        report = json.loads((out / "dof_report.json").read_text())
        h = np.array(report["h_singulars"])
        g = np.array(report["g_singulars"])
        gamma = report["gamma"]
        assert report["dof_h"] == effective_rank(h, gamma)
        assert report["dof_g_effective"] == effective_rank(g, gamma)
        assert report["dof_h"] <= report["port_mode_upper"]
        assert (out / "spectrum.svg").exists()
        assert (out / "spectrum.csv").exists()

    def test_matches_library_evaluation(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        run_cli("dof", cfg, out)
        report = json.loads((out / "dof_report.json").read_text())
        problem = small_problem()
        _, lib_report, _ = evaluate(problem, np.ones(8, dtype=np.uint8))
        assert report["dof_h"] == lib_report.dof_h
        np.testing.assert_allclose(
            report["h_singulars"], lib_report.h_singulars, rtol=1e-12
        )

    def test_gamma_tightening_never_raises_dof(self, tmp_path):
        cfg = write_config(tmp_path)
        dofs = []
        for i, gamma in enumerate((0.3, 0.7)):
            out = tmp_path / f"out{i}"
            assert run_cli("dof", cfg, out, "--gamma", str(gamma)) == 0
            dofs.append(json.loads((out / "dof_report.json").read_text())["dof_h"])
        assert dofs[0] >= dofs[1]

    def test_reruns_identical_except_meta(self, tmp_path):
        cfg = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_cli("dof", cfg, out1)
        run_cli("dof", cfg, out2)
        names = sorted(p.name for p in out1.iterdir())
        assert names == sorted(p.name for p in out2.iterdir())
        for name in names:
            b1 = (out1 / name).read_bytes()
            b2 = (out2 / name).read_bytes()
            if name == "run_meta.json":
                m1 = json.loads(b1)
                m2 = json.loads(b2)
                m1.pop("timestamp_utc")
                m2.pop("timestamp_utc")
                # out directories differ by construction
                m1["config"].pop("out")
                m2["config"].pop("out")
                assert m1 == m2
            else:
                assert b1 == b2, name


class TestOptimizeCommand:
    GA = "generations = 2\npopulation = 4\nparents = 2\nseed = 5\n"

    def test_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, self.GA)
        out = tmp_path / "out"
        assert run_cli("optimize", cfg, out) == 0
        for name in ("ga_log.jsonl", "ga_checkpoint.json", "best_config.json",
                     "convergence.svg", "convergence.csv",
                     "spectrum_optimized.svg", "run_meta.json"):
            assert (out / name).exists(), name
        records = [json.loads(line)
                   for line in (out / "ga_log.jsonl").read_text().splitlines()]
        assert [r["generation"] for r in records] == [0, 1, 2]
        bests = [r["best_fitness"] for r in records]
        assert all(b >= a for a, b in zip(bests, bests[1:]))

        best = json.loads((out / "best_config.json").read_text())
        assert best["fitness"] == records[-1]["best_fitness"]
        phi = phi_from_hex(best["phi_hex"], best["n_bits"])
        assert phi.shape == (8,)
        assert best["report"]["dof_h"] >= 1

    def test_best_config_matches_library(self, tmp_path):
        cfg = write_config(tmp_path, self.GA)
        out = tmp_path / "out"
        run_cli("optimize", cfg, out)
        best = json.loads((out / "best_config.json").read_text())
        problem = small_problem()
        phi = phi_from_hex(best["phi_hex"], best["n_bits"])
        _, report, fit = evaluate(problem, phi)
        assert fit == pytest.approx(best["fitness"], rel=1e-12)
        assert report.dof_h == best["report"]["dof_h"]

    def test_resume_without_checkpoint_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, self.GA + "resume = true\n")
        out = tmp_path / "fresh"
        assert run_cli("optimize", cfg, out) == 2

    def test_resume_continues_from_checkpoint(self, tmp_path):
        cfg1 = write_config(tmp_path, self.GA, name="first.ini")
        out = tmp_path / "out"
        assert run_cli("optimize", cfg1, out) == 0
        history1 = [json.loads(line)["best_fitness"] for line in
                    (out / "ga_log.jsonl").read_text().splitlines()]
        cfg2 = write_config(
            tmp_path,
            "generations = 4\npopulation = 4\nparents = 2\nseed = 5\n"
            "resume = true\n",
            name="second.ini",
        )
        assert run_cli("optimize", cfg2, out) == 0
        records = [json.loads(line) for line in
                    (out / "ga_log.jsonl").read_text().splitlines()]
        assert records[-1]["generation"] == 4
        bests = [r["best_fitness"] for r in records]
        assert bests[: len(history1)] == history1
        assert all(b >= a for a, b in zip(bests, bests[1:]))


class TestSweepCommand:
    def test_single_point_matches_direct_run(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "sweep_axis = separation\nsweep_values = 0.01\n"
            "random_count = 2\ngenerations = 1\npopulation = 4\nparents = 2\n",
        )
        out = tmp_path / "out"
        assert run_cli("sweep", cfg, out) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("separation,")
        assert len(lines) == 2
        cells = lines[1].split(",")
        assert float(cells[0]) == 0.01
        problem = small_problem()
        _, report, _ = evaluate(problem, np.ones(8, dtype=np.uint8))
        assert int(cells[1]) == report.dof_g_effective
        assert int(cells[2]) == report.dof_h
        assert int(cells[5]) == report.port_mode_upper
        assert int(cells[6]) == report.lower_bound

    def test_missing_axis_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run_cli("sweep", cfg, tmp_path / "out") == 2

    def test_fractional_port_value_is_config_error(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "sweep_axis = ports\nsweep_values = 2.5\n"
            "generations = 1\npopulation = 4\nparents = 2\n",
        )
        assert run_cli("sweep", cfg, tmp_path / "out") == 2


class TestExportMesh:
    def test_text_roundtrip(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert run_cli("export-mesh", cfg, out) == 0
        mesh = mesh_from_text((out / "mesh.txt").read_text())
        spec = PlateSpec(
            width=2 * PIX, height=2 * PIX, pixel_rows=2, pixel_cols=2, ports=2
        )
        ref = build_plate_mesh(spec, np.ones(4, dtype=np.uint8))
        np.testing.assert_allclose(mesh.vertices, ref.vertices, rtol=1e-15)
        np.testing.assert_array_equal(mesh.faces, ref.faces)

    def test_json_roundtrip(self, tmp_path):
        cfg = write_config(tmp_path, "mesh_format = json\n")
        out = tmp_path / "out"
        assert run_cli("export-mesh", cfg, out) == 0
        mesh = mesh_from_json((out / "mesh.json").read_text())
        spec = PlateSpec(
            width=2 * PIX, height=2 * PIX, pixel_rows=2, pixel_cols=2, ports=2
        )
        ref = build_plate_mesh(spec, np.ones(4, dtype=np.uint8))
        np.testing.assert_allclose(mesh.vertices, ref.vertices, rtol=1e-15)
        np.testing.assert_array_equal(mesh.faces, ref.faces)


class TestExitCodes:
    def test_bad_config_file(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("frequencyy = 1\n")
        assert main(["dof", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main([
            "dof", "--config", str(tmp_path / "absent.ini"),
            "--out", str(tmp_path / "o"),
        ]) == 2

    def test_bad_geometry(self, tmp_path):
        cfg = tmp_path / "geom.ini"
        cfg.write_text(
            "tx_ports = 2\nrx_ports = 2\ntx_pixels_per_port = 2\n"
            "rx_pixels_per_port = 2\nseparation = -1.0\n"
        )
        assert run_cli("dof", str(cfg), tmp_path / "o") == 3

    def test_unknown_command_rejected_by_argparse(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])
