import csv
import io
import json

import pytest

from swnudge.cli import main
from swnudge.config import SCHEMA, bundled_config, load_config, parse_config
from swnudge.errors import ConfigError
from swnudge.harness import Variation

SMALL = """
[grid]
nx = 21
ny = 21
dx = 100000
dy = 100000
[run]
steps = {steps}
{run}
"""


def write_cfg(tmp_path, body, steps=40, run="", name="c.cfg"):
    p = tmp_path / name
    p.write_text(SMALL.format(steps=steps, run=run) + body)
    return p


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestConfig:
    def test_defaults_are_reference_values(self):
        c = load_config(None)
        assert (c["grid"]["nx"], c["grid"]["ny"], c["grid"]["dx"]) == (81, 81, 25000.0)
        assert c["run"]["dt"] == 1800.0 and c["run"]["steps"] == 5760
        m, o = c["model"], c["observer"]
        assert (m["g_reduced"], m["h_bar"], m["kind"]) == (0.02, 500.0, "simplified")
        assert (o["alpha"], o["beta_h"], o["beta_v"], o["truncation"]) == (1.0, 5e-7, 5e-8, 10)
        assert m["D"] == 2.0e6
        assert c["noise"]["fraction"] == 0.0

    def test_empty_file_equals_defaults(self):
        assert parse_config("").hash() == load_config(None).hash()

    def test_frozen_hash(self):
        # guards the canonical serialisation used in run manifests
        assert load_config(None).hash() == "3f3b334e9880aa706fc39f18048acdea6917dc610119049afdf46009aa062de1"

    def test_hash_ignores_layout(self):
        a = parse_config("[observer]\nalpha = 1000\nbeta_h = 2e-6\n[noise]\nseed = 3\n")
        b = parse_config("[noise]\nseed=3\n\n[observer]\n# comment\nbeta_h =   0.000002\nalpha = 1e3\n")
        assert a.hash() == b.hash()
        assert a.hash() != load_config(None).hash()

    def test_scientific_notation(self):
        c = parse_config("[grid]\nnx = 4.1e1\n[observer]\nbeta_h = 2.5E-7\n")
        assert c["grid"]["nx"] == 41 and c["observer"]["beta_h"] == 2.5e-7
        assert c["observer"]["beta_v"] == pytest.approx(2.5e-8)

    @pytest.mark.parametrize(
        "text",
        [
            "[grid]\nnxx = 3\n",
            "[gird]\nnx = 3\n",
            "[grid]\nnx = 3.5\n",
            "[observer]\nbeta_h = fast\n",
            "[observer]\nbeta_h = nan\n",
            "[model]\nkind = spectral\n",
            "[observer]\nextension = periodic\n",
            "[run]\nforce = maybe\n",
            "[grid\nnx = 3\n",
        ],
    )
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_invalid_twin_is_config_error(self):
        with pytest.raises(ConfigError):
            parse_config("[run]\nsteps = 0\n").twin()

    def test_seed_override(self):
        c = load_config(None).with_seed(99)
        assert c["noise"]["seed"] == 99 and c["spectral"]["seed"] == 99

    def test_variations_product_order(self):
        c = parse_config("[sweep]\nalpha = 1, 1000\nbeta_h = 5e-7, 2e-6\n")
        assert c.variations() == [Variation(1.0, 5e-7), Variation(1.0, 2e-6), Variation(1000.0, 5e-7),
                                  Variation(1000.0, 2e-6)]

    def test_variation_rows(self):
        c = parse_config("[sweep]\nrows = 1 5e-7 0; 1000 5e-7 0.2 900\n")
        assert c.variations() == [Variation(1.0, 5e-7, 0.0), Variation(1000.0, 5e-7, 0.2, 900.0)]
        with pytest.raises(ConfigError):
            parse_config("[sweep]\nrows = 1 5e-7\n").variations()

    @pytest.mark.parametrize(
        "name", ["linear-perfect.cfg", "linear-noisy.cfg", "nonlinear-perfect.cfg", "spectral.cfg", "table1.cfg",
                 "table2.cfg", "table4.cfg"]
    )
    def test_bundled(self, name):
        assert bundled_config(name) is not None
        cfg = load_config(name)
        cfg.twin()
        assert set(cfg.values) == set(SCHEMA)

    def test_table_structures(self):
        assert sorted({v.alpha for v in load_config("table1.cfg").variations()}) == [1.0, 1000.0]
        t2 = load_config("table2.cfg").variations()
        assert [v.alpha for v in t2] == [0.5, 1.0, 1000.0] and all(v.noise_fraction == 0.2 for v in t2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(tmp_path / "nope.cfg")
        assert "nope.cfg" in str(info.value)


class TestRunCommand:
    def test_missing_config_exit_1(self, tmp_path, capsys):
        assert run_cli("run", "--config", tmp_path / "absent.cfg", "--out", tmp_path) == 1
        assert "absent.cfg" in capsys.readouterr().err

    def test_outputs(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "", run="snapshot_every = 20\nrun_id = demo")
        out = tmp_path / "out"
        assert run_cli("run", "--config", cfg, "--out", out) == 0
        rows = list(csv.reader(io.StringIO((out / "errors.csv").read_text())))
        assert rows[0] == ["step", "time_s", "e_h", "e_vx", "e_vy"]
        assert float(rows[1][2]) == 1.0 and len(rows) == 42
        man = json.loads((out / "manifest.json").read_text())
        assert man["config_hash"] == load_config(cfg).hash() and man["exit_status"] == 0
        assert "demo_h_20.swf" in man["outputs"] and (out / "demo_vyhat_40.swf").exists()
        assert sorted(p.name for p in out.iterdir() if p.name.endswith(".json")) == ["manifest.json"]
        assert "rate" in capsys.readouterr().out

    def test_bundled_linear_first_row(self, tmp_path):
        # the bundled file with a shortened run: same initial contract
        text = bundled_config("linear-perfect.cfg").read_text().replace("steps = 5760", "steps = 12")
        p = tmp_path / "lp.cfg"
        p.write_text(text)
        assert run_cli("run", "--config", p, "--out", tmp_path) == 0
        first = (tmp_path / "errors.csv").read_text().splitlines()[1].split(",")
        assert first[:5] == ["0", "0.0", "1.0", "1.0", "1.0"]

    def test_deterministic(self, tmp_path):
        cfg = write_cfg(tmp_path, "[noise]\nfraction = 0.2\n")
        assert run_cli("run", "--config", cfg, "--out", tmp_path / "a", "--seed", 7) == 0
        assert run_cli("run", "--config", cfg, "--out", tmp_path / "b", "--seed", 7) == 0
        assert run_cli("run", "--config", cfg, "--out", tmp_path / "c", "--seed", 8) == 0
        a, b, c = ((tmp_path / d / "errors.csv").read_bytes() for d in "abc")
        assert a == b and a != c

    def test_numerical_failure_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path, "", steps=400, run="dt = 2e5\nforce = true")
        assert run_cli("run", "--config", cfg, "--out", tmp_path) == 2
        assert json.loads((tmp_path / "manifest.json").read_text())["exit_status"] == 2

    def test_cfl_refusal_exit_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "", run="dt = 2e5")
        assert run_cli("run", "--config", cfg, "--out", tmp_path) == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_bad_seed(self, tmp_path):
        assert run_cli("run", "--seed", -1, "--out", tmp_path) == 1

    def test_logging_goes_to_stderr(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("SWNUDGE_LOG", "info")
        assert run_cli("run", "--config", write_cfg(tmp_path, "", steps=10), "--out", tmp_path) == 0
        cap = capsys.readouterr()
        assert "swnudge: INFO" in cap.err and "INFO" not in cap.out


class TestSweepCommand:
    def test_table1_rows(self, tmp_path):
        text = bundled_config("table1.cfg").read_text() + SMALL.format(steps=40, run="")
        p = tmp_path / "t1.cfg"
        p.write_text(text)
        assert run_cli("sweep", "--config", p, "--out", tmp_path, "--jobs", 1) == 0
        rows = list(csv.DictReader(io.StringIO((tmp_path / "sweep.csv").read_text())))
        assert [float(r["alpha"]) for r in rows] == [1.0, 1.0, 1000.0, 1000.0]
        assert all(r["status"] == "ok" for r in rows)

    def test_empty_variations_exit_1(self, tmp_path):
        cfg = write_cfg(tmp_path, "[sweep]\nalpha =\n")
        assert run_cli("sweep", "--config", cfg, "--out", tmp_path) == 1

    def test_unstable_row_kept(self, tmp_path):
        cfg = write_cfg(tmp_path, "[sweep]\nrows = 1 5e-7 0; 1 5e-7 0 2e5; 1000 5e-7 0\n", steps=400, run="force = true")
        assert run_cli("sweep", "--config", cfg, "--out", tmp_path, "--jobs", 1) == 0
        rows = list(csv.DictReader(io.StringIO((tmp_path / "sweep.csv").read_text())))
        assert [r["status"].startswith("unstable:step=") for r in rows] == [False, True, False]
        assert rows[0]["status"] == rows[2]["status"] == "ok"

    def test_all_rows_fail_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path, "[sweep]\nrows = 1 5e-7 0 2e5\n")
        assert run_cli("sweep", "--config", cfg, "--out", tmp_path, "--jobs", 1) == 2


class TestSpectralCommand:
    FAST = "[spectral]\nn_ic = 2\nsample_steps = 10, 100\n"

    def test_report_and_oracle(self, tmp_path, capsys):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(self.FAST)
        assert run_cli("spectral", "--config", cfg, "--out", tmp_path, "--modes", 16) == 0
        modes = list(csv.DictReader(io.StringIO((tmp_path / "modes.csv").read_text())))
        assert len(modes) == 15 * 15
        oracle = list(csv.DictReader(io.StringIO((tmp_path / "oracle.csv").read_text())))
        assert len(oracle) == 4 and max(float(r["rel_hnorm_error"]) for r in oracle) <= 1e-6
        assert "overdamped modes" in capsys.readouterr().out

    def test_dirac_flat(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("[observer]\nkernel = dirac\nK_h = 5e-7\n[spectral]\noracle = false\n")
        assert run_cli("spectral", "--config", cfg, "--out", tmp_path, "--modes", 10) == 0
        g2 = {r["g2"] for r in csv.DictReader(io.StringIO((tmp_path / "modes.csv").read_text()))}
        assert len(g2) == 1

    def test_zero_damping_exit_3(self, tmp_path, capsys):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("[observer]\nbeta_h = 0\n")
        assert run_cli("spectral", "--config", cfg, "--out", tmp_path, "--modes", 10) == 3
        assert "(p, q) = (1, 1)" in capsys.readouterr().err
        assert json.loads((tmp_path / "manifest.json").read_text())["exit_status"] == 3

    def test_too_few_modes(self, tmp_path):
        assert run_cli("spectral", "--out", tmp_path, "--modes", 2) == 1


class TestInvarianceCommand:
    def test_default_exit_0(self, capsys):
        assert run_cli("invariance") == 0
        out = capsys.readouterr().out
        for suite in ("kernel-rotation", "correction-rotation", "observer-rotation"):
            assert f"{suite}: max discrepancy 0.000e+00" in out
        assert "kernel-translation" in out

    def test_zero_extension_also_exact(self, tmp_path):
        cfg = tmp_path / "i.cfg"
        cfg.write_text("[observer]\nextension = zero\n")
        assert run_cli("invariance", "--config", cfg) == 0

    def test_injected_asymmetry_exit_4(self, tmp_path, capsys):
        cfg = tmp_path / "i.cfg"
        cfg.write_text("[invariance]\ninject_asymmetry = true\n")
        assert run_cli("invariance", "--config", cfg) == 4
        assert "kernel-rotation" in capsys.readouterr().err

    def test_non_square_skips_rotation(self, tmp_path, capsys):
        cfg = tmp_path / "i.cfg"
        cfg.write_text("[grid]\nnx = 61\nny = 41\n")
        assert run_cli("invariance", "--config", cfg) == 0
        out = capsys.readouterr().out
        assert "kernel-rotation: skipped" in out and "kernel-translation: max discrepancy" in out
