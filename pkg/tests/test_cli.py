"""End-to-end tests for the command line front end.

Commands run in-process through cli.main so the suite stays fast; one
subprocess test checks the installed console script wiring.
"""

import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from pulseforge import cli
from pulseforge.errors import QExplosionError
from pulseforge.pulses import PulseGrid, PwcPulse, load_pulse, save_pulse
from pulseforge.system import DriveChannel


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    # PULSEFORGE_OUT would redirect every run below
    monkeypatch.delenv("PULSEFORGE_OUT", raising=False)


def run_cli(*argv):
    return cli.main(list(argv))


def read_curve(path):
    rows = []
    with open(path) as fh:
        for r in csv.reader(fh):
            if r and not r[0].startswith("#") and r[0] != "episode":
                rows.append((int(r[0]), float(r[1])))
    return rows


@pytest.fixture(scope="module")
def drag_run(tmp_path_factory):
    """One calibrated drag run shared by the read-only CLI tests."""
    out = tmp_path_factory.mktemp("drag_run")
    code = cli.main(
        ["calibrate", "--preset", "drag-x90", "--seed", "0", "--out-dir", str(out)]
    )
    assert code == 0
    return out


class TestConfigErrors:
    def test_malformed_toml_exits_2_with_location(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[calibrate\nscheme =\n")
        code = run_cli("calibrate", "--config", str(bad))
        assert code == 2
        err = capsys.readouterr().err
        assert "config error" in err
        assert "bad.toml" in err

    def test_schema_violation_names_the_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('[calibrate]\nscheme = "drag"\nbudget = 2\n')
        code = run_cli("calibrate", "--config", str(bad))
        assert code == 2
        assert "calibrate.budget" in capsys.readouterr().err

    def test_unknown_embedded_preset(self, tmp_path, capsys):
        bad = tmp_path / "p.toml"
        bad.write_text('preset = "warp"\n')
        assert run_cli("train", "--config", str(bad)) == 2
        assert "unknown preset" in capsys.readouterr().err

    def test_eval_without_target_anywhere(self, tmp_path, capsys):
        grid = PulseGrid.from_ticks(8, 2)
        pulse = PwcPulse(grid, {DriveChannel.U01: np.zeros(2, complex)})
        ppath = tmp_path / "p.json"
        save_pulse(pulse, ppath)
        cfg = tmp_path / "e.json"
        cfg.write_text(json.dumps({"eval": {"pulse": str(ppath)}}))
        code = run_cli("eval", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
        assert code == 2
        assert "eval.target" in capsys.readouterr().err


class TestCalibrate:
    def test_drag_preset_meets_documented_fidelity(self, drag_run):
        report = json.loads((drag_run / "report.json").read_text())
        assert report["fidelity"] >= 0.999
        assert report["scheme"] == "drag"
        manifest = json.loads((drag_run / "manifest.json").read_text())
        assert report["run_id"] == manifest["run_id"]
        for name in manifest["artifacts"]:
            assert (drag_run / name).exists()
        pulse = load_pulse(drag_run / "pulse.json")
        assert pulse.grid.segments >= 1

    def test_rerun_same_dir_is_byte_identical(self, drag_run):
        before = {
            n: (drag_run / n).read_bytes() for n in ("report.json", "pulse.json")
        }
        assert (
            run_cli(
                "calibrate",
                "--preset",
                "drag-x90",
                "--seed",
                "0",
                "--out-dir",
                str(drag_run),
            )
            == 0
        )
        for name, blob in before.items():
            assert (drag_run / name).read_bytes() == blob

    def test_rerun_fresh_dir_reproduces_report_bytes(self, drag_run, tmp_path):
        out2 = tmp_path / "again"
        assert (
            run_cli(
                "calibrate",
                "--preset",
                "drag-x90",
                "--seed",
                "0",
                "--out-dir",
                str(out2),
            )
            == 0
        )
        assert (out2 / "report.json").read_bytes() == (
            drag_run / "report.json"
        ).read_bytes()
        assert (out2 / "pulse.json").read_bytes() == (
            drag_run / "pulse.json"
        ).read_bytes()

    def test_conflicting_run_refused_before_artifacts_change(self, drag_run, capsys):
        before = {
            n: (drag_run / n).read_bytes()
            for n in ("report.json", "pulse.json", "manifest.json")
        }
        code = run_cli(
            "calibrate",
            "--preset",
            "drag-x90",
            "--seed",
            "9",
            "--out-dir",
            str(drag_run),
        )
        assert code == 2
        assert "immutable" in capsys.readouterr().err
        for name, blob in before.items():
            assert (drag_run / name).read_bytes() == blob

    def test_strict_threshold_miss_exits_4(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text(
            '[calibrate]\nscheme = "drag"\nbudget = 10\nthreshold = 1.0\n'
        )
        code = run_cli(
            "calibrate",
            "--config",
            str(cfg),
            "--strict",
            "--out-dir",
            str(tmp_path / "o"),
        )
        assert code == 4
        assert "strict" in capsys.readouterr().err

    def test_env_var_overrides_out_dir_flag(self, tmp_path, monkeypatch):
        envdir = tmp_path / "from_env"
        monkeypatch.setenv("PULSEFORGE_OUT", str(envdir))
        cfg = tmp_path / "c.toml"
        cfg.write_text('[calibrate]\nscheme = "drag"\nbudget = 10\n')
        code = run_cli(
            "calibrate", "--config", str(cfg), "--out-dir", str(tmp_path / "flag")
        )
        assert code == 0
        assert (envdir / "report.json").exists()
        assert not (tmp_path / "flag").exists()


TOY_TOML = """\
[env]
preset = "toy"

[agent]
hidden = [16, 16]
lr = 1e-3
warmup = 50
capacity = 2000

[train]
episodes = {episodes}
curve_window = 25
"""


class TestTrain:
    def test_toy_smoke(self, tmp_path):
        cfg = tmp_path / "toy.toml"
        cfg.write_text(TOY_TOML.format(episodes=120))
        out = tmp_path / "run"
        code = run_cli(
            "train", "--config", str(cfg), "--seed", "1", "--out-dir", str(out)
        )
        assert code == 0
        assert (out / "agent_final.npz").exists()
        curve = read_curve(out / "learning_curve.csv")
        assert [e for e, _ in curve] == list(range(120))
        first = (out / "learning_curve.csv").read_text().splitlines()[0]
        assert first.startswith("# run: train-")
        manifest = json.loads((out / "manifest.json").read_text())
        resolved = manifest["config"]["resolved"]
        assert resolved["agent"]["hidden"] == [16, 16]
        assert resolved["agent"]["lr"] == 1e-3
        assert resolved["env"] == {"preset": "toy"}

    def test_resume_extends_curve_without_discontinuity(self, tmp_path):
        cfg = tmp_path / "toy.toml"
        cfg.write_text(TOY_TOML.format(episodes=60))
        out = tmp_path / "run"
        assert (
            run_cli("train", "--config", str(cfg), "--seed", "1", "--out-dir", str(out))
            == 0
        )
        code = run_cli(
            "train",
            "--config",
            str(cfg),
            "--seed",
            "1",
            "--out-dir",
            str(out),
            "--resume",
            str(out / "agent_final"),
        )
        assert code == 0
        eps = [e for e, _ in read_curve(out / "learning_curve.csv")]
        assert eps == list(range(120))  # 60 old + 60 new, one unbroken count
        # the resumed run records its own manifest beside the original
        siblings = list(out.glob("manifest-*.json"))
        assert len(siblings) == 1

    def test_resume_checkpoint_env_mismatch(self, tmp_path, capsys):
        cfg = tmp_path / "toy.toml"
        cfg.write_text(TOY_TOML.format(episodes=30))
        out = tmp_path / "run"
        assert (
            run_cli("train", "--config", str(cfg), "--seed", "1", "--out-dir", str(out))
            == 0
        )
        gate = tmp_path / "gate.toml"
        gate.write_text('[env]\npreset = "ix"\n[train]\nepisodes = 5\n')
        code = run_cli(
            "train",
            "--config",
            str(gate),
            "--out-dir",
            str(tmp_path / "g"),
            "--resume",
            str(out / "agent_final"),
        )
        assert code == 2
        assert "training config" in capsys.readouterr().err

    def test_q_explosion_exits_3_with_advice(self, tmp_path, monkeypatch, capsys):
        import pulseforge.rl.agent as agent_mod

        def boom(*a, **k):
            raise QExplosionError("|Q| passed 1e6 at step 41")

        monkeypatch.setattr(agent_mod, "train", boom)
        cfg = tmp_path / "toy.toml"
        cfg.write_text(TOY_TOML.format(episodes=30))
        code = run_cli(
            "train", "--config", str(cfg), "--out-dir", str(tmp_path / "o")
        )
        assert code == 3
        err = capsys.readouterr().err
        assert "numerical halt" in err
        assert "agent.td3.enabled" in err  # actionable advice, not just a trace

    def test_gate_preset_manifest_echoes_hyperparameters(self, tmp_path):
        cfg = tmp_path / "one.toml"
        cfg.write_text("[train]\nepisodes = 1\n")
        out = tmp_path / "zx"
        code = run_cli(
            "train",
            "--preset",
            "fixed-zx",
            "--config",
            str(cfg),
            "--seed",
            "0",
            "--out-dir",
            str(out),
        )
        assert code == 0
        resolved = json.loads((out / "manifest.json").read_text())["config"]["resolved"]
        agent = resolved["agent"]
        assert agent["hidden"] == [800, 400, 200]
        assert agent["lr"] == 1e-4
        assert agent["batch"] == 64
        assert agent["kappa"] == 0.002
        assert agent["capacity"] == 100_000
        assert agent["warmup"] == 10_000
        env = resolved["env"]
        assert env["target"] == "zx"
        assert (env["ticks"], env["segments"]) == (1120, 20)
        assert (env["w_u"], env["w_d"]) == (0.1, 0.01)


def small_pulse(tmp_path, ticks=24, segments=4, channels=(DriveChannel.U01,), scale=0.2):
    rng = np.random.default_rng(11)
    grid = PulseGrid.from_ticks(ticks, segments)
    amps = {
        ch: scale * (rng.uniform(-1, 1, segments) + 1j * rng.uniform(-1, 1, segments))
        for ch in channels
    }
    pulse = PwcPulse(grid, amps)
    path = tmp_path / "pulse.json"
    save_pulse(pulse, path)
    return path


def eval_cfg(tmp_path, ppath, **ev):
    ev = {"pulse": str(ppath), **ev}
    cfg = tmp_path / "eval.json"
    cfg.write_text(json.dumps({"eval": ev}))
    return cfg


class TestEval:
    def test_zero_pulse_against_identity(self, tmp_path):
        grid = PulseGrid.from_ticks(12, 3)
        pulse = PwcPulse(grid, {DriveChannel.U01: np.zeros(3, complex)})
        ppath = tmp_path / "zero.json"
        save_pulse(pulse, ppath)
        cfg = eval_cfg(
            tmp_path, ppath, target="identity", analyses=["fidelity", "leakage"]
        )
        out = tmp_path / "o"
        assert run_cli("eval", "--config", str(cfg), "--out-dir", str(out)) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        # idle evolution only picks up the always-on exchange coupling
        assert metrics["fidelity"] > 0.999
        assert metrics["leakage"] < 5e-4
        assert metrics["unitarity_defect"] < 1e-12

    def test_sigma_zero_noise_table_is_degenerate(self, tmp_path):
        ppath = small_pulse(tmp_path, ticks=12, segments=2)
        cfg = eval_cfg(
            tmp_path,
            ppath,
            target="zx",
            analyses=["noise"],
            noise={"sigmas": [0.0], "samples": 4},
        )
        out = tmp_path / "o"
        assert run_cli("eval", "--config", str(cfg), "--out-dir", str(out)) == 0
        with open(out / "noise.csv") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        header, row = rows[0], rows[1]
        assert header == ["sigma", "mean_fidelity", "std_fidelity", "sem", "samples"]
        assert float(row[2]) == 0.0 and float(row[3]) == 0.0
        samples = json.loads((out / "noise_samples.jsonl").read_text())
        assert len(set(samples["fidelities"])) == 1
        assert len(samples["fidelities"]) == 4

    def test_angles_csv_has_16_theta_columns_per_tick(self, tmp_path):
        ticks = 24
        ppath = small_pulse(tmp_path, ticks=ticks, segments=4)
        cfg = eval_cfg(tmp_path, ppath, target="zx", analyses=["angles"])
        out = tmp_path / "o"
        assert run_cli("eval", "--config", str(cfg), "--out-dir", str(out)) == 0
        with open(out / "angles.csv") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        header, body = rows[0], rows[1:]
        assert header[0] == "time_ns"
        assert len(header) == 17
        assert header[1] == "theta_ii" and header[-1] == "theta_zz"
        labels = {h for h in header[1:]}
        assert labels == {
            f"theta_{a}{b}" for a in "ixyz" for b in "ixyz"
        }
        assert len(body) == ticks
        # exported floats parse back exactly (repr round trip)
        vals = [float(c) for c in body[-1]]
        assert all(np.isfinite(vals))

    def test_roles_table_and_deviation_summary(self, tmp_path):
        ppath = small_pulse(
            tmp_path,
            ticks=24,
            segments=4,
            channels=(DriveChannel.U01, DriveChannel.D1),
        )
        cfg = eval_cfg(tmp_path, ppath, target="zx", analyses=["roles"])
        out = tmp_path / "o"
        assert run_cli("eval", "--config", str(cfg), "--out-dir", str(out)) == 0
        with open(out / "roles.csv") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        assert rows[0] == [
            "time_ns",
            "s_lin_full",
            "s_lin_removed",
            "control_fidelity_full",
            "control_fidelity_removed",
        ]
        assert len(rows) - 1 == 24 + 1  # t = 0 plus one row per tick
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics["role_deviation"]) == {"entropy", "control_fidelity"}

    def test_drift_analysis_writes_binned_table(self, tmp_path):
        ppath = small_pulse(tmp_path, ticks=12, segments=2)
        cfg = eval_cfg(
            tmp_path,
            ppath,
            target="zx",
            analyses=["drift"],
            drift={
                "kind": "coupling",
                "bin_width": 0.035,
                "samples_center": 1,
                "samples_edge": 2,
            },
        )
        out = tmp_path / "o"
        assert run_cli("eval", "--config", str(cfg), "--out-dir", str(out)) == 0
        bins = (out / "drift_coupling_bins.csv").read_text().splitlines()
        assert bins[1] == "bin_center,mean_fidelity,std_fidelity,count"
        assert len(bins) == 2 + 4  # comment, header, 4 bins
        lines = (out / "drift_coupling_samples.jsonl").read_text().splitlines()
        assert all(len(json.loads(l)["eps"]) == 9 for l in lines)

    def test_checkpoint_eval_rolls_out_the_policy(self, tmp_path):
        train_cfg = tmp_path / "t.toml"
        train_cfg.write_text(
            '[env]\npreset = "ix"\n\n[agent]\nhidden = [8, 8]\n\n'
            "[train]\nepisodes = 2\n"
        )
        trun = tmp_path / "trun"
        assert (
            run_cli(
                "train", "--config", str(train_cfg), "--seed", "0", "--out-dir", str(trun)
            )
            == 0
        )
        cfg = tmp_path / "e.json"
        cfg.write_text(
            json.dumps(
                {
                    "eval": {
                        "checkpoint": str(trun / "agent_final"),
                        "env": {"preset": "ix"},
                        "analyses": ["fidelity", "leakage"],
                    }
                }
            )
        )
        out = tmp_path / "o"
        assert run_cli("eval", "--config", str(cfg), "--out-dir", str(out)) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["target"] == "ix"
        assert 0.0 <= metrics["fidelity"] <= 1.0


class TestBench:
    def test_single_prints_machine_readable_timing(self, capsys):
        assert run_cli("bench", "--single") == 0
        line = capsys.readouterr().out.strip().splitlines()[-1]
        row = json.loads(line)
        assert row["backend"] in ("numba", "numpy")
        assert row["seconds_per_propagation"] > 0
        assert row["ticks_per_second"] > 0

    @pytest.mark.slow
    def test_backend_comparison_writes_report(self, tmp_path):
        out = tmp_path / "b"
        assert run_cli("bench", "--out-dir", str(out)) == 0
        payload = json.loads((out / "bench.json").read_text())
        assert "numpy" in payload["results"]


class TestConsoleScript:
    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "pulseforge.cli", "calibrate", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "--strict" in proc.stdout

    def test_installed_script(self):
        exe = shutil.which("pulseforge")
        if exe is None:
            pytest.skip("console script not on PATH")
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "calibrate" in proc.stdout
