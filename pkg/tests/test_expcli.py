"""Config parsing, pipeline orchestration and CLI tests."""

import json

import numpy as np
import pytest

from pedflow.cli import main
from pedflow.config import (PRESETS, load_config, preset_config,
                            with_overrides)
from pedflow.errors import ConfigError, NumericalError
from pedflow.pipeline import run_pipeline

# overrides shrinking a preset to second-scale runtime
FAST = {
    "grid.nx": "60", "grid.ny": "4",
    "sde.T": "0.2", "sde.J": "3",
    "run.n_mcmc": "30", "run.beta": "0.5",
}


def fast_config(tmp_path, preset="maxcurrent_a09_b0975", extra=""):
    path = tmp_path / "exp.cfg"
    path.write_text(
        f"[run]\npreset = {preset}\nn_mcmc = 30\nbeta = 0.5\n"
        "[grid]\nnx = 60\nny = 4\n"
        "[sde]\nT = 0.2\nJ = 3\n" + extra)
    return str(path)


class TestLoadConfig:
    def test_preset_expansion(self):
        cfg = preset_config("influx_a02_b04")
        assert (cfg.a, cfg.b, cfg.v_max) == (0.2, 0.4, 1.5)
        assert cfg.sigma1 == cfg.sigma2 == 0.05
        assert (cfg.nx, cfg.ny) == (120, 10)
        assert cfg.sde.T == 2.0 and cfg.sde.J == 20
        assert cfg.inference.sigma1 == 1.0  # mis-specified on purpose
        assert cfg.prior.m == 1.0 and cfg.prior.c == 0.25
        assert cfg.domain.bottleneck is None
        assert cfg.preset == "influx_a02_b04"

    def test_bottleneck_preset(self):
        cfg = preset_config("bottleneck_outflux")
        assert (cfg.a, cfg.b) == (0.4, 0.2)
        assert cfg.sigma1 == 0.05 and cfg.sigma2 == 0.03
        assert cfg.domain.bottleneck.half_width == 0.05
        assert cfg.domain.door_half_width == 0.15
        assert cfg.ny == 20 and cfg.sde.T == 1.0

    def test_every_preset_builds(self):
        for name in PRESETS:
            preset_config(name)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            preset_config("nosuch")

    def test_preset_override(self):
        cfg = preset_config("influx_a02_b04", {"model.a": "0.3",
                                               "run.n_mcmc": "100"})
        assert cfg.a == 0.3 and cfg.n_mcmc == 100
        with pytest.raises(ConfigError, match="model.vmax"):
            preset_config("influx_a02_b04", {"model.vmax": "2"})

    def test_file_with_preset_and_overrides(self, tmp_path):
        cfg = load_config(fast_config(tmp_path))
        assert cfg.preset == "maxcurrent_a09_b0975"
        assert (cfg.a, cfg.b) == (0.9, 0.975)
        assert cfg.sde.T == 0.2 and cfg.sde.J == 3
        assert cfg.n_mcmc == 30 and cfg.beta == 0.5

    def test_case_sensitive_keys(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[run]\npreset = influx_a02_b04\n[sde]\nt = 0.5\n")
        with pytest.raises(ConfigError, match="'t'"):
            load_config(str(path))

    def test_rejects_rate_above_speed(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[run]\npreset = influx_a02_b04\n[model]\na = 2.0\n")
        with pytest.raises(ConfigError, match="a violates"):
            load_config(str(path))

    def test_unknown_section_and_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[walls]\nheight = 2\n")
        with pytest.raises(ConfigError, match=r"\[walls\]"):
            load_config(str(path))
        path.write_text("[model]\nspeed = 2\n")
        with pytest.raises(ConfigError, match="'speed'"):
            load_config(str(path))

    def test_parse_error_and_missing_file(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[model\nv_max = 1\n")
        with pytest.raises(ConfigError):
            load_config(str(path))
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "nope.cfg"))

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "bare.cfg"
        path.write_text("[domain]\nlength = 3.0\nhalf_width = 0.25\n")
        with pytest.raises(ConfigError, match="missing required key"):
            load_config(str(path))

    def test_with_overrides(self):
        cfg = preset_config("bottleneck_influx")
        cfg2 = with_overrides(cfg, {"model.a": "0.3", "sde.J": "7"})
        assert cfg2.a == 0.3 and cfg2.sde.J == 7
        assert cfg2.domain.bottleneck == cfg.domain.bottleneck
        assert cfg2.preset == cfg.preset
        with pytest.raises(ConfigError, match="sde.steps"):
            with_overrides(cfg, {"sde.steps": "5"})


class TestRunPipeline:
    FILES = {"density.csv", "potential.csv", "trajectories.csv",
             "trajectories.csv.meta.json", "map_trace.csv", "chain.csv",
             "summary.txt"}

    def read_summary(self, path):
        out = {}
        for line in path.read_text().splitlines():
            key, _, value = line.partition(" = ")
            out[key] = value
        return out

    def test_outputs_and_manifest(self, tmp_path):
        cfg = load_config(fast_config(tmp_path))
        manifest = run_pipeline(cfg, tmp_path / "out")
        assert set(manifest.files) == self.FILES
        for name, digest in manifest.files.items():
            assert (tmp_path / "out" / name).exists()
            assert len(digest) == 64
        stored = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert stored["files"] == manifest.files
        assert stored["config"]["model.a"] == 0.9
        assert stored["seeds"] == {"base_seed": 0, "chain_seed": 77_777}
        assert set(stored["timings"]) == {"setup", "forward", "generate",
                                          "estimate", "export"}
        summary = self.read_summary(tmp_path / "out" / "summary.txt")
        assert summary["preset"] == "maxcurrent_a09_b0975"
        assert summary["regime"] == "maximal_current"
        assert float(summary["true_v_max"]) == 1.5
        assert 0.0 < float(summary["posterior_mean"]) < 5.0
        assert summary["n_trajectories"] == "3"

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = load_config(fast_config(tmp_path))
        first = run_pipeline(cfg, tmp_path / "a")
        cached = run_pipeline(cfg, tmp_path / "a")   # cache hits
        fresh = run_pipeline(cfg, tmp_path / "b")    # full recompute
        assert cached.files == first.files
        assert fresh.files == first.files

    def test_estimator_selection(self, tmp_path):
        cfg = with_overrides(load_config(fast_config(tmp_path)),
                             {"run.estimator": "map"})
        manifest = run_pipeline(cfg, tmp_path / "map_only")
        assert "chain.csv" not in manifest.files
        assert "map_trace.csv" in manifest.files

    def test_steady_density_mode(self, tmp_path):
        cfg = load_config(fast_config(
            tmp_path, extra="[inference]\ndensity = steady\nsteady_nx = 300\n"))
        manifest = run_pipeline(cfg, tmp_path / "steady")
        assert "steady.csv" in manifest.files
        assert "density.csv" not in manifest.files
        x, rho = np.loadtxt(tmp_path / "steady" / "steady.csv",
                            delimiter=",", skiprows=1, unpack=True)
        assert x.size == 300 and (rho >= 0).all()

    def test_failing_stage_is_named(self, tmp_path):
        cfg = load_config(fast_config(tmp_path, extra="[model]\npde_dt = 1.0\n"))
        with pytest.raises(NumericalError, match="stage 'forward'"):
            run_pipeline(cfg, tmp_path / "out")


class TestCli:
    def test_pipeline_command(self, tmp_path, capsys):
        code = main(["pipeline", "--config", fast_config(tmp_path),
                     "--out", str(tmp_path / "out")])
        assert code == 0
        printed = capsys.readouterr().out.splitlines()
        assert str(tmp_path / "out" / "manifest.json") in printed
        assert (tmp_path / "out" / "chain.csv").exists()

    def test_estimate_map_only(self, tmp_path):
        code = main(["estimate-map", "--config", fast_config(tmp_path),
                     "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "map_trace.csv").exists()
        assert not (tmp_path / "out" / "chain.csv").exists()

    def test_eikonal_command(self, tmp_path):
        code = main(["eikonal", "--preset", "bottleneck_influx",
                     "--out", str(tmp_path / "out")])
        assert code == 0
        data = np.loadtxt(tmp_path / "out" / "potential.csv",
                          delimiter=",", skiprows=1)
        assert data.shape[1] == 5  # x, y, phi, gx, gy

    def test_seed_override_changes_data(self, tmp_path):
        path = fast_config(tmp_path)
        main(["generate", "--config", path, "--out", str(tmp_path / "s0"),
              "--seed", "0"])
        main(["generate", "--config", path, "--out", str(tmp_path / "s1"),
              "--seed", "1"])
        t0 = (tmp_path / "s0" / "trajectories.csv").read_text()
        t1 = (tmp_path / "s1" / "trajectories.csv").read_text()
        assert t0 != t1

    def test_config_errors_exit_2(self, tmp_path, capsys):
        assert main(["pipeline", "--preset", "nosuch", "--out",
                     str(tmp_path)]) == 2
        assert main(["pipeline", "--out", str(tmp_path)]) == 2
        assert main(["pipeline", "--preset", "influx_a02_b04", "--config",
                     fast_config(tmp_path), "--out", str(tmp_path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_numerical_errors_exit_3(self, tmp_path, capsys):
        path = fast_config(tmp_path, extra="[model]\npde_dt = 1.0\n")
        assert main(["pipeline", "--config", path,
                     "--out", str(tmp_path / "out")]) == 3
        assert "stage 'forward'" in capsys.readouterr().err

    def test_sweep(self, tmp_path):
        code = main(["sweep", "--config", fast_config(tmp_path),
                     "--out", str(tmp_path / "sweep"),
                     "--key", "sde.J", "--values", "2,3"])
        assert code == 0
        for value in ("2", "3"):
            assert (tmp_path / "sweep" / f"sde_J_{value}"
                    / "summary.txt").exists()
