"""Rendering tests against hand-written CSV fixtures (the plotting stack
never links against the simulation package)."""

import json

import numpy as np
import pytest

from plots import PlotsError, load_columns
from plots.cli import main


def write_steady(path, shift=0.0):
    x = np.linspace(0.0, 3.0, 50)
    rho = 0.3 + shift + 0.1 * np.exp(-((x - 3.0) / 0.2) ** 2)
    lines = ["x,rho"] + [f"{xi:.15g},{ri:.15g}" for xi, ri in zip(x, rho)]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_chain(path, values):
    lines = ["k,v,accepted"] + [f"{k},{v:.15g},1"
                                for k, v in enumerate(values)]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_trajectories(path, with_meta=True):
    rng = np.random.default_rng(0)
    lines = ["traj_id,t,x,y"]
    for tid in (1, 2, 3):
        x = np.cumsum(rng.uniform(0.0, 0.1, 40))
        y = 0.2 * np.sin(x + tid)
        for k in range(40):
            lines.append(f"{tid},{k * 1e-3:.15g},{x[k]:.15g},{y[k]:.15g}")
    path.write_text("\n".join(lines) + "\n")
    if with_meta:
        meta = {"domain": {"length": 3.0, "half_width": 0.25,
                           "exit_door_half_width": 0.15,
                           "bottleneck": {"half_width": 0.05,
                                          "x_start": 1.2, "x_end": 1.8}}}
        (path.parent / (path.name + ".meta.json")).write_text(json.dumps(meta))
    return str(path)


def write_potential(path):
    lines = ["x,y,phi,gx,gy"]
    for x in np.linspace(0.1, 2.9, 15):
        for y in np.linspace(-0.2, 0.2, 5):
            lines.append(f"{x:.15g},{y:.15g},{3.0 - x:.15g},1,0")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


class TestLoadColumns:
    def test_reads_named_columns(self, tmp_path):
        path = write_steady(tmp_path / "s.csv")
        cols = load_columns(path, ("x", "rho"))
        assert cols["x"].size == 50

    def test_missing_column_named(self, tmp_path):
        path = write_steady(tmp_path / "s.csv")
        with pytest.raises(PlotsError, match="'phi'"):
            load_columns(path, ("x", "phi"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(PlotsError, match="not found"):
            load_columns(tmp_path / "nope.csv", ("x",))


class TestRenderKinds:
    def test_steady_profiles_panels(self, tmp_path):
        inputs = [write_steady(tmp_path / f"s{i}.csv", shift=0.05 * i)
                  for i in range(9)]
        out = tmp_path / "fig.png"
        code = main(["steady_profiles", "--in", *inputs,
                     "--out", str(out), "--panels", "3",
                     "--labels", ",".join(9 * ["s"]),
                     "--titles", "influx,outflux,maximal"])
        assert code == 0 and out.stat().st_size > 0

    def test_steady_profiles_uneven_split_rejected(self, tmp_path, capsys):
        inputs = [write_steady(tmp_path / f"s{i}.csv") for i in range(4)]
        code = main(["steady_profiles", "--in", *inputs,
                     "--out", str(tmp_path / "f.png"), "--panels", "3"])
        assert code == 2
        assert "panels" in capsys.readouterr().err

    def test_posterior_overlay(self, tmp_path):
        rng = np.random.default_rng(1)
        path = write_chain(tmp_path / "chain.csv", rng.normal(1.5, 0.1, 500))
        out = tmp_path / "post.png"
        code = main(["posterior", "--in", path, "--out", str(out),
                     "--true-value", "1.5"])
        assert code == 0 and out.stat().st_size > 0

    def test_posterior_degenerate_chain(self, tmp_path):
        path = write_chain(tmp_path / "chain.csv", np.full(100, 1.5))
        out = tmp_path / "post.png"
        code = main(["posterior", "--in", path, "--out", str(out)])
        assert code == 0 and out.stat().st_size > 0

    def test_posterior_wrong_columns(self, tmp_path, capsys):
        path = write_steady(tmp_path / "s.csv")
        assert main(["posterior", "--in", path,
                     "--out", str(tmp_path / "f.png")]) == 2
        assert "missing column 'k'" in capsys.readouterr().err

    def test_trajectories_with_walls(self, tmp_path):
        path = write_trajectories(tmp_path / "traj.csv")
        out = tmp_path / "traj.png"
        assert main(["trajectories", "--in", path, "--out", str(out)]) == 0
        assert out.stat().st_size > 0

    def test_trajectories_without_sidecar(self, tmp_path):
        path = write_trajectories(tmp_path / "traj.csv", with_meta=False)
        assert main(["trajectories", "--in", path,
                     "--out", str(tmp_path / "t.png")]) == 0

    def test_eikonal_quiver(self, tmp_path):
        path = write_potential(tmp_path / "pot.csv")
        out = tmp_path / "eik.png"
        assert main(["eikonal", "--in", path, "--out", str(out),
                     "--stride", "2"]) == 0
        assert out.stat().st_size > 0


class TestDeterminism:
    def test_rerender_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        path = write_chain(tmp_path / "chain.csv", rng.normal(1.5, 0.1, 300))
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        main(["posterior", "--in", path, "--out", str(a)])
        main(["posterior", "--in", path, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
