"""Acceptance criterion A12: all four figure kinds render from real
simulation CSVs, and the posterior overlay carries the prior curve, the
dashed true-value line and the posterior density.

The CSVs are produced by the simulation CLI as a subprocess; the plotting
package itself never imports it.
"""

import shutil
import subprocess

import pytest

from plots import render
from plots.cli import main

FAST_CFG = """\
[run]
preset = influx_a02_b04
n_mcmc = 60
beta = 0.5
[grid]
nx = 60
ny = 4
[sde]
T = 0.3
J = 4
"""


@pytest.fixture(scope="module")
def sim_outputs(tmp_path_factory):
    if shutil.which("pedflow") is None:
        pytest.skip("simulation CLI not on PATH")
    base = tmp_path_factory.mktemp("sim")
    cfg = base / "fast.cfg"
    cfg.write_text(FAST_CFG)
    out = base / "out"
    subprocess.run(["pedflow", "pipeline", "--config", str(cfg),
                    "--out", str(out)], check=True, capture_output=True)
    subprocess.run(["pedflow", "steady", "--config", str(cfg),
                    "--out", str(out)], check=True, capture_output=True)
    return out


def test_a12_all_figure_kinds_render(sim_outputs, tmp_path, monkeypatch):
    out = sim_outputs
    ok = True
    notes = []

    code = main(["steady_profiles", "--in", str(out / "steady.csv"),
                 "--out", str(tmp_path / "steady.png")])
    ok &= code == 0 and (tmp_path / "steady.png").stat().st_size > 0
    notes.append(f"steady_profiles exit={code}")

    code = main(["trajectories", "--in", str(out / "trajectories.csv"),
                 "--out", str(tmp_path / "traj.png")])
    ok &= code == 0 and (tmp_path / "traj.png").stat().st_size > 0
    notes.append(f"trajectories exit={code}")

    code = main(["eikonal", "--in", str(out / "potential.csv"),
                 "--out", str(tmp_path / "eik.png")])
    ok &= code == 0 and (tmp_path / "eik.png").stat().st_size > 0
    notes.append(f"eikonal exit={code}")

    # intercept the figure right before saving to inspect the overlay
    captured = {}
    original = render._save

    def spy(fig, path):
        captured["axes"] = fig.axes
        return original(fig, path)

    monkeypatch.setattr(render, "_save", spy)
    code = main(["posterior", "--in", str(out / "chain.csv"),
                 "--out", str(tmp_path / "post.png"),
                 "--true-value", "1.5"])
    ok &= code == 0 and (tmp_path / "post.png").stat().st_size > 0
    ax = captured["axes"][0]
    labels = [line.get_label() for line in ax.lines]
    has_prior = "prior" in labels
    has_truth = any(line.get_label() == "true value"
                    and line.get_linestyle() == "--" for line in ax.lines)
    has_density = len(ax.patches) > 0 or "posterior" in labels
    ok &= has_prior and has_truth and has_density
    notes.append(f"posterior exit={code}, prior={has_prior}, "
                 f"dashed-truth={has_truth}, density={has_density}")

    print(f"\nA12 figure rendering: {'PASS' if ok else 'FAIL'}  "
          f"({'; '.join(notes)})")
    assert ok
