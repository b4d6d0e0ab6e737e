"""Figure rendering from the simulation CLI's CSV outputs.

Each renderer is a pure function of its input files: no randomness, fixed
figure geometry, and PNG metadata stripped, so re-rendering the same CSVs
produces identical bytes.  The four kinds mirror the benchmark figures:
stationary profiles across regimes, prior/posterior overlays, trajectory
paths over the corridor, and the walking-direction quiver.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class PlotsError(Exception):
    """Malformed or missing input."""


# color-blind-safe line colors, one per curve
_CURVE_COLORS = ("#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00")
_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def load_columns(path, required):
    """Read a header-first CSV into named float arrays.

    Raises PlotsError naming the first missing column.
    """
    path = Path(path)
    if not path.exists():
        raise PlotsError(f"input file not found: {path}")
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    for column in required:
        if column not in header:
            raise PlotsError(f"{path}: missing column '{column}'")
    if data.size and data.shape[1] != len(header):
        raise PlotsError(f"{path}: {data.shape[1]} data columns for "
                         f"{len(header)} header fields")
    return {name: data[:, i] if data.size else np.empty(0)
            for i, name in enumerate(header)}


def _save(fig, out):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return out


def steady_profiles(inputs, out, labels=None, panels=1, titles=None):
    """Stationary profiles rho(x), `panels` side-by-side axes.

    The input list is split into `panels` consecutive groups of equal size;
    labels (one per input) go into a shared legend.
    """
    if len(inputs) % panels:
        raise PlotsError(f"{len(inputs)} inputs do not split into "
                         f"{panels} equal panels")
    if labels is not None and len(labels) != len(inputs):
        raise PlotsError("need one label per input file")
    per_panel = len(inputs) // panels
    fig, axes = plt.subplots(1, panels, figsize=(4.0 * panels, 3.2),
                             sharey=True, squeeze=False)
    for p, ax in enumerate(axes[0]):
        for i in range(per_panel):
            k = p * per_panel + i
            cols = load_columns(inputs[k], ("x", "rho"))
            label = labels[k] if labels and p == 0 else None
            ax.plot(cols["x"], cols["rho"], color=_CURVE_COLORS[i % 5],
                    lw=1.2, label=label)
        ax.set_xlabel("$x_1$")
        ax.set_ylim(0.0, 1.0)
        if titles and p < len(titles):
            ax.set_title(titles[p])
    axes[0, 0].set_ylabel(r"$\rho$")
    if labels:
        axes[0, 0].legend(frameon=False, fontsize=9)
    fig.tight_layout()
    return _save(fig, out)


def posterior(chain_csv, out, prior_mean=1.0, prior_variance=0.25,
              true_value=None, burn_in=None, bins=50):
    """Posterior histogram-density with the prior curve (full gray line) and
    the true value (dashed gray line) overlaid.

    `burn_in` defaults to the producing sampler's convention, the first
    fifth of the chain.
    """
    cols = load_columns(chain_csv, ("k", "v"))
    samples = cols["v"]
    if samples.size == 0:
        raise PlotsError(f"{chain_csv}: empty chain")
    if burn_in is None:
        burn_in = samples.size // 5
    tail = samples[burn_in:]
    if tail.size == 0:
        raise PlotsError("burn-in longer than the chain")

    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    spread = tail.max() - tail.min()
    if spread > 0:
        ax.hist(tail, bins=bins, density=True, color=_CURVE_COLORS[0],
                alpha=0.75, label="posterior")
    else:
        # degenerate chain: a single spike instead of a density estimate
        ax.axvline(tail[0], color=_CURVE_COLORS[0], lw=2.0, label="posterior")

    scale = np.sqrt(prior_variance)
    lo = min(tail.min(), prior_mean - 3 * scale)
    hi = max(tail.max(), prior_mean + 3 * scale)
    if true_value is not None:
        lo, hi = min(lo, true_value), max(hi, true_value)
    grid = np.linspace(lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo), 400)
    pdf = np.exp(-0.5 * ((grid - prior_mean) / scale) ** 2) \
        / (scale * np.sqrt(2 * np.pi))
    ax.plot(grid, pdf, color="0.45", lw=1.4, label="prior")
    if true_value is not None:
        ax.axvline(true_value, color="0.45", ls="--", lw=1.2,
                   label="true value")
    ax.set_xlabel(r"$v_{\max}$")
    ax.set_ylabel("density")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    return _save(fig, out)


def _draw_domain(ax, meta):
    dom = meta["domain"]
    L, hw = dom["length"], dom["half_width"]
    ax.plot([0, L], [hw, hw], color="k", lw=1.5)
    ax.plot([0, L], [-hw, -hw], color="k", lw=1.5)
    bn = dom.get("bottleneck")
    if bn:
        for sign in (1.0, -1.0):
            w = sign * bn["half_width"]
            ax.plot([bn["x_start"], bn["x_start"]], [w, sign * hw],
                    color="k", lw=1.5)
            ax.plot([bn["x_end"], bn["x_end"]], [w, sign * hw],
                    color="k", lw=1.5)
            ax.plot([bn["x_start"], bn["x_end"]], [w, w], color="k", lw=1.5)
    door = dom.get("exit_door_half_width", hw)
    ax.plot([L, L], [door, hw], color="k", lw=1.5)
    ax.plot([L, L], [-hw, -door], color="k", lw=1.5)
    ax.set_xlim(-0.1, L + 0.1)
    ax.set_ylim(-hw - 0.1, hw + 0.1)


def trajectories(traj_csv, out):
    """Walker paths over the corridor; the wall outline is read from the
    exporter's `<file>.meta.json` sidecar when present."""
    cols = load_columns(traj_csv, ("traj_id", "t", "x", "y"))
    fig, ax = plt.subplots(figsize=(6.0, 2.4))
    ids = np.unique(cols["traj_id"]).astype(int)
    for i, tid in enumerate(ids):
        sel = cols["traj_id"] == tid
        ax.plot(cols["x"][sel], cols["y"][sel],
                color=_CURVE_COLORS[i % 5], lw=0.8, alpha=0.8)
    meta_path = Path(str(traj_csv) + ".meta.json")
    if meta_path.exists():
        with open(meta_path) as fh:
            _draw_domain(ax, json.load(fh))
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_aspect("equal")
    fig.tight_layout()
    return _save(fig, out)


def eikonal(potential_csv, out, stride=1):
    """Walking-direction quiver colored by the distance-to-exit value."""
    cols = load_columns(potential_csv, ("x", "y", "phi", "gx", "gy"))
    sel = slice(None, None, max(int(stride), 1))
    fig, ax = plt.subplots(figsize=(6.0, 2.6))
    q = ax.quiver(cols["x"][sel], cols["y"][sel], cols["gx"][sel],
                  cols["gy"][sel], cols["phi"][sel], cmap="viridis",
                  scale=30, width=0.003)
    fig.colorbar(q, ax=ax, label=r"$\phi$")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_aspect("equal")
    fig.tight_layout()
    return _save(fig, out)
