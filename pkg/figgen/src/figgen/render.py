"""Figure rendering from experiment CSV files.

Consumes only the published CSV schemas (never simulation state):

  curve CSV:  n,msd_db[,algorithm][,mu][,n_d]   (one row per iteration per curve)
  sweep CSV:  mu,n_d,sim_db,theory_db,diverged

Five figure kinds: transient (curves keyed by mu/n_d), comparison and
tracking (curves keyed by algorithm), sweep (sim markers + theory lines vs
step size, per subband count), stability (sweep layout plus a vertical
marker at the step-size bound).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

KINDS = ("transient", "sweep", "comparison", "tracking", "stability")

CURVE_REQUIRED = ("n", "msd_db")
SWEEP_REQUIRED = ("mu", "n_d", "sim_db", "theory_db", "diverged")


class SchemaError(ValueError):
    """CSV does not match the declared schema; message names the columns."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    labels: list = field(default_factory=list)
    title: str = ""
    bound: float = None       # stability kind: vertical marker position
    flip_iter: int = None     # tracking kind: optional flip marker

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise SchemaError("no input CSV given")


def _read_rows(path, required):
    if not os.path.exists(path):
        raise SchemaError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}; "
                              f"found {header}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows, header


def _curve_groups(path):
    """Split a curve CSV into labelled (n, msd_db) series."""
    rows, header = _read_rows(path, CURVE_REQUIRED)
    keys = [c for c in ("algorithm", "mu", "n_d") if c in header]
    groups = {}
    for row in rows:
        key = tuple(row[c] for c in keys)
        try:
            n = int(row["n"])
            v = float(row["msd_db"])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: non-numeric n/msd_db row {row}") from exc
        groups.setdefault(key, []).append((n, v))
    out = {}
    for key, pts in groups.items():
        label = ", ".join(f"{c}={v}" for c, v in zip(keys, key) if v != "") or "msd"
        pts.sort()
        out[label] = pts
    return out


def _render_curves(spec: FigureSpec, ax):
    idx = 0
    for path in spec.inputs:
        for label, pts in _curve_groups(path).items():
            if spec.labels and idx < len(spec.labels):
                label = spec.labels[idx]
            ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=1.0, label=label)
            idx += 1
    ax.set_xlabel("iteration")
    ax.set_ylabel("network MSD (dB)")
    if spec.kind == "tracking" and spec.flip_iter is not None:
        ax.axvline(spec.flip_iter, color="gray", ls=":", lw=1.0)
    ax.legend(fontsize=8)


def _render_sweep(spec: FigureSpec, ax):
    for path in spec.inputs:
        rows, _ = _read_rows(path, SWEEP_REQUIRED)
        by_nd = {}
        for row in rows:
            try:
                by_nd.setdefault(int(row["n_d"]), []).append(
                    (float(row["mu"]), float(row["sim_db"]), float(row["theory_db"]),
                     row["diverged"] not in ("0", "", "False", "false")))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: non-numeric sweep row {row}") from exc
        for nd, pts in sorted(by_nd.items()):
            pts.sort()
            mus = [p[0] for p in pts]
            ax.plot(mus, [p[2] for p in pts], "-", lw=1.0, label=f"theory, N_D={nd}")
            ax.plot(mus, [p[1] for p in pts], "o", ms=4, fillstyle="none",
                    label=f"simulated, N_D={nd}")
            for mu, sim, _, div in pts:
                if div:
                    ax.plot([mu], [sim], "rx", ms=8)
    if spec.kind == "stability" and spec.bound is not None:
        ax.axvline(spec.bound, color="green", ls=":", lw=1.5, label="stability bound")
    ax.set_xlabel("step size")
    ax.set_ylabel("steady-state network MSD (dB)")
    ax.set_xscale("log")
    ax.legend(fontsize=8)


def render(spec: FigureSpec) -> str:
    """Render the figure and write it to spec.output; returns the path.

    All inputs are validated before any drawing, so a schema error never
    leaves a partial output file behind.
    """
    required = SWEEP_REQUIRED if spec.kind in ("sweep", "stability") else CURVE_REQUIRED
    for path in spec.inputs:
        _read_rows(path, required)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    try:
        if spec.kind in ("sweep", "stability"):
            _render_sweep(spec, ax)
        else:
            _render_curves(spec, ax)
        if spec.title:
            ax.set_title(spec.title)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(spec.output)
    finally:
        plt.close(fig)
    return spec.output
