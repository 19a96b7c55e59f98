"""Run artifacts on disk and comparison reports across runs.

A transport run is persisted as a directory of delimited snapshot
tables (x, u_0, ..., u_N per row) plus a diagnostics JSON.  A report
collects several run directories, recomputes the integrated relative
error of each against a designated reference, writes a summary table
and the overlay data as CSV, and renders static overlay/trace figures
with matplotlib.  Figures are derived artifacts; the CSV tables are the
source of truth.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .kinetic_solver import RunResult, e_rel

__all__ = [
    "write_run",
    "load_run",
    "LoadedRun",
    "build_report",
]


def _write_snapshot(path, t, x, U):
    with open(path, "w") as fh:
        fh.write(f"# t={t:.17g}\n")
        cols = ["x"] + [f"u_{k}" for k in range(U.shape[1])]
        fh.write(",".join(cols) + "\n")
        for xi, row in zip(x, U):
            fh.write(f"{xi:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def _read_snapshot(path):
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("# t="):
            raise ValueError(f"{path}: missing time header")
        t = float(first[4:])
        fh.readline()  # column names
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return t, data[:, 0], data[:, 1:]


def write_run(result: RunResult, path) -> list:
    """Persist snapshots and diagnostics; returns the artifact paths."""
    os.makedirs(path, exist_ok=True)
    artifacts = []
    for k, (t, U) in enumerate(result.snapshots):
        snap_path = os.path.join(path, f"snapshot_{k:03d}.csv")
        _write_snapshot(snap_path, t, result.x, U)
        artifacts.append(snap_path)
    diag_path = os.path.join(path, "diagnostics.json")
    with open(diag_path, "w") as fh:
        json.dump(result.diagnostics(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts.append(diag_path)
    return artifacts


@dataclass
class LoadedRun:
    path: str
    closure: str
    x: np.ndarray
    snapshots: list
    diagnostics: dict

    @property
    def final_u0(self):
        return self.snapshots[-1][2][:, 0]


def load_run(path) -> LoadedRun:
    diag_path = os.path.join(path, "diagnostics.json")
    if not os.path.exists(diag_path):
        raise FileNotFoundError(f"{path} is not a run directory (no diagnostics.json)")
    with open(diag_path) as fh:
        diagnostics = json.load(fh)
    snaps = sorted(
        f for f in os.listdir(path) if f.startswith("snapshot_") and f.endswith(".csv")
    )
    if not snaps:
        raise FileNotFoundError(f"{path} contains no snapshots")
    snapshots = [_read_snapshot(os.path.join(path, f)) for f in snaps]
    return LoadedRun(
        path=path,
        closure=diagnostics["closure"],
        x=snapshots[-1][1],
        snapshots=snapshots,
        diagnostics=diagnostics,
    )


def _pick_reference(runs, reference):
    if reference is None:
        return runs[0]
    for run in runs:
        if run.closure == reference or run.path.rstrip("/").endswith(reference):
            return run
    raise ValueError(
        f"no run matches reference {reference!r}; have {[r.closure for r in runs]}"
    )


def build_report(run_paths, out_dir, reference=None, formats=("png",)) -> dict:
    """Comparison tables and overlay figures for completed runs.

    Every run's final u_0 is compared against the reference run with
    the integrated relative error; if a run already recorded an e_rel
    against the same reference at solve time the two values must agree
    to 1e-14.  Returns the summary rows.
    """
    if not run_paths:
        raise ValueError("report needs at least one completed run")
    runs = [load_run(p) for p in run_paths]
    ref = _pick_reference(runs, reference)
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    for run in runs:
        err = e_rel(run.final_u0, ref.final_u0)
        recorded = run.diagnostics.get("e_rel")
        if recorded is not None and abs(recorded - err) > 1e-14:
            raise ValueError(
                f"{run.path}: recorded e_rel {recorded!r} disagrees with "
                f"recomputed value {err!r}"
            )
        rows.append(
            {
                "closure": run.closure,
                "system_size": run.diagnostics["system_size"],
                "wall_time": run.diagnostics["wall_time"],
                "e_rel": err,
            }
        )

    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w") as fh:
        fh.write("closure,system_size,wall_time,e_rel\n")
        for row in rows:
            fh.write(
                f"{row['closure']},{row['system_size']},"
                f"{row['wall_time']:.17g},{row['e_rel']:.17g}\n"
            )

    overlay_path = os.path.join(out_dir, "overlay_u0.csv")
    with open(overlay_path, "w") as fh:
        fh.write("x," + ",".join(run.closure for run in runs) + "\n")
        for i, xi in enumerate(ref.x):
            vals = []
            for run in runs:
                u0 = run.final_u0
                vals.append(u0[i] if u0.size == ref.x.size else np.nan)
            fh.write(f"{xi:.17g}," + ",".join(f"{v:.17g}" for v in vals) + "\n")

    _render_figures(runs, ref, out_dir, formats)
    return {"rows": rows, "summary": summary_path, "overlay": overlay_path}


def _render_figures(runs, ref, out_dir, formats):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for run in runs:
        ax.plot(run.x, run.final_u0, label=run.closure, linewidth=1.2)
    t_final = runs[0].snapshots[-1][0]
    ax.set_xlabel("x")
    ax.set_ylabel("u_0")
    ax.set_title(f"zeroth moment at t = {t_final:.3g}")
    ax.legend()
    fig.tight_layout()
    for fmt in formats:
        fig.savefig(os.path.join(out_dir, f"overlay_u0.{fmt}"))
    plt.close(fig)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for run in runs:
        mass = run.diagnostics.get("mass_trace")
        if mass:
            ax1.plot(mass, label=run.closure, linewidth=1.0)
        entropy = run.diagnostics.get("entropy_trace")
        if entropy:
            ax2.plot(entropy, label=run.closure, linewidth=1.0)
    ax1.set_xlabel("step")
    ax1.set_ylabel("total mass")
    ax2.set_xlabel("step")
    ax2.set_ylabel("total entropy")
    ax1.legend(fontsize=8)
    if ax2.lines:
        ax2.legend(fontsize=8)
    fig.tight_layout()
    for fmt in formats:
        fig.savefig(os.path.join(out_dir, f"traces.{fmt}"))
    plt.close(fig)
