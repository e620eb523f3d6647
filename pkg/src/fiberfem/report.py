"""Run outputs: summary JSON, CSV tables, matplotlib figures, VTK snapshots.

Every run writes a summary JSON sufficient to reproduce it (normalized config
echo plus the package version); figures are rendered non-interactively next
to the delimited tables.
"""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .benchmarks import cylindrical_components, element_centroids
from .config import to_dict
from .vtk_io import export_fields


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def write_summary(report, cfg, outdir):
    summary = {
        "version": __version__,
        "config": to_dict(cfg),
        "benchmark": report.name,
        "level": report.level,
        "formulation": report.formulation,
        "elem_kind": report.elem_kind,
        "probes": report.probes,
        "mean_detF": report.fields.mean_detF,
        "solve": report.solve.summary_dict(),
    }
    path = Path(outdir) / "summary.json"
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return path


def write_tables(report, outdir):
    outdir = Path(outdir)
    paths = []
    rows = [
        (
            s.stage,
            f"{s.load_factor:.10g}",
            s.newton_iters,
            f"{s.residual_norms[0]:.6e}" if s.residual_norms else "",
            f"{s.residual_norms[-1]:.6e}" if s.residual_norms else "",
            sum(s.krylov_iters),
            f"{s.wall_time:.4f}",
            int(s.from_cutback),
        )
        for s in report.solve.steps
    ]
    p = outdir / "convergence.csv"
    _write_csv(
        p,
        ["stage", "load_factor", "newton_iters", "first_residual", "last_residual",
         "krylov_iters", "wall_time_s", "from_cutback"],
        rows,
    )
    paths.append(p)

    if report.probes:
        p = outdir / "probes.csv"
        rows = []
        for name, vals in report.probes.items():
            if isinstance(vals, dict):
                for k, v in vals.items():
                    rows.append((name, k, json.dumps(v)))
            else:
                rows.append((name, "", json.dumps(vals)))
        _write_csv(p, ["probe", "quantity", "value"], rows)
        paths.append(p)

    hist, edges = np.histogram(report.fields.detF, bins=60)
    p = outdir / "detF_hist.csv"
    _write_csv(
        p,
        ["bin_left", "bin_right", "count"],
        [(f"{edges[i]:.8g}", f"{edges[i+1]:.8g}", int(hist[i])) for i in range(len(hist))],
    )
    paths.append(p)

    strains = report.tables.get("strain_profiles")
    if strains:
        p = outdir / "strain_profiles.csv"
        rows = []
        for t, arr in strains.items():
            for u_par, circ, lon, trans in arr:
                rows.append((f"{t:.3g}", f"{u_par:.8g}", f"{circ:.8g}",
                             f"{lon:.8g}", f"{trans:.8g}"))
        _write_csv(p, ["wall_depth", "u", "CIRC", "LONG", "TRANS"], rows)
        paths.append(p)

    hist = report.tables.get("volume_history")
    if hist:
        p = outdir / "cavity_volume.csv"
        _write_csv(p, ["stage", "load_factor", "volume_mm3"],
                   [(s, f"{lam:.8g}", f"{v:.10g}") for s, lam, v in hist])
        paths.append(p)
    return paths


def render_figures(report, outdir):
    outdir = Path(outdir)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for s in report.solve.steps:
        ax.semilogy(range(len(s.residual_norms)), s.residual_norms, "-o", ms=2, lw=0.7)
    ax.set_xlabel("Newton iteration")
    ax.set_ylabel("residual norm")
    ax.set_title(f"{report.name} L{report.level} {report.formulation}/{report.elem_kind}")
    fig.tight_layout()
    p = outdir / "newton_convergence.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(report.fields.detF, bins=60, color="tab:blue", alpha=0.8)
    ax.axvline(1.0, color="k", lw=0.8)
    ax.set_xlabel("det F")
    ax.set_ylabel("elements")
    ax.set_title(f"Jacobian distribution (mean {report.fields.mean_detF:.4f})")
    fig.tight_layout()
    p = outdir / "detF_hist.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    strains = report.tables.get("strain_profiles")
    if strains:
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.6), sharex=True)
        labels = ["CIRC", "LONG", "TRANS"]
        for col, ax in enumerate(axes):
            for t, arr in sorted(strains.items()):
                ax.plot(np.arange(1, len(arr) + 1), arr[:, col + 1], "-o", ms=3,
                        label=f"depth {t:.2g}")
            ax.set_title(labels[col])
            ax.set_xlabel("probe index (apex to base)")
        axes[0].set_ylabel("Green-Lagrange strain")
        axes[0].legend(fontsize=8)
        fig.tight_layout()
        p = outdir / "strain_profiles.png"
        fig.savefig(p, dpi=130)
        plt.close(fig)
        paths.append(p)

    hist = report.tables.get("volume_history")
    if hist:
        fig, ax = plt.subplots(figsize=(6, 4))
        vols = [v for _, _, v in hist]
        ax.plot(range(1, len(vols) + 1), vols, "-o", ms=3)
        ax.set_xlabel("accepted load step")
        ax.set_ylabel("cavity volume [mm^3]")
        fig.tight_layout()
        p = outdir / "cavity_volume.png"
        fig.savefig(p, dpi=130)
        plt.close(fig)
        paths.append(p)
    return paths


def write_run_outputs(report, cfg, outdir):
    """Render a benchmark report to disk per the config output toggles."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [write_summary(report, cfg, outdir)]
    if cfg.csv:
        written.extend(write_tables(report, outdir))
    if cfg.figures:
        written.extend(render_figures(report, outdir))
    if cfg.vtk:
        srr, stt, szz = cylindrical_components(
            report.fields.sigma, element_centroids(report.mesh)
        )
        p = outdir / "fields.vtk"
        export_fields(report.mesh, report.state, report.fields, p, srr, stt, szz)
        written.append(p)
    if cfg.matrices:
        followers = []
        system = report.assembler.assemble(report.state, followers)
        p = outdir / "final_matrix.mtx"
        system.save_matrix_market(p)
        written.append(p)
    return written
