"""CSV, JSON summary, and SVG report emission for evaluation results."""

from __future__ import annotations

import json
import os

import numpy as np

from .evaluation import EvalRow, SweepRow

SUMMARY_VERSION = 1

STEADY_WINDOW = (2000, 2400)

SWEEP_CAVEATS = [
    "external-force node feature set to (0, 0) during the displacement sweep",
    "roller load scalar is the decoded roller->inner edge force magnitude",
]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_eval_csv(path, rows: list[EvalRow]) -> None:
    with open(path, "w") as fh:
        fh.write("trajectory_id,step,entity,"
                 "predicted_force_x,predicted_force_y,predicted_load,"
                 "true_force_x,true_force_y,true_load,pct_error\n")
        for r in rows:
            fh.write(f"{r.trajectory_id},{r.step},{r.entity},"
                     f"{_fmt(r.predicted_force[0])},{_fmt(r.predicted_force[1])},"
                     f"{_fmt(r.predicted_load)},"
                     f"{_fmt(r.true_force[0])},{_fmt(r.true_force[1])},"
                     f"{_fmt(r.true_load)},{_fmt(r.pct_error)}\n")


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    with open(path, "w") as fh:
        fh.write("displacement_mm,roller_deflection_mm,predicted_load,true_load\n")
        for r in rows:
            fh.write(f"{_fmt(r.displacement_mm)},{_fmt(r.roller_deflection_mm)},"
                     f"{_fmt(r.predicted_load)},{_fmt(r.true_load)}\n")


def write_svg_lines(path, series: list[tuple[np.ndarray, np.ndarray]],
                    title: str = "", width: int = 640, height: int = 400) -> None:
    """Self-contained line plot: one polyline per series, shared scaling."""
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    margin = 40.0
    xs_all = np.concatenate([np.asarray(s[0], dtype=float) for s in series]) \
        if series else np.array([0.0, 1.0])
    ys_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series]) \
        if series else np.array([0.0, 1.0])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return margin + (x - x_lo) / x_span * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / y_span * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" '
             'fill="white" stroke="black"/>']
    if title:
        parts.append(f'<text x="{width / 2}" y="20" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="14">{title}</text>')
    for i, (xs, ys) in enumerate(series):
        pts = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
                       for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{colors[i % len(colors)]}" stroke-width="1.5"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _abs_pct_aggregates(rows: list[EvalRow]) -> dict:
    errs = [abs(r.pct_error) for r in rows if r.pct_error is not None]
    if not errs:
        return {"median_abs_pct_error": None, "max_abs_pct_error": None,
                "n_rows": len(rows)}
    return {"median_abs_pct_error": float(np.median(errs)),
            "max_abs_pct_error": float(np.max(errs)), "n_rows": len(rows)}


def sweep_max_deviation(rows: list[SweepRow],
                        compressive_range=(-0.05, -0.01)) -> float | None:
    """Max relative |predicted - true| / true over the compressive branch."""
    lo, hi = compressive_range
    devs = [abs(r.predicted_load - r.true_load) / r.true_load
            for r in rows if lo <= r.displacement_mm <= hi and r.true_load > 0]
    return float(max(devs)) if devs else None


def emit_report(eval_rows: list[EvalRow], sweep_rows: list[SweepRow], out_dir,
                windows=((0, 250), (2500, 2750)),
                loaded_roller: int | None = None) -> list[str]:
    """Write eval_rows.csv, sweep.csv, summary.json and the SVG plots.

    Returns the list of file paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def out(name):
        path = os.path.join(out_dir, name)
        written.append(path)
        return path

    write_eval_csv(out("eval_rows.csv"), eval_rows)
    write_sweep_csv(out("sweep.csv"), sweep_rows)

    summary = {
        "format_version": SUMMARY_VERSION,
        "windows": {}, "steady_state": None,
        "sweep_max_compressive_deviation": sweep_max_deviation(sweep_rows),
        "caveats": SWEEP_CAVEATS,
    }
    roller = (f"roller_{loaded_roller}" if loaded_roller is not None else None)
    for lo, hi in windows:
        in_window = [r for r in eval_rows if lo <= r.step <= hi]
        summary["windows"][f"{lo}-{hi}"] = {
            "all": _abs_pct_aggregates(in_window),
            "loaded_roller": (_abs_pct_aggregates(
                [r for r in in_window if r.entity == roller])
                if roller else None),
        }
    steady = [r for r in eval_rows
              if STEADY_WINDOW[0] <= r.step <= STEADY_WINDOW[1]]
    if steady:
        summary["steady_state"] = {
            "window": list(STEADY_WINDOW),
            "all": _abs_pct_aggregates(steady),
            "loaded_roller": (_abs_pct_aggregates(
                [r for r in steady if r.entity == roller]) if roller else None),
        }
    with open(out("summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1)

    if roller:
        for lo, hi in windows:
            rows = [r for r in eval_rows
                    if r.entity == roller and lo <= r.step <= hi]
            if not rows:
                continue
            steps = np.array([r.step for r in rows])
            write_svg_lines(
                out(f"roller_load_{lo}_{hi}.svg"),
                [(steps, np.array([r.predicted_load for r in rows])),
                 (steps, np.array([r.true_load for r in rows]))],
                title=f"{roller} load, steps {lo}-{hi} (blue: GNN, red: truth)")
            with_err = [r for r in rows if r.pct_error is not None]
            if with_err:
                write_svg_lines(
                    out(f"pct_error_{lo}_{hi}.svg"),
                    [(np.array([r.step for r in with_err]),
                      np.array([r.pct_error for r in with_err]))],
                    title=f"{roller} load error %, steps {lo}-{hi}")
    if sweep_rows:
        u = np.array([r.displacement_mm for r in sweep_rows])
        write_svg_lines(
            out("sweep.svg"),
            [(u, np.array([r.predicted_load for r in sweep_rows])),
             (u, np.array([r.true_load for r in sweep_rows]))],
            title="bottom roller load vs inner-ring displacement "
                  "(blue: GNN, red: truth)")
    return written
