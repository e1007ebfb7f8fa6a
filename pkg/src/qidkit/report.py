"""Run orchestration, ground-truth scoring, and report / CSV writers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .blackbox import TrueModel, new_blackbox
from .config import RunConfig
from .estimator import COMPONENTS, IdentifiedModel, gauge_fix, identify
from .errors import MissingRawData
from .fitting import dft_magnitude

REPORT_SCHEMA = "qidkit.report/1"
RAW_SCHEMA = "qidkit.raw/1"


def fmt(x: float) -> str:
    """17 significant digits: round-trip safe and platform independent."""
    return format(float(x), ".17g")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(path: Path, payload) -> None:
    text = json.dumps(_json_ready(payload), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def truth_in_gauge(truth: TrueModel, im: IdentifiedModel) -> tuple[np.ndarray, list[np.ndarray]]:
    ref = next(a for a in im.axes if a.key == im.reference)
    return gauge_fix(truth.d0, truth.controls, ref.fields)


def hs_errors(truth: TrueModel, im: IdentifiedModel) -> list[float]:
    """||d_m^est - d_m^act|| for m = 0..M with the truth mapped into the estimator gauge."""
    d0, dm = truth_in_gauge(truth, im)
    return [float(np.linalg.norm(e - t)) for e, t in zip([im.d0_hat, *im.dm_hat], [d0, *dm])]


def run_identify(cfg: RunConfig, truth_known: bool = True):
    """Build the black box, identify, and return (model, handle)."""
    handle = new_blackbox(cfg.model, cfg.seed)
    im = identify(handle, cfg.field_grid, cfg.plan)
    if truth_known:
        im.hs_errors = hs_errors(cfg.model, im)
    return im, handle


def _axis_row(a) -> dict:
    s1 = a.stage1
    row = {
        "m": a.m, "ell": a.ell, "field": a.field,
        "omega_dft": s1.omega_dft, "t_min": s1.t_min_hat, "z_min": s1.z_min_hat,
        "contrast": s1.contrast,
        "norm": a.polar.norm, "theta": a.polar.theta, "phi": a.polar.phi,
        "branch": a.branch, "cartesian": a.cartesian,
    }
    if a.phi_est is not None:
        p = a.phi_est
        row.update(gamma=p.gamma, delta=p.delta, C=p.C, D=p.D, alpha_cross=p.alpha_cross,
                   alpha_min=p.alpha_min, z_min_alpha=p.z_min, alpha_max=p.alpha_max,
                   z_max_alpha=p.z_max, fit_rms=a.fit_rms)
    return row


def build_report(cfg: RunConfig, im: IdentifiedModel, handle) -> dict:
    report = {
        "schema": REPORT_SCHEMA,
        "tool_version": __version__,
        "config": cfg.echo(),
        "model": {"d0": im.d0_hat, "controls": im.dm_hat},
        "reference": {"m": im.reference[0], "ell": im.reference[1]},
        "prep": {"alpha_r": im.prep.alpha_r, "beta": im.prep.beta, "duration": im.prep.duration},
        "gauge": im.gauge,
        "line_fits": [
            {c: {"slope": f[c].slope, "intercept": f[c].intercept, "residual_rms": f[c].residual_rms}
             for c in COMPONENTS}
            for f in im.line_fits
        ],
        "intercept_deviation": im.intercept_deviation,
        "consistency": im.consistency,
        "axes": [_axis_row(a) for a in im.axes],
        "cost": {"experiments": handle.experiments, "shots": handle.shots},
    }
    if im.hs_errors is not None:
        d0, dm = truth_in_gauge(cfg.model, im)
        report["hs_errors"] = im.hs_errors
        report["truth_in_gauge"] = {"d0": d0, "controls": dm}
    return report


def axis_component_rows(im: IdentifiedModel, truth: TrueModel | None):
    true_lines = None
    if truth is not None:
        true_lines = truth_in_gauge(truth, im)
    rows = []
    for a in im.axes:
        if a.m == 0:
            continue
        fit = im.line_fits[a.m - 1]
        row = [a.m, a.ell, a.field, *a.cartesian, *(fit[c](a.field) for c in COMPONENTS)]
        if true_lines is not None:
            d0, dm = true_lines
            row += list(d0 + a.field * dm[a.m - 1])
        else:
            row += ["", "", ""]
        rows.append(row)
    return rows


AXIS_COMPONENT_HEADER = ["m", "ell", "field", "x_hat", "y_hat", "z_hat",
                         "x_fit", "y_fit", "z_fit", "x_true", "y_true", "z_true"]


def raw_payload(im: IdentifiedModel) -> dict:
    axes = []
    for a in im.axes:
        if a.stage1.raw is None:
            raise MissingRawData("run was made without --keep-raw")
        entry = {"m": a.m, "ell": a.ell, "field": a.field, "stage1": a.stage1.raw}
        if a.phi_est is not None:
            entry["stage2"] = a.phi_est.raw
        axes.append(entry)
    return {"schema": RAW_SCHEMA, "axes": axes}


def write_identify_outputs(out: Path, cfg: RunConfig, im: IdentifiedModel, handle) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    report = build_report(cfg, im, handle)
    write_json(out / "report.json", report)
    write_csv(out / "axis_components.csv", AXIS_COMPONENT_HEADER, axis_component_rows(im, cfg.model))
    if cfg.plan.keep_raw:
        write_json(out / "raw.json", raw_payload(im))
    return report


def write_figures(run_dir: Path) -> list[Path]:
    """Figure-ready CSVs from a run directory holding report.json and raw.json."""
    raw_path = run_dir / "raw.json"
    if not raw_path.exists():
        raise MissingRawData(f"{raw_path} not found; rerun identify with --keep-raw")
    raw = json.loads(raw_path.read_text(encoding="utf-8"))
    report = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))

    freq, fourier, refine, phi = [], [], [], []
    for entry in raw["axes"]:
        m, ell, f = entry["m"], entry["ell"], entry["field"]
        s1 = entry["stage1"]
        t, z = np.array(s1["coarse_t"]), np.array(s1["coarse_z"])
        freq += [[m, ell, f, ti, zi] for ti, zi in zip(t, z)]
        mag = dft_magnitude(z)
        dt = t[1] - t[0]
        fourier += [[m, ell, f, 2 * math.pi * k / (len(t) * dt), mk] for k, mk in enumerate(mag)]
        a, b, c = s1["parabola"]
        refine += [[m, ell, f, "min", ti, zi, (a * ti + b) * ti + c]
                   for ti, zi in zip(s1["refine_t"], s1["refine_z"])]
        if "max_t" in s1:
            a, b, c = s1["max_parabola"]
            refine += [[m, ell, f, "max", ti, zi, (a * ti + b) * ti + c]
                       for ti, zi in zip(s1["max_t"], s1["max_z"])]
        s2 = entry.get("stage2")
        if s2:
            phi += [[m, ell, f, "coarse", al, zi, ""] for al, zi in zip(s2["coarse_alpha"], s2["coarse_z"])]
            for (al_r, z_r), (a, b, c) in zip(s2["refine"], s2["parabolas"]):
                phi += [[m, ell, f, "refine", al, zi, (a * al + b) * al + c] for al, zi in zip(al_r, z_r)]
    components = []
    truth = report.get("truth_in_gauge")
    for r in report["axes"]:
        if r["m"] == 0:
            continue
        fit = report["line_fits"][r["m"] - 1]
        row = [r["m"], r["ell"], r["field"], *r["cartesian"],
               *(fit[c]["slope"] * r["field"] + fit[c]["intercept"] for c in COMPONENTS)]
        if truth is not None:
            d0, dm = np.array(truth["d0"]), np.array(truth["controls"][r["m"] - 1])
            row += list(d0 + r["field"] * dm)
        else:
            row += ["", "", ""]
        components.append(row)

    paths = []
    for name, header, rows in [
        ("freq_scan.csv", ["m", "ell", "field", "t", "z"], freq),
        ("fourier.csv", ["m", "ell", "field", "omega", "magnitude"], fourier),
        ("refine_scan.csv", ["m", "ell", "field", "window", "t", "z", "z_parabola"], refine),
        ("phi_scan.csv", ["m", "ell", "field", "kind", "alpha", "z", "z_parabola"], phi),
        ("axis_components.csv", AXIS_COMPONENT_HEADER, components),
    ]:
        write_csv(run_dir / name, header, rows)
        paths.append(run_dir / name)
    return paths
