"""Three-stage identification of d0 and the control vectors d_m.

Stage 1 measures each axis's rotation frequency and tilt from free-running
z(t) curves starting in |0>. Stage 2 prepares an equatorial state with a
reference axis and reads relative azimuths from z(alpha). Stage 3 regresses
the Cartesian components of every measured axis on the applied field.

Only the experiment-handle interface is used here (``n_controls``,
``run_experiment``, ``run_exact``); nothing in this module can see the truth.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .bloch import (
    AxisPolar,
    EquatorialPrep,
    axis_to_polar,
    Vec3,
    equatorial_prep,
    polar_to_cartesian,
    wrap_angle,
    z_equatorial,
)
from .blackbox import PulseSequence, Segment
from .errors import DegenerateFit, NoUsableReference, QidError, StageFailed, TiltTooVertical
from .fitting import dft_peak, first_zero_crossing, line_fit, parabola_vertex, LineFit

log = logging.getLogger(__name__)

COMPONENTS = ("x", "y", "z")


@dataclass(frozen=True)
class SamplingPlan:
    coarse_samples: int = 256
    # upper bound on any axis norm; sets the coarse step dt = pi / omega_max
    omega_max: float = 4.0
    coarse_span: float | None = None
    refine_points: int = 150
    refine_window: tuple[float, float] = (0.85, 1.15)
    phi_coarse_step: float = 2 * math.pi / 24
    shots: int = 1000
    eta: float = 0.0
    exact: bool = False
    force_reference_d0: bool = False
    floor_factor: float = 3.0
    crossing_threshold: float = 0.25
    crossing_persist: int = 2
    normalize_contrast: bool = True
    # "direct": free-evolution axis; "intercept": mean of the fitted line intercepts
    d0_source: str = "direct"
    keep_raw: bool = False

    def __post_init__(self):
        lo, hi = self.refine_window
        if not lo < 1.0 < hi:
            raise ValueError("refine_window must contain 1.0")
        if self.coarse_samples < 64:
            raise ValueError("coarse_samples must be >= 64")
        if self.refine_points < 3:
            raise ValueError("refine_points must be >= 3")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.omega_max <= 0 or self.phi_coarse_step <= 0:
            raise ValueError("omega_max and phi_coarse_step must be positive")
        if self.crossing_persist < 1:
            raise ValueError("crossing_persist must be >= 1")
        if self.d0_source not in ("direct", "intercept"):
            raise ValueError("d0_source must be 'direct' or 'intercept'")

    @property
    def coarse_dt(self) -> float:
        if self.coarse_span is not None:
            return self.coarse_span / self.coarse_samples
        return math.pi / self.omega_max

    @property
    def refine_half_angle(self) -> float:
        """Half-width of a refinement window in rotation angle (rad)."""
        lo, hi = self.refine_window
        return 0.5 * (hi - lo) * math.pi


@dataclass
class AxisEstimate:
    polar: AxisPolar
    z_min_hat: float
    t_min_hat: float
    omega_dft: float
    phi_valid: bool = False
    raw: dict | None = field(default=None, repr=False)
    # fitted z at the first maximum; 1 when contrast normalization is off
    contrast: float = 1.0


@dataclass
class PhiEstimate:
    gamma: float
    delta: float
    C: float
    D: float
    phi: float
    # the mirror solution (pi - theta, phi_alt) fits the same curve equally well
    phi_alt: float
    alpha_cross: float
    alpha_min: float
    z_min: float
    alpha_max: float
    z_max: float
    # every (alpha, z) pair measured for this axis, coarse and refined
    samples: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    raw: dict | None = field(default=None, repr=False)


@dataclass
class AxisRecord:
    m: int
    ell: int
    field: float
    fields: tuple[float, ...]
    stage1: AxisEstimate
    phi_est: PhiEstimate | None = None
    polar: AxisPolar | None = None
    cartesian: Vec3 | None = None
    branch: str = "direct"
    fit_rms: float | None = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.m, self.ell)


@dataclass
class IdentifiedModel:
    d0_hat: Vec3
    dm_hat: list[Vec3]
    axes: list[AxisRecord]
    reference: tuple[int, int]
    prep: EquatorialPrep
    line_fits: list[dict[str, LineFit]]
    intercept_deviation: list[float]
    gauge: dict
    consistency: dict
    hs_errors: list[float] | None = None


class _Probe:
    """Runs sequences against the handle in exact or sampled mode."""

    def __init__(self, handle, plan: SamplingPlan):
        self.handle = handle
        self.plan = plan

    def z(self, seq: PulseSequence) -> float:
        if self.plan.exact:
            return self.handle.run_exact(seq)
        return self.handle.run_experiment(seq, self.plan.shots, self.plan.eta).z_hat

    def scan(self, prefix: tuple[Segment, ...], fields: tuple[float, ...], durations) -> np.ndarray:
        return np.array([self.z(PulseSequence(prefix + (Segment(fields, t),))) for t in durations])


def estimate_axis_polar(handle, fields: Sequence[float], plan: SamplingPlan) -> AxisEstimate:
    """Frequency from the DFT of a coarse z(t) scan, then a parabola at the first minimum."""
    fields = tuple(float(f) for f in fields)
    probe = _Probe(handle, plan)
    dt = plan.coarse_dt
    t = dt * np.arange(1, plan.coarse_samples + 1)
    z = probe.scan((), fields, t)
    omega = dft_peak(t, z, omega_max=plan.omega_max, floor_factor=plan.floor_factor)
    t_star = math.pi / omega
    lo, hi = plan.refine_window
    def measure(t):
        return probe.scan((), fields, t)

    below, above = (1 - lo) * t_star, (hi - 1) * t_star
    vertex, tr, zr = _turning_point(measure, t_star, below, above, plan.refine_points, True)
    raw = None
    if plan.keep_raw:
        raw = {"coarse_t": t, "coarse_z": z, "refine_t": tr, "refine_z": zr,
               "parabola": vertex.coeffs}
    contrast = 1.0
    if plan.normalize_contrast:
        # first maximum sits at 2 t_min and reads the readout contrast (1 - 2 eta)
        top, tm, zm = _turning_point(measure, 2 * vertex.x_v, below, above,
                                     plan.refine_points, False)
        if top.y_v <= 0:
            raise DegenerateFit("fitted maximum is not positive")
        contrast = min(1.0, top.y_v)
        if raw is not None:
            raw.update(max_t=tm, max_z=zm, max_parabola=top.coeffs)
    cos2 = min(1.0, max(-1.0, vertex.y_v / contrast))
    polar = AxisPolar(math.pi / vertex.x_v, 0.5 * math.acos(cos2), 0.0)
    return AxisEstimate(polar, vertex.y_v, vertex.x_v, omega, False, raw, contrast)


def select_reference(estimates: Sequence[AxisEstimate], force: int | None = None) -> int:
    """Index of the axis whose tilt is closest to pi/2 within [pi/4, 3pi/4]."""
    if not estimates:
        raise ValueError("no axis estimates")

    def usable(e):
        return math.pi / 4 <= e.polar.theta <= 3 * math.pi / 4

    if force is not None:
        if not usable(estimates[force]):
            raise NoUsableReference(
                f"forced reference tilt {estimates[force].polar.theta:.4f} outside [pi/4, 3pi/4]")
        return force
    ok = [i for i, e in enumerate(estimates) if usable(e)]
    if not ok:
        raise NoUsableReference("all axis tilts outside [pi/4, 3pi/4]")
    return min(ok, key=lambda i: abs(estimates[i].polar.theta - math.pi / 2))


def _turning_point(measure, center: float, below: float, above: float, points: int,
                   minimum: bool):
    """Parabola vertex of ``measure`` near ``center``; returns (vertex, x, y).

    The window ``[center - below, center + above]`` is re-centred once on the
    fitted vertex when the predicted position was off, and widened two- then
    three-fold when shot noise hides the curvature.
    """
    recentred = False
    k = 1
    while k <= 3:
        x = np.linspace(center - k * below, center + k * above, points)
        y = measure(x)
        v = parabola_vertex(x, y)
        good = (v.curvature > 0 if minimum else v.curvature < 0) and x[0] <= v.x_v <= x[-1]
        if good and not recentred and abs(v.x_v - center) > 0.25 * k * min(below, above):
            center, recentred = v.x_v, True
            continue
        if good:
            return v, x, y
        k += 1
    kind = "minimum" if minimum else "maximum"
    raise DegenerateFit(f"no {kind} found near {center:.6g} even with a 3x window")


def _coarse_extrema(alpha: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    """(alpha_min, alpha_max) of the least-squares fit z = C (1 - cos a) + D sin a."""
    A = np.column_stack([1.0 - np.cos(alpha), np.sin(alpha)])
    (c, d), *_ = np.linalg.lstsq(A, z, rcond=None)
    # dz/da = c sin a + d cos a vanishes at atan2(-d, c), where z'' = |(c, d)| > 0
    a_min = math.atan2(-d, c) % (2 * math.pi)
    return a_min, (a_min + math.pi) % (2 * math.pi)


def _relative_azimuth(C: float, D: float, theta: float) -> float:
    s = min(1.0, max(-1.0, D / math.sin(theta)))
    s2 = math.sin(2 * theta)
    if abs(s2) < 1e-9:
        return math.asin(s)
    return math.atan2(s, 2 * C / s2)


def estimate_phi(handle, fields: Sequence[float], axis: AxisEstimate, prep: EquatorialPrep,
                 ref_fields: Sequence[float], plan: SamplingPlan) -> PhiEstimate:
    """Azimuth of ``axis`` relative to the reference, from z(alpha) after equatorial prep."""
    theta = axis.polar.theta
    if math.sin(theta) < 0.05:
        raise TiltTooVertical(f"sin(theta)={math.sin(theta):.4f} below 0.05")
    fields = tuple(float(f) for f in fields)
    prefix = (Segment(tuple(float(f) for f in ref_fields), prep.duration),)
    probe = _Probe(handle, plan)
    norm = axis.polar.norm
    step = plan.phi_coarse_step
    n = int(math.ceil((2 * math.pi + 2 * step) / step))
    alpha = step * np.arange(n + 1)
    z = probe.scan(prefix, fields, alpha / norm)
    alpha_c = first_zero_crossing(alpha, z, plan.crossing_threshold, persist=plan.crossing_persist)

    def measure(a):
        # z(alpha) is 2pi-periodic: a window reaching below 0 is measured one
        # period later instead of being clipped, which would bias the vertex
        shift = 2 * math.pi if a[0] < 0 else 0.0
        return probe.scan(prefix, fields, (a + shift) / norm)

    # the lobe before the crossing decides which predicted extremum comes first
    max_first = float(np.sum(z[alpha < alpha_c])) > 0
    first, second = 0.5 * alpha_c, 0.5 * alpha_c + math.pi
    centers = [second, first] if max_first else [first, second]
    # a noisy shallow lobe can misplace the crossing; a prediction far from the
    # extremum of a whole-scan fit is replaced by the fitted position
    half = plan.refine_half_angle
    for i, fitted in enumerate(_coarse_extrema(alpha, z)):
        if abs(wrap_angle(centers[i] - fitted)) > 2 * half:
            log.debug("stage-2 window moved from %.3f to %.3f", centers[i], fitted)
            centers[i] = fitted
    vertices, refined = [], []
    for center, minimum in zip(centers, (True, False)):
        v, ar, zr = _turning_point(measure, center, half, half, plan.refine_points, minimum)
        vertices.append(v)
        refined.append((ar, zr))
    vmin, vmax = vertices
    if vmax.y_v <= vmin.y_v:
        raise DegenerateFit("fitted maximum lies below the fitted minimum")

    gamma = 0.5 * (vmax.y_v - vmin.y_v)
    # max at pi/2 - delta, min at 3pi/2 - delta; with the max first this is
    # delta = pi - (a_min + a_max)/2, the circular mean also covers min-first
    delta = math.atan2(math.sin(math.pi / 2 - vmax.x_v) + math.sin(1.5 * math.pi - vmin.x_v),
                       math.cos(math.pi / 2 - vmax.x_v) + math.cos(1.5 * math.pi - vmin.x_v))
    delta = wrap_angle(delta)
    # z = gamma sin(a + delta) - gamma sin(delta) = C (1 - cos a) + D sin a
    C = -gamma * math.sin(delta)
    D = gamma * math.cos(delta)
    psi = _relative_azimuth(C, D, theta)
    psi_alt = _relative_azimuth(C, D, math.pi - theta)
    samples = (np.concatenate([alpha] + [a for a, _ in refined]),
               np.concatenate([z] + [zz for _, zz in refined]))
    raw = None
    if plan.keep_raw:
        raw = {"coarse_alpha": alpha, "coarse_z": z,
               "refine": [(a, zz) for a, zz in refined],
               "parabolas": [v.coeffs for v in vertices]}
    return PhiEstimate(gamma, delta, C, D, wrap_angle(prep.beta + psi),
                       wrap_angle(prep.beta + psi_alt), alpha_c,
                       vmin.x_v, vmin.y_v, vmax.x_v, vmax.y_v, samples, raw)


def _fit_predict(xs, ys, f):
    if len(xs) == 1:
        return ys[0]
    X = np.asarray(xs)
    Y = np.asarray(ys)
    return np.array([line_fit(X, Y[:, j])(f) for j in range(3)])


def _resolve_branches(axes: list[AxisRecord], candidates: dict, n_controls: int):
    """Pick the tilt branch of every axis so each control traces a straight line.

    Stage 1 cannot tell theta from pi - theta and stage 2 leaves the matching
    pair (theta, phi) / (pi - theta, phi_alt) equally consistent. The true set
    of axes is affine in each field and passes through the reference, so the
    branches are chosen greedily outward from d0 along each field grid.
    """
    by_control = {m: sorted((a for a in axes if a.m == m), key=lambda a: abs(a.field))
                  for m in range(1, n_controls + 1)}
    best = None
    for i0, d0c in enumerate(candidates[(0, 0)]):
        choice = {(0, 0): i0}
        cost = 0.0
        for m, recs in by_control.items():
            xs, ys = [0.0], [d0c]
            for rec in recs:
                pred = _fit_predict(xs, ys, rec.field)
                cands = candidates[rec.key]
                j = min(range(len(cands)), key=lambda k: float(np.linalg.norm(cands[k] - pred)))
                choice[rec.key] = j
                xs.append(rec.field)
                ys.append(cands[j])
            Y = np.asarray(ys)
            cost += sum(line_fit(xs, Y[:, k]).residual_rms ** 2 * len(xs) for k in range(3))
        if best is None or cost < best[0]:
            best = (cost, choice)
    return best[1]


def identify(handle, field_grid: Sequence[Sequence[float]], plan: SamplingPlan) -> IdentifiedModel:
    """Run all three stages and return gauge-fixed estimates of d0 and every d_m."""
    M = handle.n_controls
    if len(field_grid) != M:
        raise ValueError(f"field grid has {len(field_grid)} controls, black box has {M}")
    for m, grid in enumerate(field_grid, start=1):
        if len(grid) < 2:
            raise ValueError(f"control {m} needs at least 2 field values")

    specs = [(0, 0, 0.0, (0.0,) * M)]
    for m, grid in enumerate(field_grid, start=1):
        for ell, f in enumerate(grid, start=1):
            fields = [0.0] * M
            fields[m - 1] = float(f)
            specs.append((m, ell, float(f), tuple(fields)))

    axes: list[AxisRecord] = []
    for m, ell, f, fields in specs:
        try:
            est = estimate_axis_polar(handle, fields, plan)
        except QidError as exc:
            raise StageFailed("axis", m, ell, exc) from exc
        axes.append(AxisRecord(m, ell, f, fields, est))

    try:
        r = select_reference([a.stage1 for a in axes], 0 if plan.force_reference_d0 else None)
        ref = axes[r]
        ref_polar = replace(ref.stage1.polar, phi=0.0)
        prep = equatorial_prep(ref_polar)
    except QidError as exc:
        raise StageFailed("reference", None, None, exc) from exc

    candidates: dict[tuple[int, int], list[Vec3]] = {}
    for a in axes:
        if a is ref:
            a.stage1.phi_valid = True
            candidates[a.key] = [polar_to_cartesian(ref_polar)]
            continue
        try:
            a.phi_est = estimate_phi(handle, a.fields, a.stage1, prep, ref.fields, plan)
        except QidError as exc:
            raise StageFailed("phi", a.m, a.ell, exc) from exc
        a.stage1.phi_valid = True
        p = a.stage1.polar
        candidates[a.key] = [
            polar_to_cartesian(AxisPolar(p.norm, p.theta, a.phi_est.phi)),
            polar_to_cartesian(AxisPolar(p.norm, math.pi - p.theta, a.phi_est.phi_alt)),
        ]

    choice = _resolve_branches(axes, candidates, M)
    for a in axes:
        j = choice[a.key]
        a.cartesian = candidates[a.key][j]
        a.branch = "direct" if j == 0 else "mirror"

    # gauge: reference azimuth is 0 already; the remaining freedom is the
    # map (x, y, z) -> (x, -y, -z), fixed by the first control's y slope
    reflected = False
    if M >= 1:
        first = [a for a in axes if a.m == 1]
        slope_y = line_fit([a.field for a in first], [a.cartesian[1] for a in first]).slope
        reflected = slope_y < 0
    if reflected:
        flip = np.array([1.0, -1.0, -1.0])
        for a in axes:
            a.cartesian = a.cartesian * flip
    for a in axes:
        a.polar = _polar_or_zero(a.cartesian)

    d0_direct = next(a for a in axes if a.m == 0).cartesian
    dm_hat, fits, intercepts = [], [], []
    for m in range(1, M + 1):
        recs = [a for a in axes if a.m == m]
        xs = [a.field for a in recs]
        fm = {c: line_fit(xs, [a.cartesian[k] for a in recs]) for k, c in enumerate(COMPONENTS)}
        fits.append(fm)
        dm_hat.append(np.array([fm[c].slope for c in COMPONENTS]))
        intercepts.append(np.array([fm[c].intercept for c in COMPONENTS]))
    deviations = [float(np.linalg.norm(ic - d0_direct)) for ic in intercepts]
    if plan.d0_source == "intercept" and intercepts:
        d0_hat = np.mean(intercepts, axis=0)
    else:
        d0_hat = d0_direct

    consistency = _curve_consistency(axes, prep, plan, reflected)
    gauge = {
        "reference": {"m": ref.m, "ell": ref.ell, "phi": 0.0},
        "reflection": "(x,y,z)->(x,-y,-z)" if reflected else "none",
        "rule": "reference azimuth 0; first control y-slope >= 0",
    }
    return IdentifiedModel(d0_hat, dm_hat, axes, ref.key, prep, fits, deviations,
                           gauge, consistency)


def _polar_or_zero(d: Vec3) -> AxisPolar:
    if not np.any(d):
        return AxisPolar(0.0)
    return axis_to_polar(d)


def _curve_consistency(axes, prep, plan, reflected) -> dict:
    """RMS of stage-2 data against the resolved (theta, phi), per axis."""
    limit = 0.02 + (0.0 if plan.exact else 2 / math.sqrt(plan.shots))
    worst = 0.0
    for a in axes:
        if a.phi_est is None:
            continue
        p = a.polar
        # undo the gauge reflection to compare against the measured frame
        theta, phi = (math.pi - p.theta, -p.phi) if reflected else (p.theta, p.phi)
        alpha, z = a.phi_est.samples
        model = a.stage1.contrast * np.array([z_equatorial(theta, phi, prep.beta, x) for x in alpha])
        a.fit_rms = float(np.sqrt(np.mean((model - z) ** 2)))
        worst = max(worst, a.fit_rms)
        if a.fit_rms > limit:
            log.warning("axis m=%d l=%d: z(alpha) residual %.4f exceeds %.4f",
                        a.m, a.ell, a.fit_rms, limit)
    return {"max_rms": worst, "limit": limit, "ok": worst <= limit}



def gauge_fix(d0: Vec3, controls: Sequence[Vec3], ref_fields: Sequence[float]) -> tuple[Vec3, list[Vec3]]:
    """Express axis vectors in the estimator's gauge.

    Rotates about z so the axis at ``ref_fields`` has azimuth 0, then applies
    (x, y, z) -> (x, -y, -z) if the first control's y component is negative.
    Both maps leave every sigma_z statistic from |0> unchanged.
    """
    d0 = np.asarray(d0, dtype=float)
    controls = [np.asarray(c, dtype=float) for c in controls]
    ref = d0 + sum((f * c for f, c in zip(ref_fields, controls)), np.zeros(3))
    a = -math.atan2(ref[1], ref[0]) if np.hypot(ref[0], ref[1]) > 0 else 0.0
    R = np.array([[math.cos(a), -math.sin(a), 0.0], [math.sin(a), math.cos(a), 0.0], [0.0, 0.0, 1.0]])
    d0, controls = R @ d0, [R @ c for c in controls]
    if controls and controls[0][1] < 0:
        flip = np.array([1.0, -1.0, -1.0])
        d0, controls = d0 * flip, [c * flip for c in controls]
    return d0, controls
