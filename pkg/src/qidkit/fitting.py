"""1-D estimation primitives: DFT peak, parabola vertex, straight line, zero crossing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AliasingRisk, DegenerateFit, NoCrossing, NoOscillation


@dataclass(frozen=True)
class SampledSeries:
    """Abscissae (times or angles) with measured values."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-D and of equal length")
        if len(x) < 3:
            raise ValueError("need at least 3 samples")
        if np.any(np.diff(x) <= 0):
            raise ValueError("abscissae must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    residual_rms: float

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


@dataclass(frozen=True)
class ParabolaVertex:
    x_v: float
    y_v: float
    curvature: float
    # y = a x^2 + b x + c in the original coordinates
    coeffs: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __call__(self, x):
        a, b, c = self.coeffs
        x = np.asarray(x, dtype=float)
        return (a * x + b) * x + c


def _uniform_step(t: np.ndarray) -> float:
    steps = np.diff(t)
    dt = float(steps.mean())
    if np.max(np.abs(steps - dt)) > 1e-9 * abs(dt):
        raise ValueError("samples are not uniformly spaced")
    return dt


def dft_magnitude(values) -> np.ndarray:
    """|X_k| for k = 0..J//2 of the mean-subtracted series (direct summation)."""
    v = np.asarray(values, dtype=float)
    v = v - v.mean()
    J = len(v)
    k = np.arange(J // 2 + 1)
    phase = np.exp(-2j * np.pi * np.outer(k, np.arange(J)) / J)
    return np.abs(phase @ v)


def dft_peak(t, values, omega_max: float | None = None, floor_factor: float = 3.0) -> float:
    """Angular frequency of the strongest non-DC bin below Nyquist.

    Raises NoOscillation when that bin is not at least ``floor_factor`` times the
    median bin magnitude (or the spectrum is numerically zero).
    """
    s = SampledSeries(t, values)
    J = len(s)
    if J < 8:
        raise ValueError("dft_peak needs at least 8 samples")
    dt = _uniform_step(s.x)
    if omega_max is not None and omega_max > math.pi / dt * (1 + 1e-12):
        raise AliasingRisk(f"omega_max={omega_max} exceeds Nyquist {math.pi / dt:.6g}")
    mag = dft_magnitude(s.y)
    kmax = (J - 1) // 2
    bins = mag[1:kmax + 1]
    k = int(np.argmax(bins)) + 1
    peak = mag[k]
    scale = max(1.0, float(np.max(np.abs(s.y))))
    if peak <= 1e-9 * J * scale or peak < floor_factor * float(np.median(bins)):
        raise NoOscillation(f"no spectral peak above {floor_factor}x the median bin")
    return 2 * math.pi * k / (J * dt)


def parabola_vertex(x, y) -> ParabolaVertex:
    """Least-squares ``y = a x^2 + b x + c`` and its stationary point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3 or len(x) != len(y):
        raise ValueError("need at least 3 paired points")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise DegenerateFit("all abscissae equal")
    # normal equations in centred, scaled coordinates u in [-1, 1]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    u = (x - mid) / half
    V = np.column_stack([u * u, u, np.ones_like(u)])
    au, bu, cu = np.linalg.solve(V.T @ V, V.T @ y)
    yscale = max(float(np.max(np.abs(y))), 1e-300)
    if abs(au) <= 1e-12 * yscale:
        raise DegenerateFit("points are collinear; vertex undefined")
    uv = -bu / (2 * au)
    a = au / half**2
    b = bu / half - 2 * a * mid
    c = au * (mid / half) ** 2 - bu * mid / half + cu
    return ParabolaVertex(mid + half * uv, cu - bu * bu / (4 * au), 2 * a, (a, b, c))


def line_fit(x, y) -> LineFit:
    """Ordinary least-squares straight line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(x) != len(y):
        raise ValueError("need at least 2 paired points")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise DegenerateFit("all abscissae equal")
    slope = float(np.sum((x - xm) * (y - ym))) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    return LineFit(slope, intercept, float(np.sqrt(np.mean(resid**2))))


def first_zero_crossing(x, y, threshold: float = 0.05, persist: int = 1) -> float:
    """Abscissa of the first sign change after the curve leaves zero.

    The search arms once ``|y|`` exceeds ``threshold * max|y|`` on ``persist``
    consecutive samples of one sign; a sign change likewise counts only when it
    holds for ``persist`` samples (or to the end of the series). The crossing is
    linearly interpolated between the bracketing samples.
    """
    s = SampledSeries(x, y)
    if persist < 1:
        raise ValueError("persist must be >= 1")
    ymax = float(np.max(np.abs(s.y)))
    if ymax == 0.0:
        raise NoCrossing("series is identically zero")
    n = len(s)
    level = threshold * ymax

    def holds(i: int, pred) -> bool:
        return all(pred(s.y[j]) for j in range(i, min(n, i + persist)))

    i0 = next((i for i in range(n - persist + 1)
               if abs(s.y[i]) > level and holds(i, lambda v, sg=math.copysign(1.0, s.y[i]):
                                                 sg * v > level)), None)
    if i0 is None:
        raise NoCrossing("series never departs from zero")
    sign = math.copysign(1.0, s.y[i0])
    i = next((i for i in range(i0 + 1, n) if holds(i, lambda v: sign * v < 0)), None)
    if i is None:
        raise NoCrossing("no sign change in the scanned range")
    x0, x1, y0, y1 = s.x[i - 1], s.x[i], s.y[i - 1], s.y[i]
    return float(x0 + (x1 - x0) * y0 / (y0 - y1))
