"""Real Bloch-sphere geometry of a controlled qubit.

Conventions
-----------
A Hamiltonian ``2H = d0*I + dx*sx + dy*sy + dz*sz`` is represented by the real
axis vector ``d = (dx, dy, dz)``. The Bloch vector obeys ``ds/dt = G(d) s`` with
``G`` from :func:`generator_matrix`, which is the same as ``ds/dt = s x d``.
Every closed form in this module is written for that rotation sense and is
unit-tested against direct rotation and a matrix exponential.

Angles: ``theta`` in [0, pi], ``phi`` and ``beta`` in (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import TiltOutOfRange, ZeroAxis

Vec3 = np.ndarray

Z_UP = np.array([0.0, 0.0, 1.0])


def vec3(v: Iterable[float]) -> Vec3:
    a = np.asarray(list(v) if not isinstance(v, np.ndarray) else v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


def wrap_angle(x: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    y = math.remainder(x, 2 * math.pi)
    if y <= -math.pi:
        y += 2 * math.pi
    return y


@dataclass(frozen=True)
class AxisPolar:
    """Rotation axis as (frequency, tilt from +z, azimuth)."""

    norm: float
    theta: float = 0.0
    phi: float = 0.0

    @property
    def defined(self) -> bool:
        """False for the zero axis, whose angles carry no meaning."""
        return self.norm > 0


@dataclass(frozen=True)
class EquatorialPrep:
    alpha_r: float
    beta: float
    duration: float


def compose_axis(d0: Sequence[float], terms: Iterable[tuple[float, Sequence[float]]]) -> Vec3:
    """Net axis ``d0 + sum(f * dm)`` for constant fields ``f``."""
    d = vec3(d0).copy()
    for f, dm in terms:
        d = d + f * vec3(dm)
    return d


def axis_to_polar(d: Sequence[float]) -> AxisPolar:
    d = vec3(d)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise ZeroAxis("zero axis has no polar angles")
    # atan2 stays accurate near the poles where acos(z/|d|) does not
    theta = math.atan2(math.hypot(d[0], d[1]), d[2])
    phi = wrap_angle(math.atan2(d[1], d[0]))
    return AxisPolar(norm, theta, phi)


def polar_to_cartesian(a: AxisPolar) -> Vec3:
    st = math.sin(a.theta)
    return a.norm * np.array([st * math.cos(a.phi), st * math.sin(a.phi), math.cos(a.theta)])


def _unit(axis: Sequence[float]) -> Vec3:
    axis = vec3(axis)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ZeroAxis("cannot rotate about a zero axis")
    return axis / n


def rotate(s0: Sequence[float], axis: Sequence[float], alpha: float) -> Vec3:
    """Rotate ``s0`` by ``alpha`` about ``axis`` in the ``ds/dt = s x d`` sense."""
    s0 = vec3(s0)
    n = _unit(axis)
    c, s = math.cos(alpha), math.sin(alpha)
    cross = np.array([s0[1] * n[2] - s0[2] * n[1],
                      s0[2] * n[0] - s0[0] * n[2],
                      s0[0] * n[1] - s0[1] * n[0]])
    return s0 * c + n * float(s0 @ n) * (1.0 - c) + cross * s


def generator_matrix(d: Sequence[float]) -> np.ndarray:
    """Antisymmetric generator ``G`` with ``G @ s == s x d``."""
    dx, dy, dz = vec3(d)
    return np.array([
        [0.0, dz, -dy],
        [-dz, 0.0, dx],
        [dy, -dx, 0.0],
    ])


def rotation_matrix(axis: Sequence[float], alpha: float) -> np.ndarray:
    """``I cos a + A (1 - cos a) + B sin a`` with ``A = n n^T`` and ``B = G(n)``."""
    n = _unit(axis)
    c, s = math.cos(alpha), math.sin(alpha)
    return np.eye(3) * c + np.outer(n, n) * (1.0 - c) + generator_matrix(n) * s


def z_free(theta: float, alpha: float) -> float:
    """z after rotating |0> by ``alpha`` about an axis tilted ``theta`` from +z."""
    return math.cos(alpha) * math.sin(theta) ** 2 + math.cos(theta) ** 2


def z_equatorial_coeffs(theta: float, phi: float, beta: float) -> tuple[float, float]:
    """(C, D) such that ``z(alpha) = C (1 - cos alpha) + D sin alpha``."""
    psi = phi - beta
    return 0.5 * math.sin(2 * theta) * math.cos(psi), math.sin(theta) * math.sin(psi)


def z_equatorial(theta: float, phi: float, beta: float, alpha: float) -> float:
    """z after rotating ``(cos b, sin b, 0)`` by ``alpha`` about axis (theta, phi)."""
    c, d = z_equatorial_coeffs(theta, phi, beta)
    return c * (1.0 - math.cos(alpha)) + d * math.sin(alpha)


def equatorial_prep(reference: AxisPolar) -> EquatorialPrep:
    """Rotation about the reference axis taking |0> onto the equator.

    ``alpha_r`` solves ``cos(alpha_r) = -cot(theta_r)**2``. The azimuth ``beta`` of
    the prepared state is obtained by carrying out that rotation.
    """
    th = reference.theta
    if not (math.pi / 4 <= th <= 3 * math.pi / 4):
        raise TiltOutOfRange(f"reference tilt {th:.6f} outside [pi/4, 3pi/4]")
    if reference.norm <= 0:
        raise ZeroAxis("reference axis has zero norm")
    c2 = math.cos(2 * th)
    alpha_r = math.acos(min(1.0, max(-1.0, (c2 + 1.0) / (c2 - 1.0))))
    s1 = rotate(Z_UP, polar_to_cartesian(reference), alpha_r)
    beta = wrap_angle(math.atan2(s1[1], s1[0]))
    return EquatorialPrep(alpha_r, beta, alpha_r / reference.norm)
