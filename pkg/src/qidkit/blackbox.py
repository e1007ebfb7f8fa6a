"""Hidden two-level system answering only sigma_z shot statistics.

The estimator talks to a :class:`BlackBox` through ``run_experiment`` and
``run_exact``; the true axis vectors are kept in a private attribute and are
never returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bloch import Vec3, Z_UP, compose_axis, rotate, vec3
from .errors import DimensionMismatch
from .prng import SplitMix64


@dataclass(frozen=True)
class TrueModel:
    """Ground truth: ``d0`` and one axis vector per control field."""

    d0: Vec3
    controls: tuple[Vec3, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "d0", vec3(self.d0))
        object.__setattr__(self, "controls", tuple(vec3(c) for c in self.controls))

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    def axis(self, fields: Sequence[float]) -> Vec3:
        if len(fields) != self.n_controls:
            raise DimensionMismatch(f"got {len(fields)} fields for {self.n_controls} controls")
        return compose_axis(self.d0, zip(fields, self.controls))


@dataclass(frozen=True)
class Segment:
    fields: tuple[float, ...]
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(float(f) for f in self.fields))
        d = float(self.duration)
        if not math.isfinite(d) or d < 0:
            raise ValueError(f"segment duration must be finite and >= 0, got {d}")
        object.__setattr__(self, "duration", d)


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[Segment, ...] = ()

    @classmethod
    def of(cls, *segments: tuple[Sequence[float], float]) -> "PulseSequence":
        return cls(tuple(Segment(tuple(f), t) for f, t in segments))


@dataclass(frozen=True)
class ShotResult:
    n_shots: int
    ones: int

    @property
    def z_hat(self) -> float:
        return -1.0 + 2.0 * self.ones / self.n_shots


@dataclass(frozen=True)
class NoiseConfig:
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")


@dataclass
class BlackBox:
    """Opaque experiment handle; single owner, stateful random stream."""

    _model: TrueModel = field(repr=False)
    seed: int = 0
    experiments: int = 0
    shots: int = 0

    def __post_init__(self):
        self._rng = SplitMix64(self.seed)

    @property
    def n_controls(self) -> int:
        return self._model.n_controls

    def _final_z(self, seq: PulseSequence) -> float:
        s = Z_UP
        for seg in seq.segments:
            d = self._model.axis(seg.fields)
            norm = float(np.linalg.norm(d))
            if norm > 0 and seg.duration > 0:
                s = rotate(s, d, norm * seg.duration)
        return float(s[2])

    def run_exact(self, seq: PulseSequence) -> float:
        """Exact final z; no sampling, no readout error."""
        z = self._final_z(seq)
        self.experiments += 1
        return z

    def run_experiment(self, seq: PulseSequence, shots: int = 1000, eta: float = 0.0) -> ShotResult:
        """Simulate ``shots`` sigma_z readouts of the final state.

        Shot ``n`` consumes two uniforms in order: ``r_n`` decides the outcome
        (1 if ``r_n < (1 + z)/2``) and ``e_n`` flips it when ``e_n < eta``.
        """
        if shots < 1:
            raise ValueError("shots must be >= 1")
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {eta}")
        z = self._final_z(seq)
        p1 = min(1.0, max(0.0, 0.5 * (1.0 + z)))
        u = self._rng.uniforms(2 * shots)
        outcome = u[0::2] < p1
        outcome ^= u[1::2] < eta
        self.experiments += 1
        self.shots += shots
        return ShotResult(shots, int(np.count_nonzero(outcome)))


def new_blackbox(model: TrueModel, seed: int = 0) -> BlackBox:
    return BlackBox(model, seed)
