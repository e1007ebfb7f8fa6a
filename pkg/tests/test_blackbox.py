from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from qidkit.blackbox import BlackBox, NoiseConfig, PulseSequence, Segment, TrueModel, new_blackbox
from qidkit.bloch import Z_UP, rotate
from qidkit.errors import DimensionMismatch

NORM0 = math.hypot(0.2, 0.1)


def half_z_sequence() -> PulseSequence:
    # about the x axis, rotation by pi/3 takes z from 1 to 0.5
    return PulseSequence.of(((0.0,), math.pi / 3))


def x_box(seed: int) -> BlackBox:
    return new_blackbox(TrueModel((1.0, 0.0, 0.0), [(0.0, 0.0, 1.0)]), seed)


def test_empty_sequence(test_model):
    box = new_blackbox(test_model, 0)
    assert box.run_exact(PulseSequence()) == 1.0
    r = box.run_experiment(PulseSequence(), shots=10**6, eta=0.0)
    assert r.z_hat == 1.0


def test_free_minimum(test_model):
    box = new_blackbox(test_model, 0)
    assert box.run_exact(PulseSequence.of(((0, 0), math.pi / NORM0))) == pytest.approx(-0.6, abs=1e-12)


def test_prep_segment_reaches_equator(test_model):
    box = new_blackbox(test_model, 0)
    z = box.run_exact(PulseSequence.of(((0, 0), math.acos(-0.25) / NORM0)))
    assert abs(z) < 1e-9
    z = box.run_exact(PulseSequence.of(((0, 0), 1.823477 / 0.223607)))
    assert abs(z) < 1e-6


def test_bias_law():
    box = x_box(1)
    assert box.run_exact(half_z_sequence()) == pytest.approx(0.5, abs=1e-12)
    tol = 3 * math.sqrt((1 - 0.4**2) / 10**5)
    r = box.run_experiment(half_z_sequence(), shots=10**5, eta=0.1)
    assert abs(r.z_hat - 0.4) < tol


def test_bias_law_moments():
    box = x_box(3)
    z = np.array([box.run_experiment(half_z_sequence(), shots=1000, eta=0.1).z_hat
                  for _ in range(2000)])
    assert z.mean() == pytest.approx(0.4, abs=4 * math.sqrt((1 - 0.16) / 1000 / 2000))
    assert z.var() == pytest.approx((1 - 0.16) / 1000, rel=0.1)


def test_full_flip():
    r = x_box(0).run_experiment(PulseSequence(), shots=500, eta=1.0)
    assert r.ones == 0 and r.z_hat == -1.0


def test_segment_composition(test_model):
    box = new_blackbox(test_model, 0)
    segs = [((0.3, 0.0), 2.0), ((0.0, 0.5), 1.7), ((0.1, 0.2), 0.4)]
    s = Z_UP
    for f, t in segs:
        d = test_model.axis(f)
        s = rotate(s, d, np.linalg.norm(d) * t)
    assert box.run_exact(PulseSequence.of(*segs)) == pytest.approx(s[2], abs=1e-12)
    # splitting a segment changes nothing
    split = PulseSequence.of(((0.3, 0.0), 1.2), ((0.3, 0.0), 0.8), *segs[1:])
    assert box.run_exact(split) == pytest.approx(s[2], abs=1e-12)


def test_determinism(test_model):
    seq = PulseSequence.of(((0.2, 0.1), 3.0))
    a, b = new_blackbox(test_model, 77), new_blackbox(test_model, 77)
    ra = [a.run_experiment(seq, 1000, 0.02) for _ in range(20)]
    rb = [b.run_experiment(seq, 1000, 0.02) for _ in range(20)]
    assert ra == rb


def test_seed_independence():
    # pooled counts from two seeds: correlation near zero, binomial marginals
    seq = PulseSequence.of(((0.0,), math.pi / 2))
    a, b = x_box(10), x_box(11)
    ca = np.array([a.run_experiment(seq, 100).ones for _ in range(400)])
    cb = np.array([b.run_experiment(seq, 100).ones for _ in range(400)])
    assert stats.pearsonr(ca, cb).pvalue > 1e-3
    pooled = np.concatenate([ca, cb])
    edges = [-0.5, 44.5, 47.5, 50.5, 53.5, 56.5, 100.5]
    observed, _ = np.histogram(pooled, bins=edges)
    cdf = stats.binom.cdf(np.floor(edges[1:]), 100, 0.5) - stats.binom.cdf(np.floor(edges[:-1]), 100, 0.5)
    expected = cdf * pooled.size
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_cost_counters(test_model):
    box = new_blackbox(test_model, 0)
    box.run_experiment(PulseSequence(), shots=300)
    box.run_experiment(PulseSequence(), shots=200)
    box.run_exact(PulseSequence())
    assert (box.experiments, box.shots) == (3, 500)


def test_dimension_mismatch(test_model):
    box = new_blackbox(test_model, 0)
    with pytest.raises(DimensionMismatch):
        box.run_exact(PulseSequence.of(((0.1,), 1.0)))


def test_validation():
    with pytest.raises(ValueError):
        Segment((0.0,), -1.0)
    with pytest.raises(ValueError):
        NoiseConfig(eta=1.5)
    with pytest.raises(ValueError):
        x_box(0).run_experiment(PulseSequence(), shots=0)


def test_opacity(test_model):
    box = new_blackbox(test_model, 0)
    public = [n for n in dir(box) if not n.startswith("_")]
    for name in public:
        value = getattr(box, name)
        if callable(value):
            continue
        assert not isinstance(value, (TrueModel, np.ndarray, tuple))
    assert "0.9" not in repr(box)
