import json

import numpy as np
import pytest

from mvie.errors import RegimeViolation, TooCloseToSupport
from mvie.farfield import fibonacci_sphere
from mvie.grid import ProbeSpec, ShapeSpec
from mvie.inverse import (default_incident_directions, discriminate, probe_blowup,
                          transverse_polarization)
from mvie.media import MediumSpec


def test_default_incident_set():
    d = default_incident_directions()
    assert d.shape == (26, 3)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
    assert len({tuple(np.round(v, 12)) for v in d}) == 26
    for v in d:
        p = transverse_polarization(v)
        assert abs(p @ v) < 1e-12 and np.linalg.norm(p) == pytest.approx(1.0)


def test_identical_inputs_give_zero_delta():
    s = ShapeSpec.sphere(0.5)
    m = MediumSpec.normalized(1.2)
    rep = discriminate(s, s, m, m, incident_dirs=[(0, 0, 1.0), (1.0, 0, 0)], h=0.1,
                       threshold=1e-3, dirs=fibonacci_sphere(30))
    assert rep.delta == 0.0 and not rep.different
    doc = json.loads(rep.to_json())
    assert len(doc["per_direction"]) == 2 and len(doc["runs"]) == 4


def test_shape_perturbation_detected_and_ordered():
    m = MediumSpec.normalized(1.5)
    dirs = fibonacci_sphere(30)
    cache = {}
    kw = dict(incident_dirs=[(0, 0, 1.0)], h=0.1, threshold=1e-2, dirs=dirs, cache=cache)
    big = discriminate(ShapeSpec.sphere(0.5), ShapeSpec.sphere(0.6), m, m, **kw)
    small = discriminate(ShapeSpec.sphere(0.5), ShapeSpec.sphere(0.55), m, m, **kw)
    assert big.different and big.delta > small.delta > 0
    # the shared shape was solved once
    assert len(cache) == 3


def test_velocity_changes_far_field():
    m = MediumSpec.normalized(1.2)
    mv = m.with_velocity((0.1 * m.c_omega, 0.0, 0.0))
    s = ShapeSpec.sphere(0.5)
    rep = discriminate(s, s, m, mv, incident_dirs=[(0, 1.0, 0)], h=0.1, threshold=1e-2,
                       dirs=fibonacci_sphere(30))
    assert rep.different


def test_discriminate_requires_admissible_media():
    m = MediumSpec.normalized(2.0, V=(0.6, 0, 0))
    s = ShapeSpec.sphere(0.5)
    with pytest.raises(RegimeViolation):
        discriminate(s, s, m, m, incident_dirs=[(0, 0, 1.0)], h=0.1, threshold=0.1)


def test_probe_floor_guard():
    with pytest.raises(TooCloseToSupport):
        probe_blowup(ShapeSpec.sphere(0.5), MediumSpec.normalized(2.0),
                     ProbeSpec("ray", d0=0.15, levels=3, anchor=(0, 0, 0.5)), h=0.1)


def test_probe_zero_contrast_has_no_divergence():
    res = probe_blowup(ShapeSpec.sphere(0.5), MediumSpec.normalized(),
                       ProbeSpec("ray", d0=0.8, levels=2, anchor=(0, 0, 0.5)), h=0.1)
    assert res.magnitudes == [0.0, 0.0]
    assert np.isnan(res.exponent) and not res.monotone


def test_probe_small_run_diverges_and_flags_floor():
    res = probe_blowup(ShapeSpec.sphere(0.5), MediumSpec.normalized(2.0),
                       ProbeSpec("ray", d0=0.6, levels=4, anchor=(0, 0, 0.5)), h=0.05)
    assert res.resolution_limited and len(res.distances) == 3
    assert all(d > 2 * res.h for d in res.distances)
    assert res.monotone and res.exponent < -1.5
    assert res.image_exponent < -2.5
    assert len(json.loads(res.to_json())["runs"]) == 3
