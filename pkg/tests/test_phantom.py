import numpy as np
import pytest

from spinenav.errors import InvalidParams
from spinenav.phantom import VERIFICATION_LANDMARKS, bundled_phantoms, generate_phantom, load_phantom


@pytest.mark.parametrize("label", ["L3", "T12"])
def test_bundled_phantoms_load(label):
    ph = load_phantom(label)
    assert ph.label == label
    assert ph.canal_diameter == 13.0
    assert len(ph.surface) > 1000
    assert set(VERIFICATION_LANDMARKS) <= set(ph.landmarks.names())
    assert "entry" in ph.landmarks.names()


def test_l3_has_five_verification_landmarks():
    assert len(load_phantom("L3").verification_landmarks().names()) == 5


def test_generation_is_deterministic():
    params = bundled_phantoms()["L3"]["params"]
    a, b = generate_phantom("L3", params), generate_phantom("L3", params)
    assert np.array_equal(a.surface.points, b.surface.points)
    assert np.array_equal(a.landmarks.array(), b.landmarks.array())


def test_surface_has_no_duplicates():
    pts = load_phantom("T12").surface.points
    assert len(np.unique(pts.round(9), axis=0)) == len(pts)


def test_entry_lies_on_canal_axis():
    ph = load_phantom("L3")
    rel = ph.entry_point - ph.canal_point
    d = ph.canal_direction / np.linalg.norm(ph.canal_direction)
    assert np.linalg.norm(np.cross(rel, d)) < 1e-9


def test_unknown_label():
    with pytest.raises(InvalidParams):
        load_phantom("C7")


def test_bad_params():
    params = dict(bundled_phantoms()["L3"]["params"])
    params.pop(next(iter(params)))
    with pytest.raises(InvalidParams):
        generate_phantom("X", params)
    bad = dict(bundled_phantoms()["L3"]["params"], grid_spacing=-1.0)
    with pytest.raises(InvalidParams):
        generate_phantom("X", bad)
