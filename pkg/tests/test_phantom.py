import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from passmri.phantom import (
    LesionBoundsError,
    LesionSpec,
    PhantomSpec,
    generate_coil_maps,
    generate_phantom,
    random_lesion_specs,
)


def test_empty_lesion_list():
    img, boxes = generate_phantom(PhantomSpec(64, 64))
    assert boxes == []
    assert np.abs(img).max() == pytest.approx(1.0)
    assert np.abs(img).min() >= 0


def test_lesion_box_geometry():
    spec = PhantomSpec(64, 64, (LesionSpec((32, 32), (4, 4), 0.3, "mass"),))
    _, boxes = generate_phantom(spec)
    b = boxes[0]
    assert (b.row_min, b.row_max, b.col_min, b.col_max, b.label) == (28, 36, 28, 36, "mass")


def test_lesion_raises_mean_in_box():
    les = LesionSpec((32, 32), (4, 4), 0.3)
    with_lesion, boxes = generate_phantom(PhantomSpec(64, 64, (les,)))
    plain, _ = generate_phantom(PhantomSpec(64, 64))
    rs, cs = boxes[0].slices
    diff = np.mean(with_lesion[rs, cs].real) - np.mean(plain[rs, cs].real)
    assert 0 < diff <= 0.3


def test_changed_pixels_lie_in_boxes():
    specs = random_lesion_specs(5, 64, 64, seed=3)
    for spec in specs:
        img, boxes = generate_phantom(spec)
        plain, _ = generate_phantom(PhantomSpec(spec.height, spec.width, (), spec.seed, spec.jitter))
        covered = np.zeros(img.shape, bool)
        for b in boxes:
            covered[b.slices] = True
        assert not np.any((img != plain) & ~covered)


def test_out_of_bounds_lesion_names_index():
    spec = PhantomSpec(32, 32, (LesionSpec((16, 16), (2, 2), 0.1), LesionSpec((1, 16), (3, 3), 0.1)))
    with pytest.raises(LesionBoundsError) as err:
        generate_phantom(spec)
    assert err.value.index == 1
    assert "lesion 1" in str(err.value)


def test_lesion_spec_validation():
    with pytest.raises(ValueError):
        LesionSpec((5, 5), (0.5, 2), 0.1)
    with pytest.raises(ValueError):
        LesionSpec((5, 5), (2, 2), 1.5)


def test_determinism():
    spec = random_lesion_specs(1, 48, 40, seed=11)[0]
    a, ba = generate_phantom(spec)
    b, bb = generate_phantom(spec)
    assert a.tobytes() == b.tobytes() and ba == bb
    assert generate_coil_maps(6, 20, 24).tobytes() == generate_coil_maps(6, 20, 24).tobytes()


def test_jitter_changes_subjects():
    a, _ = generate_phantom(PhantomSpec(64, 64, seed=1, jitter=0.05))
    b, _ = generate_phantom(PhantomSpec(64, 64, seed=2, jitter=0.05))
    assert not np.array_equal(a, b)


def test_spec_round_trip():
    spec = random_lesion_specs(1, 64, 64, seed=5)[0]
    assert PhantomSpec.from_dict(spec.to_dict()) == spec


def test_single_coil_is_unit_magnitude():
    s = generate_coil_maps(1, 16, 16)
    np.testing.assert_allclose(np.abs(s), 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(2, 40), st.integers(2, 40))
def test_sos_normalization(n, h, w):
    s = generate_coil_maps(n, h, w)
    assert s.shape == (n, h, w)
    assert np.max(np.abs(np.sum(np.abs(s) ** 2, axis=0) - 1)) < 1e-10


def test_adjacent_coils_correlate():
    # with SOS normalization and <= 4 coils the magnitudes are forced into anti-correlation
    s = np.abs(generate_coil_maps(8, 32, 32))
    for c in range(8):
        assert np.corrcoef(s[c].ravel(), s[(c + 1) % 8].ravel())[0, 1] > 0


def test_coil_maps_are_smooth():
    s = generate_coil_maps(4, 32, 32)
    assert np.max(np.abs(np.diff(s, axis=-1))) < 0.2
    assert np.max(np.abs(np.diff(s, axis=-2))) < 0.2
