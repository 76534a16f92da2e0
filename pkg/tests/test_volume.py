import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mipslice.errors import FormatError, MetadataError
from mipslice.volume import Volume3D, load_volume, round_half_up, save_volume, slice_index_for_y


def random_volume(rng, shape=(6, 5, 4), spacing=(1.0, 1.0, 1.0)):
    data = rng.uniform(-1000, 2000, size=shape).astype(np.float32)
    return Volume3D(data=data, spacing=spacing, id="rand")


class TestVolume3D:
    def test_rejects_zero_spacing(self):
        with pytest.raises(MetadataError):
            Volume3D(data=np.zeros((2, 2, 2)), spacing=(0.0, 1.0, 1.0))

    def test_rejects_wrong_rank(self):
        with pytest.raises(FormatError):
            Volume3D(data=np.zeros((4, 4)), spacing=(1, 1, 1))

    def test_rejects_nan(self):
        data = np.zeros((2, 2, 2))
        data[0, 0, 0] = np.nan
        with pytest.raises(MetadataError):
            Volume3D(data=data, spacing=(1, 1, 1))

    def test_height_mm_from_header(self):
        vol = Volume3D(data=np.zeros((16, 8, 8)), spacing=(1.0, 1.0, 2.5))
        assert vol.height_mm == 16 * 2.5 == 40.0


class TestRawRoundTrip:
    def test_identity(self, rng, tmp_path):
        vol = random_volume(rng, spacing=(0.7, 1.1, 2.5))
        path = tmp_path / "vol.raw"
        save_volume(vol, path)
        loaded = load_volume(path)
        np.testing.assert_array_equal(loaded.data, vol.data)
        assert loaded.spacing == vol.spacing

    def test_missing_sidecar(self, rng, tmp_path):
        vol = random_volume(rng)
        path = tmp_path / "vol.raw"
        save_volume(vol, path)
        (tmp_path / "vol.json").unlink()
        with pytest.raises(MetadataError):
            load_volume(path)

    def test_unwritable_destination(self, rng, tmp_path):
        vol = random_volume(rng)
        with pytest.raises(OSError):
            save_volume(vol, tmp_path / "missing" / "vol.raw")


class TestNiftiRoundTrip:
    @pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
    def test_data_and_spacing(self, rng, tmp_path, suffix):
        vol = random_volume(rng, shape=(4, 4, 4), spacing=(0.7, 1.2, 2.5))
        path = tmp_path / f"vol{suffix}"
        save_volume(vol, path)
        loaded = load_volume(path)
        np.testing.assert_allclose(loaded.data, vol.data, rtol=0, atol=1e-4)
        # float32 header storage bounds spacing error
        np.testing.assert_allclose(loaded.spacing, vol.spacing, atol=1e-6)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_volume(tmp_path / "absent.nii")

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "junk.nii"
        path.write_bytes(b"not a nifti" * 40)
        with pytest.raises(FormatError):
            load_volume(path)


class TestSliceIndex:
    def test_origin(self, small_volume):
        assert slice_index_for_y(small_volume, 0.0) == 0

    def test_exact_division(self, small_volume):
        assert slice_index_for_y(small_volume, 10.0) == 4  # 10 / 2.5

    def test_rounding_half_up(self, small_volume):
        assert slice_index_for_y(small_volume, 11.0) == 4  # round(4.4)

    def test_negative_rejected(self, small_volume):
        with pytest.raises(ValueError):
            slice_index_for_y(small_volume, -1.0)

    def test_clamped_to_last_slice(self, small_volume):
        top = (16 - 1) * 2.5 + 2.5 / 2
        assert slice_index_for_y(small_volume, top) == 15

    @settings(max_examples=100, deadline=None)
    @given(
        y=st.floats(min_value=0, max_value=37.5, allow_nan=False),
        sz=st.floats(min_value=0.5, max_value=5.0, allow_nan=False),
    )
    def test_index_within_half_spacing(self, y, sz):
        vol = Volume3D(data=np.zeros((16, 2, 2)), spacing=(1, 1, sz))
        y = min(y, (16 - 1) * sz + sz / 2)
        idx = slice_index_for_y(vol, y)
        assert abs(idx * sz - y) <= sz / 2 + 1e-9


def test_round_half_up():
    assert round_half_up(4.4) == 4
    assert round_half_up(4.5) == 5
    assert round_half_up(4.6) == 5
