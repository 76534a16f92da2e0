import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from mipslice.targets import (
    Annotation,
    make_confidence_map_1d,
    make_confidence_map_2d,
    merge_annotations,
    read_annotations_csv,
    sigma_schedule,
    write_annotations_csv,
)


def scipy_map_2d(height, width, y_true, sigma, v, x0):
    """Independent oracle: explicit step image blurred by scipy, peak-normalized."""
    step = np.zeros((height, width))
    step[y_true, max(x0 - v, 0) : min(x0 + v, width - 1) + 1] = 1.0
    blurred = ndimage.gaussian_filter(step, sigma=sigma, mode="constant", truncate=6.0)
    return blurred / blurred.max()


class TestConfidenceMap2D:
    def test_peak_is_one_at_annotation(self):
        m = make_confidence_map_2d(64, 48, 30, sigma=3.0, v=5, x0=24)
        assert m[30, 24] == pytest.approx(1.0, abs=1e-9)
        assert np.unravel_index(np.argmax(m), m.shape)[0] == 30

    def test_vertical_symmetry(self):
        m = make_confidence_map_2d(61, 41, 30, sigma=4.0, v=6, x0=20)
        for k in (1, 3, 9):
            np.testing.assert_allclose(m[30 - k], m[30 + k], atol=1e-9)

    def test_v0_matches_closed_form_gaussian(self):
        H, W, y0, x0, sigma = 50, 40, 22, 17, 2.5
        m = make_confidence_map_2d(H, W, y0, sigma=sigma, v=0, x0=x0)
        yy, xx = np.mgrid[0:H, 0:W]
        closed = np.exp(-((yy - y0) ** 2 + (xx - x0) ** 2) / (2 * sigma**2))
        np.testing.assert_allclose(m, closed, atol=1e-6)

    def test_matches_scipy_oracle_with_plateau(self):
        H, W, y0, x0, sigma, v = 80, 100, 35, 50, 3.0, 20
        mine = make_confidence_map_2d(H, W, y0, sigma=sigma, v=v, x0=x0)
        oracle = scipy_map_2d(H, W, y0, sigma, v, x0)
        np.testing.assert_allclose(mine, oracle, atol=1e-6)

    def test_out_of_range_annotation_rejected(self):
        with pytest.raises(ValueError):
            make_confidence_map_2d(32, 32, 40, sigma=3.0)

    def test_column_at_center_matches_1d(self):
        H, W, y0, x0, sigma = 48, 36, 20, 18, 3.0
        m2 = make_confidence_map_2d(H, W, y0, sigma=sigma, v=0, x0=x0)
        m1 = make_confidence_map_1d(H, y0, sigma)
        np.testing.assert_allclose(m2[:, x0], m1, atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(
        height=st.integers(min_value=8, max_value=96),
        data=st.data(),
    )
    def test_contract_properties(self, height, data):
        width = data.draw(st.integers(min_value=8, max_value=96))
        y0 = data.draw(st.integers(min_value=0, max_value=height - 1))
        x0 = data.draw(st.integers(min_value=0, max_value=width - 1))
        sigma = data.draw(st.floats(min_value=0.5, max_value=12.0))
        v = data.draw(st.integers(min_value=0, max_value=width // 2))
        m = make_confidence_map_2d(height, width, y0, sigma=sigma, v=v, x0=x0)
        assert m.min() >= 0.0 and m.max() == pytest.approx(1.0, abs=1e-9)
        assert np.unravel_index(np.argmax(m), m.shape)[0] == y0
        # monotone decay along y away from the peak
        col = m[:, x0]
        assert np.all(np.diff(col[y0:]) <= 1e-12)
        assert np.all(np.diff(col[: y0 + 1]) >= -1e-12)


class TestConfidenceMap1D:
    def test_peak(self):
        m = make_confidence_map_1d(40, 13, 2.0)
        assert m[13] == 1.0
        assert int(np.argmax(m)) == 13

    def test_value_at_one_sigma(self):
        m = make_confidence_map_1d(64, 30, 3.0)
        assert m[27] == pytest.approx(np.exp(-0.5), abs=1e-12)
        assert m[33] == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_gaussian_integral(self):
        sigma = 3.0
        m = make_confidence_map_1d(200, 100, sigma)
        assert m.sum() == pytest.approx(sigma * np.sqrt(2 * np.pi), rel=0.01)

    def test_wider_sigma_never_lower_off_peak(self):
        narrow = make_confidence_map_1d(80, 40, 2.0)
        wide = make_confidence_map_1d(80, 40, 5.0)
        off_peak = np.arange(80) != 40
        assert np.all(wide[off_peak] >= narrow[off_peak] - 1e-12)


class TestSigmaSchedule:
    def test_endpoints(self):
        assert sigma_schedule(0, 50) == 10.0
        assert sigma_schedule(49, 50) == 1.5

    def test_midpoint_value(self):
        assert sigma_schedule(24, 50) == pytest.approx(10 + (1.5 - 10) * 24 / 49)
        assert sigma_schedule(24, 50) == pytest.approx(5.836734693877551)

    def test_single_epoch(self):
        assert sigma_schedule(0, 1) == 1.5

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            sigma_schedule(0, 0)
        with pytest.raises(ValueError):
            sigma_schedule(5, 5)


class TestAnnotationCsv:
    def test_round_trip(self, tmp_path):
        records = [
            Annotation("img_a", "alice", 120.0, False),
            Annotation("img_a", "bob", 124.0, True),
            Annotation("img_b", "alice", 88.0, False),
        ]
        path = tmp_path / "annotations.csv"
        write_annotations_csv(records, path)
        loaded = read_annotations_csv(path)
        assert loaded == records

    def test_header_required(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_annotations_csv(path)

    def test_merge_floor_of_mean(self):
        records = [
            Annotation("img", "a", 100.0, False),
            Annotation("img", "b", 101.0, False),
        ]
        merged = merge_annotations(records)
        assert merged["img"].y_mm == 100.0

    def test_merge_flags_ambiguous_if_any(self):
        records = [
            Annotation("img", "a", 50.0, False),
            Annotation("img", "b", 52.0, True),
        ]
        assert merge_annotations(records)["img"].ambiguous
