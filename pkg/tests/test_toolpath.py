import io

import numpy as np
import pytest

from codesign.toolpath import (
    Toolpath,
    ToolpathError,
    Waypoint,
    figure_eight,
    load_csv,
    resample,
    save_csv,
)


class TestFigureEight:
    def test_start_point_and_tangent(self):
        path = figure_eight(center=(0, 0, 0), width=0.4, height=0.2, n=16, duration=8.0)
        w0 = path[0]
        np.testing.assert_allclose(w0.position, [0, 0, 0], atol=1e-15)
        # ds/du at u=0 is (width, height, 0)
        direction = w0.tangent / np.linalg.norm(w0.tangent)
        expected = np.array([0.4, 0.2, 0.0]) / np.linalg.norm([0.4, 0.2, 0.0])
        np.testing.assert_allclose(direction, expected, atol=1e-12)

    def test_planar(self):
        path = figure_eight(center=(1.0, -0.5, 0.3), width=0.7, height=0.35, n=64)
        assert np.abs(path.positions[:, 2] - 0.3).max() == 0.0

    def test_waypoint_count(self):
        assert len(figure_eight(n=80)) == 80

    def test_closed_curve(self):
        path = figure_eight(center=(0, 0, 0), width=0.4, height=0.2, n=100, duration=8.0)
        # u = 2 pi: one sample past the end equals the start
        u = 2 * np.pi
        end = np.array([0.4 * np.sin(u), 0.2 * np.sin(u) * np.cos(u), 0.0])
        np.testing.assert_allclose(end, path[0].position, atol=1e-9)

    def test_tangent_matches_finite_difference(self):
        path = figure_eight(n=400, duration=8.0)
        t = path.times
        pos = path.positions
        fd = (pos[2:] - pos[:-2]) / (t[2:] - t[:-2])[:, None]
        tan = path.tangents[1:-1]
        rel = np.linalg.norm(fd - tan, axis=1) / np.linalg.norm(tan, axis=1)
        assert rel.max() <= 1e-3

    def test_constant_axis(self):
        path = figure_eight(n=32)
        np.testing.assert_array_equal(path.axes, np.tile([0.0, 0.0, 1.0], (32, 1)))

    def test_rejects_bad_sizes(self):
        with pytest.raises(ToolpathError):
            figure_eight(n=4)
        with pytest.raises(ToolpathError):
            figure_eight(width=0.0)
        with pytest.raises(ToolpathError):
            figure_eight(duration=-1.0)


class TestWaypointInvariants:
    def test_axis_must_be_unit(self):
        with pytest.raises(ToolpathError):
            Waypoint(t=0.0, position=np.zeros(3), target_axis=[0, 0, 2.0], tangent=[1, 0, 0])

    def test_tiny_tangent_rejected(self):
        with pytest.raises(ToolpathError):
            Waypoint(t=0.0, position=np.zeros(3), target_axis=[0, 0, 1.0],
                     tangent=[0, 0, 1e-12])

    def test_times_strictly_increasing(self):
        w = [Waypoint(t=0.0, position=np.zeros(3), target_axis=[0, 0, 1], tangent=[1, 0, 0]),
             Waypoint(t=0.0, position=np.ones(3), target_axis=[0, 0, 1], tangent=[1, 0, 0])]
        with pytest.raises(ToolpathError):
            Toolpath(tuple(w))


class TestResample:
    def test_identity(self):
        path = figure_eight(n=20)
        again = resample(path, 20)
        np.testing.assert_array_equal(again.positions, path.positions)
        np.testing.assert_array_equal(again.times, path.times)

    def test_straight_segment_midpoint(self):
        w = [Waypoint(t=0.0, position=[0, 0, 0], target_axis=[0, 0, 1], tangent=[1, 0, 0]),
             Waypoint(t=2.0, position=[2, 0, 0], target_axis=[0, 0, 1], tangent=[1, 0, 0])]
        out = resample(Toolpath(tuple(w)), 3)
        np.testing.assert_allclose(out[1].position, [1, 0, 0], atol=1e-15)
        assert out[1].t == pytest.approx(1.0)

    def test_downsample_stays_on_polyline(self):
        path = figure_eight(n=80)
        small = resample(path, 20)
        told, pold = path.times, path.positions
        for t, p in zip(small.times, small.positions):
            k = np.searchsorted(told, t, side="right") - 1
            k = min(k, len(told) - 2)
            lam = (t - told[k]) / (told[k + 1] - told[k])
            expected = (1 - lam) * pold[k] + lam * pold[k + 1]
            assert np.abs(p - expected).max() <= 1e-12

    def test_too_few(self):
        with pytest.raises(ToolpathError):
            resample(figure_eight(n=16), 1)


class TestCsv:
    def test_round_trip(self):
        path = figure_eight(n=24)
        buf = io.StringIO()
        save_csv(path, buf)
        buf.seek(0)
        loaded = load_csv(buf)
        np.testing.assert_allclose(loaded.positions, path.positions, atol=1e-15)
        np.testing.assert_allclose(loaded.times, path.times, atol=1e-15)
        np.testing.assert_allclose(loaded.axes, path.axes, atol=1e-15)

    def test_missing_column(self):
        buf = io.StringIO("t,x,y\n0,0,0\n1,1,0\n")
        with pytest.raises(ToolpathError):
            load_csv(buf)
