import math

import numpy as np
import pytest

from vlmnav.geometry import (
    CameraModel,
    FrameError,
    FrameTransform,
    Pose2D,
    apply_transform,
    ground_horizon_v,
    pixel_to_ground,
    project_ground_to_pixel,
    wrap_angle,
)


def make_cam(**overrides):
    kwargs = dict(
        focal_px=300.0,
        image_size=(640, 480),
        principal_point=(320.0, 240.0),
        mount_height=0.5,
        mount_pitch=0.0,
        theta_fov=math.radians(50.0),
    )
    kwargs.update(overrides)
    return CameraModel(**kwargs)


class TestTransforms:
    def test_identity(self):
        t = FrameTransform.identity("robot")
        assert apply_transform(t, (1.0, 2.0)) == (1.0, 2.0)

    def test_quarter_turn(self):
        t = FrameTransform(math.pi / 2, (0.0, 0.0), "robot", "odom")
        x, y = apply_transform(t, (1.0, 0.0))
        assert x == pytest.approx(0.0, abs=1e-12)
        assert y == pytest.approx(1.0, abs=1e-12)

    def test_rotation_then_translation(self):
        # R(pi/2) @ (1, 0) = (0, 1); plus (1, 1) gives (1, 2)
        t = FrameTransform(math.pi / 2, (1.0, 1.0), "robot", "odom")
        x, y = apply_transform(t, (1.0, 0.0))
        assert (x, y) == pytest.approx((1.0, 2.0), abs=1e-12)

    def test_frame_mismatch_raises(self):
        t = FrameTransform(0.0, (0.0, 0.0), "robot", "odom")
        with pytest.raises(FrameError):
            apply_transform(t, (1.0, 2.0), frame="grid")

    def test_invert_is_exact_inverse(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            rot = rng.uniform(-math.pi, math.pi)
            t = FrameTransform(rot, tuple(rng.uniform(-5, 5, 2)), "a", "b")
            p = tuple(rng.uniform(-10, 10, 2))
            back = apply_transform(t.invert(), apply_transform(t, p))
            assert back == pytest.approx(p, abs=1e-9)

    def test_rigid_preserves_distances(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            t = FrameTransform(
                rng.uniform(-math.pi, math.pi), tuple(rng.uniform(-5, 5, 2)), "a", "b"
            )
            p, q = rng.uniform(-10, 10, (2, 2))
            d0 = math.dist(p, q)
            d1 = math.dist(apply_transform(t, tuple(p)), apply_transform(t, tuple(q)))
            assert d1 == pytest.approx(d0, abs=1e-9)

    def test_compose_associative(self):
        rng = np.random.default_rng(3)
        a = FrameTransform(rng.uniform(-3, 3), tuple(rng.uniform(-5, 5, 2)), "f1", "f2")
        b = FrameTransform(rng.uniform(-3, 3), tuple(rng.uniform(-5, 5, 2)), "f2", "f3")
        c = FrameTransform(rng.uniform(-3, 3), tuple(rng.uniform(-5, 5, 2)), "f3", "f4")
        p = (1.3, -0.7)
        left = apply_transform(c.compose(b).compose(a), p)
        right = apply_transform(c.compose(b.compose(a)), p)
        assert left == pytest.approx(right, abs=1e-9)


class TestPose:
    def test_theta_wraps_into_half_open_interval(self):
        assert Pose2D(0, 0, math.pi).theta == math.pi
        assert Pose2D(0, 0, -math.pi).theta == math.pi
        assert Pose2D(0, 0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)

    def test_wrap_angle_range(self):
        for a in np.linspace(-20, 20, 401):
            w = wrap_angle(a)
            assert -math.pi < w <= math.pi


class TestProjection:
    def test_closed_form_pinhole(self):
        # level camera: v = cy + f * h / x for a centerline point
        cam = make_cam()
        px = project_ground_to_pixel(cam, (2.5, 0.0))
        assert px == pytest.approx((320.0, 300.0), abs=1e-9)

    def test_centerline_maps_to_center_column(self):
        cam = make_cam()
        for x in (1.0, 2.0, 4.0, 7.5):
            px = project_ground_to_pixel(cam, (x, 0.0))
            assert px is not None
            assert px[0] == pytest.approx(320.0, abs=1e-12)

    def test_behind_camera_is_out_of_view(self):
        cam = make_cam()
        assert project_ground_to_pixel(cam, (-1.0, 0.0)) is None

    def test_outside_fov_is_out_of_view(self):
        cam = make_cam(theta_fov=math.radians(20.0))
        assert project_ground_to_pixel(cam, (1.0, 2.0)) is None

    def test_inverse_of_closed_form(self):
        cam = make_cam()
        ground = pixel_to_ground(cam, (320.0, 300.0))
        assert ground == pytest.approx((2.5, 0.0), abs=1e-6)

    def test_principal_point_level_camera_has_no_ground(self):
        cam = make_cam()
        assert pixel_to_ground(cam, (320.0, 240.0)) is None

    def test_round_trip_specific_point(self):
        cam = make_cam()
        px = project_ground_to_pixel(cam, (4.5, 2.0))
        assert px is not None
        ground = pixel_to_ground(cam, px)
        assert ground == pytest.approx((4.5, 2.0), abs=1e-9)

    def test_round_trip_random_in_view_points(self):
        cam = make_cam(mount_pitch=0.25)
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 1000:
            x = rng.uniform(0.5, 12.0)
            y = rng.uniform(-0.9, 0.9) * x * math.tan(cam.theta_fov)
            px = project_ground_to_pixel(cam, (x, y))
            if px is None:
                continue
            ground = pixel_to_ground(cam, px)
            assert ground is not None
            assert math.dist(ground, (x, y)) < 0.02
            px2 = project_ground_to_pixel(cam, ground)
            assert px2 is not None
            assert math.dist(px2, px) < 0.5
            checked += 1

    def test_left_right_ordering_preserved(self):
        cam = make_cam(mount_pitch=0.2)
        rng = np.random.default_rng(5)
        for _ in range(200):
            x = rng.uniform(1.5, 8.0)
            ya, yb = sorted(rng.uniform(-1.0, 1.0, 2))[::-1]  # ya > yb
            if ya == yb:
                continue
            pa = project_ground_to_pixel(cam, (x, ya))
            pb = project_ground_to_pixel(cam, (x, yb))
            if pa is None or pb is None:
                continue
            assert pa[0] < pb[0]

    def test_pitched_camera_round_trip(self):
        cam = make_cam(mount_pitch=0.3)
        px = project_ground_to_pixel(cam, (3.0, -0.5))
        assert px is not None
        ground = pixel_to_ground(cam, px)
        assert ground == pytest.approx((3.0, -0.5), abs=1e-9)

    def test_invalid_camera_rejected(self):
        with pytest.raises(ValueError):
            make_cam(focal_px=0.0)
        with pytest.raises(ValueError):
            make_cam(theta_fov=math.pi)

    def test_horizon_splits_ground_from_sky(self):
        for pitch in (0.0, 0.15, 0.35):
            cam = make_cam(mount_pitch=pitch)
            v_h = ground_horizon_v(cam)
            assert pixel_to_ground(cam, (320.0, v_h + 1.0)) is not None
            if 0 <= v_h < cam.height:
                assert pixel_to_ground(cam, (320.0, v_h)) is None
            assert pixel_to_ground(cam, (320.0, max(0.0, v_h - 1.0))) is None
        # level camera: horizon at the principal row
        assert ground_horizon_v(make_cam(mount_pitch=0.0)) == pytest.approx(240.0)
