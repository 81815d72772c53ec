import math

import numpy as np
import pytest

from vlmnav.geometry import CameraModel, Pose2D, pixel_to_ground
from vlmnav.rendering import (
    OBSTACLE_COLOR,
    PEDESTRIAN_COLOR,
    SKY_COLOR,
    TERRAIN_COLORS,
    color_to_terrain,
    crop_patch,
    render_camera,
)
from vlmnav.world import (
    Pedestrian,
    SemanticWorld,
    TerrainClass,
    TerrainRegion,
    semantic_at,
)


def cam(pitch=0.0):
    return CameraModel(
        focal_px=300.0,
        image_size=(640, 480),
        principal_point=(320.0, 240.0),
        mount_height=0.5,
        mount_pitch=pitch,
        theta_fov=math.radians(60.0),
    )


def big_region(cls, context=None):
    return TerrainRegion(
        ((-50.0, -50.0), (50.0, -50.0), (50.0, 50.0), (-50.0, 50.0)), cls, context
    )


class TestRenderCamera:
    def test_uniform_grass_world(self):
        world = SemanticWorld(terrain_regions=[big_region(TerrainClass.GRASS)])
        img = render_camera(world, Pose2D(0, 0, 0), cam())
        assert tuple(img[300, 320]) == TERRAIN_COLORS[TerrainClass.GRASS]
        assert tuple(img[100, 320]) == SKY_COLOR

    def test_crosswalk_band_matches_ground_projection(self):
        world = SemanticWorld(
            terrain_regions=[
                big_region(TerrainClass.ASPHALT_ROAD),
                TerrainRegion(
                    ((3.0, -10.0), (5.0, -10.0), (5.0, 10.0), (3.0, 10.0)),
                    TerrainClass.CROSSWALK,
                ),
            ]
        )
        c = cam()
        img = render_camera(world, Pose2D(0, 0, 0), c)
        for v in range(250, 470, 7):
            for u in range(10, 630, 23):
                ground = pixel_to_ground(c, (float(u), float(v)))
                if ground is None:
                    continue
                expected = TERRAIN_COLORS[semantic_at(world, ground)]
                assert tuple(img[v, u]) == expected

    def test_wall_occludes_far_ground(self):
        world = SemanticWorld(
            terrain_regions=[big_region(TerrainClass.PAVEMENT)],
            static_obstacles=[((2.0, -10.0), (2.2, -10.0), (2.2, 10.0), (2.0, 10.0))],
        )
        c = cam()
        img = render_camera(world, Pose2D(0, 0, 0), c)
        for v in range(241, 480, 10):
            ground = pixel_to_ground(c, (320.0, float(v)))
            if ground is None:
                continue
            if ground[0] > 2.0:
                assert tuple(img[v, 320]) == OBSTACLE_COLOR
            else:
                assert tuple(img[v, 320]) == TERRAIN_COLORS[TerrainClass.PAVEMENT]
        # the wall also rises above the horizon (height 2 m > camera height)
        assert tuple(img[200, 320]) == OBSTACLE_COLOR

    def test_pedestrian_silhouette(self):
        world = SemanticWorld(
            terrain_regions=[big_region(TerrainClass.PAVEMENT)],
            pedestrians=[Pedestrian(position=(3.0, 0.0), radius=0.4)],
        )
        img = render_camera(world, Pose2D(0, 0, 0), cam())
        assert tuple(img[240, 320]) == PEDESTRIAN_COLOR

    def test_deterministic(self):
        world = SemanticWorld(
            terrain_regions=[big_region(TerrainClass.GRASS)],
            static_obstacles=[((2.0, -1.0), (3.0, -1.0), (3.0, 1.0), (2.0, 1.0))],
        )
        a = render_camera(world, Pose2D(0.3, -0.2, 0.1), cam(pitch=0.2))
        b = render_camera(world, Pose2D(0.3, -0.2, 0.1), cam(pitch=0.2))
        assert np.array_equal(a, b)

    def test_pose_dependent_view(self):
        world = SemanticWorld(
            terrain_regions=[
                big_region(TerrainClass.GRASS),
                TerrainRegion(
                    ((2.0, -1.0), (4.0, -1.0), (4.0, 1.0), (2.0, 1.0)),
                    TerrainClass.PAVEMENT,
                ),
            ]
        )
        facing = render_camera(world, Pose2D(0, 0, 0), cam())
        away = render_camera(world, Pose2D(0, 0, math.pi), cam())
        pave = np.array(TERRAIN_COLORS[TerrainClass.PAVEMENT])
        assert (facing == pave).all(axis=2).any()
        assert not (away == pave).all(axis=2).any()


class TestColorLookup:
    def test_round_trip(self):
        for cls, color in TERRAIN_COLORS.items():
            assert color_to_terrain(color) is cls

    def test_non_terrain_color(self):
        assert color_to_terrain(SKY_COLOR) is None
        assert color_to_terrain(OBSTACLE_COLOR) is None


class TestCropPatch:
    def test_interior_crop(self):
        img = np.arange(100 * 100 * 3, dtype=np.uint8).reshape(100, 100, 3)
        patch = crop_patch(img, (50, 50), 20)
        assert patch.shape == (20, 20, 3)
        assert np.array_equal(patch, img[40:60, 40:60])

    def test_edge_crop_zero_padded(self):
        img = np.full((100, 100, 3), 7, dtype=np.uint8)
        patch = crop_patch(img, (0, 0), 20)
        assert patch.shape == (20, 20, 3)
        assert (patch[:10, :10] == 0).all()
        assert (patch[10:, 10:] == 7).all()

    def test_fully_outside(self):
        img = np.full((50, 50, 3), 9, dtype=np.uint8)
        patch = crop_patch(img, (500, 500), 20)
        assert (patch == 0).all()
