import math

import numpy as np
import pytest

from pedcross.raster import (
    DEFAULT_LAYER_COLORS,
    MapRaster,
    RasterConfig,
    rasterize_frame,
    rasterize_observation,
)
from pedcross.scene import EgoState, MapLayer


def ego_at(x=0.0, z=0.0, heading=0.0, t=0.0):
    return EgoState(position=(x, 0.0, z), velocity=(0.0, 0.0, 0.0),
                    heading=heading, timestamp=t)


def rect(xa, xb, za, zb):
    return [(xa, za), (xb, za), (xb, zb), (xa, zb)]


def brute_force_raster(layers, ego, config):
    """Per-pixel point-in-polygon oracle, scalar python arithmetic."""
    side = config.side
    res = config.resolution
    pixels = np.empty((side, side, 3), dtype=np.uint8)
    pixels[:, :] = np.array(config.background, dtype=np.uint8)
    ex, ez = ego.position[0], ego.position[2]
    sin_h = math.sin(ego.heading)
    cos_h = math.cos(ego.heading)
    order = {"drivable_area": 0, "crosswalk": 1, "sidewalk": 2}
    for kind_index in range(3):
        for layer in layers:
            if order[layer.layer_kind] != kind_index:
                continue
            color = np.array(config.layer_colors[layer.layer_kind], dtype=np.uint8)
            for ring in layer.polygons:
                ego_ring = []
                for gx, gz in ring:
                    dx = gx - ex
                    dz = gz - ez
                    ego_ring.append((-dx * sin_h + dz * cos_h,
                                     dx * cos_h + dz * sin_h))
                for r in range(side):
                    y = (side / 2.0 - r - 0.5) * res
                    for c in range(side):
                        x = (c + 0.5 - side / 2.0) * res
                        inside = False
                        j = len(ego_ring) - 1
                        for i in range(len(ego_ring)):
                            xi, yi = ego_ring[i]
                            xj, yj = ego_ring[j]
                            if (yi > y) != (yj > y):
                                xcross = (xj - xi) * (y - yi) / (yj - yi) + xi
                                if x < xcross:
                                    inside = not inside
                            j = i
                        if inside:
                            pixels[r, c] = color
    return pixels


def random_scene(rng):
    side = int(rng.choice([16, 32, 48, 64]))
    extent = float(rng.uniform(8.0, 30.0))
    config = RasterConfig(extent=extent, resolution=extent / side)
    layers = []
    kinds = ["drivable_area", "crosswalk", "sidewalk"]
    for kind in kinds:
        polys = []
        for _ in range(int(rng.integers(0, 3))):
            n = int(rng.integers(3, 8))
            # star-shaped rings never self-intersect
            angles = np.sort(rng.uniform(0, 2 * math.pi, n))
            radii = rng.uniform(1.0, extent * 0.7, n)
            cx, cz = rng.uniform(-extent / 2, extent / 2, 2)
            polys.append([(cx + r * math.cos(a), cz + r * math.sin(a))
                          for a, r in zip(angles, radii)])
        if polys:
            layers.append(MapLayer(kind, polys))
    ego = ego_at(x=float(rng.uniform(-5, 5)), z=float(rng.uniform(-5, 5)),
                 heading=float(rng.uniform(-math.pi, math.pi)))
    return layers, ego, config


class TestRasterizeFrame:
    def test_no_layers_is_background(self):
        config = RasterConfig(extent=6.0, resolution=0.5)
        raster = rasterize_frame([], ego_at(), config)
        assert raster.pixels.shape == (12, 12, 3)
        assert (raster.pixels == 0).all()

    def test_half_plane_fills_left_columns(self):
        # rightward half-plane x < 0 in the ego frame: ego at origin heading 0
        # has its right axis along +z, so cover z < 0 in global coordinates
        config = RasterConfig()  # 30 m at 0.1 m/px -> 300x300
        layer = MapLayer("drivable_area", [rect(-100.0, 100.0, -100.0, 0.0)])
        raster = rasterize_frame([layer], ego_at(), config)
        drivable = np.array(DEFAULT_LAYER_COLORS["drivable_area"], dtype=np.uint8)
        left = (raster.pixels[:, :150] == drivable).all()
        right = (raster.pixels[:, 150:] == 0).all()
        assert left and right

    def test_default_config_side_is_300(self):
        assert RasterConfig().side == 300

    def test_non_integer_ratio_rejected(self):
        with pytest.raises(ValueError, match="integer"):
            RasterConfig(extent=30.0, resolution=0.7).side

    def test_joint_rotation_invariance_bit_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            layers, ego, config = random_scene(rng)
            phi = float(rng.uniform(-math.pi, math.pi))
            base = rasterize_frame(layers, ego, config)
            cos_p, sin_p = math.cos(phi), math.sin(phi)
            ex, ez = ego.position[0], ego.position[2]
            rotated_layers = []
            for layer in layers:
                rings = []
                for ring in layer.polygons:
                    rings.append([
                        (ex + (x - ex) * cos_p - (z - ez) * sin_p,
                         ez + (x - ex) * sin_p + (z - ez) * cos_p)
                        for x, z in ring
                    ])
                rotated_layers.append(MapLayer(layer.layer_kind, rings))
            ego_rot = EgoState(ego.position, ego.velocity,
                               ego.heading + phi, ego.timestamp)
            rotated = rasterize_frame(rotated_layers, ego_rot, config)
            assert np.array_equal(base.pixels, rotated.pixels)

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        layers, ego, config = random_scene(rng)
        a = rasterize_frame(layers, ego, config)
        b = rasterize_frame(layers, ego, config)
        assert np.array_equal(a.pixels, b.pixels)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            layers, ego, config = random_scene(rng)
            got = rasterize_frame(layers, ego, config)
            expected = brute_force_raster(layers, ego, config)
            assert np.array_equal(got.pixels, expected)

    def test_layer_overdraw_order(self):
        config = RasterConfig(extent=8.0, resolution=0.5)
        square = rect(-2.0, 2.0, -2.0, 2.0)
        layers = [MapLayer("sidewalk", [square]),
                  MapLayer("drivable_area", [square])]
        raster = rasterize_frame(layers, ego_at(), config)
        center = raster.pixels[8, 8]
        assert tuple(center) == DEFAULT_LAYER_COLORS["sidewalk"]


class TestRasterizeObservation:
    def test_five_states_give_five_rasters(self):
        config = RasterConfig(extent=8.0, resolution=0.5)
        layers = [MapLayer("drivable_area", [rect(-20, 20, -3, 3)])]
        egos = [ego_at(x=i * 0.5, t=i / 10.0) for i in range(5)]
        rasters = rasterize_observation(layers, egos, config)
        assert len(rasters) == 5
        assert [r.frame_index for r in rasters] == [0, 1, 2, 3, 4]

    def test_stationary_ego_identical_rasters(self):
        config = RasterConfig(extent=8.0, resolution=0.5)
        layers = [MapLayer("drivable_area", [rect(-20, 20, -3, 3)])]
        egos = [ego_at(t=i / 10.0) for i in range(5)]
        rasters = rasterize_observation(layers, egos, config)
        for r in rasters[1:]:
            assert np.array_equal(r.pixels, rasters[0].pixels)

    def test_forward_motion_shifts_boundary_ten_px_per_frame(self):
        # 1 m/frame along heading at 0.1 m/px: the forward boundary row
        # of a half-plane perpendicular to motion moves 10 rows per frame
        config = RasterConfig(extent=30.0, resolution=0.1)
        layer = MapLayer("drivable_area", [rect(-1000.0, 5.0, -1000.0, 1000.0)])
        egos = [ego_at(x=float(i), t=i / 10.0) for i in range(5)]
        rasters = rasterize_observation([layer], egos, config)
        drivable = np.array(DEFAULT_LAYER_COLORS["drivable_area"], dtype=np.uint8)
        rows = []
        for r in rasters:
            filled = (r.pixels == drivable).all(axis=2).any(axis=1)
            rows.append(int(np.argmax(filled)))  # first filled row from the top
        diffs = [b - a for a, b in zip(rows, rows[1:])]
        assert diffs == [10, 10, 10, 10]
        for r, ego in zip(rasters, egos):
            assert np.array_equal(r.pixels, brute_force_raster([layer], ego, config))

    def test_empty_states_rejected(self):
        with pytest.raises(ValueError):
            rasterize_observation([], [], RasterConfig())
