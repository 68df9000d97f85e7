"""Ego-centered BEV semantic map rasterization.

Each frame renders the map polygon layers into a square 3-channel image
centered on the ego pose. Orientation: ego heading points "up" (forward
is the negative row direction) and the ego's right side is the positive
column direction, so the ego-frame axes are x = rightward, y = forward.

A pixel belongs to a polygon iff its center passes the even-odd crossing
test; layers paint in the fixed order drivable_area, crosswalk, sidewalk,
later layers overdrawing earlier ones. The per-pixel predicate is exact
and shared between backends, so identical inputs produce bit-identical
rasters.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .scene import EgoState, LAYER_KINDS, MapLayer

DEFAULT_LAYER_COLORS = {
    "drivable_area": (128, 128, 128),
    "crosswalk": (255, 255, 0),
    "sidewalk": (0, 128, 255),
}
DEFAULT_BACKGROUND = (0, 0, 0)


@dataclass
class RasterConfig:
    extent: float = 30.0  # side length of the square window, meters
    resolution: float = 0.1  # meters per pixel
    layer_colors: dict = field(default_factory=lambda: dict(DEFAULT_LAYER_COLORS))
    background: tuple = DEFAULT_BACKGROUND

    @property
    def side(self) -> int:
        ratio = self.extent / self.resolution
        pixels = round(ratio)
        if pixels < 1 or abs(ratio - pixels) > 1e-9:
            raise ValueError(
                f"extent/resolution must be a positive integer pixel count, "
                f"got {self.extent}/{self.resolution} = {ratio}"
            )
        return pixels


@dataclass
class MapRaster:
    pixels: np.ndarray  # side x side x 3, uint8
    frame_index: int


def _pixel_centers(config: RasterConfig):
    side = config.side
    res = config.resolution
    cols = np.arange(side, dtype=float)
    rows = np.arange(side, dtype=float)
    x_right = (cols + 0.5 - side / 2.0) * res
    y_fwd = (side / 2.0 - rows - 0.5) * res
    return x_right, y_fwd


def rasterize_frame(
    layers: list[MapLayer],
    ego: EgoState,
    config: RasterConfig,
    frame_index: int = 0,
) -> MapRaster:
    """Render one ego-centered raster from the map layers."""
    side = config.side
    pixels = np.empty((side, side, 3), dtype=np.uint8)
    pixels[:, :] = np.array(config.background, dtype=np.uint8)

    x_right, y_fwd = _pixel_centers(config)
    px = np.broadcast_to(x_right[None, :], (side, side)).reshape(-1).copy()
    py = np.broadcast_to(y_fwd[:, None], (side, side)).reshape(-1).copy()

    ex, ez = ego.position[0], ego.position[2]
    sin_h = math.sin(ego.heading)
    cos_h = math.cos(ego.heading)

    by_kind = {}
    for layer in layers:
        by_kind.setdefault(layer.layer_kind, []).append(layer)
    for kind in LAYER_KINDS:
        color = np.array(config.layer_colors[kind], dtype=np.uint8)
        for layer in by_kind.get(kind, ()):
            for ring in layer.polygons:
                poly = np.empty((len(ring), 2))
                for i, (gx, gz) in enumerate(ring):
                    dx = gx - ex
                    dz = gz - ez
                    poly[i, 0] = -dx * sin_h + dz * cos_h  # rightward
                    poly[i, 1] = dx * cos_h + dz * sin_h  # forward
                mask = kernels.polygon_mask(px, py, poly).reshape(side, side)
                pixels[mask] = color
    return MapRaster(pixels=pixels, frame_index=frame_index)


def rasterize_observation(
    layers: list[MapLayer],
    ego_states: list[EgoState],
    config: RasterConfig,
    frame_indices=None,
) -> list[MapRaster]:
    """One raster per observed frame, each centered on that frame's ego pose."""
    if not ego_states:
        raise ValueError("ego_states must be nonempty")
    if frame_indices is None:
        frame_indices = list(range(len(ego_states)))
    return [
        rasterize_frame(layers, ego, config, frame_index=idx)
        for idx, ego in zip(frame_indices, ego_states)
    ]
