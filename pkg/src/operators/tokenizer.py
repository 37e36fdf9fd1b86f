"""
Patch tokenizer: crop a detection from its frame on a fixed 64x64 grid

Each grid cell is sampled at its center with bilinear interpolation over
pixel centers; samples that fall outside the image use edge-clamped
coordinates. The raw vector is flattened row-major over (row, col, channel)
and a linear map turns it into a d_model token.
"""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from src.utils.errors import DataError

GRID = 64
CHANNELS = 3
RAW_DIM = GRID * GRID * CHANNELS


@dataclass(frozen=True)
class FrameImage:
    """RGB frame as an (H, W, 3) array of floats in [0, 1]"""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != CHANNELS:
            raise DataError(f"frame must be H x W x 3, got shape {data.shape}")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise DataError("frame values must lie in [0, 1]")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @classmethod
    def from_flat(cls, values, width, height):
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height * CHANNELS:
            raise DataError(f"expected {width * height * CHANNELS} values, got {values.size}")
        return cls(values.reshape(height, width, CHANNELS))


def grid_points(box):
    """Sample coordinates (x, y) of the 64x64 cell centers inside ``box``, each (64, 64)."""
    offsets = (np.arange(GRID, dtype=np.float64) + 0.5) / GRID
    xs = box.left + offsets * box.w
    ys = box.top + offsets * box.h
    return np.meshgrid(xs, ys)


def sample_patch(img, box):
    """
    Sample a detection's patch into a RawPatchVector of length 12288

    Pixel (r, c) has its center at (c + 0.5, r + 0.5), so a continuous point
    (x, y) reads array coordinates (y - 0.5, x - 0.5).
    """
    if box.right <= 0 or box.bottom <= 0 or box.left >= img.width or box.top >= img.height:
        raise DataError(f"box {box.ltrb()} lies outside the {img.width}x{img.height} image")

    xs, ys = grid_points(box)
    coords = np.stack([ys.ravel() - 0.5, xs.ravel() - 0.5])
    data = np.asarray(img.data, dtype=np.float64)
    channels = [
        ndimage.map_coordinates(data[:, :, c], coords, order=1, mode="nearest", prefilter=False)
        for c in range(CHANNELS)
    ]
    return np.stack(channels, axis=-1).reshape(-1)


def embed(raw, weight, bias):
    """token = raw . W^T + b for a (d_model, 12288) weight."""
    raw = np.asarray(raw)
    weight = np.asarray(weight)
    bias = np.asarray(bias)
    if raw.shape[-1] != RAW_DIM:
        raise DataError(f"raw vector must have length {RAW_DIM}, got {raw.shape[-1]}")
    if weight.ndim != 2 or weight.shape[1] != RAW_DIM or bias.shape != (weight.shape[0],):
        raise DataError(f"weight/bias shapes {weight.shape}/{bias.shape} do not map {RAW_DIM} -> d_model")
    return raw @ weight.T + bias


def bos_token(d_model):
    return np.zeros(d_model, dtype=np.float32)


def detection_raw(det, image=None):
    """Raw vector for a detection: sampled from ``image`` or taken from its appearance."""
    if image is not None:
        return sample_patch(image, det.bbox)
    if det.appearance is None:
        raise DataError(f"detection in frame {det.frame} has neither an image nor an appearance vector")
    raw = np.asarray(det.appearance, dtype=np.float64).reshape(-1)
    if raw.size != RAW_DIM:
        raise DataError(f"appearance vector must have length {RAW_DIM}, got {raw.size}")
    return raw
