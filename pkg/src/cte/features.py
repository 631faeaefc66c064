"""Grayscale conversion and per-tile Canny edge maps."""

import math

import numpy as np
from PIL import Image
from scipy import ndimage

from . import _kernels

LUMA = np.array([0.299, 0.587, 0.114])

SIGMA = 1.0
KERNEL_SIZE = 5
LOW_THRESHOLD = 0.1
HIGH_THRESHOLD = 0.2
PAD_MODE = "reflect"  # scipy's half-sample symmetric padding: (c b a | a b c)

# Sobel responses of an image in [0, 1] are bounded by 4 per axis.
GRAD_SCALE = 4.0 * math.sqrt(2.0)
# Gradients are rounded to integer units of 1e-9 before suppression so that
# equal-magnitude neighbours compare equal regardless of float summation order.
QUANTUM = 1e9
TAN_22_5 = math.sqrt(2.0) - 1.0

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def canny_parameters():
    return {
        "sigma": SIGMA,
        "kernel_size": KERNEL_SIZE,
        "low": LOW_THRESHOLD,
        "high": HIGH_THRESHOLD,
        "padding": PAD_MODE,
        "magnitude_scale": "sobel / (4*sqrt(2))",
        "quantum": QUANTUM,
    }


def gaussian_kernel(sigma=SIGMA, size=KERNEL_SIZE):
    k = np.arange(size) - (size - 1) / 2
    g = np.exp(-(k**2) / (2.0 * sigma**2))
    return g / g.sum()


def to_grayscale(patch):
    """Luminance ``0.299 R + 0.587 G + 0.114 B`` of an ``(..., 3)`` array."""
    patch = np.asarray(patch, dtype=np.float64)
    return patch[..., 0] * LUMA[0] + patch[..., 1] * LUMA[1] + patch[..., 2] * LUMA[2]


def _gradients(gray):
    """Quantized Sobel gradients of blurred images; works on ``(..., H, W)``."""
    g = gaussian_kernel()
    ax_r, ax_c = gray.ndim - 2, gray.ndim - 1
    blurred = ndimage.correlate1d(gray, g, axis=ax_r, mode=PAD_MODE)
    blurred = ndimage.correlate1d(blurred, g, axis=ax_c, mode=PAD_MODE)
    smooth, diff = np.array([1.0, 2.0, 1.0]), np.array([-1.0, 0.0, 1.0])
    gx = ndimage.correlate1d(ndimage.correlate1d(blurred, smooth, axis=ax_r, mode=PAD_MODE), diff, axis=ax_c, mode=PAD_MODE)
    gy = ndimage.correlate1d(ndimage.correlate1d(blurred, diff, axis=ax_r, mode=PAD_MODE), smooth, axis=ax_c, mode=PAD_MODE)
    qx = np.floor(gx / GRAD_SCALE * QUANTUM + 0.5).astype(np.int64)
    qy = np.floor(gy / GRAD_SCALE * QUANTUM + 0.5).astype(np.int64)
    return qx, qy


def _sectors(qx, qy):
    ax, ay = np.abs(qx).astype(np.float64), np.abs(qy).astype(np.float64)
    sector = np.where(qx * qy > 0, 1, 3)
    sector = np.where(ax <= TAN_22_5 * ay, 2, sector)
    sector = np.where(ay <= TAN_22_5 * ax, 0, sector)
    return sector.astype(np.int64)


_HIGH_SQ = int(round(HIGH_THRESHOLD * QUANTUM)) ** 2
_LOW_SQ = int(round(LOW_THRESHOLD * QUANTUM)) ** 2


def _edges_from_gradients(qx, qy):
    mag_sq = qx * qx + qy * qy
    thin = _kernels.nms(mag_sq, _sectors(qx, qy))
    strong = thin & (mag_sq >= _HIGH_SQ)
    weak = thin & (mag_sq >= _LOW_SQ)
    return _kernels.hysteresis(strong, weak).astype(np.uint8)


def canny_edges(gray):
    """Binary 16x16 edge map: blur, Sobel, non-maximum suppression, hysteresis.

    Parameters are fixed module constants (see ``canny_parameters``).
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale array, got shape {gray.shape}")
    return _edges_from_gradients(*_gradients(gray))


def edge_maps(tiles):
    """Edge maps for a stack of uint8 RGB tiles ``(N, 16, 16, 3)``; identical tiles computed once."""
    tiles = np.ascontiguousarray(tiles, dtype=np.uint8)
    n = tiles.shape[0]
    out = np.zeros(tiles.shape[:3], dtype=np.uint8)
    if n == 0:
        return out
    first, inverse = {}, np.empty(n, dtype=np.int64)
    for i in range(n):
        inverse[i] = first.setdefault(tiles[i].tobytes(), len(first))
    uniq = tiles[np.unique(inverse, return_index=True)[1]]
    gray = to_grayscale(uniq.astype(np.float64) / 255.0)
    qx, qy = _gradients(gray)
    maps = np.stack([_edges_from_gradients(qx[i], qy[i]) for i in range(len(uniq))])
    return maps[inverse]


def tile_edges(tile_u8):
    return canny_edges(to_grayscale(np.asarray(tile_u8, dtype=np.float64) / 255.0))


def save_edge_png(edge_map, path):
    Image.fromarray((np.asarray(edge_map, dtype=np.uint8) * 255), mode="L").save(path, format="PNG")
