"""Raster primitives: label mode filtering, binary morphology, components.

Label rasters are (H, W) integer arrays with 0 = void; binary rasters are
(H, W) arrays of {0, 1}. The "median" filter on categorical labels is a
window mode (majority), since class ids are unordered; ties break toward the
smaller class id.

Window anchoring: a k-wide window is anchored at index floor(k/2), i.e. it
spans offsets [-(k//2), k-1-(k//2)]. This matters only for even k.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import CellOutOfGrid, DimsNotDivisible
from .mapdata import NUM_CLASSES


def _window_sums(counts: np.ndarray, k: int) -> np.ndarray:
    """Per-cell sums over a k x k window clipped at the borders.

    counts is (H, W, C); sums are exact for integer-valued input (cumsum).
    """
    h, w, _ = counts.shape
    lo = k // 2
    hi = k - 1 - lo
    integ = np.zeros((h + 1, w + 1, counts.shape[2]), dtype=np.int64)
    np.cumsum(np.cumsum(counts, axis=0), axis=1, out=integ[1:, 1:])
    r0 = np.clip(np.arange(h) - lo, 0, h)
    r1 = np.clip(np.arange(h) + hi + 1, 0, h)
    c0 = np.clip(np.arange(w) - lo, 0, w)
    c1 = np.clip(np.arange(w) + hi + 1, 0, w)
    return (integ[r1[:, None], c1[None, :]] - integ[r0[:, None], c1[None, :]]
            - integ[r1[:, None], c0[None, :]] + integ[r0[:, None], c0[None, :]])


def median_filter(raster: np.ndarray, k: int, ignore_void: bool = False,
                  num_labels: int = NUM_CLASSES) -> np.ndarray:
    """Window-mode label filter; windows are clipped at raster borders.

    With ignore_void, void cells are excluded from each window and a cell
    whose window is all void stays void. Ties go to the smaller class id.
    """
    if k < 1:
        raise ValueError("window side must be >= 1")
    raster = np.asarray(raster)
    onehot = (raster[..., None] == np.arange(num_labels)).astype(np.int64)
    sums = _window_sums(onehot, k)
    if ignore_void:
        nonvoid = sums[..., 1:]
        out = np.argmax(nonvoid, axis=-1).astype(raster.dtype) + 1
        out[nonvoid.sum(axis=-1) == 0] = 0
    else:
        out = np.argmax(sums, axis=-1).astype(raster.dtype)
    return out


def morphology(raster: np.ndarray, op: str, square_side: int) -> np.ndarray:
    """Binary erosion/dilation/opening/closing with a square element.

    Zero padding outside the raster. Erosion and dilation form an adjoint
    pair (dilation reflects the anchored element), so opening and closing
    are idempotent for every element size.
    """
    if square_side < 1:
        raise ValueError("square_side must be >= 1")
    r = (np.asarray(raster) != 0).astype(np.uint8)
    k = square_side
    # erode window offsets: [-(k//2), k-1-k//2]; dilate uses the reflection
    dil_origin = -1 if k % 2 == 0 else 0
    if op == "erode":
        out = ndimage.minimum_filter(r, size=k, mode="constant", cval=0)
    elif op == "dilate":
        out = ndimage.maximum_filter(r, size=k, mode="constant", cval=0,
                                     origin=dil_origin)
    elif op == "open":
        out = morphology(morphology(r, "erode", k), "dilate", k)
    elif op == "close":
        out = morphology(morphology(r, "dilate", k), "erode", k)
    else:
        raise ValueError(f"unknown morphology op {op!r}")
    return out.astype(np.uint8)


def connected_components(raster: np.ndarray, connectivity: int = 4):
    """Label connected regions of a binary raster.

    Returns (labels, count); labels run 1..count in first-encounter
    row-major order.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    r = np.asarray(raster) != 0
    structure = np.ones((3, 3), dtype=bool) if connectivity == 8 else None
    labeled, count = ndimage.label(r, structure=structure)
    if count == 0:
        return labeled.astype(np.int32), 0
    # renumber by first row-major appearance
    flat = labeled.ravel()
    first = np.full(count + 1, flat.size, dtype=np.int64)
    idx = np.nonzero(flat)[0]
    np.minimum.at(first, flat[idx], idx)
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, count + 1)
    return remap[labeled], count


def downsample_nn(raster: np.ndarray, factor: int) -> np.ndarray:
    """Take the top-left sample of each factor x factor block."""
    r = np.asarray(raster)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    h, w = r.shape
    if h % factor or w % factor:
        raise DimsNotDivisible(f"{h}x{w} not divisible by {factor}")
    return r[::factor, ::factor].copy()


def bresenham_line(r0: int, c0: int, r1: int, c1: int):
    """Integer cells on the Bresenham line from (r0, c0) to (r1, c1), inclusive."""
    cells = []
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        cells.append((r, c))
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
    return cells


def line_of_sight(mask: np.ndarray, a, b) -> bool:
    """True iff every cell on the line a -> b (inclusive) has mask = 1.

    a and b are (row, col) cells.
    """
    mask = np.asarray(mask)
    h, w = mask.shape
    for r, c in (a, b):
        if not (0 <= r < h and 0 <= c < w):
            raise CellOutOfGrid(f"cell ({r}, {c}) outside {h}x{w}")
    return all(mask[r, c] for r, c in bresenham_line(a[0], a[1], b[0], b[1]))
