"""Grid-level primitives.

Everything here operates on plain numpy arrays indexed ``[row, col]``:
loading likelihood maps, thresholding, exact Euclidean distance
transforms, skeletonization, the multi-threshold background-distance
field used to re-center vessel paths, and a small binary file format
for persisting scalar fields.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import InputError

# Likelihood levels at which the map is repeatedly binarized.  Evenly
# spaced so that each additional level a pixel survives reflects a
# roughly constant increment in vesselness.
DEFAULT_THRESHOLDS: tuple[int, ...] = tuple(range(20, 241, 20))

# Index (0-based) of the last binarization level that contributes
# without the quadratic boost; levels after this one are weighted by
# the square of their index so that persistence at high likelihood
# dominates the field.
_BOOST_AFTER = 5

_CHANNEL_BANDS = {"red": "R", "green": "G", "blue": "B"}

_FIELD_MAGIC = b"VMF1"

_N8 = np.ones((3, 3), dtype=bool)


def load_likelihood(path: str | Path, channel: str | None = None) -> np.ndarray:
    """Load an 8-bit grayscale likelihood map as a uint8 array.

    Parameters
    ----------
    path:
        PNG or PGM file.
    channel:
        For color images, which band carries the likelihood:
        ``"red"``, ``"green"``, or ``"blue"``.  Required when the file
        has more than one band; rejected when it has exactly one.

    Returns
    -------
    numpy.ndarray
        2-D uint8 array, ``[row, col]``.

    Raises
    ------
    InputError
        If the file cannot be decoded, is not 8-bit, or the channel
        selection does not match the file's bands.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode == "P":
                img = img.convert("RGB")
                mode = "RGB"
            if mode == "L":
                if channel is not None:
                    raise InputError(
                        f"{path}: single-band image, channel selection not applicable"
                    )
                return np.asarray(img, dtype=np.uint8)
            if mode in ("RGB", "RGBA", "LA"):
                if channel is None:
                    raise InputError(
                        f"{path}: multi-band image ({mode}); a channel must be selected"
                    )
                band = _CHANNEL_BANDS.get(channel)
                if band is None or band not in img.getbands():
                    raise InputError(
                        f"{path}: no band {channel!r} in a {mode} image"
                    )
                return np.asarray(img.getchannel(band), dtype=np.uint8)
            raise InputError(f"{path}: unsupported image mode {mode!r}; 8-bit required")
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except UnidentifiedImageError:
        raise InputError(f"{path}: not a decodable image") from None


def binarize(values: np.ndarray, threshold: float) -> np.ndarray:
    """Return the boolean mask of pixels with value >= threshold."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise InputError("likelihood grid must be 2-D")
    if not 0 <= threshold <= 255:
        raise InputError(f"threshold {threshold} outside [0, 255]")
    return values >= threshold


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from each foreground pixel to background.

    Background pixels get 0.  Distances are measured to the nearest
    in-image background pixel; only a mask with no background at all
    falls back to treating the image border as background, so the
    result is finite for every input.

    Returns
    -------
    numpy.ndarray
        float64 array, same shape as ``mask``.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise InputError("mask must be 2-D")
    if not mask.any():
        return np.zeros(mask.shape, dtype=np.float64)
    if mask.all():
        padded = np.pad(mask, 1, constant_values=False)
        return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return ndimage.distance_transform_edt(mask)


def _ring_neighbors(img: np.ndarray) -> tuple[np.ndarray, ...]:
    # The 8 neighbors of every pixel in clockwise ring order starting
    # north: N, NE, E, SE, S, SW, W, NW.  Out-of-image counts as 0.
    p = np.pad(img, 1, constant_values=False)
    return (
        p[:-2, 1:-1],
        p[:-2, 2:],
        p[1:-1, 2:],
        p[2:, 2:],
        p[2:, 1:-1],
        p[2:, :-2],
        p[1:-1, :-2],
        p[:-2, :-2],
    )


def _crossing_and_count(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ring = _ring_neighbors(img)
    count = np.zeros(img.shape, dtype=np.int8)
    crossings = np.zeros(img.shape, dtype=np.int8)
    for i in range(8):
        count += ring[i]
        crossings += (~ring[i]) & ring[(i + 1) % 8]
    return crossings, count


_RING_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
# Pairs of ring positions whose pixels touch each other: consecutive
# ring steps plus the orthogonal pairs that meet across a corner.
_RING_LINKS = tuple((i, (i + 1) % 8) for i in range(8)) + ((0, 2), (2, 4), (4, 6), (6, 0))


def _prune_redundant(img: np.ndarray) -> None:
    # Reduce to minimal 8-connected curves.  Boundary peeling keeps
    # staircase pixels whose neighbors split into two ring runs that
    # still touch across a corner (doubled diagonals, 2x2 blocks, L
    # triangles).  Delete, sequentially in raster order, every pixel
    # with >= 2 neighbors, an orthogonal background neighbor (so no
    # hole appears), and a punctured 3x3 neighborhood that stays one
    # 8-connected piece without it.  Endpoints (1 neighbor) survive.
    h, w = img.shape
    while True:
        deleted = False
        rows, cols = np.nonzero(img)
        for r, c in zip(rows.tolist(), cols.tolist()):
            if not img[r, c]:
                continue
            bits = []
            orth_bg = False
            for k, (dr, dc) in enumerate(_RING_OFFSETS):
                rr, cc = r + dr, c + dc
                val = 0 <= rr < h and 0 <= cc < w and bool(img[rr, cc])
                bits.append(val)
                if k % 2 == 0 and not val:
                    orth_bg = True
            if not 2 <= sum(bits) <= 7 or not orth_bg:
                continue
            parent = list(range(8))

            def find(x: int) -> int:
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            for i, j in _RING_LINKS:
                if bits[i] and bits[j]:
                    parent[find(i)] = find(j)
            if len({find(i) for i in range(8) if bits[i]}) == 1:
                img[r, c] = False
                deleted = True
        if not deleted:
            return


def thin(mask: np.ndarray) -> np.ndarray:
    """Skeletonize a binary mask to unit width.

    Iterative two-subiteration boundary peeling (Zhang-Suen), followed
    by sequential pruning of redundant pixels (doubled staircase
    diagonals, residual 2x2 blocks) and restoration of one
    representative pixel for any connected component the peeling
    deleted outright (isolated blobs up to 2x2 vanish otherwise).

    Guarantees: the skeleton is a subset of the input, has the same
    number of 8-connected components, and is idempotent under
    re-thinning.  Tube-like shapes reduce to single-pixel curves; the
    rare 2x2 junction core survives only when removing any of its
    pixels would open a hole or detach a limb.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise InputError("mask must be 2-D")
    img = mask.copy()
    if not img.any():
        return img

    labels, n_components = ndimage.label(mask, structure=_N8)

    while True:
        changed = False
        for step in (0, 1):
            ring = _ring_neighbors(img)
            n, ne, e, se, s, sw, w, nw = ring
            count = (
                n.astype(np.int8) + ne + e + se + s.astype(np.int8) + sw + w + nw
            )
            crossings = np.zeros(img.shape, dtype=np.int8)
            for i in range(8):
                crossings += (~ring[i]) & ring[(i + 1) % 8]
            if step == 0:
                cond = (~(n & e & s)) & (~(e & s & w))
            else:
                cond = (~(n & e & w)) & (~(n & s & w))
            remove = img & (count >= 2) & (count <= 6) & (crossings == 1) & cond
            if remove.any():
                img[remove] = False
                changed = True
        if not changed:
            break

    _prune_redundant(img)

    # Components wholly erased by peeling come back as a single pixel:
    # the most interior one (largest distance to background), ties
    # broken in raster order so the choice is deterministic.
    survivors = np.unique(labels[img])
    if len(survivors) - (0 in survivors) != n_components:
        dist = distance_transform(mask)
        gone = np.setdiff1d(np.arange(1, n_components + 1), survivors)
        for comp in gone:
            rows, cols = np.nonzero(labels == comp)
            best = np.argmax(dist[rows, cols])
            img[rows[best], cols[best]] = True

    return img


def background_distance_field(
    values: np.ndarray,
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS,
    index_offset: int = 0,
) -> np.ndarray:
    """Accumulate log-compressed background distances over thresholds.

    For each threshold (taken in increasing order) the likelihood grid
    is binarized and distance-transformed; the field accumulates
    ``log(1 + d)`` for the first six levels and ``log(1 + d * i**2)``
    for level index ``i > 5``, so pixels that stay deep inside the
    vessel at high likelihood dominate.  The per-level contributions
    are independent, hence the field over a threshold list equals the
    sum of fields over any partition of it when ``index_offset`` passes
    the position of each chunk's first threshold within the full list.

    Parameters
    ----------
    values:
        2-D likelihood grid.
    thresholds:
        Strictly increasing values in [0, 255].
    index_offset:
        Global index of ``thresholds[0]``; only relevant when
        accumulating a partition chunk-wise.

    Returns
    -------
    numpy.ndarray
        float64 field, same shape as ``values``; zero wherever every
        threshold mask is background.
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise InputError("likelihood grid must be 2-D")
    thresholds = tuple(thresholds)
    if not thresholds:
        raise InputError("at least one threshold required")
    if any(t2 <= t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise InputError("thresholds must be strictly increasing")
    if index_offset < 0:
        raise InputError("index_offset must be >= 0")
    field = np.zeros(values.shape, dtype=np.float64)
    for i, t in enumerate(thresholds, start=index_offset):
        d = distance_transform(binarize(values, t))
        if i > _BOOST_AFTER:
            field += np.log1p(d * (i * i))
        else:
            field += np.log1p(d)
    return field


def write_field(path: str | Path, field: np.ndarray) -> None:
    """Write a scalar field as little-endian float32 with a VMF1 header.

    Layout: magic ``VMF1``, uint32 width, uint32 height, uint32
    reserved (zero), then height*width float32 values row-major.
    """
    field = np.asarray(field)
    if field.ndim != 2:
        raise InputError("field must be 2-D")
    h, w = field.shape
    header = _FIELD_MAGIC + struct.pack("<III", w, h, 0)
    Path(path).write_bytes(header + field.astype("<f4").tobytes(order="C"))


def read_field(path: str | Path) -> np.ndarray:
    """Read a VMF1 scalar field; inverse of :func:`write_field`.

    Returns float64 values that are exactly the stored float32 values.
    """
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _FIELD_MAGIC:
        raise InputError(f"{path}: not a VMF1 field file")
    w, h, reserved = struct.unpack("<III", data[4:16])
    if reserved != 0:
        raise InputError(f"{path}: nonzero reserved header word")
    if len(data) != 16 + 4 * w * h:
        raise InputError(f"{path}: truncated field payload")
    grid = np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w)
    return grid.astype(np.float64)
