"""Independent reference implementations used to cross-check the library.

Everything here is written from the definition of the quantity, not
from the library's code: brute-force distance transform, recursive
caliber pairing, dense-quadrature curve lengths, and a DFS segment
enumerator over pixel graphs.  Slow and obvious on purpose.
"""

from __future__ import annotations

import math

import numpy as np


def brute_distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest background pixel, O(n^2).

    Background pixels score 0.  A mask with no background pixel falls
    back to the distance to the nearest border-adjacent outside pixel,
    matching the library's padded-border convention.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    out = np.zeros((h, w), dtype=np.float64)
    bg = np.argwhere(~mask)
    if bg.size == 0:
        for r in range(h):
            for c in range(w):
                out[r, c] = min(r + 1, h - r, c + 1, w - c)
        return out
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            best = None
            for br, bc in bg:
                d2 = (r - br) ** 2 + (c - bc) ** 2
                if best is None or d2 < best:
                    best = d2
            out[r, c] = math.sqrt(best)
    return out


def caliber_pairing(widths, coefficient: float) -> float:
    """Recursive widest-with-narrowest pairing down to one caliber."""
    ws = sorted(widths, reverse=True)
    if len(ws) == 1:
        return ws[0]
    nxt = []
    i, j = 0, len(ws) - 1
    while i < j:
        nxt.append(coefficient * math.hypot(ws[i], ws[j]))
        i += 1
        j -= 1
    if i == j:
        nxt.append(ws[i])
    return caliber_pairing(nxt, coefficient)


def polyline_arc_chord(points: np.ndarray) -> tuple[float, float]:
    """Arc length and endpoint chord of an ordered point sequence."""
    points = np.asarray(points, dtype=np.float64)
    steps = np.diff(points, axis=0)
    arc = float(np.sum(np.hypot(steps[:, 0], steps[:, 1])))
    chord = float(math.hypot(*(points[-1] - points[0])))
    return arc, chord


def sine_arc_chord(amplitude: float, wavelength: float, length: float,
                   n: int = 200_001) -> tuple[float, float]:
    """Dense-quadrature arc/chord of y = A sin(2 pi x / L) over [0, length]."""
    x = np.linspace(0.0, length, n)
    y = amplitude * np.sin(2.0 * math.pi * x / wavelength)
    return polyline_arc_chord(np.stack([x, y], axis=1))


def _neighbors8(r: int, c: int, pixels: set) -> list:
    out = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            if (r + dr, c + dc) in pixels:
                out.append((r + dr, c + dc))
    return out


def dfs_segment_partition(mask: np.ndarray) -> set:
    """Partition a pixel graph's edges into maximal chains.

    Terminals are pixels of 8-degree other than two.  Each chain is
    returned as a frozenset of undirected pixel-pair edges; leftover
    pure cycles come out as one chain each.
    """
    mask = np.asarray(mask, dtype=bool)
    pixels = {(int(r), int(c)) for r, c in np.argwhere(mask)}
    degree = {p: len(_neighbors8(*p, pixels)) for p in pixels}
    visited_edges = set()
    chains = set()

    def edge(a, b):
        return (a, b) if a <= b else (b, a)

    def walk(start, first):
        chain = [edge(start, first)]
        prev, cur = start, first
        while degree[cur] == 2:
            nxt = [n for n in _neighbors8(*cur, pixels) if n != prev]
            assert len(nxt) == 1
            if edge(cur, nxt[0]) in chain_set or edge(cur, nxt[0]) in visited_edges:
                break
            chain.append(edge(cur, nxt[0]))
            prev, cur = cur, nxt[0]
            chain_set.add(chain[-1])
        return chain

    for p in sorted(pixels):
        if degree[p] == 2:
            continue
        for n in sorted(_neighbors8(*p, pixels)):
            if edge(p, n) in visited_edges:
                continue
            chain_set = {edge(p, n)}
            chain = walk(p, n)
            visited_edges.update(chain)
            chains.add(frozenset(chain))
    # anything left is a pure cycle of degree-2 pixels
    for p in sorted(pixels):
        for n in sorted(_neighbors8(*p, pixels)):
            if edge(p, n) in visited_edges:
                continue
            chain_set = {edge(p, n)}
            chain = walk(p, n)
            visited_edges.update(chain)
            chains.add(frozenset(chain))
    return chains
