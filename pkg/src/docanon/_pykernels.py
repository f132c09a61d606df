"""Pure numpy implementations of the hot kernels.

Every function here has a twin of identical signature and output in the compiled
``_ckernels`` extension; ``docanon.kernels`` picks one at import time.
"""

from __future__ import annotations

import numpy as np

# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def _rank_filter(img: np.ndarray, kw: int, kh: int, reduce) -> np.ndarray:
    out = np.asarray(img, dtype=np.uint8)
    rx, ry = kw // 2, kh // 2
    if rx:
        padded = np.pad(out, ((0, 0), (rx, rx)), mode="edge")
        acc = padded[:, : out.shape[1]].copy()
        for k in range(1, kw):
            reduce(acc, padded[:, k : k + out.shape[1]], out=acc)
        out = acc
    if ry:
        padded = np.pad(out, ((ry, ry), (0, 0)), mode="edge")
        acc = padded[: out.shape[0]].copy()
        for k in range(1, kh):
            reduce(acc, padded[k : k + out.shape[0]], out=acc)
        out = acc
    return np.ascontiguousarray(out)


def min_filter(img: np.ndarray, kw: int, kh: int) -> np.ndarray:
    """Rectangular min filter (grayscale erosion) with edge replication."""
    return _rank_filter(img, kw, kh, np.minimum)


def max_filter(img: np.ndarray, kw: int, kh: int) -> np.ndarray:
    """Rectangular max filter (grayscale dilation) with edge replication."""
    return _rank_filter(img, kw, kh, np.maximum)


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def label_boxes(mask: np.ndarray) -> np.ndarray:
    """Bounding boxes of 8-connected foreground components.

    Returns an int64 array of rows ``(x0, y0, x1, y1, pixel_count)`` with
    exclusive ``x1``/``y1``, sorted by ``(y0, x0)``.
    """
    fg = np.asarray(mask) > 0
    h, w = fg.shape
    run_row, run_start, run_end = [], [], []
    row_runs = []
    padded = np.zeros(w + 2, dtype=np.int8)
    for r in range(h):
        padded[1:-1] = fg[r]
        edges = np.flatnonzero(np.diff(padded))
        starts, ends = edges[0::2], edges[1::2]
        first = len(run_start)
        run_row.extend([r] * len(starts))
        run_start.extend(starts.tolist())
        run_end.extend(ends.tolist())
        row_runs.append((first, len(run_start)))

    parent = list(range(len(run_start)))
    for r in range(1, h):
        a0, a1 = row_runs[r]
        b0, b1 = row_runs[r - 1]
        j = b0
        for i in range(a0, a1):
            s, e = run_start[i], run_end[i]
            # 8-connectivity: runs touch if they overlap after widening by one pixel
            while j < b1 and run_end[j] < s:
                j += 1
            k = j
            while k < b1 and run_start[k] <= e:
                ri, rk = _find(parent, i), _find(parent, k)
                if ri != rk:
                    if ri < rk:
                        parent[rk] = ri
                    else:
                        parent[ri] = rk
                k += 1

    boxes: dict[int, list[int]] = {}
    order = []
    for i in range(len(run_start)):
        root = _find(parent, i)
        r, s, e = run_row[i], run_start[i], run_end[i]
        b = boxes.get(root)
        if b is None:
            boxes[root] = [s, r, e, r + 1, e - s]
            order.append(root)
        else:
            if s < b[0]:
                b[0] = s
            if e > b[2]:
                b[2] = e
            b[3] = r + 1
            b[4] += e - s
    rows = [boxes[k] for k in order]
    rows.sort(key=lambda b: (b[1], b[0]))
    if not rows:
        return np.zeros((0, 5), dtype=np.int64)
    return np.array(rows, dtype=np.int64)


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between packed uint8 descriptor rows."""
    a = np.ascontiguousarray(a, dtype=np.uint8)
    b = np.ascontiguousarray(b, dtype=np.uint8)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.int32)
    chunk = max(1, 4_000_000 // max(1, b.size))
    for i in range(0, a.shape[0], chunk):
        x = np.bitwise_xor(a[i : i + chunk, None, :], b[None, :, :])
        out[i : i + chunk] = _POPCOUNT[x].sum(axis=2, dtype=np.int32)
    return out


def fast_score(img: np.ndarray, threshold: int, arc: int = 9) -> np.ndarray:
    """FAST segment-test corner score.

    A pixel is a corner when ``arc`` contiguous circle pixels are all brighter
    than centre + threshold or all darker than centre - threshold.  The score
    is the larger of the summed excess brightness and darkness over the whole
    circle; non-corners and the 3-pixel border score 0.
    """
    g = np.asarray(img, dtype=np.int32)
    h, w = g.shape
    out = np.zeros((h, w), dtype=np.int32)
    if h < 7 or w < 7:
        return out
    c = g[3 : h - 3, 3 : w - 3]
    diffs = np.stack([g[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx] - c for dx, dy in CIRCLE])
    bright = diffs > threshold
    dark = diffs < -threshold
    n = len(CIRCLE)
    is_corner = np.zeros(c.shape, dtype=bool)
    for flags in (bright, dark):
        for s in range(n):
            run = flags[s].copy()
            for k in range(1, arc):
                run &= flags[(s + k) % n]
            is_corner |= run
    sb = np.where(bright, diffs - threshold, 0).sum(axis=0)
    sd = np.where(dark, -diffs - threshold, 0).sum(axis=0)
    out[3 : h - 3, 3 : w - 3] = np.where(is_corner, np.maximum(sb, sd), 0)
    return out
