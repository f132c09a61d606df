"""Keypoints, binary descriptors, Hamming matching and RANSAC affine fitting.

Keypoints come from a FAST-9 segment test with spatial non-maximum
suppression; each gets a 256-bit BRIEF descriptor computed on a box-smoothed
image from fixed point-pair tests inside a 31x31 patch.  Positions are in the
continuous pixel frame of ``docanon.geometry`` (pixel centres at ``i + 0.5``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .config import FeatureParams, RansacParams
from .errors import AlignmentError, DegenerateInputError, RasterError
from .geometry import AffineTransform
from .raster import Raster

PATCH = 31
SMOOTH = 5
NMS_RADIUS = 3
DESCRIPTOR_BITS = 256
# intensity difference a BRIEF test needs before it reads as 1; keeps flat
# background regions from producing noise-driven bits
BRIEF_MARGIN = 4.0
MIN_SIZE = 32
GRID_CELL = 48


def _brief_pairs() -> np.ndarray:
    rng = np.random.default_rng(0xB12F)
    half = PATCH // 2
    pts = np.clip(np.rint(rng.normal(0.0, PATCH / 5.0, size=(DESCRIPTOR_BITS, 4))), -half, half)
    return pts.astype(np.int64)  # columns dx1, dy1, dx2, dy2


BRIEF_PAIRS = _brief_pairs()


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    response: float
    descriptor: bytes  # 32 bytes, 256 bits

    def __post_init__(self):
        if len(self.descriptor) != DESCRIPTOR_BITS // 8:
            raise ValueError("descriptor must be exactly 256 bits")


@dataclass(frozen=True)
class Match:
    query: int
    train: int
    distance: int


def hamming(a: bytes, b: bytes) -> int:
    return int(np.unpackbits(np.bitwise_xor(np.frombuffer(a, np.uint8), np.frombuffer(b, np.uint8))).sum())


def descriptor_matrix(kps) -> np.ndarray:
    if not kps:
        return np.zeros((0, DESCRIPTOR_BITS // 8), dtype=np.uint8)
    return np.frombuffer(b"".join(k.descriptor for k in kps), dtype=np.uint8).reshape(len(kps), -1)


def _box_smooth(g: np.ndarray, k: int) -> np.ndarray:
    r = k // 2
    p = np.pad(g.astype(np.float64), r, mode="edge")
    ii = np.zeros((p.shape[0] + 1, p.shape[1] + 1))
    ii[1:, 1:] = p.cumsum(0).cumsum(1)
    h, w = g.shape
    s = ii[k : k + h, k : k + w] - ii[:h, k : k + w] - ii[k : k + h, :w] + ii[:h, :w]
    return s / (k * k)


def _bucketed(ys, xs, resp, h, w, max_count):
    """Indices of the kept corners, strongest first.

    Each GRID_CELL square first keeps its own strongest corners up to an even
    share of the budget, so one high-contrast region cannot take every
    keypoint; leftover budget goes to the strongest remaining corners.
    """
    order = np.lexsort((xs, ys, -resp))
    if len(order) <= max_count:
        return order
    ncols = -(-w // GRID_CELL)
    quota = -(-max_count // (ncols * -(-h // GRID_CELL)))
    cell = (ys[order] // GRID_CELL) * ncols + xs[order] // GRID_CELL
    by_cell = np.argsort(cell, kind="stable")
    sorted_cells = cell[by_cell]
    starts = np.searchsorted(sorted_cells, sorted_cells, side="left")
    rank = np.empty(len(order), dtype=np.int64)
    rank[by_cell] = np.arange(len(order)) - starts
    first = rank < quota
    chosen = np.concatenate([np.flatnonzero(first), np.flatnonzero(~first)])[:max_count]
    return order[np.sort(chosen)]


def detect_keypoints(img: Raster, max_count: int = 1500, fast_threshold: int = 20) -> list[Keypoint]:
    """Strongest FAST corners (after 7x7 non-max suppression) with BRIEF descriptors."""
    if img.channels != 1:
        img = img.to_gray()
    g = img.pixels
    h, w = g.shape
    if min(h, w) < MIN_SIZE:
        raise RasterError(f"image too small for keypoints: {w}x{h}, need >= {MIN_SIZE}")
    score = kernels.fast_score(g, fast_threshold)
    r = NMS_RADIUS
    padded = np.pad(score, r, mode="constant")
    local_max = sliding_window_view(padded, (2 * r + 1, 2 * r + 1)).max(axis=(2, 3))
    border = PATCH // 2 + SMOOTH // 2 + 1
    keep = (score > 0) & (score == local_max)
    keep[:border] = keep[h - border :] = False
    keep[:, :border] = keep[:, w - border :] = False
    ys, xs = np.nonzero(keep)
    if len(ys) == 0:
        return []
    resp = score[ys, xs]
    order = _bucketed(ys, xs, resp, h, w, max_count)
    ys, xs, resp = ys[order], xs[order], resp[order]

    sm = _box_smooth(g, SMOOTH)
    p = BRIEF_PAIRS
    a = sm[ys[:, None] + p[None, :, 1], xs[:, None] + p[None, :, 0]]
    b = sm[ys[:, None] + p[None, :, 3], xs[:, None] + p[None, :, 2]]
    bits = (b - a) > BRIEF_MARGIN
    packed = np.packbits(bits, axis=1)
    return [
        Keypoint(float(x) + 0.5, float(y) + 0.5, float(s), packed[i].tobytes())
        for i, (x, y, s) in enumerate(zip(xs, ys, resp))
    ]


def match_descriptors(query, train, max_distance: int = 64) -> list[Match]:
    """Mutual nearest neighbours by Hamming distance, at most ``max_distance`` apart."""
    if not query or not train:
        return []
    d = kernels.hamming_matrix(descriptor_matrix(query), descriptor_matrix(train))
    fwd = d.argmin(axis=1)
    back = d.argmin(axis=0)
    qi = np.arange(len(query))
    dist = d[qi, fwd]
    ok = (back[fwd] == qi) & (dist <= max_distance)
    matches = [Match(int(q), int(fwd[q]), int(dist[q])) for q in qi[ok]]
    matches.sort(key=lambda m: (m.distance, m.query))
    return matches


def _as_pairs(pairs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim == 3:  # (n, 2, 2): [[sx, sy], [dx, dy]]
        arr = arr.reshape(len(arr), 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError("pairs must be (n, 4) rows of sx, sy, dx, dy")
    return arr[:, :2], arr[:, 2:]


def estimate_affine_lsq(pairs) -> AffineTransform:
    """Least-squares affine map from source to target points."""
    src, dst = _as_pairs(pairs)
    if len(src) < 3:
        raise DegenerateInputError(f"need >= 3 correspondences, got {len(src)}")
    centred = src - src.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    scale = max(1.0, float(np.abs(src).max()))
    if sv[1] <= 1e-9 * scale * np.sqrt(len(src)):
        raise DegenerateInputError("source points are collinear")
    a = np.column_stack([src, np.ones(len(src))])
    sol, *_ = np.linalg.lstsq(a, dst, rcond=None)
    return AffineTransform(sol.T)


def _solve_triplets(src: np.ndarray, dst: np.ndarray, idx: np.ndarray):
    """Exact affine maps for each sampled triplet; returns (matrices, valid mask)."""
    s = src[idx]  # (k, 3, 2)
    d = dst[idx]
    a = np.concatenate([s, np.ones(s.shape[:2] + (1,))], axis=2)  # (k, 3, 3)
    det = np.linalg.det(a)
    span = np.abs(s - s.mean(axis=1, keepdims=True)).max(axis=(1, 2))
    valid = np.abs(det) > 1e-6 * np.maximum(span, 1.0) ** 2
    a[~valid] = np.eye(3)
    m = np.linalg.solve(a, d)  # (k, 3, 2): rows a, b and t per output coordinate
    return np.transpose(m, (0, 2, 1)), valid


def ransac_affine(pairs, inlier_threshold: float = 3.0, max_iterations: int = 2000, seed: int = 0
                  ) -> tuple[AffineTransform, np.ndarray]:
    """Robust affine fit: best 3-point hypothesis by inlier count, refit on its inliers.

    Pairs are put into a canonical sorted order before sampling, so the result
    does not depend on input order.  The returned mask is in input order.
    """
    src, dst = _as_pairs(pairs)
    n = len(src)
    if n < 3:
        raise AlignmentError(f"RANSAC needs >= 3 correspondences, got {n}")
    order = np.lexsort((dst[:, 1], dst[:, 0], src[:, 1], src[:, 0]))
    s_src, s_dst = src[order], dst[order]

    rng = np.random.default_rng(seed)
    keys = rng.random((max_iterations, n))
    idx = np.argpartition(keys, 2, axis=1)[:, :3] if n > 3 else np.tile(np.arange(3), (max_iterations, 1))
    models, valid = _solve_triplets(s_src, s_dst, idx)

    thr2 = inlier_threshold * inlier_threshold
    best_count, best_mask = 0, None
    chunk = max(1, 2_000_000 // n)
    for c0 in range(0, max_iterations, chunk):
        m = models[c0 : c0 + chunk]
        pred = np.einsum("kij,nj->kni", m[:, :, :2], s_src) + m[:, None, :, 2]
        err2 = ((pred - s_dst[None]) ** 2).sum(axis=2)
        inl = err2 < thr2
        counts = np.where(valid[c0 : c0 + chunk], inl.sum(axis=1), 0)
        k = int(counts.argmax())
        if counts[k] > best_count:
            best_count, best_mask = int(counts[k]), inl[k]
    if best_count < 3:
        raise AlignmentError(f"no affine model with >= 3 inliers (best {best_count})")
    try:
        t = estimate_affine_lsq(np.column_stack([s_src[best_mask], s_dst[best_mask]]))
    except DegenerateInputError as exc:
        raise AlignmentError(f"inlier set is degenerate: {exc}") from None
    mask = np.zeros(n, dtype=bool)
    mask[order[best_mask]] = True
    return t, mask


@dataclass(frozen=True)
class Alignment:
    transform: AffineTransform
    inliers: int
    matches: int


def align_detailed(reference: Raster, target: Raster, features: FeatureParams | None = None,
                   ransac: RansacParams | None = None, reference_keypoints=None) -> Alignment:
    features = features or FeatureParams()
    ransac = ransac or RansacParams()
    ref_kp = reference_keypoints
    if ref_kp is None:
        ref_kp = detect_keypoints(reference.to_gray(), features.max_keypoints, features.fast_threshold)
    tgt_kp = detect_keypoints(target.to_gray(), features.max_keypoints, features.fast_threshold)
    if len(ref_kp) < 3 or len(tgt_kp) < 3:
        raise AlignmentError(f"insufficient keypoints (reference {len(ref_kp)}, target {len(tgt_kp)})")
    matches = match_descriptors(ref_kp, tgt_kp, features.max_distance)
    if len(matches) < 3:
        raise AlignmentError(f"insufficient matches ({len(matches)})")
    pairs = np.array([[ref_kp[m.query].x, ref_kp[m.query].y, tgt_kp[m.train].x, tgt_kp[m.train].y]
                      for m in matches])
    t, mask = ransac_affine(pairs, ransac.threshold, ransac.iterations, ransac.seed)
    return Alignment(t, int(mask.sum()), len(matches))


def align(reference: Raster, target: Raster, features: FeatureParams | None = None,
          ransac: RansacParams | None = None) -> AffineTransform:
    """Affine map from reference coordinates to target coordinates."""
    return align_detailed(reference, target, features, ransac).transform
