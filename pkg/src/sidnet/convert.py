"""Conversion between pen trajectories and raster images.

Rendering draws each in-stroke segment with an integer line and thickens it
with a disc. Recovery thins the image to a one-pixel skeleton and walks the
skeleton graph greedily, preferring the straightest continuation at
junctions.

Pixel coordinates follow the trajectory convention (x, y) with y growing
downward, so point (x, y) lands in ``pixels[y, x]``.
"""
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import ndimage
from skimage.draw import line as draw_line

from ._kernels import zhang_suen
from .errors import InputError
from .types import (OFFLINE, ONLINE, ModalityTag, OfflineImage,
                    OnlinePointSequence, Sample)

RENDER_HEIGHT = 32
RENDER_MARGIN = 2
DEFAULT_RADIUS = 1
RESAMPLE_SPACING = 2.0
MAX_RECOVERED_POINTS = 256

_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def disc(radius):
    """Boolean disc structuring element: offsets with dx^2 + dy^2 <= r^2."""
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= r * r


# ------------------------------------------------------------------ rendering

def _pixel_strokes(traj, canvas_scale, radius, height, margin):
    pts = traj.points()
    lo = pts.min(axis=0)
    pad = radius
    if canvas_scale is None:
        span = pts.max(axis=0) - lo
        inner = height - 2 * margin - 2 * radius
        if inner < 1:
            raise InputError(f"height {height} leaves no room for margin {margin} and radius {radius}")
        ref = span[1] if span[1] > 0 else span[0]
        canvas_scale = (inner - 1) / ref if ref > 0 else 1.0
        pad = margin + radius
    strokes = [np.rint((s - lo) * canvas_scale).astype(np.int64) + pad for s in traj.strokes]
    return strokes, pad


def rasterize_trajectory(traj: OnlinePointSequence, canvas_scale=None,
                         thickness_radius=DEFAULT_RADIUS, height=RENDER_HEIGHT,
                         margin=RENDER_MARGIN) -> OfflineImage:
    """Render a trajectory to an ink-high binary image.

    With ``canvas_scale=None`` the trajectory is fit so that the ink occupies
    ``height - 2*margin`` rows of a canvas exactly ``height`` tall. An explicit
    scale maps point p to ``round((p - min) * scale) + radius`` and sizes the
    canvas to the ink.
    """
    if thickness_radius < 0:
        raise InputError("thickness_radius must be >= 0")
    if traj.N < 1:
        raise InputError("cannot render an empty trajectory")
    if not np.all(np.isfinite(traj.points())):
        raise InputError("non-finite coordinate")
    r = int(thickness_radius)
    strokes, pad = _pixel_strokes(traj, canvas_scale, r, height, margin)
    allp = np.concatenate(strokes)
    W = int(allp[:, 0].max()) + pad + 1
    H = int(allp[:, 1].max()) + pad + 1
    if canvas_scale is None:
        H = max(H, height)
    canvas = np.zeros((H, W), dtype=bool)
    for s in strokes:
        canvas[s[0, 1], s[0, 0]] = True
        for (x0, y0), (x1, y1) in zip(s[:-1], s[1:]):
            rr, cc = draw_line(y0, x0, y1, x1)
            canvas[rr, cc] = True
    if r > 0:
        canvas = ndimage.binary_dilation(canvas, structure=disc(r))
    return OfflineImage(canvas.astype(np.float32), ink_high=True)


# ------------------------------------------------------------------ skeleton

@dataclass
class Skeleton:
    """One-pixel-wide binary image plus its 8-adjacency graph."""

    image: np.ndarray

    @property
    def pixels(self):
        """Ink pixels as (y, x) tuples in scan order."""
        ys, xs = np.nonzero(self.image)
        return list(zip(ys.tolist(), xs.tolist()))

    def __len__(self):
        return int(self.image.sum())

    def degrees(self):
        """Number of 8-neighbours for every pixel (0 off the skeleton)."""
        k = np.ones((3, 3), dtype=np.int32)
        k[1, 1] = 0
        counts = ndimage.convolve(self.image.astype(np.int32), k, mode="constant")
        return np.where(self.image, counts, 0)


def skeletonize(img: OfflineImage, threshold=0.5) -> Skeleton:
    """Zhang-Suen thinning to a fixed point.

    Plain Zhang-Suen erases some small blobs entirely (a 2x2 square is the
    classic case). Any 8-connected component that vanishes gets its first
    pixel in scan order back, so the component count is preserved.
    """
    mask = img.ink_mask(threshold).astype(np.uint8)
    thin = zhang_suen(np.ascontiguousarray(mask)).astype(bool)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3)))
    if n:
        kept = np.zeros(n + 1, dtype=bool)
        kept[labels[thin]] = True
        for comp in np.nonzero(~kept[1:])[0] + 1:
            ys, xs = np.nonzero(labels == comp)
            thin[ys[0], xs[0]] = True
    return Skeleton(thin)


# ------------------------------------------------------------------ recovery

@dataclass
class RecoveredTrajectory:
    """Strokes as integer arrays of (x, y) pixel coordinates."""

    strokes: List[np.ndarray]

    def point_count(self):
        return sum(len(s) for s in self.strokes)

    def to_online(self):
        return OnlinePointSequence([s.astype(np.float64) for s in self.strokes])


def _turn(d_in, d_out):
    a = np.arctan2(d_in[0], d_in[1])
    b = np.arctan2(d_out[0], d_out[1])
    t = abs(b - a)
    return min(t, 2 * np.pi - t)


def recover_trajectory(sk: Skeleton) -> RecoveredTrajectory:
    """Greedy ordered walk that consumes every skeleton pixel exactly once.

    Each stroke starts at the unvisited endpoint (at most one unvisited
    neighbour) with the smallest (y, x); with no endpoints left it starts at
    the smallest unvisited pixel. At every step it moves to the unvisited
    neighbour with the smallest turn against the incoming direction, ties
    broken by (y, x).
    """
    nodes = set(sk.pixels)
    if not nodes:
        raise InputError("cannot recover a trajectory from an empty skeleton")

    def free_neighbours(p):
        y, x = p
        return [(y + dy, x + dx) for dy, dx in _NEIGHBOURS if (y + dy, x + dx) in nodes]

    strokes = []
    while nodes:
        ends = [p for p in nodes if len(free_neighbours(p)) <= 1]
        cur = min(ends) if ends else min(nodes)
        nodes.discard(cur)
        path = [cur]
        d_in = None
        while True:
            cand = free_neighbours(cur)
            if not cand:
                break
            if d_in is None:
                nxt = min(cand)
            else:
                nxt = min(cand, key=lambda q: (round(_turn(d_in, (q[0] - cur[0], q[1] - cur[1])), 9), q))
            d_in = (nxt[0] - cur[0], nxt[1] - cur[1])
            nodes.discard(nxt)
            path.append(nxt)
            cur = nxt
        arr = np.asarray(path, dtype=np.int64)[:, ::-1]
        strokes.append(np.ascontiguousarray(arr))
    return RecoveredTrajectory(strokes)


def resample_strokes(strokes, spacing=RESAMPLE_SPACING, max_points=MAX_RECOVERED_POINTS):
    """Arc-length resampling of pixel strokes, widening the spacing if needed
    so the total stays within ``max_points``. Every stroke keeps both ends."""
    strokes = [np.asarray(s, dtype=np.float64) for s in strokes]
    lengths = []
    for s in strokes:
        seg = np.hypot(*np.diff(s, axis=0).T) if len(s) > 1 else np.zeros(0)
        lengths.append(np.concatenate([[0.0], np.cumsum(seg)]))

    def count(sp):
        return sum(max(2, int(np.ceil(L[-1] / sp)) + 1) if L[-1] > 0 else 1 for L in lengths)

    while count(spacing) > max_points and spacing < 1e6:
        spacing *= 1.25
    out = []
    for s, L in zip(strokes, lengths):
        if L[-1] == 0:
            out.append(s[:1])
            continue
        n = max(2, int(np.ceil(L[-1] / spacing)) + 1)
        t = np.linspace(0.0, L[-1], n)
        out.append(np.stack([np.interp(t, L, s[:, 0]), np.interp(t, L, s[:, 1])], axis=1))
    return out


def image_to_trajectory(img: OfflineImage) -> OnlinePointSequence:
    """Skeletonize, recover, and resample to a bounded point sequence."""
    rec = recover_trajectory(skeletonize(img))
    return OnlinePointSequence(resample_strokes(rec.strokes))


# ------------------------------------------------------------------ samples

def convert(sample: Sample, thickness_radius=DEFAULT_RADIUS) -> Sample:
    """Fill the missing modality and tag the sample with its original one."""
    has_on = sample.online is not None
    has_off = sample.offline is not None
    if has_on == has_off:
        raise InputError(f"sample {sample.id!r}: exactly one modality must be present")
    if has_on:
        offline = rasterize_trajectory(sample.online, thickness_radius=thickness_radius)
        online = sample.online
        origin = ModalityTag.of(ONLINE)
    else:
        online = image_to_trajectory(sample.offline)
        offline = sample.offline
        origin = ModalityTag.of(OFFLINE)
    return Sample(sample.id, sample.script, sample.level, origin, online, offline, dict(sample.meta))


def round_trip_report(traj: OnlinePointSequence, thickness_radius=DEFAULT_RADIUS):
    """Render, recover, and re-render a trajectory on the same canvas.

    Returns a dict with ``coverage`` (fraction of the rendered skeleton that
    lies within one pixel of the re-rendered recovered centreline),
    ``containment`` (fraction of the recovered centreline inside the
    radius-1 dilation of the skeleton) and the invariant violation counts.
    """
    img = rasterize_trajectory(traj, thickness_radius=thickness_radius)
    sk = skeletonize(img)
    rec = recover_trajectory(sk)
    partition = check_partition(sk, rec)
    adjacency = check_adjacency(rec)
    resampled = resample_strokes(rec.strokes)
    redraw = np.zeros_like(sk.image)
    for s in resampled:
        p = np.rint(s).astype(np.int64)
        redraw[p[0, 1], p[0, 0]] = True
        for (x0, y0), (x1, y1) in zip(p[:-1], p[1:]):
            rr, cc = draw_line(y0, x0, y1, x1)
            redraw[rr, cc] = True
    box = np.ones((3, 3), dtype=bool)
    near_redraw = ndimage.binary_dilation(redraw, structure=box)
    near_skel = ndimage.binary_dilation(sk.image, structure=disc(1))
    n_sk = int(sk.image.sum())
    n_re = int(redraw.sum())
    return {
        "skeleton_pixels": n_sk,
        "coverage": float((sk.image & near_redraw).sum() / n_sk) if n_sk else 1.0,
        "containment": float((redraw & near_skel).sum() / n_re) if n_re else 1.0,
        "partition_violations": partition,
        "adjacency_violations": adjacency,
    }


def check_partition(sk: Skeleton, rec: RecoveredTrajectory):
    """Count pixels missing from, repeated in, or foreign to the recovery."""
    want = set(sk.pixels)
    seen = {}
    for s in rec.strokes:
        for x, y in s.tolist():
            seen[(y, x)] = seen.get((y, x), 0) + 1
    repeated = sum(c - 1 for c in seen.values())
    return repeated + len(want - seen.keys()) + len(seen.keys() - want)


def check_adjacency(rec: RecoveredTrajectory):
    """Count consecutive in-stroke pairs that are not 8-adjacent."""
    bad = 0
    for s in rec.strokes:
        if len(s) > 1:
            d = np.abs(np.diff(s, axis=0)).max(axis=1)
            bad += int((d != 1).sum())
    return bad
