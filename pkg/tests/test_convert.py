import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidnet.convert import (check_adjacency, check_partition, convert, disc, rasterize_trajectory,
                            recover_trajectory, round_trip_report, skeletonize, Skeleton)
from sidnet.dataio.synth import SynthConfig, synth_samples
from sidnet.errors import InputError
from sidnet.types import ModalityTag, OfflineImage, OnlinePointSequence, Sample


def ink_set(img):
    ys, xs = np.nonzero(img.pixels > 0.5)
    return set(zip(xs.tolist(), ys.tolist()))


def reference_zhang_suen(mask):
    """Textbook two-subiteration thinning, one pixel at a time."""
    img = np.pad(mask.astype(np.uint8), 1)
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            marks = []
            for y in range(1, img.shape[0] - 1):
                for x in range(1, img.shape[1] - 1):
                    if not img[y, x]:
                        continue
                    p = [img[y - 1, x], img[y - 1, x + 1], img[y, x + 1], img[y + 1, x + 1],
                         img[y + 1, x], img[y + 1, x - 1], img[y, x - 1], img[y - 1, x - 1]]
                    b = sum(p)
                    a = sum(p[i] == 0 and p[(i + 1) % 8] == 1 for i in range(8))
                    if step == 0:
                        c = p[0] * p[2] * p[4] == 0 and p[2] * p[4] * p[6] == 0
                    else:
                        c = p[0] * p[2] * p[6] == 0 and p[0] * p[4] * p[6] == 0
                    if 2 <= b <= 6 and a == 1 and c:
                        marks.append((y, x))
            for y, x in marks:
                img[y, x] = 0
            changed |= bool(marks)
    return img[1:-1, 1:-1].astype(bool)


def sk_from(pixels, shape):
    img = np.zeros(shape, bool)
    for x, y in pixels:
        img[y, x] = True
    return Skeleton(img)


# ------------------------------------------------------------------ rasterize

def test_rasterize_segment_unit_scale():
    img = rasterize_trajectory(OnlinePointSequence([[(0, 0), (2, 0)]]), canvas_scale=1, thickness_radius=0)
    assert ink_set(img) == {(0, 0), (1, 0), (2, 0)}


def test_rasterize_dot_radius_one_is_plus():
    img = rasterize_trajectory(OnlinePointSequence([[(0, 0)]]), canvas_scale=1, thickness_radius=1)
    assert ink_set(img) == {(1, 1), (0, 1), (2, 1), (1, 0), (1, 2)}
    assert disc(1).sum() == 5


def test_rasterize_strokes_union():
    a = [(0, 0), (3, 0)]
    b = [(0, 4), (3, 6)]
    both = rasterize_trajectory(OnlinePointSequence([a, b]), canvas_scale=1, thickness_radius=0)
    # a dot at (0, 0) pins the frame; it already lies on stroke a
    only_a = rasterize_trajectory(OnlinePointSequence([a, [(0, 0)]]), canvas_scale=1, thickness_radius=0)
    only_b = rasterize_trajectory(OnlinePointSequence([[(0, 0)], b]), canvas_scale=1, thickness_radius=0)
    assert ink_set(both) == ink_set(only_a) | ink_set(only_b)
    # no pixels on the gap rows between the strokes' end points
    assert not any(y in (1, 2, 3) for _, y in ink_set(both))


def test_rasterize_fit_height():
    img = rasterize_trajectory(OnlinePointSequence([[(0, 0), (5, 10)], [(7, 3), (9, 9)]]))
    assert img.height == 32
    ys = np.nonzero(img.pixels.any(axis=1))[0]
    assert ys.max() - ys.min() + 1 == 32 - 2 * 2


def test_rasterize_deterministic_and_errors():
    t = OnlinePointSequence([[(0, 0), (1.3, 2.2), (4, 1)]])
    assert np.array_equal(rasterize_trajectory(t).pixels, rasterize_trajectory(t).pixels)
    with pytest.raises(InputError):
        rasterize_trajectory(t, thickness_radius=-1)


# ------------------------------------------------------------------ skeleton

def test_skeleton_examples():
    dot = np.zeros((5, 5))
    dot[2, 2] = 1
    assert np.array_equal(skeletonize(OfflineImage(dot)).image, dot.astype(bool))
    assert len(skeletonize(OfflineImage(np.zeros((6, 6))))) == 0


def test_skeleton_bar_matches_reference():
    bar = np.zeros((7, 14))
    bar[2:5, 2:12] = 1
    got = skeletonize(OfflineImage(bar)).image
    want = reference_zhang_suen(bar > 0.5)
    assert np.array_equal(got, want)
    rows = np.nonzero(got.any(axis=1))[0]
    assert len(rows) == 1 and 6 <= got.sum() <= 10  # end pixels erode


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_skeleton_matches_reference_on_blobs(seed):
    from scipy import ndimage
    rng = np.random.default_rng(seed)
    m = ndimage.binary_dilation(rng.random((16, 16)) < 0.08, iterations=int(rng.integers(1, 3)))
    got = skeletonize(OfflineImage(m.astype(float))).image
    want = reference_zhang_suen(m)
    # where the reference erases a whole component, one pixel comes back
    extra = got & ~want
    lab, _ = ndimage.label(m, structure=np.ones((3, 3)))
    for y, x in zip(*np.nonzero(extra)):
        assert not want[lab == lab[y, x]].any()
    assert np.array_equal(got & want, want)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_skeleton_properties(seed):
    from scipy import ndimage
    rng = np.random.default_rng(seed)
    m = ndimage.binary_dilation(rng.random((20, 20)) < 0.05, iterations=2)
    sk = skeletonize(OfflineImage(m.astype(float)))
    assert np.all(~sk.image | m)
    eight = np.ones((3, 3))
    assert ndimage.label(sk.image, eight)[1] == ndimage.label(m, eight)[1]
    again = skeletonize(OfflineImage(sk.image.astype(float)))
    assert np.array_equal(again.image, sk.image)


# ------------------------------------------------------------------ recovery

def test_recover_horizontal_line():
    rec = recover_trajectory(sk_from([(0, 0), (1, 0), (2, 0)], (1, 3)))
    assert len(rec.strokes) == 1
    assert rec.strokes[0].tolist() == [[0, 0], [1, 0], [2, 0]]


def test_recover_l_shape_single_stroke():
    pix = [(0, y) for y in range(5)] + [(x, 4) for x in range(1, 5)]
    sk = sk_from(pix, (5, 5))
    rec = recover_trajectory(sk)
    assert len(rec.strokes) == 1
    assert [0, 4] in rec.strokes[0].tolist()
    assert check_partition(sk, rec) == 0 and check_adjacency(rec) == 0


def test_recover_t_shape_two_strokes():
    pix = [(x, 0) for x in range(7)] + [(3, y) for y in range(1, 6)]
    sk = sk_from(pix, (6, 7))
    rec = recover_trajectory(sk)
    assert len(rec.strokes) == 2
    assert rec.point_count() == len(pix) and check_partition(sk, rec) == 0


def test_recover_loop_and_empty():
    ring = np.zeros((5, 5), bool)
    ring[1, 1:4] = ring[3, 1:4] = ring[1:4, 1] = ring[1:4, 3] = True
    rec = recover_trajectory(Skeleton(ring))
    assert rec.point_count() == ring.sum()
    assert rec.strokes[0][0].tolist() == [1, 1]
    with pytest.raises(InputError):
        recover_trajectory(Skeleton(np.zeros((3, 3), bool)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_recover_partition_and_adjacency(seed):
    from scipy import ndimage
    rng = np.random.default_rng(seed)
    m = ndimage.binary_dilation(rng.random((24, 24)) < 0.04, iterations=2)
    if not m.any():
        return
    sk = skeletonize(OfflineImage(m.astype(float)))
    rec = recover_trajectory(sk)
    assert rec.point_count() == len(sk)
    assert check_partition(sk, rec) == 0
    assert check_adjacency(rec) == 0


# ------------------------------------------------------------------ convert

def _traj():
    return OnlinePointSequence([[(0, 0), (4, 8), (8, 0)], [(2, 4), (6, 4)]])


def test_convert_online_sample():
    s = convert(Sample("a", "arcs", "character", ModalityTag.of("online"), online=_traj()))
    assert s.origin.vector().tolist() == [1, 0]
    assert s.offline is not None and s.offline.height == 32


def test_convert_offline_sample():
    img = rasterize_trajectory(_traj())
    s = convert(Sample("a", "arcs", "character", ModalityTag.of("offline"), offline=img))
    assert s.origin.vector().tolist() == [0, 1]
    assert s.online.N >= 2


def test_convert_needs_exactly_one_modality():
    with pytest.raises(InputError):
        convert(Sample("a", "arcs", "character", ModalityTag.of("online")))
    img = rasterize_trajectory(_traj())
    with pytest.raises(InputError):
        convert(Sample("a", "arcs", "character", ModalityTag.of("online"), _traj(), img))


def test_round_trip_on_synthetic_corpus():
    cfg = SynthConfig(seed=3, chars_per_script=3, samples_per_char=2, words_per_script=3)
    reports = [round_trip_report(t) for *_, t in synth_samples(cfg)]
    assert all(r["partition_violations"] == 0 and r["adjacency_violations"] == 0 for r in reports)
    assert min(r["containment"] for r in reports) == 1.0
    assert np.mean([r["coverage"] for r in reports]) >= 0.95
