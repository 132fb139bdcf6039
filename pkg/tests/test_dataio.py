import filecmp
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidnet.convert import rasterize_trajectory
from sidnet.dataio import (LabelRegistry, SynthConfig, load_manifest, make_folds, parse_pgm,
                           parse_trajectory_file, synth_dataset, synth_samples, write_manifest,
                           write_pgm, write_trajectory_file)
from sidnet.errors import FormatError, InputError, ManifestError
from sidnet.streams import preprocess_offline
from sidnet.types import OfflineImage, OnlinePointSequence

# ------------------------------------------------------------------ ONKT


def test_onkt_parse_example():
    t = parse_trajectory_file(b"ONKT 1\nP 0 0 0\nP 0 1.5 0\n")
    assert len(t.strokes) == 1 and t.N == 2
    np.testing.assert_array_equal(t.strokes[0], [[0, 0], [1.5, 0]])


def test_onkt_canonical_round_trip():
    data = b"ONKT 1\nP 0 0.000000 0.000000\nP 0 1.500000 2.250000\nP 1 -3.125000 4.000000\n"
    t = parse_trajectory_file(data)
    assert len(t.strokes) == 2
    assert write_trajectory_file(t) == data


@pytest.mark.parametrize("data,line", [
    (b"ONKT 2\nP 0 0 0\n", 1),
    (b"ONKX 1\nP 0 0 0\n", 1),
    (b"ONKT 1\nP 0 0 0\nP 1 1 1\nP 0 2 2\n", 4),
    (b"ONKT 1\nP 0 0 abc\n", 2),
    (b"ONKT 1\nP 1 0 0\n", 2),
    (b"ONKT 1\nQ 0 0 0\n", 2),
])
def test_onkt_errors_carry_line(data, line):
    with pytest.raises(FormatError) as ei:
        parse_trajectory_file(data)
    assert ei.value.line == line


def test_onkt_version_message():
    with pytest.raises(FormatError, match="version"):
        parse_trajectory_file(b"ONKT 2\n")


coords = st.floats(-1e4, 1e4, allow_nan=False).map(lambda v: round(v, 6))


@given(st.lists(st.lists(st.tuples(coords, coords), min_size=1, max_size=6), min_size=1, max_size=4))
def test_onkt_write_parse_write_stable(strokes):
    first = write_trajectory_file(OnlinePointSequence(strokes))
    again = write_trajectory_file(parse_trajectory_file(first))
    assert first == again


# ------------------------------------------------------------------ PGM

def test_pgm_header_arithmetic():
    img = parse_pgm(b"P5 4 2 255\n" + bytes(range(8)))
    assert img.pixels.shape == (2, 4) and not img.ink_high
    assert img.pixels[1, 3] == pytest.approx(7 / 255)


def test_pgm_truncated_and_magic():
    with pytest.raises(FormatError, match="truncated"):
        parse_pgm(b"P5 4 2 255\n" + bytes(7))
    with pytest.raises(FormatError):
        parse_pgm(b"P2 4 2 255\n" + bytes(8))
    with pytest.raises(FormatError):
        parse_pgm(b"P5 4 2 65535\n" + bytes(16))


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 31 - 1))
def test_pgm_round_trip(h, w, seed):
    px = np.random.default_rng(seed).integers(0, 256, size=(h, w), dtype=np.uint8)
    data = f"P5\n{w} {h}\n255\n".encode() + px.tobytes()
    assert write_pgm(parse_pgm(data)) == data


def test_pgm_polarity_on_write():
    img = OfflineImage(np.array([[1.0, 0.0]]), ink_high=True)
    assert write_pgm(img).endswith(bytes([0, 255]))


# ------------------------------------------------------------------ manifest

def _files(tmp_path, n=3):
    rows = []
    traj = OnlinePointSequence([[(0, 0), (1, 2)]])
    for k in range(n):
        on = tmp_path / f"s{k}.onkt"
        on.write_bytes(write_trajectory_file(traj))
        rows.append({"id": f"s{k}", "script": "arcs", "level": "character", "modality": "online",
                     "online_path": on.name, "offline_path": ""})
    return rows


def test_manifest_three_rows(tmp_path):
    write_manifest(tmp_path / "m.csv", _files(tmp_path))
    descs = load_manifest(tmp_path / "m.csv")
    assert [d.id for d in descs] == ["s0", "s1", "s2"]
    assert descs[0].origin.modality == "online"
    assert descs[0].load().online.N == 2


def test_manifest_empty_path_for_modality(tmp_path):
    rows = _files(tmp_path)
    rows[1]["online_path"] = ""
    write_manifest(tmp_path / "m.csv", rows)
    with pytest.raises(ManifestError, match="online_path is empty"):
        load_manifest(tmp_path / "m.csv")


def test_manifest_lists_every_offender(tmp_path):
    rows = _files(tmp_path)
    rows[1]["id"] = "s0"
    rows[2]["script"] = "runes"
    rows[2]["offline_path"] = "nowhere.pgm"
    write_manifest(tmp_path / "m.csv", rows)
    with pytest.raises(ManifestError) as ei:
        load_manifest(tmp_path / "m.csv")
    text = " ".join(ei.value.problems)
    assert "duplicate id 's0'" in text and "'runes'" in text and "dangling" in text
    assert len(ei.value.problems) == 3


def test_manifest_missing_columns(tmp_path):
    (tmp_path / "m.csv").write_text("id,script,level\nx,arcs,character\n")
    with pytest.raises(ManifestError, match="missing columns"):
        load_manifest(tmp_path / "m.csv")


def test_registry():
    reg = LabelRegistry()
    assert len(reg) == 7 and reg.name(reg.index("loops")) == "loops"
    with pytest.raises(ManifestError):
        reg.index("runes")
    with pytest.raises(ManifestError):
        LabelRegistry(["a", "a"])


# ------------------------------------------------------------------ folds

def _items(per_class, classes=7):
    return [(f"c{c}-{k:03d}", c) for c in range(classes) for k in range(per_class)]


def test_folds_proportions_uniform():
    items = [(f"x{i:03d}", i % 5) for i in range(100)]
    folds = make_folds(items, seed=0)
    assert len(folds) == 10
    for f in folds:
        assert (len(f.train), len(f.val), len(f.test)) == (70, 10, 20)


def test_folds_deterministic_and_partition():
    items = _items(13)
    a, b = make_folds(items, 4), make_folds(items, 4)
    assert [(f.train, f.val, f.test) for f in a] == [(f.train, f.val, f.test) for f in b]
    assert make_folds(items, 5)[0].test != a[0].test
    every = {i for i, _ in items}
    for f in a:
        parts = [set(f.train), set(f.val), set(f.test)]
        assert set().union(*parts) == every
        assert sum(map(len, parts)) == len(every)


def test_folds_reject_small_class():
    with pytest.raises(InputError):
        make_folds(_items(10) + [("lonely", 99)], 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(10, 40), min_size=1, max_size=6), st.integers(0, 1000))
def test_folds_stratified(sizes, seed):
    items = [(f"{c}-{k}", c) for c, n in enumerate(sizes) for k in range(n)]
    label = dict(items)
    for f in make_folds(items, seed):
        for c, n in enumerate(sizes):
            for part, frac in ((f.train, 0.7), (f.val, 0.1), (f.test, 0.2)):
                got = sum(label[i] == c for i in part)
                assert abs(got - frac * n) <= 1


def test_folds_cover_every_id_in_some_test_part():
    items = _items(20)
    seen = set()
    for f in make_folds(items, 1):
        seen.update(f.test)
    assert seen == {i for i, _ in items}


# ------------------------------------------------------------------ synth

SMALL = dict(chars_per_script=2, samples_per_char=2, words_per_script=2)


def test_synth_deterministic(tmp_path):
    cfg = SynthConfig(seed=7, **SMALL)
    a = synth_dataset(cfg, tmp_path / "a")
    b = synth_dataset(cfg, tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for sub in ("online", "offline"):
        _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a" / sub, tmp_path / "b" / sub,
                                               os.listdir(tmp_path / "a" / sub), shallow=False)
        assert not mismatch and not errors
    assert open(a, "rb").read() == open(b, "rb").read()


def test_synth_samples_parse_back(tmp_path):
    path = synth_dataset(SynthConfig(seed=1, **SMALL), tmp_path)
    descs = load_manifest(path)
    assert len(descs) == 7 * (2 * 2 + 2)
    for d in descs:
        s = d.load()
        assert s.online.N >= 2 and s.offline.height == 32
    assert {d.level for d in descs} == {"character", "word"}


def test_synth_config_validation(tmp_path):
    with pytest.raises(InputError):
        SynthConfig(num_scripts=8).validate()
    with pytest.raises(InputError):
        SynthConfig(word_length_range=(3, 2)).validate()
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        synth_dataset(SynthConfig(**SMALL), blocker / "out")


def test_synth_covers_configured_scripts():
    cfg = SynthConfig(seed=2, num_scripts=4, chars_per_script=2, samples_per_char=1, words_per_script=0)
    scripts = [s for _, s, *_ in synth_samples(cfg)]
    assert scripts == [n for n in LabelRegistry().names[:4] for _ in range(2)]


def test_synth_nearest_centroid_beats_chance():
    cfg = SynthConfig(seed=0, chars_per_script=5, samples_per_char=8, words_per_script=0)
    reg = LabelRegistry()
    X, y = [], []
    for _, script, _, _, traj in synth_samples(cfg):
        img = preprocess_offline(rasterize_trajectory(traj), "character").pixels
        X.append(img[::2, ::2].ravel())
        y.append(reg.index(script))
    X, y = np.asarray(X), np.asarray(y)
    train = np.arange(len(y)) % 2 == 0
    cents = np.stack([X[train & (y == c)].mean(0) for c in range(7)])
    pred = np.argmin(((X[~train, None] - cents[None]) ** 2).sum(-1), axis=1)
    acc = (pred == y[~train]).mean()
    assert acc > 1 / 7 + 0.1, acc
