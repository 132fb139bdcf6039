"""Synthetic paired-modality pseudo-script corpus.

Every script owns a disjoint family of stroke primitives (open arcs, sharp
polylines, closed loops, waves, hooks, spirals, and vertical strokes under a
headline bar). A character is a fixed arrangement of 1-4 primitives; each
sample jitters it with a small affine warp and point noise. Words place 1-8
characters of one script left to right. The online file is the generator's
own point sequence and the offline file is its rasterization, so both
modalities are genuine.
"""
import os
from dataclasses import dataclass

import numpy as np

from ..convert import rasterize_trajectory
from ..errors import InputError
from ..types import MODALITIES, OnlinePointSequence
from .formats import write_pgm, write_trajectory_file
from .manifest import DEFAULT_SCRIPTS, write_manifest

CHAR_UNITS = 28.0      # character box edge in trajectory units (~pixels at height 32)
POINT_SPACING = 2.0    # trajectory units between consecutive points


@dataclass
class SynthConfig:
    seed: int = 0
    num_scripts: int = 7
    chars_per_script: int = 20
    samples_per_char: int = 60
    words_per_script: int = 2000
    word_length_range: tuple = (1, 8)
    rotation_jitter: float = 0.12
    scale_jitter: float = 0.12
    shear_jitter: float = 0.12
    point_noise: float = 0.012
    part_jitter: float = 0.04

    def validate(self):
        if not 1 <= self.num_scripts <= len(DEFAULT_SCRIPTS):
            raise InputError(f"num_scripts must be in [1, {len(DEFAULT_SCRIPTS)}]")
        for name in ("chars_per_script", "samples_per_char"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if self.words_per_script < 0:
            raise InputError("words_per_script must be >= 0")
        lo, hi = self.word_length_range
        if not 1 <= lo <= hi:
            raise InputError("word_length_range must satisfy 1 <= lo <= hi")
        return self


# ------------------------------------------------------------------ primitives
# Each generator takes an rng and returns a dense [n, 2] curve in a unit box
# centred at the origin (y grows downward).

def _arc(rng):
    start = rng.uniform(0, 2 * np.pi)
    sweep = rng.uniform(0.6, 1.1) * np.pi * rng.choice([-1, 1])
    t = np.linspace(start, start + sweep, 80)
    return 0.5 * np.c_[np.cos(t), np.sin(t)]


def _angle(rng):
    k = rng.integers(3, 5)
    xs = np.linspace(-0.5, 0.5, k)
    ys = np.where(np.arange(k) % 2 == 0, -0.5, 0.5) * rng.uniform(0.7, 1.0)
    pts = np.c_[xs, ys]
    if rng.random() < 0.5:
        pts = pts[:, ::-1]
    return _densify(pts)


def _loop(rng):
    t = np.linspace(0, 2 * np.pi, 90) + rng.uniform(0, 2 * np.pi)
    a, b = rng.uniform(0.25, 0.5), rng.uniform(0.25, 0.5)
    return np.c_[a * np.cos(t), b * np.sin(t)]


def _wave(rng):
    periods = rng.uniform(1.5, 2.5)
    s = np.linspace(-0.5, 0.5, 100)
    w = 0.22 * np.sin(2 * np.pi * periods * s + rng.uniform(0, np.pi))
    pts = np.c_[s, w]
    return pts[:, ::-1] if rng.random() < 0.4 else pts


def _hook(rng):
    stem = np.c_[np.zeros(30), np.linspace(-0.5, 0.3, 30)]
    side = rng.choice([-1, 1])
    t = np.linspace(0, np.pi * 1.2, 40)
    curl = np.c_[side * 0.2 * (1 - np.cos(t)), 0.3 + 0.2 * np.sin(t)]
    pts = np.vstack([stem, curl])
    return pts[::-1] if rng.random() < 0.5 else pts


def _spiral(rng):
    turns = rng.uniform(1.4, 2.0)
    t = np.linspace(0, 2 * np.pi * turns, 140)
    r = 0.5 * t / t[-1]
    side = rng.choice([-1, 1])
    return np.c_[r * np.cos(side * t), r * np.sin(side * t)]


def _vertical(rng):
    x0, x1 = rng.uniform(-0.15, 0.15, size=2)
    pts = np.c_[[x0, x1], [-0.45, 0.5]]
    if rng.random() < 0.5:
        kink = rng.uniform(0.15, 0.35) * rng.choice([-1, 1])
        pts = np.c_[[x0, x0 + kink, x1], [-0.45, 0.05, 0.5]]
    return _densify(pts)


FAMILIES = {
    "arcs": _arc, "angles": _angle, "loops": _loop, "waves": _wave,
    "hooks": _hook, "spirals": _spiral, "matra": _vertical,
}
HEADLINE_SCRIPTS = ("matra",)


def _densify(corners, n=40):
    out = [np.linspace(a, b, n, endpoint=False) for a, b in zip(corners[:-1], corners[1:])]
    return np.vstack(out + [corners[-1:]])


def resample_curve(pts, spacing):
    """Points every ``spacing`` units of arc length, ends included."""
    seg = np.hypot(*np.diff(pts, axis=0).T)
    L = np.concatenate([[0.0], np.cumsum(seg)])
    if L[-1] == 0:
        return pts[:1].copy()
    n = max(2, int(np.ceil(L[-1] / spacing)) + 1)
    t = np.linspace(0, L[-1], n)
    return np.c_[np.interp(t, L, pts[:, 0]), np.interp(t, L, pts[:, 1])]


# ------------------------------------------------------------------ alphabet

@dataclass
class CharTemplate:
    """Primitive curves already placed inside the unit character box."""

    parts: list
    headline: bool


def make_alphabet(script, count, rng):
    gen = FAMILIES[script]
    chars = []
    for _ in range(count):
        k = int(rng.integers(1, 5))
        parts = []
        for j in range(k):
            size = rng.uniform(0.45, 0.8) if k > 1 else rng.uniform(0.8, 1.0)
            centre = rng.uniform(-0.25, 0.25, size=2) if k > 1 else np.zeros(2)
            parts.append(gen(rng) * size + centre)
        chars.append(CharTemplate(parts, script in HEADLINE_SCRIPTS))
    return chars


def _jitter_affine(rng, cfg):
    th = rng.normal(0, cfg.rotation_jitter)
    sx, sy = 1 + rng.normal(0, cfg.scale_jitter, size=2)
    sh = rng.normal(0, cfg.shear_jitter)
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return rot @ np.array([[sx, sh], [0.0, sy]])


def render_char_strokes(template, rng, cfg, offset=0.0):
    """Jittered strokes in trajectory units, shifted right by ``offset`` boxes."""
    A = _jitter_affine(rng, cfg)
    strokes = []
    for part in template.parts:
        p = part @ A.T + rng.normal(0, cfg.part_jitter, size=2)
        p = p + np.array([offset, 0.0])
        p = resample_curve(p * CHAR_UNITS, POINT_SPACING)
        p += rng.normal(0, cfg.point_noise * CHAR_UNITS, size=p.shape)
        strokes.append(p)
    return strokes


def _headline(x0, x1, rng, cfg):
    y = -0.5 + rng.normal(0, cfg.part_jitter)
    line = np.c_[[x0, x1], [y, y + rng.normal(0, 0.02)]] * CHAR_UNITS
    return resample_curve(line, POINT_SPACING)


def make_character(template, rng, cfg):
    strokes = render_char_strokes(template, rng, cfg)
    if template.headline:
        strokes.append(_headline(-0.55, 0.55, rng, cfg))
    return OnlinePointSequence(strokes)


def make_word(templates, rng, cfg):
    strokes, advance = [], 0.0
    for t in templates:
        strokes += render_char_strokes(t, rng, cfg, offset=advance)
        advance += 1.15 + rng.normal(0, 0.05)
    if templates[0].headline:
        strokes.append(_headline(-0.55, advance - 0.6, rng, cfg))
    return OnlinePointSequence(strokes)


# ------------------------------------------------------------------ corpus

def synth_samples(cfg: SynthConfig):
    """Yield (id, script, level, modality, trajectory) in a fixed order."""
    cfg.validate()
    scripts = DEFAULT_SCRIPTS[:cfg.num_scripts]
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(len(scripts))
    for script, ss in zip(scripts, children):
        alpha_ss, char_ss, word_ss = ss.spawn(3)
        alphabet = make_alphabet(script, cfg.chars_per_script, np.random.default_rng(alpha_ss))
        rng = np.random.default_rng(char_ss)
        for c, template in enumerate(alphabet):
            for k in range(cfg.samples_per_char):
                modality = MODALITIES[int(rng.integers(2))]
                yield (f"{script}-c{c:02d}-{k:03d}", script, "character", modality,
                       make_character(template, rng, cfg))
        rng = np.random.default_rng(word_ss)
        lo, hi = cfg.word_length_range
        for k in range(cfg.words_per_script):
            n = int(rng.integers(lo, hi + 1))
            picks = [alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=n)]
            modality = MODALITIES[int(rng.integers(2))]
            yield (f"{script}-w{k:04d}", script, "word", modality, make_word(picks, rng, cfg))


def synth_dataset(cfg: SynthConfig, out_dir):
    """Write ONKT + PGM files for every sample and return the manifest path."""
    cfg.validate()
    os.makedirs(os.path.join(out_dir, "online"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "offline"), exist_ok=True)
    rows = []
    for sid, script, level, modality, traj in synth_samples(cfg):
        on_rel = f"online/{sid}.onkt"
        off_rel = f"offline/{sid}.pgm"
        with open(os.path.join(out_dir, on_rel), "wb") as fh:
            fh.write(write_trajectory_file(traj))
        with open(os.path.join(out_dir, off_rel), "wb") as fh:
            fh.write(write_pgm(rasterize_trajectory(traj)))
        rows.append({"id": sid, "script": script, "level": level, "modality": modality,
                     "online_path": on_rel, "offline_path": off_rel})
    path = os.path.join(out_dir, "manifest.csv")
    write_manifest(path, rows)
    return path
