"""On-disk formats: ONKT trajectories and binary PGM images.

ONKT is line-oriented UTF-8 text::

    ONKT 1
    P <stroke> <x> <y>
    ...

Points appear in temporal order and stroke indices start at 0 and never
decrease. The canonical writer uses six decimals and LF endings, so
``write_trajectory_file(parse_trajectory_file(b))`` reproduces canonical
input byte for byte.
"""
import re

import numpy as np

from ..errors import FormatError
from ..types import OfflineImage, OnlinePointSequence

ONKT_MAGIC = "ONKT"
ONKT_VERSION = 1


def parse_trajectory_file(data: bytes) -> OnlinePointSequence:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"not UTF-8: {exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty file", 1)
    head = lines[0].rstrip("\r").split()
    if len(head) != 2 or head[0] != ONKT_MAGIC:
        raise FormatError(f"bad magic {lines[0]!r}", 1)
    if head[1] != str(ONKT_VERSION):
        raise FormatError(f"unsupported ONKT version {head[1]!r}", 1)

    strokes, current, last = [], [], None
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.rstrip("\r").split()
        if not parts:
            continue
        if parts[0] != "P" or len(parts) != 4:
            raise FormatError(f"expected 'P <stroke> <x> <y>', got {raw!r}", lineno)
        try:
            idx = int(parts[1])
            x, y = float(parts[2]), float(parts[3])
        except ValueError:
            raise FormatError(f"unparsable number in {raw!r}", lineno) from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise FormatError("non-finite coordinate", lineno)
        if last is None:
            if idx != 0:
                raise FormatError(f"first stroke index must be 0, got {idx}", lineno)
        elif idx < last:
            raise FormatError(f"stroke index decreased from {last} to {idx}", lineno)
        elif idx > last:
            strokes.append(current)
            current = []
        current.append((x, y))
        last = idx
    if current:
        strokes.append(current)
    if not strokes:
        raise FormatError("no points", len(lines))
    return OnlinePointSequence([np.asarray(s) for s in strokes])


def _fmt(v):
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_trajectory_file(traj: OnlinePointSequence) -> bytes:
    out = [f"{ONKT_MAGIC} {ONKT_VERSION}"]
    for k, stroke in enumerate(traj.strokes):
        for x, y in stroke:
            out.append(f"P {k} {_fmt(x)} {_fmt(y)}")
    return ("\n".join(out) + "\n").encode("utf-8")


_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def parse_pgm(data: bytes) -> OfflineImage:
    """Binary P5 PGM with maxval 255. Returns the image as stored on disk
    (``ink_high=False``, values scaled to [0, 1])."""
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise FormatError("truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise FormatError(f"bad PGM magic {fields[0][:8]!r}")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError("non-integer PGM header field") from None
    if w <= 0 or h <= 0:
        raise FormatError(f"bad PGM size {w}x{h}")
    if maxval != 255:
        raise FormatError(f"maxval must be 255, got {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM header")
    payload = data[pos + 1:]
    if len(payload) < w * h:
        raise FormatError(f"truncated payload: expected {w * h} bytes, got {len(payload)}")
    if len(payload) > w * h:
        raise FormatError(f"trailing bytes after payload: {len(payload) - w * h}")
    px = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return OfflineImage(px.astype(np.float32) / 255.0, ink_high=False)


def image_to_bytes(img: OfflineImage) -> np.ndarray:
    """Disk polarity (ink dark) as uint8."""
    stored = 1.0 - img.pixels if img.ink_high else img.pixels
    return np.clip(np.rint(stored * 255.0), 0, 255).astype(np.uint8)


def write_pgm(img: OfflineImage) -> bytes:
    px = image_to_bytes(img)
    h, w = px.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes()
