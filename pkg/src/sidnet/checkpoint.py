"""Binary checkpoint format.

Layout: the 8-byte magic ``SIDNET01``, then records of::

    u32 name_length | name (UTF-8) | u8 rank | rank x u32 dims | float32 values

all little-endian, then a u32 CRC-32 of every byte between the magic and the
CRC. Model settings travel as extra records whose names start with
``__meta__/``: string settings are encoded in the name itself
(``__meta__/arch/dual``, rank 0), integer tuples as rank-1 arrays, and the
label registry as ``__meta__/label/<index>/<name>``.
"""
import struct
import zlib

import numpy as np

from .dataio.manifest import LabelRegistry
from .errors import FormatError
from .model import ModelConfig, ScriptNet

MAGIC = b"SIDNET01"
META = "__meta__/"


def encode_records(records):
    out = bytearray()
    for name, arr in records:
        arr = np.asarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


def write_checkpoint(records) -> bytes:
    payload = encode_records(records)
    return MAGIC + payload + struct.pack("<I", zlib.crc32(payload))


def read_checkpoint(data: bytes):
    """Return the list of (name, float32 array) records; CRC is verified first."""
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    payload = data[len(MAGIC):-4]
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise FormatError("checkpoint CRC mismatch")
    records, pos = [], 0
    try:
        while pos < len(payload):
            (n,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            name = payload[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", payload, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", payload, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * count > len(payload):
                raise FormatError(f"record {name!r} runs past the end")
            arr = np.frombuffer(payload, dtype="<f4", count=count, offset=pos).reshape(dims)
            pos += 4 * count
            records.append((name, arr.astype(np.float32)))
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed checkpoint record: {exc}") from None
    return records


def model_records(model: ScriptNet, registry: LabelRegistry):
    cfg = model.config
    recs = [
        (f"{META}arch/{cfg.arch}", np.float32(0)),
        (f"{META}fusion/{cfg.fusion}", np.float32(0)),
        (f"{META}num_classes", np.array([cfg.num_classes])),
        (f"{META}hidden", np.array([cfg.hidden])),
        (f"{META}online_widths", np.array(cfg.online_widths)),
        (f"{META}offline_widths", np.array(cfg.offline_widths)),
    ]
    recs += [(f"{META}label/{i}/{n}", np.float32(0)) for i, n in enumerate(registry.names)]
    recs += sorted(model.state_dict().items())
    return recs


def save_model(path, model, registry):
    data = write_checkpoint(model_records(model, registry))
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def load_model(path):
    """Rebuild a model (in eval mode) and its label registry from a checkpoint file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from None
    records = read_checkpoint(data)
    meta, state, labels = {}, {}, {}
    for name, arr in records:
        if not name.startswith(META):
            state[name] = arr
            continue
        parts = name[len(META):].split("/")
        if parts[0] == "label" and len(parts) == 3:
            labels[int(parts[1])] = parts[2]
        elif len(parts) == 2:
            meta[parts[0]] = parts[1]
        else:
            meta[parts[0]] = tuple(int(v) for v in arr.ravel())
    try:
        cfg = ModelConfig(
            arch=meta["arch"], fusion=meta["fusion"],
            num_classes=meta["num_classes"][0], hidden=meta["hidden"][0],
            online_widths=meta["online_widths"], offline_widths=meta["offline_widths"],
        )
        registry = LabelRegistry([labels[i] for i in range(len(labels))])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint metadata incomplete: {exc}") from None
    model = ScriptNet(cfg, np.random.default_rng(0))
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint does not match its architecture: {exc}") from None
    return model.eval(), registry
