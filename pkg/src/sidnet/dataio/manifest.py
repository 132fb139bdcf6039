"""Dataset manifests and the script label registry."""
import csv
import io
import os
from dataclasses import dataclass
from typing import Optional

from ..errors import ManifestError
from ..types import MODALITIES, OFFLINE, ONLINE, ModalityTag, Sample
from .formats import parse_pgm, parse_trajectory_file

MANIFEST_COLUMNS = ("id", "script", "level", "modality", "online_path", "offline_path")
LEVELS = ("character", "word")
DEFAULT_SCRIPTS = ("arcs", "angles", "loops", "waves", "hooks", "spirals", "matra")


class LabelRegistry:
    """Ordered script names; the class index is the position in the list."""

    def __init__(self, names=DEFAULT_SCRIPTS):
        names = tuple(names)
        if not names or len(set(names)) != len(names):
            raise ManifestError("label registry needs distinct, non-empty names")
        self.names = names
        self._index = {n: i for i, n in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def __eq__(self, other):
        return isinstance(other, LabelRegistry) and self.names == other.names

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise ManifestError(f"unknown script label {name!r}") from None

    def name(self, idx):
        return self.names[idx]


@dataclass
class SampleDescriptor:
    """A manifest row with paths resolved against the manifest directory."""

    id: str
    script: str
    level: str
    origin: ModalityTag
    online_path: Optional[str]
    offline_path: Optional[str]

    def load(self, origin_only=False) -> Sample:
        """Read the files. With ``origin_only`` the counterpart is left out
        even when it exists on disk."""
        online = offline = None
        want_on = self.online_path and (not origin_only or self.origin.modality == ONLINE)
        want_off = self.offline_path and (not origin_only or self.origin.modality == OFFLINE)
        if want_on:
            with open(self.online_path, "rb") as fh:
                online = parse_trajectory_file(fh.read())
        if want_off:
            with open(self.offline_path, "rb") as fh:
                offline = parse_pgm(fh.read())
        return Sample(self.id, self.script, self.level, self.origin, online, offline)


def load_manifest(path, registry: LabelRegistry = None, check_files=True):
    """Parse a manifest CSV. Every problem found is collected and raised
    together in one ``ManifestError``."""
    registry = registry or LabelRegistry()
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ManifestError(f"missing columns: {', '.join(missing)}")

    problems, out, seen = [], [], set()
    for rowno, row in enumerate(reader, start=2):
        where = f"row {rowno}"
        sid = (row["id"] or "").strip()
        if not sid:
            problems.append(f"{where}: empty id")
            continue
        where = f"row {rowno} ({sid})"
        if sid in seen:
            problems.append(f"{where}: duplicate id {sid!r}")
        seen.add(sid)
        script = row["script"]
        if script not in registry:
            problems.append(f"{where}: unknown script label {script!r}")
        level = row["level"]
        if level not in LEVELS:
            problems.append(f"{where}: level must be one of {LEVELS}, got {level!r}")
        modality = row["modality"]
        if modality not in MODALITIES:
            problems.append(f"{where}: modality must be one of {MODALITIES}, got {modality!r}")
            continue
        paths = {}
        for mod in MODALITIES:
            rel = (row[f"{mod}_path"] or "").strip()
            paths[mod] = os.path.join(base, rel) if rel else None
        if paths[modality] is None:
            problems.append(f"{where}: modality={modality} but {modality}_path is empty")
        if check_files:
            for mod, p in paths.items():
                if p is not None and not os.path.isfile(p):
                    problems.append(f"{where}: dangling {mod}_path {p}")
        out.append(SampleDescriptor(sid, script, level, ModalityTag.of(modality),
                                    paths[ONLINE], paths[OFFLINE]))
    if problems:
        raise ManifestError(problems)
    return out


def write_manifest(path, rows):
    """Write rows (dicts keyed by ``MANIFEST_COLUMNS``) with LF endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in rows:
            w.writerow([r.get(c, "") or "" for c in MANIFEST_COLUMNS])
