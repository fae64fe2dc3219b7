"""Dataset manifests shared by every CLI stage.

A manifest is ``manifest.json`` in a dataset directory::

    {"format": "dualview-diff/manifest/v1",
     "metadata": {...},
     "entries": [{"subject_id": "...", "laterality": "right",
                  "cc_path": "x_cc.png", "mlo_path": "x_mlo.png",
                  "triple_stem": "x"}, ...]}

Entries carry view paths, a triple stem, or both. Paths are relative to the
manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dualview_diff.codec import DualViewPair
from dualview_diff.errors import ManifestError
from dualview_diff.imagecore import load_gray16, load_raw16, load_triple16, triple_paths

FORMAT = "dualview-diff/manifest/v1"
FILENAME = "manifest.json"


@dataclass
class Manifest:
    entries: list[dict]
    metadata: dict = field(default_factory=dict)
    root: Path = Path(".")

    def __post_init__(self):
        ids = [e.get("subject_id") for e in self.entries]
        if any(not isinstance(i, str) or not i for i in ids):
            raise ManifestError("every entry needs a non-empty subject_id")
        if len(set(ids)) != len(ids):
            raise ManifestError("subject_ids must be unique")
        for e in self.entries:
            if not (("cc_path" in e and "mlo_path" in e) or "triple_stem" in e):
                raise ManifestError(f"entry {e['subject_id']!r} has neither view paths nor a triple stem")

    def path(self, rel) -> Path:
        return self.root / rel

    def check_files(self) -> None:
        for e in self.entries:
            needed = [self.path(e["cc_path"]), self.path(e["mlo_path"])] if "cc_path" in e else []
            if "triple_stem" in e:
                needed += list(triple_paths(self.path(e["triple_stem"])))
            missing = [str(p) for p in needed if not p.exists()]
            if missing:
                raise ManifestError(f"entry {e['subject_id']!r}: missing files {missing}")

    def save(self, directory=None) -> Path:
        directory = Path(directory) if directory is not None else self.root
        directory.mkdir(parents=True, exist_ok=True)
        out = directory / FILENAME
        doc = {"format": FORMAT, "metadata": self.metadata, "entries": self.entries}
        out.write_text(json.dumps(doc, indent=2, sort_keys=True))
        return out

    def pairs(self, raw: bool = False) -> list[DualViewPair]:
        """Load every entry as a view pair (from view paths, else from the triple's first two planes)."""
        out = []
        for e in self.entries:
            if "cc_path" in e:
                load = load_raw16 if raw else load_gray16
                cc, mlo = load(self.path(e["cc_path"])), load(self.path(e["mlo_path"]))
            else:
                triple = load_triple16(self.path(e["triple_stem"]))
                cc, mlo = triple[0], triple[1]
                if raw:
                    cc, mlo = (np.floor(v * 65535 + 0.5).astype(np.uint16) for v in (cc, mlo))
            out.append(DualViewPair(cc, mlo, laterality=e.get("laterality"), subject_id=e["subject_id"]))
        return out

    def triples(self) -> list[np.ndarray]:
        out = []
        for e in self.entries:
            if "triple_stem" not in e:
                raise ManifestError(f"entry {e['subject_id']!r} has no triple_stem")
            out.append(load_triple16(self.path(e["triple_stem"])))
        return out


def load_manifest(path, check_files: bool = True) -> Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / FILENAME
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise ManifestError(f"{path}: unsupported manifest format {doc.get('format')!r}")
    m = Manifest(entries=list(doc.get("entries", [])), metadata=dict(doc.get("metadata", {})), root=path.parent)
    if check_files:
        m.check_files()
    return m
