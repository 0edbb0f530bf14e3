"""Dataset manifest: one tab-separated row per cube record."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator


@dataclass(frozen=True)
class ManifestRecord:
    record_id: str
    test_id: int
    antenna_id: int
    class_label: int
    crop_index: int
    cube_path: str
    spectrogram_path: str = ""


COLUMNS = [f.name for f in fields(ManifestRecord)]
_INT_COLUMNS = {"test_id", "antenna_id", "class_label", "crop_index"}


class DatasetManifest:
    """Ordered record catalog. ``root`` resolves the relative file paths."""

    def __init__(self, records: Iterable[ManifestRecord], root=None):
        self.records = list(records)
        self.root = Path(root) if root is not None else None
        ids = [r.record_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest record ids are not unique")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ManifestRecord]:
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __eq__(self, other):
        return isinstance(other, DatasetManifest) and self.records == other.records

    @property
    def antenna_ids(self) -> list[int]:
        return sorted({r.antenna_id for r in self.records})

    @property
    def num_classes(self) -> int:
        return max(r.class_label for r in self.records) + 1

    def resolve(self, rel_path: str) -> Path:
        return self.root / rel_path if self.root is not None else Path(rel_path)

    def subset(self, records: Iterable[ManifestRecord]) -> "DatasetManifest":
        return DatasetManifest(records, self.root)


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(COLUMNS)
        for rec in manifest:
            writer.writerow(astuple(rec))


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        missing = set(COLUMNS[:-1]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"manifest {path} lacks columns {sorted(missing)}")
        rows = []
        for row in reader:
            kwargs = {k: (int(row[k]) if k in _INT_COLUMNS else row.get(k) or "")
                      for k in COLUMNS}
            rows.append(ManifestRecord(**kwargs))
    return DatasetManifest(rows, root=path.parent)
