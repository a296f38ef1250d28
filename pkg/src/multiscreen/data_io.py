"""Manifest-driven ingestion of user-supplied study tables and atomic
result emission.

A manifest is a JSON document::

    {"entries": [{"study_id": "...", "data_path": "...",
                  "response_column": "..."}, ...],
     "feature_columns": ["g1", "g2", ...]}        # optional

Each data file is a CSV with a header row and one numeric row per
observation. Data paths are resolved relative to the manifest location.
When ``feature_columns`` is absent the feature set is the intersection of
the studies' non-response columns, in first-study order, and a warning
lists anything dropped.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ManifestError
from .screening import MultiStudy, Study

__all__ = [
    "ManifestEntry",
    "StudyManifest",
    "load_manifest",
    "load_multistudy",
    "write_multistudy",
    "write_json_atomic",
    "write_csv_atomic",
]


@dataclass(frozen=True)
class ManifestEntry:
    study_id: str
    data_path: Path
    response_column: str


@dataclass(frozen=True)
class StudyManifest:
    entries: tuple[ManifestEntry, ...]
    feature_columns: tuple[str, ...] | None


def load_manifest(manifest_path) -> StudyManifest:
    """Parse and validate a manifest document."""
    path = Path(manifest_path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise ManifestError(f"manifest {path} must be an object with an 'entries' list")
    if not doc["entries"]:
        raise ManifestError(f"manifest {path} lists no studies")
    base = path.parent
    entries = []
    for i, raw in enumerate(doc["entries"]):
        if not isinstance(raw, dict):
            raise ManifestError(f"manifest entry {i} must be an object")
        missing = [k for k in ("study_id", "data_path", "response_column")
                   if not isinstance(raw.get(k), str) or not raw.get(k)]
        if missing:
            raise ManifestError(
                f"manifest entry {i} is missing string field(s): {missing}")
        data_path = Path(raw["data_path"])
        if not data_path.is_absolute():
            data_path = base / data_path
        entries.append(ManifestEntry(study_id=raw["study_id"],
                                     data_path=data_path,
                                     response_column=raw["response_column"]))
    ids = [e.study_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"duplicate study ids in manifest: {ids}")
    feature_columns = doc.get("feature_columns")
    if feature_columns is not None:
        if (not isinstance(feature_columns, list)
                or not all(isinstance(c, str) for c in feature_columns)
                or not feature_columns):
            raise ManifestError("feature_columns must be a nonempty list of strings")
        if len(set(feature_columns)) != len(feature_columns):
            raise ManifestError("feature_columns contains duplicates")
        feature_columns = tuple(feature_columns)
    return StudyManifest(entries=tuple(entries), feature_columns=feature_columns)


def _read_table(path: Path, study_id: str) -> tuple[list[str], np.ndarray]:
    if not path.is_file():
        raise ManifestError(f"study {study_id!r}: data file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"study {study_id!r}: {path} is empty") from None
        header = [h.strip() for h in header]
        if any(not h for h in header):
            raise ManifestError(f"study {study_id!r}: {path} has an empty column name")
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise ManifestError(
                f"study {study_id!r}: duplicate column names in {path}: {dupes}")
        rows = []
        for row_num, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ManifestError(
                    f"study {study_id!r}: row {row_num} has {len(row)} cells, "
                    f"expected {len(header)} ({path})")
            parsed = []
            for col_name, cell in zip(header, row):
                try:
                    value = float(cell)
                except ValueError:
                    raise ManifestError(
                        f"study {study_id!r}: malformed numeric {cell!r} at "
                        f"row {row_num}, column {col_name} ({path})") from None
                if not np.isfinite(value):
                    raise ManifestError(
                        f"study {study_id!r}: non-finite value at row "
                        f"{row_num}, column {col_name} ({path})")
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise ManifestError(f"study {study_id!r}: {path} has no data rows")
    return header, np.asarray(rows, dtype=float)


def load_multistudy(manifest_path) -> MultiStudy:
    """Load every study in a manifest into one aligned MultiStudy."""
    manifest = load_manifest(manifest_path)
    tables = {}
    for entry in manifest.entries:
        header, values = _read_table(entry.data_path, entry.study_id)
        if entry.response_column not in header:
            raise ManifestError(
                f"study {entry.study_id!r}: response column "
                f"{entry.response_column!r} not in {entry.data_path}")
        tables[entry.study_id] = (header, values)

    if manifest.feature_columns is not None:
        features = list(manifest.feature_columns)
        for entry in manifest.entries:
            header, _ = tables[entry.study_id]
            if entry.response_column in features:
                raise ManifestError(
                    f"study {entry.study_id!r}: response column "
                    f"{entry.response_column!r} is listed in feature_columns")
            absent = [c for c in features if c not in header]
            if absent:
                raise ManifestError(
                    f"study {entry.study_id!r}: feature column(s) {absent} "
                    f"not in {entry.data_path}")
    else:
        first = manifest.entries[0]
        candidate = [c for c in tables[first.study_id][0]
                     if c != first.response_column]
        shared = set(candidate)
        union = set(candidate)
        for entry in manifest.entries[1:]:
            cols = {c for c in tables[entry.study_id][0]
                    if c != entry.response_column}
            shared &= cols
            union |= cols
        features = [c for c in candidate if c in shared]
        if not features:
            raise ManifestError("studies share no feature columns")
        dropped = sorted(union - shared)
        if dropped:
            warnings.warn(
                f"dropping {len(dropped)} column(s) not shared by every "
                f"study: {dropped}", stacklevel=2)

    studies = []
    for entry in manifest.entries:
        header, values = tables[entry.study_id]
        col_of = {c: i for i, c in enumerate(header)}
        x = values[:, [col_of[c] for c in features]]
        y = values[:, col_of[entry.response_column]]
        studies.append(Study(id=entry.study_id, x=x, y=y))
    return MultiStudy(studies=tuple(studies), feature_names=tuple(features))


def write_multistudy(data: MultiStudy, directory,
                     manifest_name: str = "manifest.json") -> Path:
    """Export a MultiStudy as per-study CSVs plus a manifest; floats use
    shortest round-trip formatting so a reload reproduces values exactly.
    Returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    response = "response"
    while response in data.feature_names:
        response = "_" + response
    entries = []
    for study in data.studies:
        file_name = f"{study.id}.csv"
        header = [response, *data.feature_names]
        rows = [[repr(float(study.y[i]))]
                + [repr(float(v)) for v in study.x[i]]
                for i in range(study.n)]
        write_csv_atomic(directory / file_name, header, rows)
        entries.append({"study_id": study.id, "data_path": file_name,
                        "response_column": response})
    manifest = {"entries": entries, "feature_columns": list(data.feature_names)}
    path = directory / manifest_name
    write_json_atomic(path, manifest)
    return path


def write_json_atomic(path, payload) -> None:
    """Serialize to JSON deterministically and rename into place."""
    path = Path(path)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    _replace_with(path, text)


def write_csv_atomic(path, header, rows) -> None:
    path = Path(path)
    lines = [",".join(str(c) for c in header)]
    lines.extend(",".join(str(c) for c in row) for row in rows)
    _replace_with(path, "\n".join(lines) + "\n")


def _replace_with(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
