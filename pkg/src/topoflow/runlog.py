"""Run-log and artifact I/O: JSONL logs with a schema version, atomic writes.

All file outputs go through temp-file + rename so an interrupted run never
leaves a half-written artifact.  Log records are JSON objects with a
``schema_version`` and ``type`` field; see README for the record types.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def atomic_write(path: str, text: str) -> None:
    """Write via temp + rename in the destination directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, doc: dict) -> None:
    atomic_write(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_jsonl(path: str, records: list[dict]) -> None:
    lines = []
    for rec in records:
        rec = dict(rec)
        rec.setdefault("schema_version", SCHEMA_VERSION)
        lines.append(dumps(rec))
    atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def write_csv(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    atomic_write(path, buf.getvalue())


def read_jsonl(path: str) -> tuple[list[dict], int]:
    """Parse a JSONL file; corrupt lines are skipped and counted."""
    records: list[dict] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                skipped += 1
                logger.warning("%s:%d: skipping corrupt log line", path, lineno)
    return records, skipped
