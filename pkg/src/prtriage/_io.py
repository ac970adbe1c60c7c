"""Small helpers for the ``#``-commented CSV files every stage writes."""

from __future__ import annotations

import csv
from typing import IO, Iterable


def header_line(**meta) -> str:
    parts = [f"{k}={v}" for k, v in meta.items() if v is not None]
    return "# " + " ".join(parts) + "\n"


def read_header_comment(lines: Iterable[str]) -> dict[str, str]:
    meta: dict[str, str] = {}
    for line in lines:
        if not line.startswith("#"):
            break
        for tok in line[1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
    return meta


def write_table(sink: IO[str], columns: Iterable[str], rows: Iterable[Iterable], **meta) -> None:
    if meta:
        sink.write(header_line(**meta))
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(list(columns))
    for row in rows:
        w.writerow(list(row))


def read_table(source: IO[str]) -> tuple[dict[str, str], list[dict[str, str]]]:
    lines = source.read().splitlines()
    meta = read_header_comment(lines)
    rows = list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))
    return meta, rows
