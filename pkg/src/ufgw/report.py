"""JSON-lines run reports.

A report is one JSON object per line.  The first line is the header::

    {"type": "header", "schema": "ufgw-report/1", "command": "...", "config": {...}}

and every later line carries a ``type`` field naming its record kind
(``batch``, ``node``, ``edge``, ``summary``, ``step``).  Keys keep their
insertion order and floats use the shortest round-trip repr, so equal runs
produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

SCHEMA = "ufgw-report/1"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no inf/nan; keep them readable and parseable
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.str_):
        return str(x)
    return x


@dataclass
class Report:
    command: str
    config: dict
    records: list = field(default_factory=list)
    schema: str = SCHEMA

    def add(self, kind, **fields):
        rec = {"type": kind}
        rec.update(fields)
        self.records.append(_plain(rec))
        return self

    def of_type(self, kind) -> list:
        return [r for r in self.records if r.get("type") == kind]

    @property
    def batches(self):
        return self.of_type("batch")

    @property
    def nodes(self):
        return self.of_type("node")

    def lines(self):
        header = {"type": "header", "schema": self.schema, "command": self.command,
                  "config": _plain(self.config)}
        yield json.dumps(header, allow_nan=False)
        for rec in self.records:
            yield json.dumps(rec, allow_nan=False)

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")


def parse_report(text, path="<report>") -> Report:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InputError("empty report", path)
    objs = []
    for lineno, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON: {exc.msg}", path, lineno) from None
        if not isinstance(obj, dict) or "type" not in obj:
            raise InputError("record without a 'type' field", path, lineno)
        objs.append(obj)
    head = objs[0]
    if head["type"] != "header" or "schema" not in head:
        raise InputError("first record must be the header", path, 1)
    if head["schema"] != SCHEMA:
        raise InputError(f"unsupported schema {head['schema']!r}", path, 1)
    return Report(head.get("command", ""), head.get("config", {}), objs[1:], head["schema"])


def read_report(path) -> Report:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read report: {exc.strerror or exc}", path) from exc
    return parse_report(text, str(path))
