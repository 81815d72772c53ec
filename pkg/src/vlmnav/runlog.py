"""Line-delimited run logs: one header line, then one record per tick.

Records serialize with sorted keys so identical runs produce byte-identical
files; the only wall-clock-derived fields are ``wall_time`` and query
``latency``, which determinism comparisons strip by name.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

LOG_SCHEMA_VERSION = 1
TIME_FIELDS = {"wall_time", "latency"}


@dataclass(frozen=True)
class QueryEvent:
    request_id: str
    phase: str  # "started" | "completed"
    prompt: str | None = None
    marker_labels: tuple[int, ...] | None = None
    image_file: str | None = None
    context_id: str | None = None
    markers: tuple[int, ...] | None = None
    raw_text: str | None = None
    latency: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class RunLogRecord:
    tick: int
    wall_time: float
    pose: tuple[float, float, float]
    cmd_v: float
    cmd_omega: float
    state_v: float
    state_omega: float
    decision: str
    path_id: int | None = None
    path_points: tuple[tuple[float, float], ...] | None = None
    context_id: str | None = None
    context_probs: tuple[float, ...] | None = None
    query_started: QueryEvent | None = None
    query_completed: QueryEvent | None = None
    collision: bool = False


@dataclass(frozen=True)
class RunLogHeader:
    scenario: str
    source: str  # vlm | baseline | teleop | replay
    seed: int
    tick_rate: float
    goal: tuple[float, float]
    start_pose: tuple[float, float, float]
    schema: int = LOG_SCHEMA_VERSION
    extra: dict = field(default_factory=dict)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


class RunLogWriter:
    def __init__(self, path: str | Path, header: RunLogHeader):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8")
        self._write({"type": "header", **_clean(asdict(header))})

    def _write(self, doc: dict):
        self._fh.write(json.dumps(doc, sort_keys=True) + "\n")

    def append(self, record: RunLogRecord):
        self._write({"type": "record", **_clean(asdict(record))})

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class RunLog:
    header: dict
    records: list[dict]

    @property
    def poses(self) -> list[tuple[float, float, float]]:
        return [tuple(r["pose"]) for r in self.records]

    @property
    def commands(self) -> list[tuple[float, float]]:
        return [(r["cmd_v"], r["cmd_omega"]) for r in self.records]

    def query_events(self, phase: str | None = None) -> list[dict]:
        out = []
        for r in self.records:
            for key in ("query_started", "query_completed"):
                ev = r.get(key)
                if ev is not None and (phase is None or ev["phase"] == phase):
                    out.append(ev)
        return out


def read_runlog(path: str | Path) -> RunLog:
    header = None
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            kind = doc.pop("type", None)
            if kind == "header":
                if header is not None:
                    raise ValueError(f"{path}:{line_no}: duplicate header")
                header = doc
            elif kind == "record":
                records.append(doc)
            else:
                raise ValueError(f"{path}:{line_no}: unknown line type {kind!r}")
    if header is None:
        raise ValueError(f"{path}: missing header line")
    return RunLog(header=header, records=records)


def strip_time_fields(path: str | Path) -> str:
    """Log content with wall-clock fields removed (determinism comparisons)."""

    def scrub(obj):
        if isinstance(obj, dict):
            return {k: scrub(v) for k, v in obj.items() if k not in TIME_FIELDS}
        if isinstance(obj, list):
            return [scrub(v) for v in obj]
        return obj

    lines = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                lines.append(json.dumps(scrub(json.loads(line)), sort_keys=True))
    return "\n".join(lines)
