"""Raw experiment records and their JSON Lines serialization."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO


class RecordParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip())
        self.line = line
        self.source = source


class BrowserFamily(str, enum.Enum):
    CHROME = "Chrome"
    FIREFOX = "Firefox"
    BRAVE = "Brave"
    OPERA = "Opera"
    SAFARI = "Safari"
    IE = "IE"
    OTHER = "Other"


@dataclass(frozen=True)
class RawRecord:
    """One experiment performed by one user."""

    user_id: str
    experiment_seq: int = 1
    browser_family: BrowserFamily = BrowserFamily.CHROME
    is_mobile: bool = False
    user_agent: str = ""
    screen_resolution: str = ""
    fonts: str = ""
    canvas_hash: str = ""
    extension_detection_error: bool = False
    js_enabled: bool = True
    detected_extensions: frozenset[str] = field(default_factory=frozenset)
    detected_logins: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "browser_family", BrowserFamily(self.browser_family))
        object.__setattr__(self, "detected_extensions", frozenset(self.detected_extensions))
        object.__setattr__(self, "detected_logins", frozenset(self.detected_logins))
        if self.experiment_seq < 1:
            raise ValueError(f"experiment_seq must be >= 1, got {self.experiment_seq}")

    @property
    def detected_count(self) -> int:
        return len(self.detected_extensions) + len(self.detected_logins)

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "experiment_seq": self.experiment_seq,
            "browser_family": self.browser_family.value,
            "is_mobile": self.is_mobile,
            "user_agent": self.user_agent,
            "screen_resolution": self.screen_resolution,
            "fonts": self.fonts,
            "canvas_hash": self.canvas_hash,
            "extension_detection_error": self.extension_detection_error,
            "js_enabled": self.js_enabled,
            # sorted so that output is byte-stable
            "detected_extensions": sorted(self.detected_extensions),
            "detected_logins": sorted(self.detected_logins),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RawRecord":
        known = {k: obj[k] for k in _FIELDS if k in obj}
        if "user_id" not in known:
            raise ValueError("missing field 'user_id'")
        known["user_id"] = str(known["user_id"])
        for key in ("detected_extensions", "detected_logins"):
            if key in known and not isinstance(known[key], list):
                raise ValueError(f"field {key!r} must be a list")
        return cls(**known)


_FIELDS = tuple(RawRecord.__dataclass_fields__)


def iter_records(stream: TextIO, source: str | None = None) -> Iterator[RawRecord]:
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordParseError(f"invalid JSON: {exc.msg}", lineno, source) from None
        if not isinstance(obj, dict):
            raise RecordParseError("record must be a JSON object", lineno, source)
        try:
            yield RawRecord.from_json(obj)
        except (TypeError, ValueError) as exc:
            raise RecordParseError(str(exc), lineno, source) from None


def read_records(path: str | Path) -> list[RawRecord]:
    path = Path(path)
    with path.open() as fh:
        return list(iter_records(fh, str(path)))


def dumps_records(records: Iterable[RawRecord]) -> str:
    return "".join(json.dumps(r.to_json(), separators=(",", ":")) + "\n" for r in records)


def write_records(records: Iterable[RawRecord], path: str | Path) -> None:
    Path(path).write_text(dumps_records(records))
