"""Privacy-compliant document store for tweet records.

Records live in append-only JSONL segment files under a store directory.
Deletions are masked in memory the moment a compliance request is applied,
so no query path can observe a deleted record afterwards. Physical removal
happens at compaction, which rewrites the segments without the deleted
records and without the deletion log lines that referenced them.

Segment line layout::

    {"op": "put", "seq": 17, "record": {...}}
    {"op": "del", "seq": 18, "ids": ["..."]}
    {"op": "ban", "seq": 19, "kind": "delete_user", "target_id": "..."}

``ban`` lines only appear when the store remembers deletion requests as
standing bans (``remember_deletions=True``).
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

#: The 18 languages scored by the sentiment service, in alphabetical order.
LANGUAGES: tuple[str, ...] = (
    "ar", "da", "de", "el", "en", "es", "fi", "fr", "it",
    "ja", "nl", "no", "pl", "pt", "ru", "sv", "tr", "zh",
)

COUNT_FIELDS: tuple[str, ...] = (
    "followers_count",
    "friends_count",
    "statuses_count",
    "actor_favorites_count",
    "actor_listed_count",
    "mention_count",
    "hashtags_count",
    "media_count",
    "url_count",
    "symbol_count",
    "retweet_total",
    "favorite_total",
)

SEGMENT_PREFIX = "segment-"
SEGMENT_SUFFIX = ".jsonl"


class RecordError(ValueError):
    """A record or request failed schema validation."""


class StoreUnavailableError(RuntimeError):
    """The store directory cannot be read or written."""


def parse_timestamp(value: Any) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, str):
        text = value.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(text)
        except ValueError as exc:
            raise RecordError(f"invalid timestamp {value!r}") from exc
    else:
        raise RecordError(f"invalid timestamp {value!r}")
    if dt.tzinfo is None:
        raise RecordError(f"timestamp {value!r} has no UTC offset")
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S") + (
        f".{dt.microsecond:06d}Z" if dt.microsecond else "Z"
    )


def _require_str(data: Mapping[str, Any], name: str) -> str:
    value = data.get(name)
    if not isinstance(value, str) or (name != "text" and not value):
        raise RecordError(f"field {name!r} must be a non-empty string")
    return value


def _require_bool(data: Mapping[str, Any], name: str) -> bool:
    value = data.get(name)
    if not isinstance(value, bool):
        raise RecordError(f"field {name!r} must be a boolean")
    return value


def _require_count(data: Mapping[str, Any], name: str) -> int:
    value = data.get(name)
    if isinstance(value, bool) or not isinstance(value, int):
        raise RecordError(f"field {name!r} must be an integer")
    if value < 0:
        raise RecordError(f"field {name!r} is negative ({value})")
    return value


@dataclass(frozen=True)
class TweetRecord:
    id: str
    author_id: str
    followers_count: int
    friends_count: int
    statuses_count: int
    actor_favorites_count: int
    actor_listed_count: int
    actor_verified: bool
    account_created_at: datetime
    posted_at: datetime
    is_quote: bool
    mention_count: int
    hashtags_count: int
    media_count: int
    url_count: int
    symbol_count: int
    language_code: str
    text: str
    retweet_total: int
    favorite_total: int

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TweetRecord":
        """Validate a decoded JSON object and build a record.

        Raises
        ------
        RecordError
            If a field is missing, mistyped, negative, or the timestamps are
            out of order.
        """
        if not isinstance(data, Mapping):
            raise RecordError("record must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise RecordError(f"unknown fields: {', '.join(extra)}")
        missing = sorted(known - set(data))
        if missing:
            raise RecordError(f"missing fields: {', '.join(missing)}")

        language = _require_str(data, "language_code")
        if language not in LANGUAGES:
            raise RecordError(f"unsupported language_code {language!r}")
        created = parse_timestamp(data["account_created_at"])
        posted = parse_timestamp(data["posted_at"])
        if posted < created:
            raise RecordError("posted_at precedes account_created_at")

        kwargs: dict[str, Any] = {name: _require_count(data, name) for name in COUNT_FIELDS}
        return cls(
            id=_require_str(data, "id"),
            author_id=_require_str(data, "author_id"),
            actor_verified=_require_bool(data, "actor_verified"),
            is_quote=_require_bool(data, "is_quote"),
            account_created_at=created,
            posted_at=posted,
            language_code=language,
            text=_require_str(data, "text"),
            **kwargs,
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, datetime):
                value = format_timestamp(value)
            out[f.name] = value
        return out


class RequestKind(str, Enum):
    DELETE_STATUS = "delete_status"
    DELETE_USER = "delete_user"


@dataclass(frozen=True)
class ComplianceRequest:
    kind: RequestKind
    target_id: str
    received_at: datetime

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ComplianceRequest":
        if not isinstance(data, Mapping):
            raise RecordError("request must be a JSON object")
        try:
            kind = RequestKind(data.get("kind"))
        except ValueError as exc:
            raise RecordError(f"unknown request kind {data.get('kind')!r}") from exc
        return cls(
            kind=kind,
            target_id=_require_str(data, "target_id"),
            received_at=parse_timestamp(data.get("received_at")),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "target_id": self.target_id,
            "received_at": format_timestamp(self.received_at),
        }


@dataclass
class IngestSummary:
    accepted: int = 0
    rejected_duplicates: int = 0
    rejected_malformed: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "accepted": self.accepted,
            "rejected_duplicates": self.rejected_duplicates,
            "rejected_malformed": [
                {"index": i, "reason": reason} for i, reason in self.rejected_malformed
            ],
        }


@dataclass
class ComplianceSummary:
    deleted_documents: int = 0
    affected_authors: int = 0
    rejected_malformed: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "deleted_documents": self.deleted_documents,
            "affected_authors": self.affected_authors,
            "rejected_malformed": [
                {"index": i, "reason": reason} for i, reason in self.rejected_malformed
            ],
        }


@dataclass(frozen=True)
class Snapshot:
    """Live records as of store sequence number ``seq``."""

    seq: int
    records: tuple[TweetRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TweetRecord]:
        return iter(self.records)

    @property
    def ids(self) -> set[str]:
        return {r.id for r in self.records}


def make_filter(
    languages: Iterable[str] | None = None,
    posted_from: datetime | None = None,
    posted_until: datetime | None = None,
) -> Callable[[TweetRecord], bool]:
    """Build a snapshot predicate on language and a half-open posting window."""
    langs = frozenset(languages) if languages is not None else None

    def predicate(record: TweetRecord) -> bool:
        if langs is not None and record.language_code not in langs:
            return False
        if posted_from is not None and record.posted_at < posted_from:
            return False
        if posted_until is not None and record.posted_at >= posted_until:
            return False
        return True

    return predicate


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), sort_keys=True)


class DocumentStore:
    """Append-only tweet store with immediate deletion masking.

    Parameters
    ----------
    path : str or Path
        Store directory; created if absent. Existing segments are replayed.
    remember_deletions : bool
        When true, compliance requests are kept as standing bans so a record
        deleted before it was ingested is refused on arrival. Off by default:
        a request only affects records present when it is applied.
    segment_max_lines : int
        Roll over to a new segment file after this many lines.
    compact_dead_ratio : float
        Compact automatically once dead lines exceed this fraction of all
        segment lines. ``None`` disables automatic compaction.
    fsync : bool
        fsync segment files after every batch.
    """

    def __init__(
        self,
        path: str | os.PathLike[str],
        *,
        remember_deletions: bool = False,
        segment_max_lines: int = 100_000,
        compact_dead_ratio: float | None = 0.5,
        fsync: bool = False,
    ) -> None:
        self.path = Path(path)
        self.remember_deletions = remember_deletions
        self.segment_max_lines = segment_max_lines
        self.compact_dead_ratio = compact_dead_ratio
        self.fsync = fsync

        self._lock = threading.RLock()
        self._records: dict[str, TweetRecord] = {}
        self._by_author: dict[str, set[str]] = {}
        self._banned_ids: set[str] = set()
        self._banned_authors: set[str] = set()
        self._seq = 0
        self._total_lines = 0
        self._dead_lines = 0
        self._segment_index = 0
        self._segment_lines = 0
        self._handle: Any = None

        try:
            self.path.mkdir(parents=True, exist_ok=True)
            self._replay()
        except OSError as exc:
            raise StoreUnavailableError(f"cannot open store at {self.path}: {exc}") from exc

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            if self._handle is not None:
                self._handle.close()
                self._handle = None

    def __enter__(self) -> "DocumentStore":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    @property
    def seq(self) -> int:
        with self._lock:
            return self._seq

    def segment_files(self) -> list[Path]:
        return sorted(self.path.glob(f"{SEGMENT_PREFIX}*{SEGMENT_SUFFIX}"))

    def _replay(self) -> None:
        segments = self.segment_files()
        for segment in segments:
            with open(segment, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        self._replay_entry(entry)
                    except (ValueError, KeyError, RecordError) as exc:
                        raise StoreUnavailableError(
                            f"corrupt segment {segment.name}:{lineno}: {exc}"
                        ) from exc
                    self._total_lines += 1
        if segments:
            self._segment_index = int(segments[-1].name[len(SEGMENT_PREFIX):-len(SEGMENT_SUFFIX)])
            with open(segments[-1], encoding="utf-8") as fh:
                self._segment_lines = sum(1 for line in fh if line.strip())
        if self._records or self._total_lines:
            logger.info("replayed %d live records from %d segments", len(self._records), len(segments))

    def _replay_entry(self, entry: dict[str, Any]) -> None:
        op = entry["op"]
        self._seq = max(self._seq, int(entry["seq"]))
        if op == "put":
            record = TweetRecord.from_dict(entry["record"])
            self._insert(record)
        elif op == "del":
            for doc_id in entry["ids"]:
                self._remove(doc_id)
                self._dead_lines += 1
            self._dead_lines += 1
        elif op == "ban":
            kind = RequestKind(entry["kind"])
            target = entry["target_id"]
            (self._banned_ids if kind is RequestKind.DELETE_STATUS else self._banned_authors).add(target)
        else:
            raise KeyError(f"unknown op {op!r}")

    # -- in-memory index ---------------------------------------------------

    def _insert(self, record: TweetRecord) -> None:
        self._records[record.id] = record
        self._by_author.setdefault(record.author_id, set()).add(record.id)

    def _remove(self, doc_id: str) -> TweetRecord | None:
        record = self._records.pop(doc_id, None)
        if record is not None:
            ids = self._by_author[record.author_id]
            ids.discard(doc_id)
            if not ids:
                del self._by_author[record.author_id]
        return record

    # -- segment I/O -------------------------------------------------------

    def _segment_path(self, index: int) -> Path:
        return self.path / f"{SEGMENT_PREFIX}{index:06d}{SEGMENT_SUFFIX}"

    def _append_line(self, entry: dict[str, Any]) -> None:
        if self._handle is None or self._segment_lines >= self.segment_max_lines:
            if self._handle is not None:
                self._handle.close()
            if self._segment_index == 0 or self._segment_lines >= self.segment_max_lines:
                self._segment_index += 1
                self._segment_lines = 0
            self._handle = open(self._segment_path(self._segment_index), "a", encoding="utf-8")
        self._handle.write(_dumps(entry) + "\n")
        self._segment_lines += 1
        self._total_lines += 1

    def _flush(self) -> None:
        if self._handle is not None:
            self._handle.flush()
            if self.fsync:
                os.fsync(self._handle.fileno())

    # -- operations --------------------------------------------------------

    def ingest(self, records: Iterable[TweetRecord | Mapping[str, Any]]) -> IngestSummary:
        """Add records; duplicates of a live or previously stored id are refused.

        Malformed entries are rejected individually with a reason; the first
        record seen for an id wins.
        """
        summary = IngestSummary()
        try:
            for index, item in enumerate(records):
                if isinstance(item, RecordError):
                    summary.rejected_malformed.append((index, str(item)))
                    continue
                try:
                    record = item if isinstance(item, TweetRecord) else TweetRecord.from_dict(item)
                except RecordError as exc:
                    summary.rejected_malformed.append((index, str(exc)))
                    continue
                with self._lock:
                    if record.id in self._records:
                        summary.rejected_duplicates += 1
                        continue
                    if record.id in self._banned_ids or record.author_id in self._banned_authors:
                        summary.rejected_malformed.append((index, "target of a standing deletion request"))
                        continue
                    self._seq += 1
                    self._append_line({"op": "put", "seq": self._seq, "record": record.to_dict()})
                    self._insert(record)
                    summary.accepted += 1
            with self._lock:
                self._flush()
        except OSError as exc:
            raise StoreUnavailableError(f"ingest failed: {exc}") from exc
        return summary

    def apply_compliance(
        self, requests: Iterable[ComplianceRequest | Mapping[str, Any]]
    ) -> ComplianceSummary:
        """Permanently delete every record targeted by the requests.

        Requests for absent targets are legal no-ops. Re-applying a request
        writes nothing, so the store files stay byte-identical.
        """
        summary = ComplianceSummary()
        authors: set[str] = set()
        try:
            for index, item in enumerate(requests):
                if isinstance(item, RecordError):
                    summary.rejected_malformed.append((index, str(item)))
                    continue
                try:
                    request = (
                        item if isinstance(item, ComplianceRequest) else ComplianceRequest.from_dict(item)
                    )
                except RecordError as exc:
                    summary.rejected_malformed.append((index, str(exc)))
                    continue
                with self._lock:
                    removed = self._apply_one(request)
                summary.deleted_documents += len(removed)
                authors.update(r.author_id for r in removed)
            with self._lock:
                self._flush()
                self._maybe_compact()
        except OSError as exc:
            raise StoreUnavailableError(f"compliance application failed: {exc}") from exc
        summary.affected_authors = len(authors)
        return summary

    def _apply_one(self, request: ComplianceRequest) -> list[TweetRecord]:
        if request.kind is RequestKind.DELETE_STATUS:
            targets = [request.target_id] if request.target_id in self._records else []
            bans = self._banned_ids
        else:
            targets = sorted(self._by_author.get(request.target_id, ()))
            bans = self._banned_authors

        if self.remember_deletions and request.target_id not in bans:
            bans.add(request.target_id)
            self._seq += 1
            self._append_line(
                {"op": "ban", "seq": self._seq, "kind": request.kind.value, "target_id": request.target_id}
            )
        if not targets:
            return []
        self._seq += 1
        self._append_line({"op": "del", "seq": self._seq, "ids": targets})
        removed = [r for r in (self._remove(doc_id) for doc_id in targets) if r is not None]
        self._dead_lines += len(removed) + 1
        return removed

    def snapshot(self, predicate: Callable[[TweetRecord], bool] | None = None) -> Snapshot:
        """Return the live records at the current sequence number."""
        with self._lock:
            seq = self._seq
            live = list(self._records.values())
        if predicate is not None:
            live = [r for r in live if predicate(r)]
        return Snapshot(seq=seq, records=tuple(live))

    def contains(self, doc_id: str) -> bool:
        with self._lock:
            return doc_id in self._records

    # -- compaction --------------------------------------------------------

    def _maybe_compact(self) -> None:
        if self.compact_dead_ratio is None or self._total_lines == 0:
            return
        if self._dead_lines / self._total_lines > self.compact_dead_ratio:
            self.compact()

    def compact(self) -> None:
        """Rewrite all segments keeping only live records and standing bans.

        After compaction no byte of a deleted record remains in the store
        directory.
        """
        with self._lock:
            if self._handle is not None:
                self._handle.close()
                self._handle = None
            old = self.segment_files()
            tmp = self.path / "compact.tmp"
            lines = 0
            with open(tmp, "w", encoding="utf-8") as fh:
                for kind, targets in (
                    (RequestKind.DELETE_STATUS, self._banned_ids),
                    (RequestKind.DELETE_USER, self._banned_authors),
                ):
                    for target in sorted(targets):
                        fh.write(_dumps({"op": "ban", "seq": 0, "kind": kind.value, "target_id": target}) + "\n")
                        lines += 1
                seq_marker_written = False
                for record in self._records.values():
                    fh.write(_dumps({"op": "put", "seq": self._seq, "record": record.to_dict()}) + "\n")
                    seq_marker_written = True
                    lines += 1
                if not seq_marker_written and self._seq:
                    # keep the sequence counter monotone across reopen
                    fh.write(_dumps({"op": "del", "seq": self._seq, "ids": []}) + "\n")
                    lines += 1
                fh.flush()
                os.fsync(fh.fileno())
            for segment in old:
                segment.unlink()
            self._segment_index = 1
            os.replace(tmp, self._segment_path(self._segment_index))
            self._segment_lines = lines
            self._total_lines = lines
            self._dead_lines = 0
            logger.info("compacted store to %d live records", len(self._records))


def read_jsonl(path: str | os.PathLike[str]) -> Iterator[Any]:
    """Yield decoded objects from a JSONL file.

    A line that is not valid JSON yields a :class:`RecordError` in its place,
    which ``ingest`` and ``apply_compliance`` count as a per-line rejection.
    """
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except ValueError as exc:
                yield RecordError(f"invalid JSON: {exc}")
