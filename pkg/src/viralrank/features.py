"""Tweet feature extraction into a typed, modality-tagged columnar matrix."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

import numpy as np

from .store import COUNT_FIELDS, LANGUAGES, TweetRecord

logger = logging.getLogger(__name__)

MODALITIES = ("A", "C", "T", "L")
KINDS = ("ordinal", "categorical", "continuous")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    modality: str
    kind: str
    transform: str = "identity"
    n_categories: int = 0


#: Output columns in order. The first 20 are the core features;
#: the two ratio features are appended to the author block.
FEATURES: tuple[FeatureSpec, ...] = (
    FeatureSpec("followersCount", "A", "ordinal"),
    FeatureSpec("friendsCount", "A", "ordinal"),
    FeatureSpec("accountAgeDays", "A", "ordinal"),
    FeatureSpec("statusesCount", "A", "ordinal"),
    FeatureSpec("actorFavoritesCount", "A", "ordinal", "log1p"),
    FeatureSpec("actorListedCount", "A", "ordinal", "log1p"),
    FeatureSpec("actorVerified", "A", "categorical", n_categories=2),
    FeatureSpec("tweetsPerDay", "A", "continuous", "statusesCount/max(accountAgeDays,1)"),
    FeatureSpec("followersPerStatus", "A", "continuous", "followersCount/max(statusesCount,1)"),
    FeatureSpec("attachmentCount", "C", "ordinal"),
    FeatureSpec("mentionCount", "C", "ordinal"),
    FeatureSpec("hashtagsCount", "C", "ordinal"),
    FeatureSpec("mediaCount", "C", "ordinal"),
    FeatureSpec("urlCount", "C", "ordinal"),
    FeatureSpec("isQuote", "C", "categorical", n_categories=2),
    FeatureSpec("languageIndex", "L", "categorical", n_categories=len(LANGUAGES)),
    FeatureSpec("sentimentValue", "L", "continuous"),
    FeatureSpec("postedHour", "T", "ordinal"),
    FeatureSpec("postedDay", "T", "ordinal"),
    FeatureSpec("postedMonth", "T", "ordinal"),
    FeatureSpec("postedDayTime", "T", "categorical", n_categories=4),
    FeatureSpec("postedWeekDay", "T", "categorical", n_categories=7),
)
FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in FEATURES)
SPEC_BY_NAME = {f.name: f for f in FEATURES}
LANGUAGE_INDEX = {code: i for i, code in enumerate(LANGUAGES)}

TARGET = "target"
LABEL_SOURCE = "retweet_total"


class FeatureError(ValueError):
    pass


# -- sentiment -------------------------------------------------------------


class SentimentProvider(Protocol):
    version: str

    def score(self, text: str, language_code: str) -> float:
        """Return a sentiment value in [0, 1]."""
        ...


_TOKEN = re.compile(r"\w+", re.UNICODE)

# Tiny signed lexicons; polarity +1 / -1. CJK entries are matched as substrings.
_LEXICON: dict[str, dict[str, int]] = {
    "ar": {"جميل": 1, "رائع": 1, "حب": 1, "سيء": -1, "حزين": -1, "كره": -1},
    "da": {"god": 1, "glad": 1, "elsker": 1, "dårlig": -1, "trist": -1, "hader": -1},
    "de": {"gut": 1, "toll": 1, "liebe": 1, "schlecht": -1, "traurig": -1, "hasse": -1},
    "el": {"καλό": 1, "υπέροχο": 1, "αγάπη": 1, "κακό": -1, "λυπημένος": -1, "μίσος": -1},
    "en": {"good": 1, "great": 1, "love": 1, "happy": 1, "bad": -1, "sad": -1, "hate": -1, "awful": -1},
    "es": {"bueno": 1, "genial": 1, "amor": 1, "malo": -1, "triste": -1, "odio": -1},
    "fi": {"hyvä": 1, "ihana": 1, "rakastan": 1, "huono": -1, "surullinen": -1, "vihaan": -1},
    "fr": {"bon": 1, "super": 1, "amour": 1, "mauvais": -1, "triste": -1, "déteste": -1},
    "it": {"buono": 1, "bello": 1, "amore": 1, "cattivo": -1, "triste": -1, "odio": -1},
    "ja": {"好き": 1, "嬉しい": 1, "最高": 1, "嫌い": -1, "悲しい": -1, "最悪": -1},
    "nl": {"goed": 1, "mooi": 1, "liefde": 1, "slecht": -1, "verdrietig": -1, "haat": -1},
    "no": {"bra": 1, "glad": 1, "elsker": 1, "dårlig": -1, "trist": -1, "hater": -1},
    "pl": {"dobry": 1, "super": 1, "kocham": 1, "zły": -1, "smutny": -1, "nienawidzę": -1},
    "pt": {"bom": 1, "ótimo": 1, "amor": 1, "ruim": -1, "triste": -1, "odeio": -1},
    "ru": {"хорошо": 1, "отлично": 1, "люблю": 1, "плохо": -1, "грустно": -1, "ненавижу": -1},
    "sv": {"bra": 1, "glad": 1, "älskar": 1, "dålig": -1, "ledsen": -1, "hatar": -1},
    "tr": {"güzel": 1, "harika": 1, "seviyorum": 1, "kötü": -1, "üzgün": -1, "nefret": -1},
    "zh": {"好": 1, "喜欢": 1, "开心": 1, "坏": -1, "难过": -1, "讨厌": -1},
}
_SUBSTRING_LANGS = frozenset({"ja", "zh"})


class LexiconSentiment:
    """Deterministic lexicon scorer standing in for a hosted sentiment service.

    The score is the mean polarity of matched lexicon entries mapped from
    [-1, 1] to [0, 1]; text with no matches scores 0.5.
    """

    version = "lexicon-1"

    def __init__(self, lexicon: dict[str, dict[str, int]] | None = None) -> None:
        self.lexicon = lexicon if lexicon is not None else _LEXICON
        missing = set(LANGUAGES) - set(self.lexicon)
        if missing:
            raise ValueError(f"lexicon lacks languages: {sorted(missing)}")

    def score(self, text: str, language_code: str) -> float:
        try:
            words = self.lexicon[language_code]
        except KeyError:
            raise FeatureError(f"unsupported language {language_code!r}") from None
        lowered = text.lower()
        if language_code in _SUBSTRING_LANGS:
            hits = [p for w, p in words.items() for _ in range(lowered.count(w))]
        else:
            hits = [words[t] for t in _TOKEN.findall(lowered) if t in words]
        if not hits:
            return 0.5
        return 0.5 * (sum(hits) / len(hits) + 1.0)


# -- matrix ----------------------------------------------------------------


@dataclass
class FeatureColumn:
    name: str
    modality: str
    kind: str
    values: np.ndarray
    transform: str = "identity"


@dataclass
class FeatureMatrix:
    """Columnar feature table with the log-transformed retweet target.

    ``retweet_total`` keeps the raw label so the target transform can be
    audited from the matrix alone.
    """

    columns: list[FeatureColumn]
    target: np.ndarray
    row_ids: list[str]
    retweet_total: np.ndarray | None = None
    rejected: list[tuple[str, str]] = field(default_factory=list)
    sentiment_version: str | None = None

    def __post_init__(self) -> None:
        n = len(self.row_ids)
        for col in self.columns:
            if len(col.values) != n:
                raise FeatureError(f"column {col.name} has {len(col.values)} rows, expected {n}")
        if len(self.target) != n:
            raise FeatureError("target length differs from row count")
        if n and (not np.all(np.isfinite(self.target)) or np.any(self.target < 0)):
            raise FeatureError("target entries must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.row_ids)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def kinds(self) -> list[str]:
        return [c.kind for c in self.columns]

    def column(self, name: str) -> FeatureColumn:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    def to_array(self) -> np.ndarray:
        """Dense float64 array of shape (n_rows, n_columns)."""
        if not self.columns:
            return np.empty((len(self), 0))
        return np.column_stack([np.asarray(c.values, dtype=np.float64) for c in self.columns])

    def take(self, index: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(index, dtype=np.intp)
        return FeatureMatrix(
            columns=[
                FeatureColumn(c.name, c.modality, c.kind, np.asarray(c.values)[idx], c.transform)
                for c in self.columns
            ],
            target=self.target[idx],
            row_ids=[self.row_ids[i] for i in idx],
            retweet_total=None if self.retweet_total is None else self.retweet_total[idx],
            sentiment_version=self.sentiment_version,
        )

    def select(self, names: Iterable[str]) -> "FeatureMatrix":
        wanted = list(names)
        by_name = {c.name: c for c in self.columns}
        missing = [n for n in wanted if n not in by_name]
        if missing:
            raise KeyError(f"unknown columns: {missing}")
        return FeatureMatrix(
            columns=[by_name[n] for n in wanted],
            target=self.target,
            row_ids=self.row_ids,
            retweet_total=self.retweet_total,
            sentiment_version=self.sentiment_version,
        )

    # -- CSV round trip ----------------------------------------------------

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["row_id", *self.names, TARGET]
        if self.retweet_total is not None:
            header.append(LABEL_SOURCE)
        writer.writerow(header)
        cols = [np.asarray(c.values, dtype=np.float64).tolist() for c in self.columns]
        target = self.target.tolist()
        labels = None if self.retweet_total is None else self.retweet_total.tolist()
        for i, row_id in enumerate(self.row_ids):
            row = [row_id, *(_fmt(col[i]) for col in cols), repr(target[i])]
            if labels is not None:
                row.append(str(int(labels[i])))
            writer.writerow(row)
        return buf.getvalue().encode("utf-8")

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_csv_bytes()).hexdigest()

    def schema(self) -> dict[str, Any]:
        return {
            "columns": [
                {"name": c.name, "modality": c.modality, "kind": c.kind, "transform": c.transform}
                for c in self.columns
            ],
            "target": {"name": TARGET, "transform": "ln(retweet_total + 1)"},
            "label_source": LABEL_SOURCE if self.retweet_total is not None else None,
            "sentiment_provider": self.sentiment_version,
            "n_rows": len(self),
        }

    def write(self, path: str | os.PathLike[str], producer: dict[str, Any] | None = None) -> Path:
        """Write ``path`` (CSV) and ``path.schema.json`` (sidecar). Returns the sidecar path."""
        path = Path(path)
        data = self.to_csv_bytes()
        path.write_bytes(data)
        sidecar = schema_path(path)
        meta = self.schema()
        meta["sha256"] = hashlib.sha256(data).hexdigest()
        if producer is not None:
            meta["producer"] = producer
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return sidecar

    @classmethod
    def read(cls, path: str | os.PathLike[str]) -> "FeatureMatrix":
        path = Path(path)
        sidecar = schema_path(path)
        meta = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else None
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        if header[0] != "row_id" or TARGET not in header:
            raise FeatureError(f"{path}: not a feature matrix CSV")
        t_idx = header.index(TARGET)
        names = header[1:t_idx]
        has_labels = LABEL_SOURCE in header
        row_ids = [r[0] for r in rows]
        body = np.array([r[1:t_idx + 1] for r in rows], dtype=np.float64).reshape(len(rows), t_idx)
        specs = {}
        if meta is not None:
            specs = {c["name"]: c for c in meta["columns"]}
        columns = []
        for j, name in enumerate(names):
            info = specs.get(name)
            if info is None:
                spec = SPEC_BY_NAME.get(name)
                if spec is None:
                    raise FeatureError(f"{path}: column {name!r} has no schema")
                info = {"modality": spec.modality, "kind": spec.kind, "transform": spec.transform}
            values = body[:, j]
            if info["kind"] == "categorical":
                values = values.astype(np.int64)
            columns.append(FeatureColumn(name, info["modality"], info["kind"], values, info["transform"]))
        labels = None
        if has_labels:
            l_idx = header.index(LABEL_SOURCE)
            labels = np.array([int(r[l_idx]) for r in rows], dtype=np.int64)
        return cls(
            columns=columns,
            target=body[:, t_idx - 1].copy() if rows else np.empty(0),
            row_ids=row_ids,
            retweet_total=labels,
            sentiment_version=None if meta is None else meta.get("sentiment_provider"),
        )


def schema_path(path: str | os.PathLike[str]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".schema.json")


def _fmt(x: float) -> str:
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


# -- extraction ------------------------------------------------------------


def day_time_bucket(hour: int) -> int:
    """Night 0-5, morning 6-11, afternoon 12-17, evening 18-23."""
    return hour // 6


def account_age_days(created: datetime, posted: datetime) -> int:
    return (posted - created).days


def log_target(retweet_total: int) -> float:
    return math.log(retweet_total + 1.0)


def _row(record: TweetRecord, sentiment: SentimentProvider) -> list[float]:
    for name in COUNT_FIELDS:
        if getattr(record, name) < 0:
            raise FeatureError(f"negative {name}")
    if record.language_code not in LANGUAGE_INDEX:
        raise FeatureError(f"unsupported language {record.language_code!r}")
    posted = record.posted_at
    age = account_age_days(record.account_created_at, posted)
    if age < 0:
        raise FeatureError("posted_at precedes account_created_at")
    score = float(sentiment.score(record.text, record.language_code))
    if not 0.0 <= score <= 1.0:
        raise FeatureError(f"sentiment score {score} outside [0, 1]")
    attachments = (
        record.mention_count + record.hashtags_count + record.media_count
        + record.url_count + record.symbol_count
    )
    return [
        record.followers_count,
        record.friends_count,
        age,
        record.statuses_count,
        math.log(record.actor_favorites_count + 1.0),
        math.log(record.actor_listed_count + 1.0),
        int(record.actor_verified),
        record.statuses_count / max(age, 1),
        record.followers_count / max(record.statuses_count, 1),
        attachments,
        record.mention_count,
        record.hashtags_count,
        record.media_count,
        record.url_count,
        int(record.is_quote),
        LANGUAGE_INDEX[record.language_code],
        score,
        posted.hour,
        posted.day,
        posted.month,
        day_time_bucket(posted.hour),
        posted.weekday(),
    ]


def extract(records: Iterable[TweetRecord], sentiment: SentimentProvider | None = None) -> FeatureMatrix:
    """Turn records into a :class:`FeatureMatrix`, rows ordered by record id.

    Records failing validation (unsupported language, negative counts) are
    skipped and listed in ``matrix.rejected``.
    """
    sentiment = sentiment if sentiment is not None else LexiconSentiment()
    ordered = sorted(records, key=lambda r: r.id)
    rows: list[list[float]] = []
    row_ids: list[str] = []
    labels: list[int] = []
    rejected: list[tuple[str, str]] = []
    for record in ordered:
        try:
            rows.append(_row(record, sentiment))
        except FeatureError as exc:
            rejected.append((record.id, str(exc)))
            continue
        row_ids.append(record.id)
        labels.append(record.retweet_total)
    if rejected:
        logger.warning("rejected %d records during feature extraction", len(rejected))

    body = np.array(rows, dtype=np.float64).reshape(len(rows), len(FEATURES))
    columns = []
    for j, spec in enumerate(FEATURES):
        values = body[:, j]
        if spec.kind == "categorical":
            values = values.astype(np.int64)
        columns.append(FeatureColumn(spec.name, spec.modality, spec.kind, values, spec.transform))
    label_arr = np.array(labels, dtype=np.int64)
    return FeatureMatrix(
        columns=columns,
        target=np.array([log_target(v) for v in labels], dtype=np.float64),
        row_ids=row_ids,
        retweet_total=label_arr,
        rejected=rejected,
        sentiment_version=getattr(sentiment, "version", None),
    )


# -- analysis --------------------------------------------------------------


@dataclass(frozen=True)
class PearsonEntry:
    name: str
    r: float
    degenerate: bool = False


def pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    """Sample Pearson correlation; ``(0.0, True)`` when either input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0, True
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r)), False


def pearson_report(matrix: FeatureMatrix) -> list[PearsonEntry]:
    """Correlation of every column (categoricals by integer code) with the target."""
    if len(matrix) < 2:
        raise FeatureError("pearson_report needs at least 2 rows")
    if np.ptp(matrix.target) == 0:
        raise FeatureError("target is constant")
    out = []
    for col in matrix.columns:
        r, degenerate = pearson(col.values, matrix.target)
        out.append(PearsonEntry(col.name, r, degenerate))
    return out


def select_modalities(matrix: FeatureMatrix, subset: Iterable[str]) -> FeatureMatrix:
    """Restrict ``matrix`` to columns whose modality is in ``subset``."""
    wanted = set(subset)
    if not wanted:
        raise FeatureError("modality subset must be non-empty")
    unknown = wanted - set(MODALITIES)
    if unknown:
        raise FeatureError(f"unknown modalities: {sorted(unknown)}")
    return matrix.select(c.name for c in matrix.columns if c.modality in wanted)
