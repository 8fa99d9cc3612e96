"""Synthetic tweet corpus with a known log-linear Poisson retweet process."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterator

import numpy as np
from scipy.optimize import brentq

from .features import _LEXICON
from .store import LANGUAGES, ComplianceRequest, RequestKind, TweetRecord

#: Terms of the log-rate a coefficient may be attached to.
TERMS = (
    "log_followers",
    "log_friends",
    "log_statuses",
    "log_favorites",
    "log_listed",
    "verified",
    "mention_count",
    "hashtags_count",
    "media_count",
    "url_count",
    "is_quote",
    "sentiment",
    "posted_hour",
)

# Content effects dominate; author effects are real but weaker. The spread
# is wide on purpose: with ~85% of targets tied at zero even a perfect
# ranking has Spearman rho of only ~0.62, so rows must separate cleanly into
# "never retweeted" and "clearly retweeted" for a model to get close.
DEFAULT_COEFFICIENTS: dict[str, float] = {
    "log_followers": 1.1,
    "log_listed": 0.7,
    "verified": 2.4,
    "mention_count": -2.1,
    "hashtags_count": 3.3,
    "media_count": 10.0,
    "url_count": -4.2,
    "is_quote": 6.6,
}

_FILLER = ("lorem", "ipsum", "dolor", "sit", "amet", "news", "today", "look", "this", "2017", "team", "live")
_START_2017 = datetime(2017, 1, 1, tzinfo=timezone.utc)
_EPOCH_ACCOUNTS = datetime(2007, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings.

    ``intercept=None`` solves for the intercept that makes the expected
    fraction of zero-retweet rows equal ``zero_fraction``. Log-rates above
    ``max_log_rate`` (about 8.9 million retweets by default) are clipped.
    """

    n_rows: int = 50_000
    seed: int = 0
    coefficients: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_COEFFICIENTS))
    noise: float = 0.2
    max_log_rate: float = 16.0
    intercept: float | None = None
    zero_fraction: float = 0.85
    tweets_per_author: float = 4.0
    language_weights: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if self.n_rows < 1:
            raise ValueError("n_rows must be at least 1")
        unknown = set(self.coefficients) - set(TERMS)
        if unknown:
            raise ValueError(f"unknown generative terms: {sorted(unknown)}")
        if not all(math.isfinite(c) for c in self.coefficients.values()):
            raise ValueError("coefficients must be finite")
        if self.noise < 0 or not math.isfinite(self.noise):
            raise ValueError("noise must be a finite non-negative number")
        if not 0.0 < self.zero_fraction < 1.0:
            raise ValueError("zero_fraction must lie in (0, 1)")
        if self.tweets_per_author < 1:
            raise ValueError("tweets_per_author must be >= 1")
        if self.language_weights is not None:
            bad = set(self.language_weights) - set(LANGUAGES)
            if bad or any(w < 0 for w in self.language_weights.values()):
                raise ValueError("language_weights must map supported languages to non-negative weights")
            if sum(self.language_weights.values()) <= 0:
                raise ValueError("language_weights must not all be zero")

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_rows": self.n_rows,
            "seed": self.seed,
            "coefficients": dict(sorted(self.coefficients.items())),
            "noise": self.noise,
            "max_log_rate": self.max_log_rate,
            "intercept": self.intercept,
            "zero_fraction": self.zero_fraction,
            "tweets_per_author": self.tweets_per_author,
            "language_weights": self.language_weights,
        }


def _language_probs(spec: SynthSpec) -> np.ndarray:
    if spec.language_weights is None:
        # English-heavy mix over all 18 languages
        w = np.ones(len(LANGUAGES))
        w[LANGUAGES.index("en")] = 8.0
        w[LANGUAGES.index("es")] = 3.0
        w[LANGUAGES.index("ja")] = 3.0
        w[LANGUAGES.index("pt")] = 2.0
    else:
        w = np.array([spec.language_weights.get(code, 0.0) for code in LANGUAGES])
    return w / w.sum()


def solve_intercept(linear: np.ndarray, zero_fraction: float) -> float:
    """Intercept ``c`` with ``mean(exp(-exp(c + linear))) == zero_fraction``."""

    def excess(c: float) -> float:
        return float(np.mean(np.exp(-np.exp(np.clip(c + linear, -700, 700))))) - zero_fraction

    lo, hi = -50.0, 50.0
    return float(brentq(excess, lo, hi, xtol=1e-12))


@dataclass
class SynthResult:
    records: list[TweetRecord]
    log_rate: np.ndarray
    intercept: float


def generate_records(spec: SynthSpec) -> SynthResult:
    """Draw ``spec.n_rows`` tweets and their retweet totals."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    n_authors = max(1, int(round(n / spec.tweets_per_author)))

    # author table
    followers = np.floor(rng.lognormal(5.5, 2.0, n_authors)).astype(np.int64)
    friends = np.floor(rng.lognormal(5.0, 1.3, n_authors)).astype(np.int64)
    statuses = np.floor(rng.lognormal(7.5, 1.6, n_authors)).astype(np.int64)
    favorites = np.floor(rng.lognormal(6.0, 2.0, n_authors)).astype(np.int64)
    listed = np.floor(np.log1p(followers) * rng.lognormal(0.0, 0.8, n_authors) ** 2 / 3).astype(np.int64)
    verified = rng.random(n_authors) < np.clip(0.002 * np.log1p(followers) ** 1.5, 0, 0.6)
    created_offset = rng.uniform(0, (_START_2017 - _EPOCH_ACCOUNTS).total_seconds(), n_authors)

    author = rng.integers(0, n_authors, n)
    posted_offset = rng.uniform(0, 365 * 86400, n)
    mentions = rng.poisson(0.7, n)
    hashtags = rng.poisson(0.4, n)
    media = rng.binomial(1, 0.2, n) + rng.binomial(1, 0.05, n)
    urls = rng.binomial(1, 0.3, n)
    symbols = rng.binomial(1, 0.02, n)
    is_quote = rng.random(n) < 0.1
    lang_idx = rng.choice(len(LANGUAGES), size=n, p=_language_probs(spec))
    n_words = rng.integers(3, 12, n)
    n_sentiment_words = rng.integers(0, 3, n)
    noise = rng.normal(0.0, 1.0, n) * spec.noise

    texts = []
    sentiment = np.full(n, 0.5)
    for i in range(n):
        code = LANGUAGES[lang_idx[i]]
        words = list(rng.choice(_FILLER, size=n_words[i]))
        lex = sorted(_LEXICON[code])
        hits = []
        for _ in range(n_sentiment_words[i]):
            w = lex[int(rng.integers(len(lex)))]
            hits.append(_LEXICON[code][w])
            words.insert(int(rng.integers(len(words) + 1)), w)
        if hits:
            sentiment[i] = 0.5 * (sum(hits) / len(hits) + 1)
        texts.append(("" if code in ("ja", "zh") else " ").join(words))

    posted_hour = ((posted_offset // 3600) % 24).astype(np.float64)
    terms = {
        "log_followers": np.log1p(followers[author]),
        "log_friends": np.log1p(friends[author]),
        "log_statuses": np.log1p(statuses[author]),
        "log_favorites": np.log1p(favorites[author]),
        "log_listed": np.log1p(listed[author]),
        "verified": verified[author].astype(np.float64),
        "mention_count": mentions.astype(np.float64),
        "hashtags_count": hashtags.astype(np.float64),
        "media_count": media.astype(np.float64),
        "url_count": urls.astype(np.float64),
        "is_quote": is_quote.astype(np.float64),
        "sentiment": sentiment,
        "posted_hour": posted_hour,
    }
    linear = noise.copy()
    for name, coef in sorted(spec.coefficients.items()):
        linear += coef * terms[name]
    intercept = spec.intercept if spec.intercept is not None else solve_intercept(linear, spec.zero_fraction)
    log_rate = np.minimum(intercept + linear, spec.max_log_rate)
    if not np.all(np.isfinite(np.exp(log_rate))):
        raise ValueError("generative coefficients produce non-finite rates")
    retweets = rng.poisson(np.exp(log_rate))
    favorites_total = rng.poisson(2.0 * np.exp(log_rate))

    records = []
    for i in range(n):
        a = int(author[i])
        created = _EPOCH_ACCOUNTS + timedelta(seconds=int(created_offset[a]))
        posted = _START_2017 + timedelta(seconds=int(posted_offset[i]))
        records.append(
            TweetRecord(
                id=f"t{i:09d}",
                author_id=f"u{a:07d}",
                followers_count=int(followers[a]),
                friends_count=int(friends[a]),
                statuses_count=int(statuses[a]),
                actor_favorites_count=int(favorites[a]),
                actor_listed_count=int(listed[a]),
                actor_verified=bool(verified[a]),
                account_created_at=created,
                posted_at=posted,
                is_quote=bool(is_quote[i]),
                mention_count=int(mentions[i]),
                hashtags_count=int(hashtags[i]),
                media_count=int(media[i]),
                url_count=int(urls[i]),
                symbol_count=int(symbols[i]),
                language_code=LANGUAGES[lang_idx[i]],
                text=texts[i],
                retweet_total=int(retweets[i]),
                favorite_total=int(favorites_total[i]),
            )
        )
    return SynthResult(records=records, log_rate=log_rate, intercept=intercept)


def generate_compliance(
    records: list[TweetRecord],
    *,
    status_fraction: float = 0.01,
    user_fraction: float = 0.005,
    seed: int = 0,
) -> list[ComplianceRequest]:
    """Deletion requests for a random share of tweets and of authors."""
    rng = np.random.default_rng(seed + 1)
    received = datetime(2018, 5, 25, tzinfo=timezone.utc)
    ids = [r.id for r in records]
    authors = sorted({r.author_id for r in records})
    n_status = int(round(status_fraction * len(ids)))
    n_user = int(round(user_fraction * len(authors)))
    out = [
        ComplianceRequest(RequestKind.DELETE_STATUS, ids[i], received)
        for i in sorted(rng.choice(len(ids), size=n_status, replace=False))
    ]
    out += [
        ComplianceRequest(RequestKind.DELETE_USER, authors[i], received)
        for i in sorted(rng.choice(len(authors), size=n_user, replace=False))
    ]
    return out


def _lines(items) -> Iterator[str]:
    for item in items:
        yield json.dumps(item.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n"


def write_jsonl(items, path: str | os.PathLike[str]) -> int:
    count = 0
    with open(Path(path), "w", encoding="utf-8") as fh:
        for line in _lines(items):
            fh.write(line)
            count += 1
    return count
