"""Shared fixtures plus suite-wide audit hooks.

Every ``Ensemble`` and labelled ``FeatureMatrix`` constructed during the run
is recorded so the acceptance module, which is ordered last, can audit leaf
values and targets across the whole suite.
"""

from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from viralrank.features import FeatureMatrix
from viralrank.gbrt import ensemble as ensemble_mod

AUDIT: dict[str, list] = {"ensembles": [], "matrices": []}
_seen_targets: set[int] = set()

_orig_matrix_init = FeatureMatrix.__post_init__
_orig_ensemble_init = ensemble_mod.Ensemble.__init__


def _recording_matrix_init(self) -> None:
    _orig_matrix_init(self)
    if self.retweet_total is not None and id(self.target) not in _seen_targets:
        _seen_targets.add(id(self.target))
        AUDIT["matrices"].append((self.target, self.retweet_total))


def _recording_ensemble_init(self, *args, **kwargs) -> None:
    _orig_ensemble_init(self, *args, **kwargs)
    AUDIT["ensembles"].append(self)


FeatureMatrix.__post_init__ = _recording_matrix_init
ensemble_mod.Ensemble.__init__ = _recording_ensemble_init


def pytest_collection_modifyitems(config, items):
    items.sort(key=lambda item: item.path.name == "test_acceptance.py")


UTC = timezone.utc


def make_record_dict(i: int, **overrides) -> dict:
    base = {
        "id": f"t{i:06d}",
        "author_id": f"u{i % 7:03d}",
        "followers_count": 10 + i,
        "friends_count": 5,
        "statuses_count": 100,
        "actor_favorites_count": 3,
        "actor_listed_count": 99,
        "actor_verified": i % 2 == 0,
        "account_created_at": "2015-03-01T00:00:00Z",
        "posted_at": "2017-06-15T13:30:00Z",
        "is_quote": False,
        "mention_count": 1,
        "hashtags_count": 0,
        "media_count": 0,
        "url_count": 1,
        "symbol_count": 0,
        "language_code": "en",
        "text": "good news today",
        "retweet_total": i % 3,
        "favorite_total": 0,
    }
    base.update(overrides)
    return base


@pytest.fixture
def record_dict():
    return make_record_dict


@pytest.fixture(scope="session")
def small_corpus():
    from viralrank.synth import SynthSpec, generate_records

    return generate_records(SynthSpec(n_rows=2000, seed=11))


@pytest.fixture(scope="session")
def small_matrix(small_corpus):
    from viralrank.features import extract

    return extract(small_corpus.records)


def ts(days: float) -> datetime:
    return datetime(2017, 1, 1, tzinfo=UTC) + timedelta(days=days)


def rel_close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(b)) or math.isclose(a, b, rel_tol=tol)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


#: (criterion, verdict, detail) lines filled in by the acceptance module
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{verdict:<4} {name}: {detail}")
