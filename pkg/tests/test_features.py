import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viralrank.features import (
    FEATURE_NAMES,
    FEATURES,
    FeatureError,
    FeatureMatrix,
    LexiconSentiment,
    extract,
    pearson,
    pearson_report,
    schema_path,
    select_modalities,
)
from viralrank.store import LANGUAGES, TweetRecord

from conftest import make_record_dict


def rec(i=1, **kw):
    return TweetRecord.from_dict(make_record_dict(i, **kw))


def row_of(matrix, i=0):
    return dict(zip(matrix.names, matrix.to_array()[i]))


def test_layout():
    assert len(FEATURES) == 22
    assert len(set(FEATURE_NAMES)) == 22
    assert sum(f.kind == "categorical" for f in FEATURES) == 5


def test_attachment_count_of_empty_tweet():
    m = extract([rec(mention_count=0, hashtags_count=0, media_count=0, url_count=0, symbol_count=0)])
    assert row_of(m)["attachmentCount"] == 0


def test_attachment_count_sums_all_entities():
    m = extract([rec(mention_count=2, hashtags_count=3, media_count=1, url_count=1, symbol_count=4)])
    assert row_of(m)["attachmentCount"] == 11


def test_zero_retweets_gives_zero_target():
    m = extract([rec(retweet_total=0)])
    assert m.target[0] == 0.0


def test_listed_count_log_transform():
    m = extract([rec(actor_listed_count=99)])
    assert row_of(m)["actorListedCount"] == pytest.approx(4.60517, abs=5e-6)
    assert row_of(m)["actorListedCount"] == math.log(100)


def test_temporal_and_author_columns():
    m = extract([rec(posted_at="2017-06-15T19:30:00Z", account_created_at="2017-06-05T20:00:00Z",
                     statuses_count=45, followers_count=90)])
    r = row_of(m)
    # 2017-06-15 is a Thursday
    assert (r["postedHour"], r["postedDay"], r["postedMonth"], r["postedWeekDay"]) == (19, 15, 6, 3)
    assert r["postedDayTime"] == 3
    assert r["accountAgeDays"] == 9
    assert r["tweetsPerDay"] == 5.0
    assert r["followersPerStatus"] == 2.0
    assert r["languageIndex"] == LANGUAGES.index("en")


def test_ratio_features_guard_zero_denominators():
    m = extract([rec(posted_at="2015-03-01T05:00:00Z", statuses_count=0, followers_count=7)])
    r = row_of(m)
    assert r["tweetsPerDay"] == 0.0
    assert r["followersPerStatus"] == 7.0


def test_rows_sorted_by_id_and_target_matches_label():
    records = [rec(i, retweet_total=i * 13) for i in (5, 2, 9)]
    m = extract(records)
    assert m.row_ids == ["t000002", "t000005", "t000009"]
    assert list(m.retweet_total) == [26, 65, 117]
    assert [float(t) for t in m.target] == [math.log(27), math.log(66), math.log(118)]


def test_invalid_records_are_rejected_not_fatal():
    good = rec(1)
    bad = TweetRecord(**{**good.__dict__, "id": "bad", "language_code": "xx"})
    m = extract([good, bad])
    assert m.row_ids == ["t000001"]
    assert m.rejected[0][0] == "bad"


def test_sentiment_lexicon():
    s = LexiconSentiment()
    assert s.score("nothing here", "en") == 0.5
    assert s.score("good great", "en") == 1.0
    assert s.score("good bad", "en") == 0.5
    assert s.score("这个很好", "zh") == 1.0
    with pytest.raises(FeatureError):
        s.score("x", "xx")


def test_sentiment_provider_is_pluggable():
    class Constant:
        version = "const"

        def score(self, text, language_code):
            return 0.25

    m = extract([rec()], Constant())
    assert row_of(m)["sentimentValue"] == 0.25
    assert m.sentiment_version == "const"


def test_sentiment_out_of_range_rejected():
    class Broken:
        def score(self, text, language_code):
            return 2.0

    assert len(extract([rec()], Broken()).rejected) == 1


# -- modality selection ---------------------------------------------------------


def test_select_all_modalities_is_identity(small_matrix):
    assert select_modalities(small_matrix, "ACTL").names == small_matrix.names


def test_temporal_block():
    m = select_modalities(extract([rec()]), "T")
    assert m.names == ["postedHour", "postedDay", "postedMonth", "postedDayTime", "postedWeekDay"]


def test_author_block_has_seven_plus_two_ratio_columns():
    assert len(select_modalities(extract([rec()]), "A").names) == 9


def test_select_invalid_subsets():
    m = extract([rec()])
    with pytest.raises(FeatureError):
        select_modalities(m, "")
    with pytest.raises(FeatureError):
        select_modalities(m, "X")


# -- pearson -------------------------------------------------------------------


def two_pass_pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def test_pearson_identity_and_negation(rng):
    y = rng.normal(size=200)
    assert pearson(y, y)[0] == pytest.approx(1.0, abs=1e-15)
    assert pearson(-y, y)[0] == pytest.approx(-1.0, abs=1e-15)


def test_pearson_planted_correlation():
    rng = np.random.default_rng(7)
    xy = rng.multivariate_normal([0, 0], [[1, 0.3], [0.3, 1]], size=1000)
    r, _ = pearson(xy[:, 0], xy[:, 1])
    assert abs(r - 0.3) <= 0.1
    assert r == pytest.approx(two_pass_pearson(xy[:, 0].tolist(), xy[:, 1].tolist()), abs=1e-12)


def test_pearson_report_flags_constant_columns(small_matrix):
    entries = pearson_report(small_matrix)
    assert [e.name for e in entries] == small_matrix.names
    assert all(-1 <= e.r <= 1 for e in entries)
    const = extract([rec(i, retweet_total=i) for i in range(5)])
    flagged = {e.name for e in pearson_report(const) if e.degenerate}
    assert "friendsCount" in flagged


def test_pearson_report_rejects_constant_target():
    with pytest.raises(FeatureError):
        pearson_report(extract([rec(i, retweet_total=0) for i in range(5)]))


# -- persistence ----------------------------------------------------------------


def test_csv_round_trip_is_exact(tmp_path, small_matrix):
    path = tmp_path / "m.csv"
    small_matrix.write(path, producer={"command": "test"})
    back = FeatureMatrix.read(path)
    assert back.names == small_matrix.names
    assert back.kinds == small_matrix.kinds
    assert back.row_ids == small_matrix.row_ids
    assert np.array_equal(back.to_array(), small_matrix.to_array())
    assert np.array_equal(back.target, small_matrix.target)
    assert back.fingerprint() == small_matrix.fingerprint()
    meta = json.loads(schema_path(path).read_text())
    assert meta["producer"] == {"command": "test"}
    assert meta["n_rows"] == len(small_matrix)


def test_extract_is_deterministic(small_corpus):
    a = extract(small_corpus.records)
    b = extract(list(reversed(small_corpus.records)))
    assert a.to_csv_bytes() == b.to_csv_bytes()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=30))
def test_target_is_log1p_of_label(labels):
    m = extract([rec(i, retweet_total=v) for i, v in enumerate(labels)])
    for t, v in zip(m.target.tolist(), m.retweet_total.tolist()):
        assert t == math.log(v + 1.0)


@settings(max_examples=50, deadline=None)
@given(st.sets(st.sampled_from("ACTL"), min_size=1), st.sets(st.sampled_from("ACTL"), min_size=1))
def test_modality_selection_distributes_over_union(s1, s2):
    m = extract([rec()])
    union = set(select_modalities(m, s1 | s2).names)
    assert union == set(select_modalities(m, s1).names) | set(select_modalities(m, s2).names)
