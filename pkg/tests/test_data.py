import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from recurreg.data import (
    DataError,
    ValidationError,
    from_arrays,
    isclose_dataset,
    parse_dataset,
    resample_clusters,
    stratify,
    summarize,
    validate,
    write_dataset,
)

SIMDAT_ROWS = """id,t.start,t.stop,event,status,x1,x2
5,0,1.1695164,0,1,1,0.6570011
7,0,0.4690579,1,0,0,-0.2149894
7,0.4690579,0.8320469,0,1,0,-0.2149894
12,0,3.2220999,1,0,1,-0.2862713
12,3.2220999,13.5607302,1,0,1,-0.2862713
12,13.5607302,60,0,0,1,-0.2862713
"""


def test_parse_listing_rows():
    ds, report = parse_dataset(SIMDAT_ROWS)
    assert report.ok and not report.findings
    assert ds.covariate_names == ("x1", "x2")
    s5, s7, s12 = ds.subjects
    assert (s5.n_events, s5.terminal, s5.followup) == (0, True, 1.1695164)
    assert s7.n_events == 1 and s7.terminal and s7.followup == 0.8320469
    assert s7.event_times.tolist() == [0.4690579]
    assert s12.event_times.tolist() == [3.2220999, 13.5607302]
    assert not s12.terminal and s12.followup == 60
    assert s12.covariates == (1.0, -0.2862713)


def test_empty_stream():
    ds, report = parse_dataset("")
    assert ds.n == 0 and report.findings == ()


def test_overlapping_intervals_rejected():
    text = "id,t.start,t.stop,event,status\n1,0,2,1,0\n1,1,3,0,0\n"
    with pytest.raises(ValidationError, match="non-contiguous") as info:
        parse_dataset(text)
    assert info.value.report.errors[0].rule == "non_contiguous"


def test_duplicate_repaired_in_soft_mode():
    text = "id,t.start,t.stop,event,status\n1,0,2,1,0\n1,0,2,1,0\n1,2,3,0,1\n"
    with pytest.raises(ValidationError):
        parse_dataset(text, check_mode="hard")
    ds, report = parse_dataset(text, check_mode="soft")
    assert [f.rule for f in report.findings] == ["duplicate_interval"]
    assert "duplicate dropped" in report.findings[0].message
    assert report.repaired is ds
    assert len(ds.subjects[0].intervals) == 2 and ds.subjects[0].terminal


def test_terminal_on_nonfinal_interval():
    text = "id,t.start,t.stop,event,status\n1,0,2,1,1\n1,2,3,0,0\n"
    with pytest.raises(ValidationError) as info:
        parse_dataset(text)
    assert info.value.report.errors[0].rule == "terminal_not_final"
    ds, report = parse_dataset(text, check_mode="soft")
    assert ds.subjects[0].terminal
    ds, report = parse_dataset(text, check_mode="none")
    assert report.findings == ()


def test_start_not_before_stop_stays_error_in_soft_mode():
    text = "id,t.start,t.stop,event,status\n1,2,2,0,0\n"
    with pytest.raises(ValidationError):
        parse_dataset(text, check_mode="soft")


def test_valid_toy3_has_no_findings(toy3):
    report = validate(toy3, "hard")
    assert report.ok and report.findings == ()
    assert report.to_dict() == {"mode": "hard", "ok": True, "findings": []}


def test_schema_overrides_and_single_stop_column():
    text = "pid\ttime\tev\tdead\tage\n1\t2\t1\t0\t50\n1\t5\t0\t1\t50\n2\t3\t0\t0\t60\n"
    ds, _ = parse_dataset(text, {"id": "pid", "stop": "time", "event": "ev", "status": "dead"})
    assert ds.covariate_names == ("age",)
    assert ds.subjects[0].event_times.tolist() == [2.0]
    assert ds.followup.tolist() == [5.0, 3.0]
    with pytest.raises(DataError, match="unknown columns"):
        parse_dataset(text, {"id": "nope"})


def test_bad_covariates():
    base = "id,t.start,t.stop,event,status,x\n"
    with pytest.raises(DataError, match="non-numeric"):
        parse_dataset(base + "1,0,2,0,0,abc\n")
    with pytest.raises(DataError, match="missing value"):
        parse_dataset(base + "1,0,2,0,0,NA\n")


def test_dates_become_person_time():
    text = "id,t.start,t.stop,event,status\n1,2020-01-01,2020-01-11,1,0\n1,2020-01-11,2020-01-31,0,1\n2,2020-01-06,2020-01-16,0,0\n"
    ds, _ = parse_dataset(text)
    assert ds.date_origin is not None
    a, b = ds.subjects
    assert a.event_times.tolist() == [10.0] and a.followup == 30.0
    assert b.origin == 5.0 and b.followup == 10.0


def test_summary_toy3(toy3):
    s = summarize(toy3)
    assert (s.n, s.total_events, s.mean_events_per_subject) == (3, 3, 1.0)
    assert s.terminal_proportion == pytest.approx(1 / 3)
    assert s.median_followup == 4.0 and s.median_time_to_terminal == 4.0
    assert "Median follow-up time" in s.to_text()


def test_summary_empty():
    s = summarize(from_arrays([], [], [], []))
    assert s.n == 0 and s.total_events == 0 and s.median_followup is None


def test_resample_clusters(toy3):
    single = from_arrays(["a"], [[1.0]], [2.0], [0])
    out = resample_clusters(single, 5)
    assert out.n == 1 and out.subjects[0].intervals == single.subjects[0].intervals
    a = resample_clusters(toy3, 11)
    b = resample_clusters(toy3, 11)
    assert isclose_dataset(a, b)
    assert a.n == 3
    originals = {s.id: s for s in toy3.subjects}
    for s in a.subjects:
        src = originals[s.id.split("#")[0]]
        assert s.intervals == src.intervals and s.terminal == src.terminal
    assert len({s.id for s in a.subjects}) == 3
    with pytest.raises(DataError):
        resample_clusters(from_arrays([], [], [], []), 0)


def test_stratify(toy3x):
    parts = stratify(toy3x, "x1")
    assert sorted(p.n for p in parts.values()) == [1, 2]
    const = toy3x.with_covariates(np.zeros((3, 1)), ["c"])
    assert list(stratify(const, "c").values())[0].n == 3
    cont = toy3x.with_covariates([[0.1], [0.2], [0.3]], ["z"])
    assert len(stratify(cont, "z")) == 3
    with pytest.raises(KeyError):
        stratify(toy3x, "missing")
    with pytest.raises(DataError):
        stratify(cont, "z", max_levels=2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_round_trip_and_interval_lengths(seed, n):
    ds = random_dataset(np.random.default_rng(seed), n, p=2)
    text = write_dataset(ds)
    back, _ = parse_dataset(io.StringIO(text))
    assert isclose_dataset(ds, back)
    for s in back.subjects:
        assert math.isclose(sum(iv.stop - iv.start for iv in s.intervals), s.followup, abs_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_summary_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n)
    perm = ds.take(rng.permutation(n))
    assert summarize(ds) == summarize(perm)
