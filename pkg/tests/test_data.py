import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revmon.data import (
    DAYS_PER_YEAR,
    SubjectRecord,
    TrialDataset,
    events_csv_text,
    load_dataset,
    snapshot,
    strip_arms,
    write_events_csv,
)
from revmon.errors import DataFormatError, DegenerateDataError
from revmon.simulate import ScenarioParams, simulate_trial

from oracles import brute_snapshot_event_count

WELL_FORMED = """id,arm,enroll_time,time,status
p1,0,0.0,0.4,1
p1,0,0.0,1.0,0
p2,1,0.1,0.2,1
p2,1,0.1,0.7,1
p2,1,0.1,0.9,0
p3,,0.2,0.8,0
"""


def _write(tmp_path, text, name="events.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadDataset:
    def test_well_formed(self, tmp_path):
        ds = load_dataset(_write(tmp_path, WELL_FORMED))
        assert ds.n_subjects == 3
        by_id = {s.id: s for s in ds.subjects}
        assert by_id["p1"].event_times == (0.4,)
        assert by_id["p1"].dropout_time == 1.0
        assert by_id["p2"].event_times == (0.2, 0.7)
        assert by_id["p2"].arm == 1
        assert by_id["p3"].arm is None and by_id["p3"].event_times == ()

    def test_event_after_censoring(self, tmp_path):
        bad = "id,arm,enroll_time,time,status\nq,0,0.0,0.9,1\nq,0,0.0,0.5,0\n"
        with pytest.raises(DataFormatError, match="event after censoring"):
            load_dataset(_write(tmp_path, bad))

    def test_duplicate_censoring_row(self, tmp_path):
        bad = "id,arm,enroll_time,time,status\nq,0,0.0,0.5,0\nq,0,0.0,0.7,0\n"
        with pytest.raises(DataFormatError, match="duplicate censoring"):
            load_dataset(_write(tmp_path, bad))

    def test_missing_censoring_row(self, tmp_path):
        bad = "id,arm,enroll_time,time,status\nq,0,0.0,0.5,1\n"
        with pytest.raises(DataFormatError, match="missing censoring"):
            load_dataset(_write(tmp_path, bad))

    def test_malformed_row(self, tmp_path):
        bad = "id,arm,enroll_time,time,status\nq,0,zero,0.5,0\n"
        with pytest.raises(DataFormatError, match="malformed"):
            load_dataset(_write(tmp_path, bad))

    def test_bad_header(self, tmp_path):
        bad = "subject,arm,enroll,t,status\nq,0,0,0.5,0\n"
        with pytest.raises(DataFormatError, match="header"):
            load_dataset(_write(tmp_path, bad))

    def test_days_unit(self, tmp_path):
        text = "id,arm,enroll_time,time,status\nq,1,0,146.1,1\nq,1,0,365.25,0\n"
        ds = load_dataset(_write(tmp_path, text), time_unit="days")
        (rec,) = ds.subjects
        assert rec.dropout_time == pytest.approx(1.0)
        assert rec.event_times[0] == pytest.approx(146.1 / DAYS_PER_YEAR)

    def test_round_trip(self, tmp_path):
        params = ScenarioParams(
            lambda_=1.0, nu=0.8, theta=0.5, beta0=-0.2, pi=0.5, tau_a=1.0, tau_f=1.0, n=25, seed=3
        )
        ds = simulate_trial(params)
        path = tmp_path / "sim.csv"
        write_events_csv(ds, path)
        back = load_dataset(path)
        assert back.n_subjects == ds.n_subjects
        for a, b in zip(ds.subjects, back.subjects):
            assert a.id == b.id and a.arm == b.arm
            assert a.enroll_time == b.enroll_time
            assert a.event_times == b.event_times
            # the censoring row pins C = tau - enroll exactly
            assert b.dropout_time == ds.max_followup(a)

    def test_blinded_export_has_no_arm(self, tmp_path):
        ds = load_dataset(_write(tmp_path, WELL_FORMED))
        text = events_csv_text(ds, blinded=True)
        rows = text.strip().splitlines()[1:]
        assert all(row.split(",")[1] == "" for row in rows)


class TestRecordValidation:
    def test_events_must_increase(self):
        with pytest.raises(DataFormatError, match="strictly increasing"):
            SubjectRecord(id="x", enroll_time=0.0, event_times=(0.5, 0.5))

    def test_negative_enroll(self):
        with pytest.raises(DataFormatError):
            SubjectRecord(id="x", enroll_time=-1.0)

    def test_event_beyond_dropout(self):
        with pytest.raises(DataFormatError, match="event after censoring"):
            SubjectRecord(id="x", enroll_time=0.0, event_times=(2.0,), dropout_time=1.0)

    def test_duplicate_ids(self):
        with pytest.raises(DataFormatError, match="duplicate"):
            TrialDataset(
                subjects=(
                    SubjectRecord(id="x", enroll_time=0.0),
                    SubjectRecord(id="x", enroll_time=0.1),
                )
            )

    def test_enrollment_outside_accrual(self):
        with pytest.raises(DataFormatError, match="accrual"):
            TrialDataset(
                subjects=(SubjectRecord(id="x", enroll_time=1.5),),
                design_duration=(1.0, 2.0),
            )


class TestSnapshot:
    def test_truncation(self):
        ds = TrialDataset(
            subjects=(SubjectRecord(id="x", enroll_time=0.5, event_times=(0.2, 1.0)),)
        )
        snap = snapshot(ds, 1.2)
        (view,) = snap.views
        assert view.followup == pytest.approx(0.7)
        assert view.events == (0.2,)

    def test_administrative_censoring_only(self):
        params = ScenarioParams(
            lambda_=1.2, nu=1.0, theta=0.0, beta0=0.0, pi=0.5, tau_a=1.0, tau_f=1.0, n=30, seed=9
        )
        ds = simulate_trial(params)
        snap = snapshot(ds, 2.0)
        for rec, view in zip(ds.subjects, snap.views):
            assert view.followup == pytest.approx(2.0 - rec.enroll_time)
            assert view.events == rec.event_times

    def test_event_at_exactly_c_is_observed(self):
        ds = TrialDataset(
            subjects=(
                SubjectRecord(id="x", enroll_time=0.0, event_times=(0.5,), dropout_time=0.5),
            )
        )
        assert snapshot(ds, 2.0).total_events == 1  # t == C counts
        assert snapshot(ds, 0.5).total_events == 1  # C = s - e = 0.5 exactly
        assert snapshot(ds, 0.4999).total_events == 0
        # at its own visible calendar time the event is included, even with
        # an enrollment offset that makes enroll + t round awkwardly
        ds2 = TrialDataset(
            subjects=(SubjectRecord(id="y", enroll_time=0.1234567890123, event_times=(0.7,)),)
        )
        s = float(ds2.event_calendar_times()[0])
        assert snapshot(ds2, s).total_events == 1

    def test_before_first_enrollment(self):
        ds = TrialDataset(subjects=(SubjectRecord(id="x", enroll_time=1.0),))
        with pytest.raises(DegenerateDataError):
            snapshot(ds, 0.5)

    def test_seeded_event_count_matches_brute_force(self):
        params = ScenarioParams(
            lambda_=1.0, nu=1.0, theta=0.5, beta0=-0.2, pi=0.5, tau_a=1.0, tau_f=2.0, n=80, seed=17
        )
        ds = simulate_trial(params)
        snap = snapshot(ds, 2.0)
        assert snap.total_events == brute_snapshot_event_count(ds, 2.0)

    @given(st.floats(min_value=0.2, max_value=3.0), st.floats(min_value=0.0, max_value=2.8))
    @settings(max_examples=25, deadline=None)
    def test_monotone_accumulation(self, s1, gap):
        params = ScenarioParams(
            lambda_=1.0, nu=1.0, theta=0.3, beta0=0.0, pi=0.5, tau_a=1.0, tau_f=2.0, n=40, seed=5
        )
        ds = simulate_trial(params)
        s2 = s1 + gap
        first = ds.first_enrollment()
        if s1 <= first:
            return
        a, b = snapshot(ds, s1), snapshot(ds, min(s2, 3.0) if s2 > first else s1)
        assert a.total_events <= b.total_events
        assert a.n_enrolled <= b.n_enrolled

    def test_idempotence(self):
        from revmon.data import restrict

        params = ScenarioParams(
            lambda_=1.0, nu=1.0, theta=0.5, beta0=-0.2, pi=0.5, tau_a=1.0, tau_f=2.0, n=30, seed=8
        )
        ds = simulate_trial(params)
        snap = snapshot(ds, 2.0)
        again = snapshot(restrict(ds, 2.0), 2.0)
        assert snap.total_events == again.total_events
        for v1, v2 in zip(snap.views, again.views):
            assert v1.followup == pytest.approx(v2.followup)
            assert v1.events == v2.events

    def test_blinding_strips_arm_only(self):
        params = ScenarioParams(
            lambda_=1.0, nu=1.0, theta=0.5, beta0=-0.2, pi=0.5, tau_a=1.0, tau_f=2.0, n=30, seed=8
        )
        ds = simulate_trial(params)
        open_snap = snapshot(ds, 2.0)
        blind_snap = snapshot(ds, 2.0, blinded=True)
        assert all(v.arm is None for v in blind_snap.views)
        for vo, vb in zip(open_snap.views, blind_snap.views):
            assert (vo.id, vo.followup, vo.events) == (vb.id, vb.followup, vb.events)

    def test_strip_arms_matches_blinded_snapshot(self):
        params = ScenarioParams(
            lambda_=1.0, nu=1.0, theta=0.5, beta0=-0.2, pi=0.5, tau_a=1.0, tau_f=2.0, n=10, seed=2
        )
        ds = simulate_trial(params)
        assert snapshot(strip_arms(ds), 2.0) == snapshot(ds, 2.0, blinded=True)
