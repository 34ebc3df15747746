"""Counting-process data model, events_csv ingestion, and calendar snapshots.

All times are in years. A subject's clock starts at enrollment: event times
and dropout times are measured from entry, while ``enroll_time`` and snapshot
times are calendar years from study start. Follow-up at a snapshot taken at
calendar time ``s`` is ``C = min(s - enroll, dropout, tau - enroll)`` where
``tau = tau_a + tau_f`` applies only when the dataset declares a design
duration. An event at exactly ``t = C`` counts as observed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .errors import DataFormatError, DegenerateDataError

DAYS_PER_YEAR = 365.25

EVENTS_CSV_HEADER = ["id", "arm", "enroll_time", "time", "status"]


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: enrollment calendar time, within-subject event times, censoring.

    ``arm`` is the binary treatment indicator and is ``None`` in blinded
    datasets. ``dropout_time`` is a per-subject censoring time from entry
    (non-administrative, or the fixed follow-up recorded in an exported file).
    """

    id: str
    enroll_time: float
    event_times: tuple[float, ...] = ()
    arm: Optional[int] = None
    dropout_time: Optional[float] = None

    def __post_init__(self):
        if not self.id:
            raise DataFormatError("subject id must be a non-empty string")
        if not math.isfinite(self.enroll_time) or self.enroll_time < 0:
            raise DataFormatError(f"subject {self.id}: enroll_time must be finite and >= 0")
        if self.arm not in (None, 0, 1):
            raise DataFormatError(f"subject {self.id}: arm must be 0, 1 or absent")
        ev = tuple(float(t) for t in self.event_times)
        if any(not math.isfinite(t) or t <= 0 for t in ev):
            raise DataFormatError(f"subject {self.id}: event times must be finite and > 0")
        if any(b <= a for a, b in zip(ev, ev[1:])):
            raise DataFormatError(f"subject {self.id}: event times must be strictly increasing")
        if self.dropout_time is not None:
            if not math.isfinite(self.dropout_time) or self.dropout_time <= 0:
                raise DataFormatError(f"subject {self.id}: dropout_time must be finite and > 0")
            if ev and ev[-1] > self.dropout_time:
                raise DataFormatError(f"subject {self.id}: event after censoring")
        object.__setattr__(self, "event_times", ev)


@dataclass(frozen=True)
class TrialDataset:
    """Immutable collection of subjects plus an optional design duration.

    ``design_duration = (tau_a, tau_f)`` declares the accrual window and the
    minimum follow-up; when present it caps every subject's follow-up at
    ``tau_a + tau_f - enroll_time`` (administrative censoring).
    """

    subjects: tuple[SubjectRecord, ...]
    design_duration: Optional[tuple[float, float]] = None

    def __post_init__(self):
        subjects = tuple(self.subjects)
        ids = [s.id for s in subjects]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DataFormatError(f"duplicate subject ids: {dup[:5]}")
        if self.design_duration is not None:
            tau_a, tau_f = (float(x) for x in self.design_duration)
            if tau_a < 0 or tau_f <= 0:
                raise DataFormatError("design_duration requires tau_a >= 0 and tau_f > 0")
            late = [s.id for s in subjects if s.enroll_time > tau_a]
            if late:
                raise DataFormatError(f"enrollments after accrual window: {late[:5]}")
            object.__setattr__(self, "design_duration", (tau_a, tau_f))
        object.__setattr__(self, "subjects", subjects)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def total_duration(self) -> Optional[float]:
        if self.design_duration is None:
            return None
        return self.design_duration[0] + self.design_duration[1]

    @property
    def has_arms(self) -> bool:
        return bool(self.subjects) and all(s.arm is not None for s in self.subjects)

    def first_enrollment(self) -> float:
        if not self.subjects:
            raise DegenerateDataError("dataset has no subjects")
        return min(s.enroll_time for s in self.subjects)

    def max_followup(self, record: SubjectRecord) -> float:
        """Follow-up cap for one subject, ignoring any snapshot time."""
        cap = math.inf if record.dropout_time is None else record.dropout_time
        if self.total_duration is not None:
            cap = min(cap, self.total_duration - record.enroll_time)
        return cap

    def event_calendar_times(self) -> np.ndarray:
        """Sorted calendar times at which each recorded event becomes visible.

        The visibility rule is entry-space (event observed at ``s`` iff
        ``t <= s - enroll``), so ``enroll + t`` is nudged up by at most a few
        ulps where rounding would otherwise hide the event from a snapshot
        taken at its own calendar time.
        """
        enr = np.asarray(
            [s.enroll_time for s in self.subjects for _ in s.event_times], dtype=float
        )
        t = np.asarray([t for s in self.subjects for t in s.event_times], dtype=float)
        cal = enr + t
        for _ in range(4):
            lag = (cal - enr) < t
            if not lag.any():
                break
            cal[lag] = np.nextafter(cal[lag], np.inf)
        return np.sort(cal)

    def enrollment_times(self) -> np.ndarray:
        return np.sort(np.asarray([s.enroll_time for s in self.subjects], dtype=float))


@dataclass(frozen=True)
class SubjectView:
    """A subject as seen at a snapshot: truncated events and follow-up C."""

    id: str
    followup: float
    events: tuple[float, ...]
    arm: Optional[int] = None


@dataclass(frozen=True)
class AnalysisSnapshot:
    """The trial frozen at calendar time ``s``."""

    calendar_time: float
    views: tuple[SubjectView, ...]

    @property
    def n_enrolled(self) -> int:
        return len(self.views)

    @property
    def total_events(self) -> int:
        return sum(len(v.events) for v in self.views)

    @property
    def tau_max(self) -> float:
        return max(v.followup for v in self.views)

    @property
    def blinded(self) -> bool:
        return any(v.arm is None for v in self.views)


def snapshot(dataset: TrialDataset, s: float, blinded: bool = False) -> AnalysisSnapshot:
    """Freeze the trial at calendar time ``s``.

    Subjects enrolled at or after ``s`` are excluded; each included subject
    gets ``C = min(s - enroll, dropout, tau - enroll)`` and events truncated
    to ``t <= C``. With ``blinded=True`` the arm codes are stripped.

    Raises
    ------
    DegenerateDataError
        If no subject is enrolled strictly before ``s``.
    """
    if not dataset.subjects or s <= dataset.first_enrollment():
        raise DegenerateDataError(f"no subjects enrolled before calendar time {s}")
    views = []
    for rec in dataset.subjects:
        if rec.enroll_time >= s:
            continue
        c = min(s - rec.enroll_time, dataset.max_followup(rec))
        events = tuple(t for t in rec.event_times if t <= c)
        views.append(
            SubjectView(
                id=rec.id,
                followup=c,
                events=events,
                arm=None if blinded else rec.arm,
            )
        )
    return AnalysisSnapshot(calendar_time=float(s), views=tuple(views))


def restrict(dataset: TrialDataset, s: float) -> TrialDataset:
    """Return a new dataset truncated at calendar time ``s`` (data actually seen)."""
    snap = snapshot(dataset, s)
    subjects = tuple(
        SubjectRecord(
            id=v.id,
            enroll_time=next(r.enroll_time for r in dataset.subjects if r.id == v.id),
            event_times=v.events,
            arm=v.arm,
            dropout_time=v.followup,
        )
        for v in snap.views
    )
    return TrialDataset(subjects=subjects, design_duration=None)


def _parse_row(row: dict, line_no: int, scale: float) -> tuple[str, Optional[int], float, float, int]:
    try:
        sid = row["id"].strip()
        arm_raw = (row.get("arm") or "").strip()
        arm = None if arm_raw == "" else int(arm_raw)
        enroll = float(row["enroll_time"]) / scale
        time = float(row["time"]) / scale
        status = int(row["status"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"line {line_no}: malformed row ({exc})") from exc
    if status not in (0, 1):
        raise DataFormatError(f"line {line_no}: status must be 0 or 1")
    if arm not in (None, 0, 1):
        raise DataFormatError(f"line {line_no}: arm must be 0, 1 or empty")
    return sid, arm, enroll, time, status


def load_dataset(
    path,
    time_unit: str = "years",
    design_duration: Optional[tuple[float, float]] = None,
) -> TrialDataset:
    """Read an events_csv file into a validated :class:`TrialDataset`.

    Format (header required): ``id,arm,enroll_time,time,status`` with one row
    per event (status=1, ``time`` measured from entry) and exactly one
    censoring row per subject (status=0, ``time`` = follow-up C). ``arm`` may
    be empty throughout for blinded files. ``time_unit="days"`` divides all
    time columns by 365.25.
    """
    if time_unit not in ("years", "days"):
        raise DataFormatError(f"unknown time unit {time_unit!r}")
    scale = DAYS_PER_YEAR if time_unit == "days" else 1.0

    order: list[str] = []
    events: dict[str, list[float]] = {}
    censor: dict[str, float] = {}
    enrolls: dict[str, float] = {}
    arms: dict[str, Optional[int]] = {}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != EVENTS_CSV_HEADER:
            raise DataFormatError(
                f"expected header {','.join(EVENTS_CSV_HEADER)!r}, got {reader.fieldnames}"
            )
        for line_no, row in enumerate(reader, start=2):
            sid, arm, enroll, time, status = _parse_row(row, line_no, scale)
            if sid not in order:
                order.append(sid)
                events[sid] = []
                enrolls[sid] = enroll
                arms[sid] = arm
            else:
                if enrolls[sid] != enroll:
                    raise DataFormatError(f"line {line_no}: conflicting enroll_time for id {sid}")
                if arms[sid] != arm:
                    raise DataFormatError(f"line {line_no}: conflicting arm for id {sid}")
            if status == 0:
                if sid in censor:
                    raise DataFormatError(f"line {line_no}: duplicate censoring row for id {sid}")
                censor[sid] = time
            else:
                events[sid].append(time)

    missing = [sid for sid in order if sid not in censor]
    if missing:
        raise DataFormatError(f"missing censoring row for ids: {missing[:5]}")

    subjects = []
    for sid in order:
        ev = sorted(events[sid])
        if ev and ev[-1] > censor[sid]:
            raise DataFormatError(f"subject {sid}: event after censoring")
        subjects.append(
            SubjectRecord(
                id=sid,
                enroll_time=enrolls[sid],
                event_times=tuple(ev),
                arm=arms[sid],
                dropout_time=censor[sid],
            )
        )
    return TrialDataset(subjects=tuple(subjects), design_duration=design_duration)


def _write_events(dataset: TrialDataset, fh, blinded: bool) -> None:
    writer = csv.writer(fh)
    writer.writerow(EVENTS_CSV_HEADER)
    for rec in dataset.subjects:
        cap = dataset.max_followup(rec)
        if not math.isfinite(cap):
            raise DataFormatError(
                f"subject {rec.id}: follow-up undetermined (no dropout_time or design duration)"
            )
        arm = "" if blinded or rec.arm is None else str(rec.arm)
        for t in rec.event_times:
            writer.writerow([rec.id, arm, repr(rec.enroll_time), repr(float(t)), 1])
        writer.writerow([rec.id, arm, repr(rec.enroll_time), repr(float(cap)), 0])


def write_events_csv(dataset: TrialDataset, path, blinded: bool = False) -> None:
    """Write a dataset in events_csv form (one censoring row per subject).

    The censoring row carries each subject's full follow-up, which must be
    determined either by a per-subject dropout time or by the dataset's
    design duration.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_events(dataset, fh, blinded)


def events_csv_text(dataset: TrialDataset, blinded: bool = False) -> str:
    """events_csv content as a string (same format as :func:`write_events_csv`)."""
    import io

    buf = io.StringIO()
    _write_events(dataset, buf, blinded)
    return buf.getvalue()


def strip_arms(dataset: TrialDataset) -> TrialDataset:
    """Blinded copy of a dataset (arm codes removed, everything else intact)."""
    return TrialDataset(
        subjects=tuple(replace(s, arm=None) for s in dataset.subjects),
        design_duration=dataset.design_duration,
    )
