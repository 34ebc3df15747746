import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from revmon.data import SubjectRecord, TrialDataset, snapshot

CGD_CSV = Path(__file__).parent / "data" / "cgd_events.csv"


@pytest.fixture
def hand4_dataset():
    """Z={1,1,0,0}, C=1 each; events: subj a at 0.5, subj c at 0.25 and 0.75."""
    return TrialDataset(
        subjects=(
            SubjectRecord(id="a", enroll_time=0.0, event_times=(0.5,), arm=1, dropout_time=1.0),
            SubjectRecord(id="b", enroll_time=0.0, event_times=(), arm=1, dropout_time=1.0),
            SubjectRecord(id="c", enroll_time=0.0, event_times=(0.25, 0.75), arm=0, dropout_time=1.0),
            SubjectRecord(id="d", enroll_time=0.0, event_times=(), arm=0, dropout_time=1.0),
        )
    )


@pytest.fixture
def hand4_snapshot(hand4_dataset):
    return snapshot(hand4_dataset, 1.0)


@pytest.fixture
def mirrored_dataset():
    """Two arms with identical event/censoring patterns."""
    subs = []
    for i, (times, c) in enumerate([((0.5,), 1.0), ((0.25, 0.75), 1.2), ((), 0.9)]):
        for arm in (0, 1):
            subs.append(
                SubjectRecord(
                    id=f"m{i}{arm}", enroll_time=0.0, event_times=times, arm=arm, dropout_time=c
                )
            )
    return TrialDataset(subjects=tuple(subs))


@pytest.fixture
def counts4_blinded_snapshot():
    """4 subjects, all C=1, event counts (0, 1, 1, 2)."""
    ds = TrialDataset(
        subjects=(
            SubjectRecord(id="w", enroll_time=0.0, event_times=(), dropout_time=1.0),
            SubjectRecord(id="x", enroll_time=0.0, event_times=(0.3,), dropout_time=1.0),
            SubjectRecord(id="y", enroll_time=0.0, event_times=(0.6,), dropout_time=1.0),
            SubjectRecord(id="z", enroll_time=0.0, event_times=(0.2, 0.9), dropout_time=1.0),
        )
    )
    return snapshot(ds, 1.0, blinded=True)


def require_cgd():
    if not CGD_CSV.exists():
        pytest.skip(f"CGD export not present at {CGD_CSV}")
    return CGD_CSV
