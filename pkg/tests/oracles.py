"""Brute-force reference implementations used to validate the fast paths.

Everything here is written as plain loops straight from the definitions, with
no shared code or vectorization tricks, so the main package cannot "agree
with itself" through a common bug.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar


def _subject_arrays(snap):
    z = [v.arm for v in snap.views]
    c = [v.followup for v in snap.views]
    events = [list(v.events) for v in snap.views]
    return z, c, events


def distinct_event_times(snap):
    times = sorted({t for v in snap.views for t in v.events})
    return times


def s_r(snap, beta, r, u):
    z, c, _ = _subject_arrays(snap)
    n = len(z)
    total = 0.0
    for zi, ci in zip(z, c):
        if ci >= u:
            total += (zi**r) * math.exp(beta * zi)
    return total / n


def brute_score(snap, beta):
    z, _, events = _subject_arrays(snap)
    total = 0.0
    for zi, evs in zip(z, events):
        for u in evs:
            zbar = s_r(snap, beta, 1, u) / s_r(snap, beta, 0, u)
            total += zi - zbar
    return total


def brute_breslow(snap, beta):
    """Cumulative values of the baseline-mean estimate at each distinct time."""
    n = snap.n_enrolled
    out = []
    cum = 0.0
    for u in distinct_event_times(snap):
        d = sum(1 for v in snap.views for t in v.events if t == u)
        cum += d / (n * s_r(snap, beta, 0, u))
        out.append(cum)
    return distinct_event_times(snap), out


def brute_robust(snap, beta):
    """(A_hat, Sigma_hat, v2) from per-subject loops at the given beta."""
    z, c, events = _subject_arrays(snap)
    n = len(z)
    times = distinct_event_times(snap)
    zbar = {u: s_r(snap, beta, 1, u) / s_r(snap, beta, 0, u) for u in times}
    d = {u: sum(1 for evs in events for t in evs if t == u) for u in times}
    dmu = {u: d[u] / (n * s_r(snap, beta, 0, u)) for u in times}

    a_hat = 0.0
    for zi, ci in zip(z, c):
        for u in times:
            if ci >= u:
                a_hat += (zi - zbar[u]) ** 2 * math.exp(beta * zi) * dmu[u]
    a_hat /= n

    sigma = 0.0
    for zi, ci, evs in zip(z, c, events):
        q = 0.0
        for u in times:
            dn = sum(1 for t in evs if t == u)
            y = 1.0 if ci >= u else 0.0
            dm = dn - y * math.exp(beta * zi) * dmu[u]
            q += (zi - zbar[u]) * dm
        sigma += q * q
    sigma /= n

    return a_hat, sigma, sigma / (n * a_hat**2)


def brute_residual_sums(snap, beta):
    """Sum over subjects of dM_i(u) at each distinct event time."""
    z, c, events = _subject_arrays(snap)
    n = len(z)
    times = distinct_event_times(snap)
    out = []
    for u in times:
        d = sum(1 for evs in events for t in evs if t == u)
        dmu = d / (n * s_r(snap, beta, 0, u))
        total = 0.0
        for zi, ci, evs in zip(z, c, events):
            dn = sum(1 for t in evs if t == u)
            y = 1.0 if ci >= u else 0.0
            total += dn - y * math.exp(beta * zi) * dmu
        out.append(total)
    return times, out


def log_partial_likelihood(snap, beta):
    z, c, events = _subject_arrays(snap)
    total = 0.0
    for zi, evs in zip(z, events):
        for u in evs:
            denom = sum(
                math.exp(beta * zk) for zk, ck in zip(z, c) if ck >= u
            )
            total += beta * zi - math.log(denom)
    return total


def maximize_likelihood(snap, bound=8.0):
    """1-d bounded maximizer of the log partial likelihood (fit oracle)."""
    res = minimize_scalar(
        lambda b: -log_partial_likelihood(snap, b),
        bounds=(-bound, bound),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(res.x)


def brute_blind_v2(snap):
    """Direct evaluation of the blinded variance from its definition."""
    c = [v.followup for v in snap.views]
    events = [list(v.events) for v in snap.views]
    n = len(c)
    l_total = sum(len(e) for e in events)
    times = sorted({t for e in events for t in e})

    def mu0(x):
        cum = 0.0
        for u in times:
            if u > x:
                break
            d = sum(1 for e in events for t in e if t == u)
            at_risk = sum(1 for ci in c if ci >= u)
            cum += d / at_risk
        return cum

    ss = sum((len(e) - mu0(ci)) ** 2 for ci, e in zip(c, events))
    return 4.0 * ss / l_total**2


def brute_snapshot_event_count(dataset, s):
    """Events visible at calendar time s, recounted straight from the records."""
    count = 0
    for rec in dataset.subjects:
        if rec.enroll_time >= s:
            continue
        cap = s - rec.enroll_time
        if rec.dropout_time is not None:
            cap = min(cap, rec.dropout_time)
        if dataset.total_duration is not None:
            cap = min(cap, dataset.total_duration - rec.enroll_time)
        count += sum(1 for t in rec.event_times if t <= cap)
    return count


def random_snapshot(rng, n_max=20, require_fit=False):
    """Small random unblinded snapshot for oracle comparisons."""
    from revmon.data import SubjectRecord, TrialDataset, snapshot

    while True:
        n = int(rng.integers(4, n_max + 1))
        z = rng.integers(0, 2, size=n)
        if z.sum() in (0, n):
            continue
        subs = []
        arm_events = {0: 0, 1: 0}
        for i in range(n):
            c = float(rng.uniform(0.5, 2.0))
            k = int(rng.integers(0, 5))
            times = np.unique(np.round(rng.uniform(0.01, c, size=k), 3))
            times = times[times > 0]
            arm_events[int(z[i])] += len(times)
            subs.append(
                SubjectRecord(
                    id=f"r{i}",
                    enroll_time=0.0,
                    event_times=tuple(float(t) for t in times),
                    arm=int(z[i]),
                    dropout_time=c,
                )
            )
        total = arm_events[0] + arm_events[1]
        if total == 0:
            continue
        if require_fit and (arm_events[0] == 0 or arm_events[1] == 0):
            continue
        ds = TrialDataset(subjects=tuple(subs))
        return snapshot(ds, 10.0)
