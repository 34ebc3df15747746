"""Semiparametric marginal rates model for two-arm recurrent-event data.

Fits the log rate ratio by solving the partial score equation, estimates the
baseline mean via the Breslow-type plug-in, and computes both the model-based
and the sandwich (robust) variance. All risk-set sums run over the distinct
observed event times only; tied event times are pooled with multiplicity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from .data import AnalysisSnapshot
from .errors import ConvergenceError, DegenerateDataError
from .stepfun import StepFunction

__all__ = [
    "FitResult",
    "WaldTest",
    "partial_score",
    "partial_score_derivative",
    "fit_beta",
    "breslow_mu0",
    "robust_variance",
    "wald_test",
]

BETA_BOUND = 20.0


@dataclass(frozen=True)
class FitResult:
    """Converged fit: point estimate, variances, and baseline mean."""

    beta_hat: float
    iterations: int
    score_at_solution: float
    a_hat: float
    sigma_hat: float
    v2_robust: float
    v2_naive: float
    mu0_hat: StepFunction
    n_subjects: int
    n_events: int

    @property
    def se_robust(self) -> float:
        return math.sqrt(self.v2_robust)

    @property
    def se_naive(self) -> float:
        return math.sqrt(self.v2_naive)


class WaldTest(NamedTuple):
    z: float
    p: float
    reject: bool


class _RiskData:
    """Precomputed per-snapshot arrays for all risk-set computations.

    ``u`` are the distinct observed event times (ascending), ``d``/``d1`` the
    pooled event multiplicities (total and arm-1), and ``r0``/``r1`` the
    per-arm at-risk counts at each ``u``. Subject-level arrays keep the
    follow-up ``c``, arm ``z``, and flattened events with their index into
    ``u``.
    """

    def __init__(self, snap: AnalysisSnapshot):
        views = snap.views
        if any(v.arm is None for v in views):
            raise DegenerateDataError("estimation requires an unblinded snapshot (arm codes present)")
        self.n = len(views)
        self.z = np.array([v.arm for v in views], dtype=np.int64)
        self.c = np.array([v.followup for v in views], dtype=float)
        ev_t = np.concatenate([np.asarray(v.events, dtype=float) for v in views]) if views else np.array([])
        ev_subj = np.concatenate(
            [np.full(len(v.events), i, dtype=np.int64) for i, v in enumerate(views)]
        ) if views else np.array([], dtype=np.int64)
        if ev_t.size == 0:
            raise DegenerateDataError("no events observed")
        if not (np.any(self.z == 0) and np.any(self.z == 1)):
            raise DegenerateDataError("all subjects in one arm; treatment contrast is degenerate")
        order = np.argsort(ev_t, kind="stable")
        self.ev_t = ev_t[order]
        self.ev_subj = ev_subj[order]
        self.u, uidx, self.d = np.unique(self.ev_t, return_inverse=True, return_counts=True)
        self.ev_uidx = uidx
        self.d1 = np.bincount(uidx, weights=self.z[self.ev_subj].astype(float), minlength=self.u.size)
        c0 = np.sort(self.c[self.z == 0])
        c1 = np.sort(self.c[self.z == 1])
        self.r0 = c0.size - np.searchsorted(c0, self.u, side="left")
        self.r1 = c1.size - np.searchsorted(c1, self.u, side="left")
        self.n_events = int(self.ev_t.size)

    def zbar(self, beta: float) -> np.ndarray:
        w1 = self.r1 * math.exp(beta)
        return w1 / (self.r0 + w1)

    def score(self, beta: float) -> float:
        return float(np.sum(self.d1) - np.sum(self.d * self.zbar(beta)))

    def score_derivative(self, beta: float) -> float:
        zb = self.zbar(beta)
        return float(-np.sum(self.d * zb * (1.0 - zb)))


def partial_score(snap: AnalysisSnapshot, beta: float) -> float:
    """Partial score U(beta) = sum over events of (Z_i - Zbar(beta, u)).

    ``Zbar(beta, u) = S1/S0`` with ``Sr(beta, u) = n^-1 sum Y_i(u) Z_i^r
    exp(beta Z_i)`` evaluated at the distinct observed event times.
    """
    return _RiskData(snap).score(beta)


def partial_score_derivative(snap: AnalysisSnapshot, beta: float) -> float:
    """Analytic dU/dbeta, i.e. minus the summed risk-set variance of Z."""
    return _RiskData(snap).score_derivative(beta)


def fit_beta(snap: AnalysisSnapshot, tol: float = 1e-9, max_iter: int = 50) -> FitResult:
    """Solve U(beta) = 0 by damped Newton iteration from beta = 0.

    Converges when ``|U(beta)| <= tol``. Step-halving is applied whenever a
    full Newton step fails to reduce ``|U|``. An iterate with ``|beta| >
    20`` signals monotone likelihood (all events in one arm) and raises
    :class:`ConvergenceError` rather than looping to ``max_iter``.
    """
    rd = _RiskData(snap)
    beta = 0.0
    u_val = rd.score(beta)
    iterations = 0
    while abs(u_val) > tol:
        if iterations >= max_iter:
            raise ConvergenceError(
                f"fit did not converge in {max_iter} iterations (last beta={beta:.6g})",
                last_iterate=beta,
            )
        deriv = rd.score_derivative(beta)
        if deriv >= 0.0:
            raise DegenerateDataError("score derivative is non-negative; design is degenerate")
        step = -u_val / deriv
        new_beta = beta + step
        new_u = rd.score(new_beta)
        halvings = 0
        while abs(new_u) > abs(u_val) and halvings < 30:
            step *= 0.5
            new_beta = beta + step
            new_u = rd.score(new_beta)
            halvings += 1
        beta, u_val = new_beta, new_u
        iterations += 1
        if abs(beta) > BETA_BOUND:
            raise ConvergenceError(
                "nonidentifiable effect: |beta| exceeded bound (monotone likelihood)",
                last_iterate=beta,
            )
    mu0 = _breslow(rd, beta)
    a_hat, sigma_hat, v2_robust = _robust(rd, beta, mu0)
    return FitResult(
        beta_hat=beta,
        iterations=iterations,
        score_at_solution=u_val,
        a_hat=a_hat,
        sigma_hat=sigma_hat,
        v2_robust=v2_robust,
        v2_naive=1.0 / (rd.n * a_hat),
        mu0_hat=mu0,
        n_subjects=rd.n,
        n_events=rd.n_events,
    )


def _breslow(rd: _RiskData, beta: float) -> StepFunction:
    denom = rd.r0 + rd.r1 * math.exp(beta)
    if np.any(denom <= 0):
        raise DegenerateDataError("event time with empty risk set")
    jumps = rd.d / denom
    return StepFunction(jump_times=rd.u, cumulative_values=np.cumsum(jumps))


def breslow_mu0(snap: AnalysisSnapshot, beta: float) -> StepFunction:
    """Baseline mean estimate: jumps of d(u) / (n * S0(beta, u)) at event times."""
    return _breslow(_RiskData(snap), beta)


def _robust(rd: _RiskData, beta: float, mu0: StepFunction) -> tuple[float, float, float]:
    if mu0.jump_times.size != rd.u.size or not np.array_equal(mu0.jump_times, rd.u):
        raise ValueError("mu0_hat jump times do not match the snapshot's event times")
    dmu = mu0.increments
    zb = rd.zbar(beta)
    eb = math.exp(beta)

    a_hat = float(np.sum(dmu * (rd.r0 * zb**2 + rd.r1 * (1.0 - zb) ** 2 * eb)) / rd.n)
    if a_hat <= 0:
        raise DegenerateDataError("model information is non-positive; design is degenerate")

    # Per-subject score residuals: observed part minus compensator part.
    obs = np.bincount(
        rd.ev_subj,
        weights=rd.z[rd.ev_subj] - zb[rd.ev_uidx],
        minlength=rd.n,
    )
    g0 = np.concatenate(([0.0], np.cumsum(-zb * dmu)))
    g1 = np.concatenate(([0.0], np.cumsum((1.0 - zb) * dmu)))
    pos = np.searchsorted(rd.u, rd.c, side="right")
    comp = np.where(rd.z == 1, eb * g1[pos], g0[pos])
    q = obs - comp
    sigma_hat = float(np.sum(q**2) / rd.n)
    v2 = sigma_hat / (rd.n * a_hat**2)
    return a_hat, sigma_hat, v2


def robust_variance(
    snap: AnalysisSnapshot, beta_hat: float, mu0_hat: StepFunction
) -> tuple[float, float, float]:
    """Sandwich variance pieces ``(A_hat, Sigma_hat, v2_robust)`` at ``beta_hat``.

    ``A_hat`` is the empirical model information, ``Sigma_hat`` the empirical
    variance of per-subject score residuals, and ``v2_robust =
    Sigma_hat / (n * A_hat**2)``.
    """
    return _robust(_RiskData(snap), beta_hat, mu0_hat)


def wald_test(fit: FitResult, alpha: float = 0.05) -> WaldTest:
    """Two-sided robust Wald test of a null (zero) log rate ratio."""
    se = fit.se_robust
    if se == 0.0:
        # Perfectly mirrored data: zero residual variance. Keep z continuous.
        z = 0.0 if fit.beta_hat == 0.0 else math.copysign(math.inf, fit.beta_hat)
    else:
        z = fit.beta_hat / se
    p = float(2.0 * ndtr(-abs(z)))
    return WaldTest(z=z, p=p, reject=bool(p < alpha))
