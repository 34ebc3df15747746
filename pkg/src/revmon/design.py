"""Design-stage calculators: event counts, subject counts, power, target variance.

The planning model is a mixed Poisson process with a Weibull-type baseline
mean ``mu0(t) = lambda * t**nu`` and a gamma frailty with mean 1 and variance
``theta``. Subjects accrue uniformly over ``[0, tau_a]`` and are followed for
at least ``tau_f`` years, so planned follow-up is uniform on
``[tau_f, tau_a + tau_f]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from scipy.special import ndtr, ndtri

from .errors import DataFormatError

__all__ = [
    "DesignSpec",
    "DesignOutput",
    "schoenfeld_events",
    "mean_baseline_mu",
    "inflation_factor",
    "constant_hazard_inflation",
    "ingel_events",
    "sample_size",
    "power_given_variance",
    "target_variance",
    "plan",
]


@dataclass(frozen=True)
class DesignSpec:
    """Planning inputs for a two-arm recurrent-event trial."""

    alpha: float
    power_target: float
    beta0: float
    pi: float
    tau_a: float
    tau_f: float
    lambda_: float
    nu: float
    theta: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DataFormatError("alpha must be in (0, 1)")
        if not 0 < self.power_target < 1:
            raise DataFormatError("power_target must be in (0, 1)")
        if not 0 < self.pi < 1:
            raise DataFormatError("pi must be in (0, 1)")
        if self.tau_a < 0:
            raise DataFormatError("tau_a must be >= 0")
        if self.tau_f <= 0:
            raise DataFormatError("tau_f must be > 0")
        if self.lambda_ <= 0 or self.nu <= 0:
            raise DataFormatError("Weibull baseline requires lambda > 0 and nu > 0")
        if self.theta < 0:
            raise DataFormatError("frailty variance theta must be >= 0")


@dataclass(frozen=True)
class DesignOutput:
    """Planning results: event counts, subject count, and monitoring target."""

    l_base_raw: float
    l_base: int
    mu_bar: float
    inflation: float
    l_events: int
    n_subjects: int
    v2_target: float


def schoenfeld_events(alpha: float, gamma: float, beta0: float, pi: float) -> float:
    """Required event count under independent-increment (Poisson-type) behavior.

    Returns the raw (pre-rounding) value
    ``((z_{1-alpha/2} + z_{1-gamma}) / beta0)**2 / (pi * (1 - pi))`` for a
    two-sided level-``alpha`` test with power ``1 - gamma`` against log rate
    ratio ``beta0`` under allocation probability ``pi``.
    """
    if beta0 == 0:
        raise DataFormatError("beta0 must be nonzero for event-count calculations")
    z = ndtri(1 - alpha / 2) + ndtri(1 - gamma)
    return float((z / beta0) ** 2 / (pi * (1 - pi)))


def mean_baseline_mu(spec: DesignSpec) -> float:
    """Expected baseline events per subject, averaged over planned follow-up.

    Follow-up is uniform on ``[tau_f, tau_a + tau_f]`` under uniform accrual
    with administrative censoring, so
    ``E[mu0(C)] = lambda * (tau**(nu+1) - tau_f**(nu+1)) / (tau_a * (nu+1))``
    with ``tau = tau_a + tau_f``; the degenerate-accrual limit is
    ``lambda * tau_f**nu``.
    """
    return _mu_bar(spec.lambda_, spec.nu, spec.tau_a, spec.tau_f)


def _mu_bar(lambda_: float, nu: float, tau_a: float, tau_f: float) -> float:
    if tau_a <= 0:
        return lambda_ * tau_f**nu
    tau = tau_a + tau_f
    return lambda_ * (tau ** (nu + 1) - tau_f ** (nu + 1)) / (tau_a * (nu + 1))


def inflation_factor(theta: float, mu_bar: float, beta0: float) -> float:
    """Event-count multiplier correcting for gamma-frailty overdispersion.

    ``1 + theta * mu_bar * (1 + exp(2*beta0)) / (1 + exp(beta0))``; equals 1
    when ``theta = 0``.
    """
    if theta < 0:
        raise DataFormatError("theta must be >= 0")
    return 1.0 + theta * mu_bar * (1.0 + math.exp(2.0 * beta0)) / (1.0 + math.exp(beta0))


def constant_hazard_inflation(var_lambda: float, e_lambda: float, tau: float) -> float:
    """Inflation factor for a random subject-specific constant hazard.

    ``1 + Var(lambda) * tau / E(lambda)``. Exposed for completeness; the
    Weibull/frailty variant is what the planner uses.
    """
    if e_lambda <= 0:
        raise DataFormatError("E(lambda) must be > 0")
    return 1.0 + var_lambda * tau / e_lambda


def ingel_events(
    spec: DesignSpec,
    mu_bar: Optional[float] = None,
    rounding: str = "early",
    cushion: int = 0,
) -> int:
    """Target event count under the frailty-inflated planning model.

    ``rounding="early"`` (default) rounds the base count up before applying
    the inflation factor, i.e. ``ceil(ceil(L_base) * IF)``; ``"late"``
    rounds once at the end. ``mu_bar`` overrides the accrual-averaged
    baseline mean (for users who want the baseline mean at a fixed horizon).
    ``cushion`` adds a fixed number of events on top.
    """
    if rounding not in ("early", "late"):
        raise DataFormatError("rounding must be 'early' or 'late'")
    if cushion < 0:
        raise DataFormatError("cushion must be >= 0")
    base = schoenfeld_events(spec.alpha, 1 - spec.power_target, spec.beta0, spec.pi)
    mb = mean_baseline_mu(spec) if mu_bar is None else mu_bar
    infl = inflation_factor(spec.theta, mb, spec.beta0)
    if rounding == "early":
        l_events = math.ceil(math.ceil(base) * infl)
    else:
        l_events = math.ceil(base * infl)
    return int(l_events) + int(cushion)


def sample_size(spec: DesignSpec, l_events: int, mu_bar: Optional[float] = None) -> int:
    """Subjects needed to observe ``l_events`` within the planned duration.

    Expected events per subject average the rate ratio over arms:
    ``(pi * exp(beta0) + 1 - pi) * mu_bar``. The frailty has mean 1 and does
    not shift this expectation.
    """
    if l_events < 1:
        raise DataFormatError("l_events must be >= 1")
    mb = mean_baseline_mu(spec) if mu_bar is None else mu_bar
    if mb <= 0:
        raise DataFormatError("mean baseline events per subject must be > 0")
    per_subject = (spec.pi * math.exp(spec.beta0) + 1 - spec.pi) * mb
    return int(math.ceil(l_events / per_subject))


def power_given_variance(v2: float, beta0: float, alpha: float) -> float:
    """Two-sided power of the robust Wald test at variance ``v2``.

    ``Phi(-z_{1-alpha/2} - beta0/v) + 1 - Phi(z_{1-alpha/2} - beta0/v)`` with
    ``v = sqrt(v2)``. The ``v2 = 0`` limit is 1 for ``beta0 != 0`` and
    ``alpha`` for ``beta0 = 0``.
    """
    if v2 < 0:
        raise DataFormatError("v2 must be >= 0")
    if v2 == 0.0:
        return 1.0 if beta0 != 0 else float(alpha)
    z = ndtri(1 - alpha / 2)
    shift = beta0 / math.sqrt(v2)
    return float(ndtr(-z - shift) + 1.0 - ndtr(z - shift))


def target_variance(beta0: float, alpha: float, power_target: float) -> float:
    """Variance at which the robust Wald test attains ``power_target``.

    Bisection on ``v`` over ``[|beta0|/50, 50*|beta0|]`` to a power residual
    of 1e-10. Power is strictly decreasing in ``v`` for ``beta0 != 0``.
    """
    if beta0 == 0:
        raise DataFormatError("beta0 must be nonzero")
    if not (alpha < power_target < 1):
        raise DataFormatError("power_target must lie in (alpha, 1)")
    lo, hi = abs(beta0) / 50.0, abs(beta0) * 50.0
    p_lo = power_given_variance(lo**2, beta0, alpha)
    p_hi = power_given_variance(hi**2, beta0, alpha)
    if not (p_hi < power_target < p_lo):
        raise DataFormatError(
            f"power_target {power_target} outside attainable bracket ({p_hi:.6g}, {p_lo:.6g})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p_mid = power_given_variance(mid**2, beta0, alpha)
        if abs(p_mid - power_target) <= 1e-10:
            return mid**2
        if p_mid > power_target:
            lo = mid
        else:
            hi = mid
    return (0.5 * (lo + hi)) ** 2


def plan(
    spec: DesignSpec,
    mu_bar: Optional[float] = None,
    rounding: str = "early",
    cushion: int = 0,
) -> DesignOutput:
    """Full planning pass: base events, inflation, events, subjects, target variance."""
    base = schoenfeld_events(spec.alpha, 1 - spec.power_target, spec.beta0, spec.pi)
    mb = mean_baseline_mu(spec) if mu_bar is None else mu_bar
    infl = inflation_factor(spec.theta, mb, spec.beta0)
    l_events = ingel_events(spec, mu_bar=mb, rounding=rounding, cushion=cushion)
    n = sample_size(spec, l_events, mu_bar=mb)
    v2 = target_variance(spec.beta0, spec.alpha, spec.power_target)
    return DesignOutput(
        l_base_raw=base,
        l_base=int(math.ceil(base)),
        mu_bar=mb,
        inflation=infl,
        l_events=l_events,
        n_subjects=n,
        v2_target=v2,
    )
