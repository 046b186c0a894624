"""Heterogeneity-aware SEIR dynamics, final epidemic sizes and R trajectories.

Person-to-person variability in susceptibility or contact rates is reduced
to three ODEs through the moment generating function of the mixing-parameter
distribution; for gamma-distributed variability the reduction collapses to a
power law ``dS/dt = -R0*gamma*S**lam*I`` with immunity coefficient
``lam = 1 + 1/k`` (susceptibility) or ``1 + 2/k`` (contact rates). The mixing
parameter is normalized to mean one so ``R0`` keeps its usual meaning under
every heterogeneity setting.

Integration is fixed-step RK4 (default ``dt = 0.05`` days) for bit-level
reproducibility; the inner loops live in :mod:`epimort._kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InputError, NumericalError, ParameterError, StepSizeError

HOMOGENEOUS = "none"
SUSCEPTIBILITY = "susceptibility"
CONNECTIVITY = "connectivity"
FIXED_LAMBDA = "fixed-lambda"


@dataclass(frozen=True)
class SeirConfig:
    """Epidemic parameters plus the heterogeneity model.

    ``delta`` is the E->I rate (1/mean latency), ``gamma`` the I->R rate
    (1/mean infectious duration), both per day.
    """

    R0: float
    delta: float
    gamma: float
    heterogeneity: str = HOMOGENEOUS
    k: float | None = None
    lam: float | None = None  # only for heterogeneity == "fixed-lambda"

    def __post_init__(self):
        if not self.R0 > 0:
            raise ParameterError("R0 must be positive")
        if not (self.delta > 0 and self.gamma > 0):
            raise ParameterError("delta and gamma must be positive rates")
        if self.heterogeneity in (SUSCEPTIBILITY, CONNECTIVITY):
            if self.k is None or not self.k > 0:
                raise ParameterError("heterogeneous models need a shape k > 0")
        elif self.heterogeneity == FIXED_LAMBDA:
            if self.lam is None or self.lam < 1.0:
                raise ParameterError(
                    "immunity coefficient must be >= 1 "
                    f"(got {self.lam!r}); 1 is the homogeneous model"
                )
        elif self.heterogeneity != HOMOGENEOUS:
            raise ParameterError(f"unknown heterogeneity {self.heterogeneity!r}")

    @property
    def immunity_coefficient(self) -> float:
        if self.heterogeneity == HOMOGENEOUS:
            return 1.0
        if self.heterogeneity == SUSCEPTIBILITY:
            return 1.0 + 1.0 / self.k
        if self.heterogeneity == CONNECTIVITY:
            return 1.0 + 2.0 / self.k
        return float(self.lam)

    @classmethod
    def with_lambda(cls, R0, delta, gamma, lam) -> "SeirConfig":
        return cls(R0=R0, delta=delta, gamma=gamma, heterogeneity=FIXED_LAMBDA, lam=lam)


@dataclass
class SeirTrajectory:
    """Solved compartment paths, as proportions of the initial population."""

    t: np.ndarray
    S: np.ndarray
    E: np.ndarray
    I: np.ndarray
    incidence: np.ndarray  # -dS/dt, new infections per day
    removed: np.ndarray

    @property
    def attack_fraction(self) -> float:
        return float(1.0 - self.S[-1])

    def daily_index(self) -> np.ndarray:
        """Indices of grid points falling on whole days."""
        step = self.t[1] - self.t[0] if self.t.size > 1 else 1.0
        per_day = int(round(1.0 / step))
        return np.arange(0, self.t.size, per_day)


def _check_step(dt: float) -> None:
    if not (0 < dt <= 0.1):
        raise ParameterError("dt must be positive and at most 0.1 day")


def _halfstep_multipliers(transmission, n_steps: int, dt: float) -> np.ndarray | None:
    if transmission is None:
        return None
    th = np.arange(2 * n_steps + 1) * (0.5 * dt)
    mult = np.asarray([float(transmission(x)) for x in th])
    if not np.all(np.isfinite(mult)) or np.any(mult < 0):
        raise InputError("transmission multiplier must be finite and nonnegative")
    return mult


def solve_seir(
    config: SeirConfig,
    initial_infected: float,
    horizon_days: float,
    dt: float = 0.05,
    transmission=None,
) -> SeirTrajectory:
    """Integrate the reduced power-law SEIR system.

    ``transmission`` is an optional callable ``t -> multiplier`` applied to
    ``R0*gamma`` (used for time-varying control scenarios).
    """
    _check_step(dt)
    if not (0 < initial_infected < 1):
        raise ParameterError("initial_infected must lie in (0, 1)")
    lam = config.immunity_coefficient
    n = int(round(horizon_days / dt))
    trans = _halfstep_multipliers(transmission, n, dt)
    S, E, I, R, inc, status, bad = _kernels.powerlaw_rk4(
        config.R0,
        config.delta,
        config.gamma,
        lam,
        1.0 - initial_infected,
        0.0,
        initial_infected,
        dt,
        n,
        trans,
    )
    if status == 1:
        raise StepSizeError(
            f"negative state at step {bad} (t={bad * dt:.3f}); reduce dt",
            step=bad,
            dt=dt,
        )
    return SeirTrajectory(np.arange(n + 1) * dt, S, E, I, inc, R)


def solve_seir_general(
    mgf,
    mgf_prime,
    mgf_second,
    mode: str,
    config: SeirConfig,
    initial_infected: float,
    horizon_days: float,
    dt: float = 0.05,
) -> SeirTrajectory:
    """Integrate the MGF-reduced SEIR system for an arbitrary mixing law.

    The caller supplies the moment generating function of the initial
    mixing-parameter distribution and its first two derivatives, evaluated
    at nonpositive arguments. ``mode`` selects variable susceptibility
    (first derivative drives depletion) or variable contact rates (second
    derivative, short-infectious-stage approximation). The susceptible
    fraction is inverted to the MGF argument by safeguarded Newton at each
    integrator stage, warm-started from the running value.
    """
    _check_step(dt)
    if not (0 < initial_infected < 1):
        raise ParameterError("initial_infected must lie in (0, 1)")
    if mode not in (SUSCEPTIBILITY, CONNECTIVITY):
        raise ParameterError("mode must be 'susceptibility' or 'connectivity'")
    if abs(float(mgf(0.0)) - 1.0) > 1e-8:
        raise InputError("mgf(0) must equal 1 (a probability distribution)")
    imode = 1 if mode == SUSCEPTIBILITY else 2
    dnorm = float(mgf_prime(0.0)) if imode == 1 else float(mgf_second(0.0))
    if not (np.isfinite(dnorm) and dnorm > 0):
        raise InputError("MGF derivative at 0 must be positive and finite")
    n = int(round(horizon_days / dt))
    S, E, I, R, inc, status, info = _kernels.mgf_rk4(
        mgf,
        mgf_prime,
        mgf_second,
        imode,
        config.R0,
        config.delta,
        config.gamma,
        dnorm,
        1.0 - initial_infected,
        0.0,
        initial_infected,
        dt,
        n,
    )
    if status == 2:
        raise NumericalError(
            "MGF inversion failed during integration",
            q=float(info),
            S_last=float(S[0]),
        )
    if status == 1:
        raise StepSizeError(
            f"negative state at step {info}; reduce dt", step=info, dt=dt
        )
    return SeirTrajectory(np.arange(n + 1) * dt, S, E, I, inc, R)


# -- MGF constructors for common mixing laws (all normalized to mean 1) ------


def gamma_mgf(k: float):
    """MGF triple of a mean-one gamma distribution with shape ``k``."""
    if not k > 0:
        raise ParameterError("gamma shape k must be positive")

    def m(s):
        return (1.0 - s / k) ** (-k)

    def m1(s):
        return (1.0 - s / k) ** (-k - 1.0)

    def m2(s):
        return (1.0 + 1.0 / k) * (1.0 - s / k) ** (-k - 2.0)

    return m, m1, m2


def point_mass_mgf(alpha: float = 1.0):
    """MGF triple of a point mass (no person-to-person variability)."""

    def m(s):
        return math.exp(alpha * s)

    def m1(s):
        return alpha * math.exp(alpha * s)

    def m2(s):
        return alpha * alpha * math.exp(alpha * s)

    return m, m1, m2


def mixture_mgf(alphas, weights):
    """MGF triple of a discrete mixture of mixing parameters."""
    a = np.asarray(alphas, dtype=float)
    w = np.asarray(weights, dtype=float)
    if a.size != w.size or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ParameterError("weights must be nonnegative and sum to one")

    def m(s):
        return float(np.sum(w * np.exp(a * s)))

    def m1(s):
        return float(np.sum(w * a * np.exp(a * s)))

    def m2(s):
        return float(np.sum(w * a * a * np.exp(a * s)))

    return m, m1, m2


# -- final size ---------------------------------------------------------------


def final_size(R0: float, lam: float) -> float:
    """Final infected proportion of a complete heterogeneous epidemic wave.

    Root of ``x = 1 - (1 + (lam-1)*R0*x)**(-1/(lam-1))``, with the
    ``lam = 1`` limit ``x = 1 - exp(-R0*x)``. Returns 0 for ``R0 <= 1``;
    the positive root for ``R0 > 1`` is bracketed and bisected to 1e-12.
    """
    if not R0 > 0:
        raise ParameterError("R0 must be positive")
    if lam < 1.0:
        raise ParameterError("immunity coefficient must be >= 1")
    if R0 <= 1.0:
        return 0.0

    if lam == 1.0:

        def g(x):
            return x - 1.0 + math.exp(-R0 * x)

    else:

        def g(x):
            return x - 1.0 + math.exp(-math.log1p((lam - 1.0) * R0 * x) / (lam - 1.0))

    lo, hi = 1e-12, 1.0
    if not (g(lo) < 0.0 < g(hi)):
        raise NumericalError("final-size equation not bracketed", R0=R0, lam=lam)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-15:
            break
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- R from an incidence curve ------------------------------------------------


@dataclass
class RTrajectory:
    """Reproduction-number path reconstructed from an incidence curve."""

    t: np.ndarray
    R: np.ndarray
    log_R: np.ndarray
    reliable: np.ndarray  # False during the start-up burn-in
    defined: np.ndarray   # False where infections are too scarce for R to mean much


def r_from_incidence(
    incidence: np.ndarray,
    delta: float,
    gamma: float,
    dt: float = 0.05,
) -> RTrajectory:
    """Reproduction number consistent with a daily incidence curve.

    Drives ``E' = inc(t) - delta*E``, ``I' = delta*E - gamma*I`` with the
    given curve, then ``R(t) = inc(t) / (gamma * I(t))``. The system starts
    at the constant-incidence equilibrium of the first value, and the first
    ``3/delta + 3/gamma`` days are flagged unreliable while that transient
    decays. Days where I falls below 1e-12 of its peak are marked undefined.
    """
    inc = np.asarray(incidence, dtype=float)
    if inc.ndim != 1 or inc.size < 2:
        raise InputError("incidence must be a 1-d series of at least 2 days")
    if np.any(~np.isfinite(inc)) or np.any(inc < 0):
        raise InputError("incidence must be finite and nonnegative")
    if not (delta > 0 and gamma > 0):
        raise ParameterError("delta and gamma must be positive rates")
    _check_step(dt)
    substeps = int(round(1.0 / dt))
    E, I = _kernels.driven_ei_rk4(inc, delta, gamma, substeps, inc[0] / delta, inc[0] / gamma)
    t = np.arange(inc.size, dtype=float)
    defined = I > 1e-12 * max(I.max(), 1e-300)
    R = np.full(inc.size, np.nan)
    np.divide(inc, gamma * I, out=R, where=defined)
    log_R = np.full(inc.size, np.nan)
    ok = defined & (R > 0)
    log_R[ok] = np.log(R[ok])
    reliable = t >= (3.0 / delta + 3.0 / gamma)
    return RTrajectory(t=t, R=R, log_R=log_R, reliable=reliable, defined=defined)


# -- locked-down / key-worker structure ---------------------------------------


@dataclass
class LockdownResult:
    t: np.ndarray
    lockdown_day: float
    locked: SeirTrajectory
    key: SeirTrajectory
    R_locked: np.ndarray
    R_key: np.ndarray
    aggregate_R: np.ndarray


def _contact_rates(r0_locked: float, r0_key: float, gamma: float):
    """Separable (contact-product) transmission matrix entries.

    Cross transmission is the geometric mean of the group rates, so each
    compartment in isolation reproduces its own configured R0.
    """
    cl, ck = math.sqrt(r0_locked), math.sqrt(r0_key)
    return cl, ck, (gamma * cl * cl, gamma * cl * ck, gamma * ck * cl, gamma * ck * ck)


def two_compartment_lockdown(
    config_locked: SeirConfig,
    config_key: SeirConfig,
    mix_fraction: float,
    horizon_days: float,
    lead_days: float = 14.0,
    initial_infected: float = 1e-4,
    dt: float = 0.05,
) -> LockdownResult:
    """Locked-down and key-worker SEIR compartments across a lockdown.

    The epidemic grows homogeneously at the key-worker transmission rate for
    ``lead_days``, after which the locked compartment (population share
    ``1 - mix_fraction``) drops to its own rate while key workers keep
    theirs. The aggregate reproduction number is the per-infected R averaged
    over the current infection population: it falls into a minimum at the
    switch (most infections sit in the locked compartment) and then drifts
    back up as an ever larger share of infections is carried by key workers.
    """
    if not (0 < mix_fraction < 1):
        raise ParameterError("mix_fraction must lie strictly between 0 and 1")
    if config_locked.R0 > config_key.R0:
        raise InputError(
            "locked compartment transmission must not exceed the key-worker rate"
        )
    if config_locked.delta != config_key.delta or config_locked.gamma != config_key.gamma:
        raise ParameterError("compartments must share delta and gamma")
    if not (0 < initial_infected < 1):
        raise ParameterError("initial_infected must lie in (0, 1)")
    if not (0 <= lead_days < horizon_days):
        raise ParameterError("lead_days must lie in [0, horizon_days)")
    _check_step(dt)
    delta, gamma = config_key.delta, config_key.gamma
    pl, pk = 1.0 - mix_fraction, mix_fraction
    y0 = (
        pl * (1.0 - initial_infected),
        0.0,
        pl * initial_infected,
        pk * (1.0 - initial_infected),
        0.0,
        pk * initial_infected,
    )
    n_lead = int(round(lead_days / dt))
    n_post = int(round(horizon_days / dt)) - n_lead

    _, _, b_pre = _contact_rates(config_key.R0, config_key.R0, gamma)
    cl, ck, b_post = _contact_rates(config_locked.R0, config_key.R0, gamma)

    pieces = []
    state = y0
    if n_lead > 0:
        out, status, bad = _kernels.two_group_rk4(*b_pre, delta, gamma, state, dt, n_lead)
        if status == 1:
            raise StepSizeError(f"negative state at step {bad}; reduce dt", step=bad, dt=dt)
        pieces.append((out[:, :-1], config_key.R0, config_key.R0))
        state = tuple(out[j, -1] for j in range(6))
    out, status, bad = _kernels.two_group_rk4(*b_post, delta, gamma, state, dt, n_post)
    if status == 1:
        raise StepSizeError(f"negative state at step {bad}; reduce dt", step=bad, dt=dt)
    pieces.append((out, config_locked.R0, config_key.R0))

    cols = np.concatenate([p[0] for p in pieces], axis=1)
    t = np.arange(cols.shape[1]) * dt
    S1, E1, I1, S2, E2, I2, inc1, inc2 = cols
    # per-infected R under the rates in force at each time
    R_l = np.empty(t.size)
    R_k = np.empty(t.size)
    pos = 0
    for block, r0_l, r0_k in pieces:
        nloc = block.shape[1]
        clb, ckb, _ = _contact_rates(r0_l, r0_k, gamma)
        sl = slice(pos, pos + nloc)
        mixed = clb * S1[sl] + ckb * S2[sl]
        R_l[sl] = clb * mixed
        R_k[sl] = ckb * mixed
        pos += nloc
    rem1 = pl - S1 - E1 - I1
    rem2 = pk - S2 - E2 - I2
    I_tot = I1 + I2
    agg = np.full(t.size, np.nan)
    ok = I_tot > 1e-300
    agg[ok] = (I1[ok] * R_l[ok] + I2[ok] * R_k[ok]) / I_tot[ok]
    return LockdownResult(
        t=t,
        lockdown_day=n_lead * dt,
        locked=SeirTrajectory(t, S1, E1, I1, inc1, rem1),
        key=SeirTrajectory(t, S2, E2, I2, inc2, rem2),
        R_locked=R_l,
        R_key=R_k,
        aggregate_R=agg,
    )
