"""Single-site birth-death analytics.

The viral load of a freshly infected vertex is a birth-death chain started
at 1 and absorbed at 0; its absorption time is the recovery time.  This
module provides exact simulation of that chain, series evaluation of
hitting-time functionals, the stationary law of the chain reflected at 1,
the first-outgoing-infection clock, and tail-exponent estimation for
recovery-time samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from ._kernels import STATUS_EXTINCT, STATUS_OVERFLOW, STATUS_PENDING, bd_batch
from ._series import SeriesResult, sum_positive_series
from .rates import InfectionRate, RateModel

__all__ = [
    "BDPath",
    "TailEstimate",
    "SeriesResult",
    "simulate_bd",
    "sample_recovery_times",
    "mean_tau_rec",
    "expected_integral_lambda",
    "reflected_stationary",
    "reflected_stationary_normalizer",
    "sample_first_infection_time",
    "estimate_tail",
]


@dataclass
class BDPath:
    """A birth-death trajectory: states[0] is the initial value at time 0,
    states[k] the value right after the k-th jump at times[k]."""

    times: np.ndarray
    states: np.ndarray
    absorbed: bool
    tau_rec: float | None

    @property
    def x0(self) -> int:
        return int(self.states[0])


def simulate_bd(m: RateModel, x0: int, horizon: float, *, seed: int, replica: int = 0) -> BDPath:
    """Exact next-event simulation of the load chain from x0.

    Holding time at n is Exp(b(n) + d(n)); the move is up with probability
    b(n)/(b(n)+d(n)).  Stops at absorption in 0 or at the horizon.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if x0 < 0:
        raise ValueError(f"x0 must be >= 0, got {x0}")
    rng = _rng.generator(seed, _rng.TAG_BD, replica)
    times = [0.0]
    states = [int(x0)]
    t = 0.0
    n = int(x0)
    while n > 0:
        bn, dn = m.b(n), m.d(n)
        tot = bn + dn
        if tot <= 0.0:
            break  # capped standstill
        t += rng.exponential(1.0 / tot)
        if t > horizon:
            break
        n += 1 if rng.random() * tot < bn else -1
        times.append(t)
        states.append(n)
    absorbed = n == 0
    return BDPath(np.asarray(times), np.asarray(states, dtype=np.int64),
                  absorbed, times[-1] if absorbed else None)


def sample_recovery_times(m: RateModel, n_samples: int, horizon: float, *,
                          seed: int, x0: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Batch of absorption times of the load chain from x0.

    Returns (tau, absorbed): tau[i] is the absorption time when
    absorbed[i], else the censoring horizon.
    """
    states = np.full(n_samples, x0, dtype=np.int64)
    times = np.zeros(n_samples)
    status = np.full(n_samples, STATUS_PENDING, dtype=np.int8)
    rngs = _rng.xoshiro_states(seed, n_samples, _rng.TAG_BD)
    table_len = 4096
    while True:
        b_tab, d_tab = m.tables(table_len)
        bd_batch(states, times, status, rngs, b_tab[:table_len].copy(), d_tab[:table_len].copy(), horizon)
        pending = status == STATUS_OVERFLOW
        if not pending.any():
            break
        status[pending] = STATUS_PENDING
        table_len *= 2
    return times, status == STATUS_EXTINCT


def _occupation_block_fn(m: RateModel, weight):
    """Terms t_n = weight(n)/d(n) * prod_{j<n} b(j)/d(j) in blocks."""
    carry = {"value": 1.0}

    def block_fn(n0: int, count: int) -> np.ndarray:
        n = np.arange(n0, n0 + count, dtype=np.int64)
        b_vals = m.b_array(n)
        d_vals = m.d_array(n)
        w_vals = weight(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(d_vals > 0, b_vals / np.where(d_vals > 0, d_vals, 1.0), 0.0)
            prefix = carry["value"] * np.concatenate([[1.0], np.cumprod(ratios[:-1])])
            terms = np.where(prefix > 0,
                             w_vals * prefix / np.where(d_vals > 0, d_vals, 1.0),
                             0.0)
        bad = (prefix > 0) & (w_vals > 0) & (d_vals <= 0)
        if bad.any():
            first = int(n[np.nonzero(bad)[0][0]])
            raise ValueError(f"d({first}) = 0 on the support of the occupation measure; "
                             "supp(d(.+1)) must cover supp(b) u {0}")
        carry["value"] = float(prefix[-1] * ratios[-1])
        return terms

    return block_fn


def expected_integral_lambda(m: RateModel, infection: InfectionRate | None,
                             tol: float = 1e-10, max_terms: int = 1 << 24) -> SeriesResult:
    """E of the Lambda-weighted occupation integral of the load chain from 1
    up to absorption: sum_{n>=1} Lambda(n)/d(n) * prod_{j<n} b(j)/d(j).

    Passing infection=None uses weight 1 and gives E[tau_rec].
    """
    if infection is None:
        weight = lambda n: np.ones(n.shape)
    elif infection.family == "constant":
        lam = infection.lam
        weight = lambda n: np.full(n.shape, lam)
    else:
        lam, gamma = infection.lam, infection.gamma
        weight = lambda n: lam * n.astype(np.float64) ** gamma
    return sum_positive_series(_occupation_block_fn(m, weight), tol, max_terms)


def mean_tau_rec(m: RateModel, tol: float = 1e-10, max_terms: int = 1 << 24) -> SeriesResult:
    """E[tau_rec] for the load chain from 1, as a hitting-time series."""
    return expected_integral_lambda(m, None, tol, max_terms)


def reflected_stationary_normalizer(m: RateModel, tol: float = 1e-10) -> float:
    """1/pi(1) for the chain reflected at 1: 1 + sum_k prod_{i<=k} b(i)/d(i+1)."""
    carry = {"value": 1.0}

    def block_fn(n0: int, count: int) -> np.ndarray:
        k = np.arange(n0, n0 + count, dtype=np.int64)
        b_vals = m.b_array(k)
        d_vals = m.d_array(k + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(d_vals > 0, b_vals / np.where(d_vals > 0, d_vals, 1.0), 0.0)
        bad = (b_vals > 0) & (d_vals <= 0)
        if bad.any():
            first = int(k[np.nonzero(bad)[0][0]])
            raise ValueError(f"d({first + 1}) = 0 while b({first}) > 0: reflected chain ill-defined")
        terms = carry["value"] * np.cumprod(ratios)
        carry["value"] = float(terms[-1])
        return terms

    res = sum_positive_series(block_fn, tol)
    if res.status != "converged":
        raise ValueError(f"reflected chain is not positive recurrent (normalizer {res.status})")
    return 1.0 + res.value


def reflected_stationary(m: RateModel, n: int, tol: float = 1e-10) -> float:
    """pi(n) of the load chain reflected at 1 (no absorption):
    pi(n) = pi(1) * b(1)...b(n-1) / (d(2)...d(n))."""
    if n < 1:
        raise ValueError(f"reflected chain lives on n >= 1, got {n}")
    pi1 = 1.0 / reflected_stationary_normalizer(m, tol)
    if n == 1:
        return pi1
    i = np.arange(1, n, dtype=np.int64)
    num = m.b_array(i)
    den = m.d_array(i + 1)
    if np.any((den <= 0) & (num > 0)):
        return 0.0 if np.any(num <= 0) else math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        prod = float(np.prod(np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)))
    return pi1 * prod


def sample_first_infection_time(m: RateModel, infection: InfectionRate, *,
                                seed: int, replica: int = 0,
                                horizon: float = math.inf) -> float | None:
    """Time of the first outgoing infection along one directed edge.

    Runs the load chain from 1 with an exponential clock of instantaneous
    rate Lambda(X_t); the clock only runs while X_t > 0 (a recovered vertex
    infects nobody).  Returns the ring time, or None if the chain absorbs
    (or the horizon passes) first.
    """
    rng = _rng.generator(seed, _rng.TAG_BD, replica, 7)
    n = 1
    t = 0.0
    while n > 0 and t < horizon:
        bn, dn = m.b(n), m.d(n)
        lam_n = infection(n)
        tot = bn + dn
        hold = rng.exponential(1.0 / tot) if tot > 0 else math.inf
        if lam_n > 0:
            ring = rng.exponential(1.0 / lam_n)
            if ring < hold:
                return t + ring if t + ring <= horizon else None
        if not math.isfinite(hold):
            return None  # standstill with Lambda == 0
        t += hold
        if t > horizon:
            return None
        n += 1 if rng.random() * tot < bn else -1
    return None


@dataclass
class TailEstimate:
    """Fitted tail of a recovery-time sample.

    mode is "power_law" (survival ~ A t^-a, estimate = a-hat) or
    "exponential" (survival ~ A exp(-B t), estimate = B-hat).
    """

    mode: str
    estimate: float
    stderr: float
    n_samples: int
    fit_range: tuple[float, float]
    hill_estimate: float | None = None
    hill_stderr: float | None = None
    regression_estimate: float | None = None
    power_residual: float = math.nan
    exponential_residual: float = math.nan
    censored_fraction: float = 0.0


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Slope, slope stderr, and RMS residual of a least-squares line."""
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    resid = y - (ym + slope * (x - xm))
    rms = float(np.sqrt((resid ** 2).mean()))
    stderr = math.sqrt((resid ** 2).sum() / max(n - 2, 1) / sxx)
    return slope, stderr, rms


def estimate_tail(samples, censoring_horizon: float | None = None,
                  mode: str = "auto", k: int | None = None) -> TailEstimate:
    """Fit the survival tail of recovery-time samples.

    Censored samples (values at or above ``censoring_horizon``) enter the
    empirical survival function but the fit range is restricted below the
    horizon.  The power-law exponent is the Hill estimate over the top
    ``k`` order statistics (default sqrt(N)) when censoring does not bite
    there, else the log-log survival regression; the exponential rate is a
    log-survival regression.  ``mode="auto"`` picks the family with the
    smaller regression residual.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    if n < 1000:
        raise ValueError(f"need at least 1000 samples, got {n}")
    if x[0] == x[-1]:
        raise ValueError("degenerate sample: all values equal")
    if censoring_horizon is not None:
        censored = x >= censoring_horizon * (1.0 - 1e-12)
        if censored.all():
            raise ValueError("all samples censored")
    else:
        censored = np.zeros(n, dtype=bool)
    cens_frac = float(censored.mean())

    # empirical survival at the uncensored order statistics
    surv = 1.0 - (np.arange(1, n + 1)) / n
    keep = (~censored) & (x > 0) & (surv > 0)
    xs = x[keep]
    ss = surv[keep]

    # fit window: survival levels in [s_lo, s_hi], pushed above the censored mass
    s_hi = 0.25
    s_lo = max(3.0 / n, 1.5 * cens_frac, 0.004)
    window = (ss <= s_hi) & (ss >= s_lo)
    if window.sum() < 50:
        order = np.argsort(np.abs(ss - math.sqrt(s_hi * s_lo)))
        window = np.zeros(ss.size, dtype=bool)
        window[order[:max(50, ss.size // 100)]] = True
    xw = xs[window]
    sw = ss[window]
    if xw.size > 512:
        pick = np.unique(np.linspace(0, xw.size - 1, 512).astype(int))
        xw, sw = xw[pick], sw[pick]
    fit_range = (float(xw[0]), float(xw[-1]))

    slope_p, se_p, rms_p = _ols(np.log(xw), np.log(sw))
    slope_e, se_e, rms_e = _ols(xw, np.log(sw))
    a_reg, b_reg = -slope_p, -slope_e

    # Hill estimator over the top order statistics, uncensored only
    n_unc = int((~censored).sum())
    k_eff = k if k is not None else max(10, int(math.isqrt(n_unc)))
    top = xs[-(k_eff + 1):]
    hill = hill_se = None
    hill_usable = False
    if top.size >= 11 and top[0] > 0:
        logs = np.log(top[1:] / top[0])
        if logs.mean() > 0:
            hill = 1.0 / logs.mean()
            hill_se = hill / math.sqrt(k_eff)
            # censoring bites the top block if the uncensored maximum sits
            # close to the horizon
            hill_usable = censoring_horizon is None or cens_frac < 0.5 / math.sqrt(n)

    if mode == "auto":
        mode = "power_law" if rms_p < rms_e else "exponential"
    if mode == "power_law":
        if hill is not None and hill_usable:
            est, se = hill, hill_se
        else:
            est, se = a_reg, se_p
    elif mode == "exponential":
        est, se = b_reg, se_e
    else:
        raise ValueError(f"mode must be auto, power_law, or exponential, got {mode!r}")

    return TailEstimate(mode=mode, estimate=float(est), stderr=float(se),
                        n_samples=n, fit_range=fit_range,
                        hill_estimate=hill, hill_stderr=hill_se,
                        regression_estimate=float(a_reg if mode == "power_law" else b_reg),
                        power_residual=rms_p, exponential_residual=rms_e,
                        censored_fraction=cens_frac)
