"""Adaptive summation of positive series with ratio diagnostics.

The hitting-time and occupation series all have terms of the form
``w(n)/d(n) * prod_{j<n} b(j)/d(j)``.  Depending on the rate family the
terms decay geometrically (linear b, d), polynomially (power-law families,
where the term ratio tends to 1), terminate exactly (capped models), or
fail to decay (divergent cases).  The summer classifies the regime from
the running term ratio:

  * geometric regime: tail bounded by geometric extrapolation of the last
    ratio (with a one-block linear extrapolation of the ratio drift as the
    uncertainty witness);
  * polynomial regime: local decay exponent c_n = n * (1 - t_{n+1}/t_n) is
    Richardson-extrapolated; c <= 1 means divergence (limit comparison with
    the harmonic series), c > 1 gives an Euler-Maclaurin tail correction
    t_n * (n / (c - 1) - 1/2);
  * persistent ratio >= 1 (1000 consecutive terms past n = 1000) is
    declared divergent outright.

The tail estimate is *added* to the partial sum, so the returned value is
accurate to the reported uncertainty rather than to the raw truncation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["SeriesResult", "sum_positive_series"]

_BLOCK = 16384
_RATIO_RUN_LIMIT = 1000
_RATIO_RUN_MIN_N = 1000
_DIVERGENT_C = 1.02
_GEOMETRIC_R = 0.95


@dataclass
class SeriesResult:
    """Outcome of an adaptive series summation.

    status: "converged", "divergent", or "inconclusive".
    value: the sum (partial sum plus tail correction) when converged.
    terms: number of terms evaluated.
    tail_estimate: tail correction included in value.
    achieved_tol: estimated relative uncertainty of value.
    exponent: estimated polynomial decay exponent (None in the geometric
        or exactly-terminating regimes).
    """

    status: str
    value: float | None
    terms: int
    tail_estimate: float = 0.0
    achieved_tol: float = 0.0
    exponent: float | None = None

    def expect(self, what: str = "series") -> float:
        if self.status != "converged" or self.value is None:
            raise ValueError(f"{what} did not converge (status={self.status})")
        return self.value


def sum_positive_series(block_fn: Callable[[int, int], np.ndarray], tol: float,
                        max_terms: int = 1 << 24, block: int = _BLOCK) -> SeriesResult:
    """Sum sum_{n>=1} t_n for nonnegative t_n produced in blocks.

    ``block_fn(n0, count)`` returns the terms for indices n0..n0+count-1
    (1-based) and may raise on invalid rate models.  Terms must be
    eventually zero only if they are identically zero afterwards (true for
    the product-form series used here).
    """
    total = 0.0
    n_done = 0
    run_ge_one = 0
    prev_t = None  # last term of the previous block
    history: list[tuple[int, float, float]] = []  # (n, ratio, term) at block ends

    while n_done < max_terms:
        count = min(block, max_terms - n_done)
        terms = block_fn(n_done + 1, count)
        if not np.all(np.isfinite(terms)) or np.any(terms < 0):
            raise ValueError("series terms must be finite and nonnegative "
                             "(death rate vanishing on the support?)")
        total += float(terms.sum())
        n_done += count

        if terms[-1] == 0.0:
            # multiplicative carry died: the series terminates exactly
            return SeriesResult("converged", total, n_done, 0.0, 0.0, None)

        seq = terms if prev_t is None else np.concatenate([[prev_t], terms])
        ratios = seq[1:] / seq[:-1]
        prev_t = float(terms[-1])

        ge = ratios >= 1.0 - 1e-12
        if ge.all():
            run_ge_one += ratios.size
        else:
            last_lt = np.nonzero(~ge)[0][-1]
            run_ge_one = ratios.size - 1 - int(last_lt)
        if run_ge_one >= _RATIO_RUN_LIMIT and n_done >= _RATIO_RUN_MIN_N:
            return SeriesResult("divergent", None, n_done)

        r = float(ratios[-1])
        t_end = float(terms[-1])
        history.append((n_done, r, t_end))

        if r < _GEOMETRIC_R and run_ge_one == 0:
            r_prev = history[-2][1] if len(history) >= 2 else r
            r_hat = min(max(r + (r - r_prev), 0.0), 0.999)
            tail_a = t_end * r / (1.0 - r)
            tail_b = t_end * r_hat / (1.0 - r_hat)
            tail = 0.5 * (tail_a + tail_b)
            ucert = abs(tail_a - tail_b) + t_end * 1e-15 + 1e-300
            if ucert <= 0.5 * tol * (total + tail):
                return SeriesResult("converged", total + tail, n_done, tail,
                                    ucert / max(total + tail, 1e-300), None)
            continue

        if r < 1.0 and len(history) >= 2:
            c_here = n_done * (1.0 - r)
            # Richardson-extrapolate c(n) ~ c + k/n using the checkpoint nearest n/2
            nh, rh, th = min(history[:-1], key=lambda h: abs(h[0] - n_done / 2))
            c_half = nh * (1.0 - rh)
            if nh < n_done:
                k = (c_here - c_half) / (1.0 / n_done - 1.0 / nh)
                c_est = c_here - k / n_done
            else:
                c_est = c_here
            if n_done >= 4 * block and c_est <= _DIVERGENT_C and c_here <= _DIVERGENT_C + 0.05:
                return SeriesResult("divergent", None, n_done, exponent=c_est)
            if c_est > _DIVERGENT_C:
                tail = t_end * max(n_done / (c_est - 1.0) - 0.5, 0.0)
                prev_c = None
                if len(history) >= 3:
                    n2, r2, _ = history[-2]
                    prev_c = n2 * (1.0 - r2)
                drift = abs(c_here - prev_c) if prev_c is not None else abs(c_here - c_est)
                ucert = tail * (drift / max(c_est - 1.0, 1e-9) + 2.0 / n_done) + 1e-300
                if ucert <= 0.5 * tol * (total + tail) and n_done >= 2 * block:
                    return SeriesResult("converged", total + tail, n_done, tail,
                                        ucert / max(total + tail, 1e-300), c_est)

    # term budget exhausted: classify from the last diagnostics, reporting the
    # honestly achieved (not requested) tolerance
    if history:
        n_end, r, t_end = history[-1]
        c_here = n_end * (1.0 - r)
        if r < _GEOMETRIC_R:
            r_prev = history[-2][1] if len(history) >= 2 else r
            r_hat = min(max(r + (r - r_prev), 0.0), 0.999)
            tail = 0.5 * (t_end * r / (1.0 - r) + t_end * r_hat / (1.0 - r_hat))
            ucert = abs(t_end * r / (1.0 - r) - t_end * r_hat / (1.0 - r_hat)) + t_end * 1e-15
            return SeriesResult("converged", total + tail, n_done, tail,
                                ucert / max(total + tail, 1e-300), None)
        if c_here <= _DIVERGENT_C:
            return SeriesResult("divergent", None, n_done, exponent=c_here)
        if c_here > _DIVERGENT_C + 0.2:
            tail = t_end * max(n_end / (c_here - 1.0) - 0.5, 0.0)
            drift = abs(c_here - history[-2][0] * (1.0 - history[-2][1])) if len(history) >= 2 else 0.5
            ucert = tail * (drift / max(c_here - 1.0, 1e-9) + 2.0 / n_end)
            return SeriesResult("converged", total + tail, n_done, tail,
                                ucert / max(total + tail, 1e-300), c_here)
    return SeriesResult("inconclusive", None, n_done)
