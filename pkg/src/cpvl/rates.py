"""Rate-function families for the per-site birth-death dynamics.

A :class:`RateModel` bundles the birth rate b and the death rate d of the
viral-load chain; infection rates are separate :class:`InfectionRate`
objects because one load model is typically swept over many infection
strengths.

Conventions shared by every family:
  * b(0) = d(0) = 0 (load 0 is absorbing for the on-site chain),
  * supp(d(.+1)) = supp(b) union {0},
  * b, d grow at most linearly, with an explicit witness constant.

Degenerate families with b == 0 (classical contact-process reduction) are
allowed only behind an explicit ``allow_degenerate`` flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "RateModel",
    "InfectionRate",
    "power_law_family",
    "linear_family",
    "table_family",
    "classical_cp_family",
    "cap_model",
    "infection_constant",
    "infection_power",
    "validate_assumption",
    "AssumptionReport",
    "BulletResult",
]

_INITIAL_TABLE = 64


class RateModel:
    """Birth/death rate pair with lazily grown lookup tables.

    The tables double as the memo cache: they are extended on demand up to
    the running maximum load and swapped in atomically, so concurrent
    readers always see a consistent array.
    """

    def __init__(self, family: str, params: dict,
                 b_of: Callable[[np.ndarray], np.ndarray],
                 d_of: Callable[[np.ndarray], np.ndarray],
                 *, cap: int | None = None, degenerate: bool = False,
                 growth_constant: float = 0.0):
        self.family = family
        self.params = dict(params)
        self._b_of = b_of
        self._d_of = d_of
        self.cap = cap
        self.degenerate = degenerate
        self.growth_constant = growth_constant
        self._b_tab = np.empty(0)
        self._d_tab = np.empty(0)
        self.tables(_INITIAL_TABLE)
        if self._b_tab[0] != 0.0 or self._d_tab[0] != 0.0:
            raise ValueError(f"{family}: b(0) and d(0) must both be 0")
        if np.any(self._b_tab < 0) or np.any(self._d_tab < 0):
            raise ValueError(f"{family}: rates must be nonnegative")

    def tables(self, min_len: int) -> tuple[np.ndarray, np.ndarray]:
        """Rate tables (b, d) of length >= min_len, indexed by load."""
        if self._b_tab.size < min_len:
            length = max(min_len, 2 * self._b_tab.size, _INITIAL_TABLE)
            n = np.arange(length, dtype=np.int64)
            self._b_tab = np.asarray(self._b_of(n), dtype=np.float64)
            self._d_tab = np.asarray(self._d_of(n), dtype=np.float64)
        return self._b_tab, self._d_tab

    def b(self, n: int) -> float:
        return float(self.tables(n + 1)[0][n])

    def d(self, n: int) -> float:
        return float(self.tables(n + 1)[1][n])

    def b_array(self, n: np.ndarray) -> np.ndarray:
        return np.asarray(self._b_of(np.asarray(n, dtype=np.int64)), dtype=np.float64)

    def d_array(self, n: np.ndarray) -> np.ndarray:
        return np.asarray(self._d_of(np.asarray(n, dtype=np.int64)), dtype=np.float64)

    @property
    def max_load(self) -> int | None:
        """Largest reachable load from below: cap+1 for capped models,
        1 for degenerate (contact-process) models, None if unbounded."""
        if self.cap is not None:
            return self.cap + 1
        if self.degenerate:
            return 1
        return None

    def __repr__(self) -> str:
        extra = f", cap={self.cap}" if self.cap is not None else ""
        return f"RateModel({self.family}, {self.params}{extra})"


class InfectionRate:
    """Non-decreasing infection-rate function of the source's viral load.

    Families: ``constant`` (rate lam for every load) and ``power``
    (rate lam * n**gamma).  The value at load 0 is defined by the formula
    but never read by the engines (healthy vertices do not infect).
    """

    def __init__(self, family: str, lam: float, gamma: float = 0.0):
        if lam < 0:
            raise ValueError(f"infection rate lambda must be >= 0, got {lam}")
        if gamma < 0:
            raise ValueError(f"infection exponent gamma must be >= 0, got {gamma}")
        if family not in ("constant", "power"):
            raise ValueError(f"unknown infection family {family!r}")
        self.family = family
        self.lam = float(lam)
        self.gamma = float(gamma) if family == "power" else 0.0

    def __call__(self, n: int) -> float:
        if self.family == "constant":
            return self.lam
        return self.lam * float(n) ** self.gamma if n > 0 else self.lam * (0.0 ** self.gamma if self.gamma > 0 else 1.0)

    def table(self, length: int) -> np.ndarray:
        n = np.arange(length, dtype=np.float64)
        if self.family == "constant":
            return np.full(length, self.lam)
        tab = self.lam * n ** self.gamma
        if self.gamma == 0.0:
            tab[0] = self.lam
        return tab

    def bound(self, max_load: int) -> float:
        """Largest value over loads 1..max_load (non-decreasing, so endpoint)."""
        return self(max(1, max_load))

    @property
    def is_constant(self) -> bool:
        return self.family == "constant" or self.gamma == 0.0

    def scaled(self, factor: float) -> "InfectionRate":
        return InfectionRate(self.family, self.lam * factor, self.gamma)

    def __repr__(self) -> str:
        if self.is_constant:
            return f"InfectionRate(constant, lam={self.lam})"
        return f"InfectionRate(power, lam={self.lam}, gamma={self.gamma})"


def infection_constant(lam: float) -> InfectionRate:
    return InfectionRate("constant", lam)


def infection_power(lam: float, gamma: float) -> InfectionRate:
    return InfectionRate("power", lam, gamma)


def power_law_family(a: float) -> RateModel:
    """b(n) = n + (1-a)_+ and d(n) = n + (a-1)_+ for n > 0.

    Recovery times have power-law tails with exponent a; the mean recovery
    time is finite iff a > 1.
    """
    if a <= 0:
        raise ValueError(f"power_law_family needs a > 0, got {a}")
    up = max(1.0 - a, 0.0)
    down = max(a - 1.0, 0.0)
    return RateModel(
        "power_law", {"a": float(a)},
        lambda n: (n + up) * (n > 0),
        lambda n: (n + down) * (n > 0),
        growth_constant=1.0 + abs(1.0 - a),
    )


def linear_family(alpha: float, beta: float, *, allow_degenerate: bool = False) -> RateModel:
    """b(n) = alpha*n and d(n) = beta*n with 0 <= alpha < beta.

    Recovery times have exponential tails with rate beta - alpha.  alpha = 0
    is a pure-death chain (b == 0) and requires ``allow_degenerate``.
    """
    if alpha < 0:
        raise ValueError(f"linear_family needs alpha >= 0, got {alpha}")
    if beta <= alpha:
        raise ValueError(f"linear_family needs beta > alpha, got alpha={alpha}, beta={beta}")
    if alpha == 0 and not allow_degenerate:
        raise ValueError("alpha = 0 gives a pure-death (b == 0) model; pass allow_degenerate=True")
    return RateModel(
        "linear", {"alpha": float(alpha), "beta": float(beta)},
        lambda n: alpha * n,
        lambda n: beta * n,
        degenerate=(alpha == 0),
        growth_constant=float(beta),
    )


def table_family(b_values, d_values, *, allow_degenerate: bool = False) -> RateModel:
    """Finite rate tables; both functions are 0 beyond the listed entries."""
    b_vals = np.asarray(b_values, dtype=np.float64)
    d_vals = np.asarray(d_values, dtype=np.float64)
    if b_vals.size == 0 or d_vals.size == 0:
        raise ValueError("rate tables must be nonempty")
    if b_vals[0] != 0.0 or d_vals[0] != 0.0:
        raise ValueError("table entry at load 0 must be 0 for both b and d")
    degenerate = not np.any(b_vals > 0)
    if degenerate and not allow_degenerate:
        raise ValueError("table with b == 0 is degenerate; pass allow_degenerate=True")

    def lookup(vals):
        def f(n):
            n = np.asarray(n, dtype=np.int64)
            out = np.zeros(n.shape, dtype=np.float64)
            inside = n < vals.size
            out[inside] = vals[n[inside]]
            return out
        return f

    # growth witness from the finite support (heuristic for tables)
    growth = 0.0
    for n in range(1, b_vals.size):
        growth = max(growth, b_vals[n] / n)
    for n in range(1, d_vals.size):
        growth = max(growth, d_vals[n] / n)
    return RateModel(
        "table", {"b": b_vals.tolist(), "d": d_vals.tolist()},
        lookup(b_vals), lookup(d_vals),
        degenerate=degenerate, growth_constant=growth,
    )


def classical_cp_family(recovery_rate: float = 1.0) -> RateModel:
    """Classical contact process as a degenerate load model.

    No birth events; an infected vertex (load 1) recovers at
    ``recovery_rate``.  Loads never exceed 1.
    """
    if recovery_rate <= 0:
        raise ValueError(f"recovery_rate must be > 0, got {recovery_rate}")
    return RateModel(
        "classical_cp", {"recovery_rate": float(recovery_rate)},
        lambda n: np.zeros(np.asarray(n).shape, dtype=np.float64),
        lambda n: recovery_rate * (np.asarray(n) == 1),
        cap=0, degenerate=True, growth_constant=float(recovery_rate),
    )


def cap_model(m: RateModel, K: int) -> RateModel:
    """Capacity-K variant: births vanish above load K, deaths above K+1.

    Loads started at or below K+1 never leave {0, ..., K+1}; this is the
    setting of every shared-randomness (event-log) experiment.
    """
    if K < 1:
        raise ValueError(f"cap_model needs K >= 1, got {K}")
    if m.cap is not None or m.degenerate:
        raise ValueError("cap_model needs an uncapped base with supp(b) = N")
    b_tab, d_tab = m.tables(K + 3)
    if not np.all(b_tab[1:K + 1] > 0):
        raise ValueError("cap_model needs b(n) > 0 for 1 <= n <= K")
    base_b, base_d = m._b_of, m._d_of
    capped = RateModel(
        "capped", {"base": m.family, **m.params, "K": int(K)},
        lambda n: np.asarray(base_b(n)) * (np.asarray(n) <= K),
        lambda n: np.asarray(base_d(n)) * (np.asarray(n) <= K + 1),
        cap=K, growth_constant=m.growth_constant,
    )
    report = validate_assumption(capped)
    if not report.passed:
        raise ValueError(f"capped model fails the rate assumptions: {report}")
    return capped


@dataclass
class BulletResult:
    passed: bool
    detail: str
    first_violation: int | None = None


@dataclass
class AssumptionReport:
    """Per-bullet outcome of the standing rate assumptions."""
    support: BulletResult
    growth: BulletResult
    monotone_infection: BulletResult

    @property
    def passed(self) -> bool:
        return self.support.passed and self.growth.passed and self.monotone_infection.passed

    def __str__(self) -> str:
        rows = []
        for name in ("support", "growth", "monotone_infection"):
            r = getattr(self, name)
            rows.append(f"{name}: {'pass' if r.passed else 'FAIL'} ({r.detail})")
        return "; ".join(rows)


def validate_assumption(m: RateModel, infection: InfectionRate | None = None,
                        probe: int = 1000) -> AssumptionReport:
    """Check the three standing assumptions on (b, d, Lambda).

    Closed-form families are checked analytically where the family structure
    settles the question; table models are checked over their finite support
    plus a margin.  ``probe`` bounds the range scanned for the infection
    monotonicity check.
    """
    b_tab, d_tab = m.tables(_probe_length(m, probe))
    n_max = b_tab.size - 2

    # support: supp(d(.+1)) == supp(b) u {0}, and supp(b) is {1..K} or all of N
    supp_b = b_tab[:n_max + 1] > 0
    supp_d_shift = d_tab[1:n_max + 2] > 0
    want = supp_b.copy()
    want[0] = True
    mismatch = np.nonzero(supp_d_shift != want)[0]
    if mismatch.size:
        support = BulletResult(False, f"supp(d(.+1)) != supp(b) u {{0}} first at n={mismatch[0]}",
                               int(mismatch[0]))
    else:
        pos = np.nonzero(supp_b)[0]
        contiguous = pos.size == 0 or (pos[0] == 1 and np.array_equal(pos, np.arange(1, pos.size + 1)))
        if not contiguous:
            first_gap = int(np.nonzero(~supp_b[1:])[0][0] + 1)
            support = BulletResult(False, f"supp(b) is neither {{1..K}} nor N (gap at n={first_gap})", first_gap)
        elif pos.size == 0 and not m.degenerate:
            support = BulletResult(False, "b == 0 but model not flagged degenerate", 1)
        else:
            kind = "N (up to probe)" if pos.size == n_max else f"{{1..{pos.size}}}"
            support = BulletResult(True, f"supp(b) = {kind}")

    # linear growth: witness constant per family; probe scan as a cross-check
    n = np.arange(1, n_max + 1, dtype=np.float64)
    c_seen = float(max((b_tab[1:n_max + 1] / n).max(initial=0.0),
                       (d_tab[1:n_max + 1] / n).max(initial=0.0)))
    if m.family in ("power_law", "linear", "capped", "classical_cp"):
        growth = BulletResult(True, f"family-analytic, b(n), d(n) <= {m.growth_constant:g} * n")
    elif c_seen <= m.growth_constant + 1e-12:
        growth = BulletResult(True, f"probe-based (heuristic): max rate/n = {c_seen:g} over n <= {n_max}")
    else:
        growth = BulletResult(False, f"rate/n = {c_seen:g} exceeds witness {m.growth_constant:g}")

    # infection: non-decreasing; finiteness of the running expectation follows
    # from polynomial Lambda under linear-growth b (dominating pure-birth
    # process has all polynomial moments)
    if infection is None:
        monotone = BulletResult(True, "no infection family supplied")
    else:
        tab = infection.table(min(probe, 10_000) + 1)
        drops = np.nonzero(np.diff(tab[1:]) < 0)[0]
        if drops.size:
            monotone = BulletResult(False, f"Lambda decreases at n={drops[0] + 1}", int(drops[0] + 1))
        else:
            monotone = BulletResult(True, "non-decreasing; E[Lambda(X_t)] finite (polynomial vs linear growth)")

    return AssumptionReport(support, growth, monotone)


def _probe_length(m: RateModel, probe: int) -> int:
    if m.family == "table":
        return max(len(m.params["b"]), len(m.params["d"])) + 3
    if m.cap is not None:
        return m.cap + 4
    return max(probe + 2, _INITIAL_TABLE)
