"""Siegmund duality between the CPVL (constant infection rate) and the CPLI.

Pathwise: replaying the CPVL forward and the CPLI backward over one event
log keeps the indicator 1{eta_s <= xi_(t-s)} constant along the whole path
(zero tolerance).  Distributionally: P(eta_t <= xi_0) = P(xi_t >= eta_0)
with independent randomness on the two sides.  All shared-randomness work
uses capped models so the event-log envelopes are finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .engine import (Configuration, EventLog, generate_event_log,
                     required_envelopes, run_cpli_from_log, run_cpli_gillespie,
                     run_cpvl_from_log, run_cpvl_gillespie)
from .graphs import Graph
from .rates import InfectionRate, RateModel, infection_constant

__all__ = [
    "DualRunReport",
    "McDualityResult",
    "SurvivalDualityResult",
    "pathwise_duality_check",
    "mc_duality_check",
    "survival_via_duality",
    "cpli_dormancy_sweep",
]


@dataclass
class DualRunReport:
    """Indicator 1{eta_s <= xi_(t-s)} along one shared-log run."""

    horizon: float
    event_times: np.ndarray
    indicators: np.ndarray          # indicator on each inter-event interval
    constant: bool
    violations: list = field(default_factory=list)  # (time, vertex) of first order break per flip
    checkpoint_times: np.ndarray | None = None
    checkpoint_indicators: np.ndarray | None = None


def pathwise_duality_check(g: Graph, m: RateModel, lam: float,
                           eta0: Configuration, xi0: Configuration, t: float,
                           log: EventLog | None = None, checkpoints=(), *,
                           seed: int | None = None, replica: int = 0) -> DualRunReport:
    """Replay eta forward on [0, t] and xi backward from t over one log and
    report whether the domination indicator is constant along the path.

    At a shared event instant S the forward process contributes its
    pre-event state and the dual its post-(backward-)event state, i.e. the
    comparison is between the states on each open inter-event interval.
    """
    if m.max_load is None:
        raise ValueError("pathwise duality needs a capped model")
    if log is None:
        if seed is None:
            raise ValueError("pass an event log or a seed to generate one")
        env_b, env_d, _ = required_envelopes(m, lam)
        log = generate_event_log(g, env_b, env_d, lam, t, seed=seed, replica=replica)
    _, eta_hist = run_cpvl_from_log(g, m, infection_constant(lam), eta0, log,
                                    collect_states=True)
    _, xi_hist = run_cpli_from_log(g, m, lam, xi0, log, direction="backward",
                                   collect_states=True)
    # row k of either history is the state on the interval (t_k, t_{k+1})
    indicators = np.all(eta_hist <= xi_hist, axis=1)
    constant = bool(np.all(indicators == indicators[0]))
    violations = []
    if not constant:
        flips = np.nonzero(np.diff(indicators.astype(np.int8)))[0]
        for k in flips:
            bad = np.nonzero(eta_hist[k + 1] > xi_hist[k + 1])[0]
            vertex = int(bad[0]) if bad.size else -1
            violations.append((float(log.times[k]), vertex))
    checkpoints = np.asarray(sorted(checkpoints), dtype=np.float64)
    cp_ind = None
    if checkpoints.size:
        pos = np.searchsorted(log.times, checkpoints, side="right")
        cp_ind = indicators[pos]
    return DualRunReport(horizon=t, event_times=np.asarray(log.times),
                         indicators=indicators, constant=constant,
                         violations=violations,
                         checkpoint_times=checkpoints if checkpoints.size else None,
                         checkpoint_indicators=cp_ind)


@dataclass
class McDualityResult:
    lhs: float              # P(eta_t <= xi0), CPVL forward
    rhs: float              # P(xi_t >= eta0), CPLI forward
    stderr_lhs: float
    stderr_rhs: float
    replicas: int

    @property
    def stderr(self) -> float:
        return self.stderr_lhs + self.stderr_rhs

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def mc_duality_check(g: Graph, m: RateModel, lam: float,
                     eta0: Configuration, xi0: Configuration, t: float,
                     replicas: int, *, seed: int) -> McDualityResult:
    """Independent-randomness Monte Carlo check of the duality identity."""
    if m.max_load is None:
        raise ValueError("use a capped model so both processes share a state space")
    infection = infection_constant(lam)
    xi0_loads = xi0.loads
    eta0_loads = eta0.loads
    hits_l = 0
    hits_r = 0
    for i in range(replicas):
        traj = run_cpvl_gillespie(g, m, infection, eta0, t, seed=seed, replica=i)
        hits_l += bool(np.all(traj.final.loads <= xi0_loads))
        traj = run_cpli_gillespie(g, m, lam, xi0, t, seed=seed, replica=replicas + i)
        hits_r += bool(np.all(traj.final.loads >= eta0_loads))
    lhs = hits_l / replicas
    rhs = hits_r / replicas
    return McDualityResult(
        lhs=lhs, rhs=rhs,
        stderr_lhs=math.sqrt(max(lhs * (1 - lhs), 1.0 / replicas) / replicas),
        stderr_rhs=math.sqrt(max(rhs * (1 - rhs), 1.0 / replicas) / replicas),
        replicas=replicas)


@dataclass
class SurvivalDualityResult:
    extinction_estimate: float      # P(CPVL from delta_x extinct by horizon)
    extinction_stderr: float
    dormancy_estimate: float        # P(CPLI from 0 has xi_horizon(x) > 0)
    dormancy_stderr: float
    horizon: float
    replicas: int


def survival_via_duality(g: Graph, m: RateModel, lam: float, x: int,
                         horizon: float, replicas: int, *, seed: int) -> SurvivalDualityResult:
    """Both sides of the extinction identity at a finite horizon.

    P(exists t: |eta_t| = 0 from delta_x) equals the t -> infinity limit of
    P(xi_t(x) > 0 from the all-active state); at a finite horizon the two
    estimates are approximations and should track each other.
    """
    infection = infection_constant(lam)
    eta0 = Configuration.delta(g, [x])
    xi0 = Configuration.zero(g)
    ext = 0
    dorm = 0
    for i in range(replicas):
        traj = run_cpvl_gillespie(g, m, infection, eta0, horizon, seed=seed, replica=i)
        ext += traj.extinct
        traj = run_cpli_gillespie(g, m, lam, xi0, horizon, seed=seed, replica=replicas + i)
        dorm += traj.final.loads[x] > 0
    p_l = ext / replicas
    p_r = dorm / replicas
    return SurvivalDualityResult(
        extinction_estimate=p_l,
        extinction_stderr=math.sqrt(max(p_l * (1 - p_l), 1.0 / replicas) / replicas),
        dormancy_estimate=p_r,
        dormancy_stderr=math.sqrt(max(p_r * (1 - p_r), 1.0 / replicas) / replicas),
        horizon=horizon, replicas=replicas)


def cpli_dormancy_sweep(g: Graph, m: RateModel, lambdas, x: int,
                        horizon: float, replicas: int, *, seed: int) -> list[float]:
    """P(xi_horizon(x) > 0) from the all-active state for each lambda, with
    all lambdas replayed from the same per-replica event log.

    The shared log makes the estimates exactly non-increasing in lambda
    (monotone coupling of the CPLI in its reset rate)."""
    lambdas = [float(v) for v in lambdas]
    if m.max_load is None:
        raise ValueError("shared-log sweep needs a capped model")
    env_b, env_d, _ = required_envelopes(m, max(lambdas))
    xi0 = Configuration.zero(g)
    hits = [0] * len(lambdas)
    for i in range(replicas):
        log = generate_event_log(g, env_b, env_d, max(max(lambdas), 1e-9), horizon,
                                 seed=seed, replica=i)
        for j, lam in enumerate(lambdas):
            traj = run_cpli_from_log(g, m, lam, xi0, log)
            hits[j] += traj.final.loads[x] > 0
    return [h / replicas for h in hits]
