"""Forward simulation of CPVL and CPLI on a graph.

Two engines:

  * Gillespie (next-event) simulation, compiled with numba, for production
    sweeps — works for unbounded rate models.
  * Event-log replay: marked Poisson streams at fixed per-stream envelopes
    are generated once and scanned deterministically, enabling exact
    pathwise couplings (shared randomness across models, initial states,
    and the forward/backward duality pair).  Requires capped models so all
    instantaneous rates stay below the stream envelopes.

The same log drives CPVL and CPLI with swapped stream roles: a point that a
CPVL replay reads as a death test (alpha < d(n)) is read by a CPLI replay
as an up-move test (alpha < d(m+1)), and the birth stream correspondingly
drives CPLI down-moves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rng
from ._kernels import (STATUS_BOUNDARY, STATUS_EXTINCT, STATUS_HORIZON,
                       STATUS_OVERFLOW, STATUS_THRESHOLD, cpli_run, cpvl_run)
from .graphs import Graph
from .rates import InfectionRate, RateModel

__all__ = [
    "Configuration",
    "Trajectory",
    "EventLog",
    "EnvelopeError",
    "run_cpvl_gillespie",
    "run_cpli_gillespie",
    "generate_event_log",
    "required_envelopes",
    "run_cpvl_from_log",
    "run_cpli_from_log",
    "run_coupled_pair",
    "check_additivity",
    "check_bd_domination",
]

_STATUS_NAMES = {
    STATUS_HORIZON: "horizon",
    STATUS_EXTINCT: "extinct",
    STATUS_BOUNDARY: "boundary",
    STATUS_THRESHOLD: "threshold",
}

KIND_BIRTH = 0
KIND_DEATH = 1
KIND_INFECT = 2


class EnvelopeError(ValueError):
    """A reachable rate exceeds the named stream's envelope."""


@dataclass
class Configuration:
    """Process state: per-vertex loads (CPVL) or dormancy levels (CPLI)."""

    loads: np.ndarray

    def __post_init__(self):
        self.loads = np.asarray(self.loads, dtype=np.int64)
        if np.any(self.loads < 0):
            raise ValueError("loads must be nonnegative")

    @classmethod
    def zero(cls, g: Graph) -> "Configuration":
        return cls(np.zeros(g.vertex_count, dtype=np.int64))

    @classmethod
    def delta(cls, g: Graph, vertices, value: int = 1) -> "Configuration":
        loads = np.zeros(g.vertex_count, dtype=np.int64)
        loads[np.asarray(vertices, dtype=np.int64)] = value
        return cls(loads)

    @classmethod
    def constant(cls, g: Graph, value: int) -> "Configuration":
        return cls(np.full(g.vertex_count, value, dtype=np.int64))

    @property
    def infected_count(self) -> int:
        return int(np.count_nonzero(self.loads))

    @property
    def total_load(self) -> int:
        return int(self.loads.sum())

    def copy(self) -> "Configuration":
        return Configuration(self.loads.copy())

    def __le__(self, other: "Configuration") -> bool:
        return bool(np.all(self.loads <= other.loads))


@dataclass
class Trajectory:
    """One recorded run."""

    initial: np.ndarray
    final: Configuration
    status: str                 # horizon | extinct | boundary | threshold
    t_end: float
    extinction_time: float | None
    events: int
    snapshot_times: np.ndarray | None = None
    snapshot_loads: np.ndarray | None = None
    seed: int | None = None
    replica: int | None = None

    @property
    def extinct(self) -> bool:
        return self.extinction_time is not None


def _tables_for(m: RateModel, infection: InfectionRate | None, min_load: int):
    if m.max_load is not None:
        length = m.max_load + 4
    else:
        length = max(64, min_load + 8)
    b_tab, d_tab = m.tables(length)
    lam_tab = infection.table(b_tab.size) if infection is not None else np.zeros(b_tab.size)
    return b_tab, d_tab, lam_tab


def _check_init(g: Graph, m: RateModel, init: Configuration) -> np.ndarray:
    loads = np.asarray(init.loads, dtype=np.int64)
    if loads.size != g.vertex_count:
        raise ValueError(f"init has {loads.size} entries for a graph with {g.vertex_count} vertices")
    if m.max_load is not None and loads.max(initial=0) > m.max_load:
        raise ValueError(f"initial load {loads.max()} exceeds the model's maximal load {m.max_load}")
    return loads.copy()


def run_cpvl_gillespie(g: Graph, m: RateModel, infection: InfectionRate,
                       init: Configuration, horizon: float, *,
                       seed: int, replica: int = 0,
                       snapshot_times=(), stop_on_boundary: bool = False,
                       stop_threshold: int | None = None) -> Trajectory:
    """Exact continuous-time simulation of the CPVL until extinction, the
    horizon, or an optional early-stop condition."""
    loads = _check_init(g, m, init)
    rng = _rng.xoshiro_state(seed, _rng.TAG_ENGINE, replica)
    snap_times = np.asarray(sorted(snapshot_times), dtype=np.float64)
    snap_out = np.zeros((snap_times.size, g.vertex_count), dtype=np.int64)
    stop_mask = np.zeros(g.vertex_count, dtype=np.int8)
    if stop_on_boundary:
        stop_mask[g.boundary_vertices] = 1
    threshold = np.int64(stop_threshold) if stop_threshold is not None else np.int64(1 << 62)

    t, events, snap_done = 0.0, 0, 0
    while True:
        b_tab, d_tab, lam_tab = _tables_for(m, infection, int(loads.max(initial=0)))
        status, t, events, ext_time, snap_done, _, _ = cpvl_run(
            loads, g.indptr, g.indices, b_tab, d_tab, lam_tab,
            t, float(horizon), rng, stop_mask, threshold,
            snap_times, snap_out, snap_done, events)
        if status != STATUS_OVERFLOW:
            break
        m.tables(2 * b_tab.size)

    return Trajectory(
        initial=init.loads.copy(), final=Configuration(loads),
        status=_STATUS_NAMES[status], t_end=t,
        extinction_time=ext_time if ext_time >= 0 else None,
        events=events,
        snapshot_times=snap_times if snap_times.size else None,
        snapshot_loads=snap_out if snap_times.size else None,
        seed=seed, replica=replica)


def run_cpli_gillespie(g: Graph, m: RateModel, lam: float,
                       init: Configuration, horizon: float, *,
                       seed: int, replica: int = 0,
                       snapshot_times=()) -> Trajectory:
    """Exact simulation of the CPLI: dormancy deepens at rate d(m+1),
    shallows at rate b(m), and active neighbours reset it to 0 at rate lam
    each.  State 0 is the active state."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    loads = _check_init(g, m, init)
    rng = _rng.xoshiro_state(seed, _rng.TAG_ENGINE, replica)
    snap_times = np.asarray(sorted(snapshot_times), dtype=np.float64)
    snap_out = np.zeros((snap_times.size, g.vertex_count), dtype=np.int64)

    t, events, snap_done = 0.0, 0, 0
    while True:
        b_tab, d_tab, _ = _tables_for(m, None, int(loads.max(initial=0)) + 1)
        status, t, events, snap_done, _ = cpli_run(
            loads, g.indptr, g.indices, b_tab, d_tab, float(lam),
            t, float(horizon), rng, snap_times, snap_out, snap_done, events)
        if status != STATUS_OVERFLOW:
            break
        m.tables(2 * b_tab.size)

    return Trajectory(
        initial=init.loads.copy(), final=Configuration(loads),
        status=_STATUS_NAMES[status], t_end=t,
        extinction_time=None, events=events,
        snapshot_times=snap_times if snap_times.size else None,
        snapshot_loads=snap_out if snap_times.size else None,
        seed=seed, replica=replica)


# ---------------------------------------------------------------------------
# event logs and deterministic replay


@dataclass
class EventLog:
    """Marked Poisson points for every stream, merged and time-sorted.

    kind 0/1 points live on vertices (v1), kind 2 on directed edges
    (v1 -> v2 in the forward reading).  Marks are uniform on
    [0, envelope-of-stream]; streams are homogeneous at exactly the
    envelope rate, so replays accept a point iff its mark falls below the
    current state-dependent rate.
    """

    times: np.ndarray
    kind: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    mark: np.ndarray
    env_birth: float
    env_death: float
    env_infect: float
    horizon: float
    n_vertices: int
    seed: int
    replica: int
    nudges: int = 0

    def __len__(self) -> int:
        return int(self.times.size)


def generate_event_log(g: Graph, env_birth: float, env_death: float,
                       env_infect: float, horizon: float, *,
                       seed: int, replica: int = 0) -> EventLog:
    """Independent homogeneous marked Poisson streams: one birth and one
    death stream per vertex, one infection stream per directed edge."""
    for name, env in (("birth", env_birth), ("death", env_death), ("infection", env_infect)):
        if env <= 0:
            raise ValueError(f"{name} envelope must be > 0, got {env}")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    rng = _rng.generator(seed, _rng.TAG_EVENT_LOG, replica)

    n_v = g.vertex_count
    edges = g.directed_edges()
    n_e = edges.shape[0]
    stream_env = np.concatenate([
        np.full(n_v, env_birth), np.full(n_v, env_death), np.full(n_e, env_infect)])
    counts = rng.poisson(stream_env * horizon)
    total = int(counts.sum())

    stream_id = np.repeat(np.arange(stream_env.size), counts)
    kind = np.where(stream_id < n_v, KIND_BIRTH,
                    np.where(stream_id < 2 * n_v, KIND_DEATH, KIND_INFECT)).astype(np.int8)
    v1 = np.where(stream_id < n_v, stream_id,
                  np.where(stream_id < 2 * n_v, stream_id - n_v, 0)).astype(np.int64)
    v2 = np.full(total, -1, dtype=np.int64)
    infect = kind == KIND_INFECT
    eidx = stream_id[infect] - 2 * n_v
    v1[infect] = edges[eidx, 0]
    v2[infect] = edges[eidx, 1]

    times = rng.random(total) * horizon
    mark = rng.random(total) * stream_env[stream_id]

    # probability-zero float ties would make the replay order ambiguous:
    # re-draw tied times with fresh randomness until all times are distinct
    nudges = 0
    order = np.argsort(times, kind="stable")
    times = times[order]
    while times.size > 1:
        tied = np.nonzero(np.diff(times) == 0.0)[0]
        if tied.size == 0:
            break
        redraw = np.unique(np.concatenate([tied, tied + 1]))
        nudges += redraw.size
        times[redraw] = rng.random(redraw.size) * horizon
        reorder = np.argsort(times, kind="stable")
        times = times[reorder]
        order = order[reorder]

    return EventLog(times=times, kind=kind[order], v1=v1[order], v2=v2[order],
                    mark=mark[order], env_birth=float(env_birth),
                    env_death=float(env_death), env_infect=float(env_infect),
                    horizon=float(horizon), n_vertices=n_v,
                    seed=seed, replica=replica, nudges=nudges)


def required_envelopes(m: RateModel, infection_bound: float) -> tuple[float, float, float]:
    """Smallest valid (birth, death, infection) envelopes for a capped model,
    covering both the CPVL reading and the role-swapped CPLI reading."""
    max_load = m.max_load
    if max_load is None:
        raise EnvelopeError("event-log replay requires a capped model (bounded rates)")
    b_tab, d_tab = m.tables(max_load + 3)
    return (float(b_tab[:max_load + 2].max()),
            float(d_tab[:max_load + 2].max()),
            float(infection_bound))


def _validate_envelopes(g: Graph, m: RateModel, infection_bound: float, log: EventLog) -> None:
    if log.n_vertices != g.vertex_count:
        raise ValueError("event log was generated for a different graph size")
    need_b, need_d, need_i = required_envelopes(m, infection_bound)
    for name, need, env in (("birth", need_b, log.env_birth),
                            ("death", need_d, log.env_death),
                            ("infection", need_i, log.env_infect)):
        if need > env * (1.0 + 1e-12):
            raise EnvelopeError(
                f"{name} stream envelope {env:g} is below the maximal reachable rate {need:g}")


def _cpvl_step(loads, kind, a, b, mark, b_tab, d_tab, lam_tab) -> tuple[bool, int]:
    """Apply one log point to a CPVL state; returns (accepted, load delta).
    Infection of an already-infected vertex is an accepted no-op (delta 0)."""
    if kind == KIND_BIRTH:
        n = loads[a]
        if mark < b_tab[n]:
            loads[a] = n + 1
            return True, 1
    elif kind == KIND_DEATH:
        n = loads[a]
        if mark < d_tab[n]:
            loads[a] = n - 1
            return True, -1
    else:
        ny = loads[a]
        if ny > 0 and mark < lam_tab[ny]:
            if loads[b] == 0:
                loads[b] = 1
                return True, 1
            return True, 0
    return False, 0


def _cpli_step(dorm, kind, a, b, mark, b_tab, d_tab, lam, reverse: bool) -> bool:
    """Apply one log point to a CPLI state (role-swapped stream reading).

    In the reverse-time (dual) reading the infection point on edge (a, b)
    resets a when b is active; forward it resets b when a is active.
    """
    if kind == KIND_DEATH:
        n = dorm[a]
        if mark < d_tab[n + 1]:
            dorm[a] = n + 1
            return True
    elif kind == KIND_BIRTH:
        n = dorm[a]
        if mark < b_tab[n]:
            dorm[a] = n - 1
            return True
    else:
        gate, target = (b, a) if reverse else (a, b)
        if mark < lam and dorm[gate] == 0 and dorm[target] != 0:
            dorm[target] = 0
            return True
    return False


def _cpvl_tables(m: RateModel, infection: InfectionRate):
    b_tab, d_tab = m.tables(m.max_load + 3)
    return b_tab, d_tab, infection.table(b_tab.size)


def run_cpvl_from_log(g: Graph, m: RateModel, infection: InfectionRate,
                      init: Configuration, log: EventLog, *,
                      collect_states: bool = False):
    """Deterministic CPVL replay of an event log (pure function of the log).

    With ``collect_states`` the per-point state history is returned as a
    second value: an (n_points + 1, V) array whose row k is the state after
    the first k points.
    """
    _validate_envelopes(g, m, infection.bound(m.max_load), log)
    loads = _check_init(g, m, init)
    b_tab, d_tab, lam_tab = _cpvl_tables(m, infection)
    total = int(loads.sum())
    ext_time = 0.0 if total == 0 else None
    accepted = 0
    history = np.empty((len(log) + 1, loads.size), dtype=np.int64) if collect_states else None
    if collect_states:
        history[0] = loads
    for i in range(len(log)):
        ok, delta = _cpvl_step(loads, log.kind[i], log.v1[i], log.v2[i], log.mark[i],
                               b_tab, d_tab, lam_tab)
        accepted += ok
        total += delta
        if total == 0 and ext_time is None:
            ext_time = float(log.times[i])
        if collect_states:
            history[i + 1] = loads
    traj = Trajectory(initial=init.loads.copy(), final=Configuration(loads),
                      status="extinct" if ext_time is not None else "horizon",
                      t_end=log.horizon, extinction_time=ext_time,
                      events=accepted, seed=log.seed, replica=log.replica)
    return (traj, history) if collect_states else traj


def run_cpli_from_log(g: Graph, m: RateModel, lam: float,
                      init: Configuration, log: EventLog, *,
                      direction: str = "forward", collect_states: bool = False):
    """Deterministic CPLI replay; ``direction="backward"`` traverses the log
    in reverse time with the dual role of the infection edges.

    In backward mode the returned history row k is the dual state valid on
    the time interval between points k and k+1 of the forward order (row
    n_points is the initial dual state at the terminal time)."""
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    _validate_envelopes(g, m, float(lam), log)
    dorm = _check_init(g, m, init)
    b_tab, d_tab = m.tables(m.max_load + 3)
    reverse = direction == "backward"
    idx = range(len(log) - 1, -1, -1) if reverse else range(len(log))
    accepted = 0
    history = np.empty((len(log) + 1, dorm.size), dtype=np.int64) if collect_states else None
    if collect_states:
        history[len(log) if reverse else 0] = dorm
    for i in idx:
        if _cpli_step(dorm, log.kind[i], log.v1[i], log.v2[i], log.mark[i],
                      b_tab, d_tab, lam, reverse):
            accepted += 1
        if collect_states:
            history[i if reverse else i + 1] = dorm
    traj = Trajectory(initial=init.loads.copy(), final=Configuration(dorm),
                      status="horizon", t_end=log.horizon, extinction_time=None,
                      events=accepted, seed=log.seed, replica=log.replica)
    return (traj, history) if collect_states else traj


def run_coupled_pair(g: Graph, model_lo, model_hi, init_lo: Configuration,
                     init_hi: Configuration, log: EventLog):
    """Replay two CPVLs from one log and assert the monotone coupling.

    ``model_lo``/``model_hi`` are (RateModel, InfectionRate) pairs whose
    rates must be ordered pointwise (b and Lambda up, d down) over the
    shared capped range; then the lower process stays pointwise below the
    upper one after every point.  Returns both trajectories and the number
    of ordering violations (0 if the coupling holds).
    """
    m_lo, inf_lo = model_lo
    m_hi, inf_hi = model_hi
    if m_lo.max_load is None or m_hi.max_load is None or m_lo.max_load != m_hi.max_load:
        raise ValueError("coupled replay needs capped models with equal maximal loads")
    max_load = m_lo.max_load
    b_lo, d_lo, lam_lo = _cpvl_tables(m_lo, inf_lo)
    b_hi, d_hi, lam_hi = _cpvl_tables(m_hi, inf_hi)
    upto = max_load + 2
    if np.any(b_lo[:upto] > b_hi[:upto] + 1e-12):
        raise ValueError("rate ordering violated: b_lo must be <= b_hi pointwise")
    if np.any(d_lo[:upto] < d_hi[:upto] - 1e-12):
        raise ValueError("rate ordering violated: d_lo must be >= d_hi pointwise")
    if np.any(lam_lo[1:upto] > lam_hi[1:upto] + 1e-12):
        raise ValueError("rate ordering violated: Lambda_lo must be <= Lambda_hi pointwise")
    if not np.all(init_lo.loads <= init_hi.loads):
        raise ValueError("init_lo must be <= init_hi pointwise")
    _validate_envelopes(g, m_lo, inf_lo.bound(max_load), log)
    _validate_envelopes(g, m_hi, inf_hi.bound(max_load), log)

    lo = _check_init(g, m_lo, init_lo)
    hi = _check_init(g, m_hi, init_hi)
    violations = 0
    for i in range(len(log)):
        k, a, b, mk = log.kind[i], log.v1[i], log.v2[i], log.mark[i]
        _cpvl_step(lo, k, a, b, mk, b_lo, d_lo, lam_lo)
        _cpvl_step(hi, k, a, b, mk, b_hi, d_hi, lam_hi)
        if np.any(lo > hi):
            violations += 1
    traj_lo = Trajectory(initial=init_lo.loads.copy(), final=Configuration(lo),
                         status="horizon", t_end=log.horizon,
                         extinction_time=None, events=len(log),
                         seed=log.seed, replica=log.replica)
    traj_hi = Trajectory(initial=init_hi.loads.copy(), final=Configuration(hi),
                         status="horizon", t_end=log.horizon,
                         extinction_time=None, events=len(log),
                         seed=log.seed, replica=log.replica)
    return traj_lo, traj_hi, violations


def check_bd_domination(g: Graph, m: RateModel, infection: InfectionRate,
                        init: Configuration, log: EventLog) -> int:
    """Replay the CPVL and the dominating independent-BD system from one log.

    The dominating system starts from init v 1, keeps the birth rates, and
    disables death at state 1, so each site is an autonomous chain on
    {1, 2, ...}; the CPVL stays below it pointwise at every event.  Returns
    the number of ordering violations (0 when the domination holds).
    """
    _validate_envelopes(g, m, infection.bound(m.max_load), log)
    b_tab, d_tab, lam_tab = _cpvl_tables(m, infection)
    eta = _check_init(g, m, init)
    z = np.maximum(eta, 1)
    violations = 0
    for i in range(len(log)):
        k, a, _, mk = log.kind[i], log.v1[i], log.v2[i], log.mark[i]
        _cpvl_step(eta, k, log.v1[i], log.v2[i], mk, b_tab, d_tab, lam_tab)
        if k == KIND_BIRTH:
            if mk < b_tab[z[a]]:
                z[a] += 1
        elif k == KIND_DEATH:
            if z[a] >= 2 and mk < d_tab[z[a]]:
                z[a] -= 1
        if np.any(eta > z):
            violations += 1
    return violations


def check_additivity(g: Graph, m: RateModel, infection: InfectionRate,
                     eta1: Configuration, eta2: Configuration, log: EventLog) -> int:
    """Replay from eta1, eta2, and eta1 v eta2 on one log; the max over time
    and vertices of |eta^(1 v 2) - (eta^1 v eta^2)| is 0 for an additive
    process."""
    _validate_envelopes(g, m, infection.bound(m.max_load), log)
    b_tab, d_tab, lam_tab = _cpvl_tables(m, infection)
    s1 = _check_init(g, m, eta1)
    s2 = _check_init(g, m, eta2)
    s12 = np.maximum(s1, s2)
    deviation = 0
    for i in range(len(log)):
        k, a, b, mk = log.kind[i], log.v1[i], log.v2[i], log.mark[i]
        _cpvl_step(s1, k, a, b, mk, b_tab, d_tab, lam_tab)
        _cpvl_step(s2, k, a, b, mk, b_tab, d_tab, lam_tab)
        _cpvl_step(s12, k, a, b, mk, b_tab, d_tab, lam_tab)
        deviation = max(deviation, int(np.abs(s12 - np.maximum(s1, s2)).max()))
    return deviation
