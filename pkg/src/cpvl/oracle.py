"""Exact finite-state analysis of capped CPVL/CPLI on tiny graphs.

States are load vectors in {0..max_load}^V, enumerated in mixed-radix
order (stride (max_load+1)^v for vertex v), so encoding and decoding are
O(1).  Transient distributions come from uniformization with a
Poisson-tail cutoff; these exact numbers are the reference the Monte
Carlo engines are validated against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .engine import Configuration
from .graphs import Graph
from .rates import InfectionRate, RateModel

__all__ = [
    "GeneratorModel",
    "build_generator",
    "transient_distribution",
    "marginal_distribution",
    "exact_duality_gap",
    "exact_extinction_probability",
    "DualityGap",
]

_MAX_VERTICES = 6
_MAX_LOAD = 4
_MAX_STATES = 1_000_000


@dataclass
class GeneratorModel:
    """Sparse generator of a capped process on an enumerated state space."""

    model: str                 # "cpvl" | "cpli"
    graph: Graph
    max_load: int
    Q: sp.csr_matrix
    states: np.ndarray         # (n_states, V) decoded state matrix

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def encode(self, loads) -> int:
        loads = np.asarray(loads, dtype=np.int64)
        base = self.max_load + 1
        strides = base ** np.arange(self.graph.vertex_count, dtype=np.int64)
        return int((loads * strides).sum())

    def decode(self, index: int) -> np.ndarray:
        return self.states[index].copy()

    def point_mass(self, loads) -> np.ndarray:
        dist = np.zeros(self.n_states)
        dist[self.encode(loads)] = 1.0
        return dist


def build_generator(g: Graph, m: RateModel, infection, model: str = "cpvl") -> GeneratorModel:
    """Assemble the exact rate matrix of a capped CPVL or CPLI.

    For CPVL, ``infection`` is an InfectionRate; for CPLI it is the constant
    reset rate (float, or a constant InfectionRate).
    """
    if model not in ("cpvl", "cpli"):
        raise ValueError(f"model must be cpvl or cpli, got {model!r}")
    max_load = m.max_load
    if max_load is None:
        raise ValueError("oracle needs a capped (or degenerate) rate model")
    if g.vertex_count > _MAX_VERTICES:
        raise ValueError(f"oracle graphs are limited to {_MAX_VERTICES} vertices, got {g.vertex_count}")
    if max_load > _MAX_LOAD:
        raise ValueError(f"oracle caps the maximal load at {_MAX_LOAD}, got {max_load}")
    n_states = (max_load + 1) ** g.vertex_count
    if n_states > _MAX_STATES:
        raise ValueError(f"state space too large: {n_states}")

    if model == "cpvl":
        lam_tab = infection.table(max_load + 1)
    else:
        lam = infection.lam if isinstance(infection, InfectionRate) else float(infection)
        if isinstance(infection, InfectionRate) and not infection.is_constant:
            raise ValueError("CPLI is defined for a constant reset rate only")

    b_tab, d_tab = m.tables(max_load + 3)
    if b_tab[max_load] != 0.0:
        raise ValueError(f"b({max_load}) must be 0 for the oracle's load bound")
    if model == "cpli" and d_tab[max_load + 1] != 0.0:
        raise ValueError(f"d({max_load + 1}) must be 0 for the oracle's dormancy bound")

    base = max_load + 1
    idx = np.arange(n_states, dtype=np.int64)
    states = np.empty((n_states, g.vertex_count), dtype=np.int64)
    for v in range(g.vertex_count):
        states[:, v] = (idx // base ** v) % base

    rows, cols, vals = [], [], []

    def add(row_idx, col_idx, rates):
        keep = rates > 0
        if keep.any():
            rows.append(row_idx[keep])
            cols.append(col_idx[keep])
            vals.append(rates[keep])

    for v in range(g.vertex_count):
        stride = base ** v
        n = states[:, v]
        nbrs = g.neighbors(v)
        if model == "cpvl":
            add(idx, idx + stride, np.where(n < max_load, b_tab[n], 0.0))
            add(idx, idx - stride, d_tab[n])
            inf_rate = np.zeros(n_states)
            for y in nbrs:
                ny = states[:, y]
                inf_rate += np.where(ny > 0, lam_tab[ny], 0.0)
            add(idx, idx + stride, np.where(n == 0, inf_rate, 0.0))
        else:
            add(idx, idx + stride, np.where(n < max_load, d_tab[n + 1], 0.0))
            add(idx, idx - stride, b_tab[n])
            active_nbrs = np.zeros(n_states)
            for y in nbrs:
                active_nbrs += states[:, y] == 0
            add(idx, idx - n * stride, np.where(n > 0, lam * active_nbrs, 0.0))

    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.empty(0)
    Q = sp.coo_matrix((vals, (rows, cols)), shape=(n_states, n_states)).tocsr()
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return GeneratorModel(model=model, graph=g, max_load=max_load, Q=Q.tocsr(), states=states)


def transient_distribution(gen: GeneratorModel, init, t: float, tol: float = 1e-10) -> np.ndarray:
    """Distribution at time t from ``init`` via uniformization.

    ``init`` may be a state index, a load vector / Configuration, or a full
    distribution vector.  The Poisson tail is truncated once its remaining
    mass is below tol; long horizons are halved recursively to keep the
    uniformization step count bounded.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    dist = _as_distribution(gen, init)
    if t == 0:
        return dist
    mu = 1.02 * float(-gen.Q.diagonal().min())
    if mu <= 0:
        return dist
    if mu * t > 512.0:
        half = transient_distribution(gen, dist, t / 2, tol / 2)
        return transient_distribution(gen, half, t / 2, tol / 2)
    P = sp.eye(gen.n_states, format="csr") + gen.Q.multiply(1.0 / mu)
    weight = float(np.exp(-mu * t))
    cum = weight
    v = dist
    acc = weight * v
    k = 0
    while cum < 1.0 - tol:
        k += 1
        v = v @ P
        weight *= mu * t / k
        acc += weight * v
        cum += weight
    acc = np.where(acc < 0, 0.0, acc)
    return acc


def marginal_distribution(gen: GeneratorModel, dist: np.ndarray, vertex: int) -> np.ndarray:
    """Law of the load at one vertex under a state-space distribution."""
    out = np.zeros(gen.max_load + 1)
    np.add.at(out, gen.states[:, vertex], dist)
    return out


def _as_distribution(gen: GeneratorModel, init) -> np.ndarray:
    if isinstance(init, Configuration):
        return gen.point_mass(init.loads)
    arr = np.asarray(init)
    if arr.ndim == 0:
        return gen.point_mass(gen.decode(int(arr)))
    if arr.size == gen.graph.vertex_count and (arr.ndim == 1 and gen.n_states != gen.graph.vertex_count):
        if np.issubdtype(arr.dtype, np.integer):
            return gen.point_mass(arr)
    if arr.size != gen.n_states:
        raise ValueError("init must be a load vector, a state index, or a distribution")
    dist = arr.astype(np.float64)
    total = dist.sum()
    if not np.isclose(total, 1.0, atol=1e-8):
        raise ValueError(f"distribution must sum to 1, got {total}")
    return dist


@dataclass
class DualityGap:
    lhs: float
    rhs: float
    gap: float
    state_space_size: int


def exact_duality_gap(g: Graph, m: RateModel, lam: float, eta0, xi0, t: float,
                      tol: float = 1e-10) -> DualityGap:
    """|P(eta_t <= xi0) - P(xi_t >= eta0)| by uniformization on both sides.

    This is the decisive numeric check of the capped pairing convention:
    both processes live on loads {0..K+1} with the same capped rate pair.
    """
    eta0 = np.asarray(eta0.loads if isinstance(eta0, Configuration) else eta0, dtype=np.int64)
    xi0 = np.asarray(xi0.loads if isinstance(xi0, Configuration) else xi0, dtype=np.int64)
    gen_v = build_generator(g, m, InfectionRate("constant", lam), "cpvl")
    gen_l = build_generator(g, m, lam, "cpli")
    p = transient_distribution(gen_v, gen_v.point_mass(eta0), t, tol)
    q = transient_distribution(gen_l, gen_l.point_mass(xi0), t, tol)
    lhs = float(p[np.all(gen_v.states <= xi0, axis=1)].sum())
    rhs = float(q[np.all(gen_l.states >= eta0, axis=1)].sum())
    return DualityGap(lhs=lhs, rhs=rhs, gap=abs(lhs - rhs), state_space_size=gen_v.n_states)


def exact_extinction_probability(gen: GeneratorModel, init, t: float, tol: float = 1e-10) -> float:
    """Mass at the all-zero (absorbing) configuration at time t."""
    if gen.model != "cpvl":
        raise ValueError("extinction probability is a CPVL quantity (state 0 absorbing)")
    dist = transient_distribution(gen, init, t, tol)
    return float(dist[0])
