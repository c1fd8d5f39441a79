"""Exact event-driven simulation of the finite interacting network.

The driver variables follow pure exponential decay between spikes, so the
per-neuron bound rate f(0) + L_f |U_i| stays valid until the next accepted
jump; candidates are thinned against the per-neuron Poisson sheets of
:mod:`hawkesfield.streams`.  A reference implementation using one global
dominating clock is kept alongside for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelParams
from .streams import RngContract, SheetScheduler

__all__ = [
    "SpikeTrain",
    "NetworkState",
    "ExplosionError",
    "decay_state",
    "apply_jump",
    "dominating_rate",
    "simulate_network",
    "moment_bound_first",
    "moment_bound_second",
    "empirical_weight_norms",
]

# The true system has finite moments; a dominating rate this large means the
# configuration itself is runaway.
EXPLOSION_GUARD = 1e12
# Any thinning sampler performs work proportional to (dominating rate x
# horizon); past this many projected candidates the run is infeasible.
CANDIDATE_BUDGET = 5e7


class ExplosionError(RuntimeError):
    """Dominating rate blew past a guard; names the time reached."""

    def __init__(self, time: float, rate: float, reason: str = "rate"):
        if reason == "rate":
            msg = (f"dominating rate {rate:.3e} exceeded {EXPLOSION_GUARD:.0e} "
                   f"at t={time:.6g}; configuration is runaway")
        else:
            msg = (f"projected candidate count {rate:.3e} at t={time:.6g} exceeds "
                   f"the {CANDIDATE_BUDGET:.0e} work budget; configuration is runaway")
        super().__init__(msg)
        self.time = time
        self.rate = rate


@dataclass(frozen=True)
class SpikeTrain:
    """Ordered event times of one counting process on (0, T]."""

    neuron: int
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.size and (np.any(np.diff(t) <= 0) or t[0] <= 0 or t[-1] > self.horizon):
            raise ValueError("spike times must be strictly increasing in (0, T]")

    def count(self, t: float | None = None) -> int:
        if t is None:
            return self.times.size
        return int(np.searchsorted(self.times, t, side="right"))


@dataclass(frozen=True)
class NetworkState:
    """Markovian simulator state: clock, positions, drivers, spike counts."""

    t: float
    positions: np.ndarray
    drivers: np.ndarray
    counts: np.ndarray


def decay_state(state: NetworkState, dt: float, alpha: float) -> NetworkState:
    """Advance the clock by dt under pure leakage; counts unchanged."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    return replace(state, t=state.t + dt, drivers=state.drivers * math.exp(-alpha * dt))


def apply_jump(state: NetworkState, j: int, params: ModelParams) -> NetworkState:
    """Spike of neuron j: every driver gets the kick w(x_j, x_i)/N."""
    n = state.drivers.shape[0]
    kick = params.weight.pairwise(state.positions[j:j + 1], state.positions)[0] / n
    counts = state.counts.copy()
    counts[j] += 1
    return replace(state, drivers=state.drivers + kick, counts=counts)


def dominating_rate(state: NetworkState, f) -> float:
    """Bound sum_i f(U_i(t+s)) for all s >= 0 under pure decay.

    Uses f(u) <= f(0) + L_f |u| and that |U_i| is nonincreasing between jumps.
    """
    return float(np.sum(f.value_at_zero + f.lip_const * np.abs(state.drivers)))


def simulate_network(
    params: ModelParams,
    positions: np.ndarray,
    horizon: float,
    rng: RngContract,
    replication: int = 0,
    method: str = "sheet",
    record_times: np.ndarray | None = None,
):
    """Exact sample of the network; one SpikeTrain per neuron.

    Deterministic given (params, positions, horizon, rng.seed, replication).
    With ``record_times`` the driver trajectory is sampled on that time grid
    and returned as a second value of shape (len(record_times), N).
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[0] == 0:
        raise ValueError("positions must be nonempty")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if method == "sheet":
        return _simulate_sheet(params, positions, horizon, rng, replication, record_times)
    if method == "global":
        if record_times is not None:
            raise ValueError("trajectory recording is only wired into the sheet method")
        return _simulate_global(params, positions, horizon, rng, replication)
    raise ValueError(f"unknown method {method!r}")


def _finish_trains(events, horizon):
    return [SpikeTrain(i, np.asarray(ev), horizon) for i, ev in enumerate(events)]


def _simulate_sheet(params, positions, horizon, rng, replication, record_times):
    n = positions.shape[0]
    weight_rows = params.weight.pairwise(positions, positions) / n  # row j = kick of a spike at j
    u = params.initial(positions).astype(float)
    f_scalar = params.firing_rate.scalar()
    f0 = params.firing_rate.value_at_zero
    lf = params.firing_rate.lip_const
    alpha = params.alpha

    recording = record_times is not None
    if recording:
        record_times = np.asarray(record_times, dtype=float)
        u_grid = np.empty((record_times.size, n))
        grid_pos = 0

    t_mat = 0.0  # time at which u was last materialized
    events = [[] for _ in range(n)]
    envelopes = f0 + lf * np.abs(u)
    _check_guard(envelopes, 0.0, horizon)

    sched = SheetScheduler(rng, replication, n, horizon)
    sched.ensure_levels(envelopes, 0.0)

    while True:
        item = sched.pop()
        if item is None:
            break
        t, i, band, z = item
        ui = u[i] * math.exp(-alpha * (t - t_mat)) if alpha > 0.0 else u[i]
        if z <= f_scalar(ui):
            if recording:
                grid_pos = _record_decayed(u_grid, grid_pos, record_times, t, t_mat, u, alpha)
            if alpha > 0.0:
                u *= math.exp(-alpha * (t - t_mat))
            t_mat = t
            u += weight_rows[i]
            events[i].append(t)
            envelopes = f0 + lf * np.abs(u)
            _check_guard(envelopes, t, horizon)
            sched.ensure_levels(envelopes, t)
            env_i = envelopes[i]
        else:
            env_i = f0 + lf * abs(ui)
        sched.advance(i, band, env_i)

    trains = _finish_trains(events, horizon)
    if recording:
        _record_decayed(u_grid, grid_pos, record_times, np.inf, t_mat, u, alpha)
        return trains, u_grid
    return trains


def _record_decayed(u_grid, grid_pos, record_times, t, t_mat, u, alpha):
    """Fill grid samples in [t_mat, t) with the decay-only trajectory."""
    idx = int(np.searchsorted(record_times, t, side="left"))
    if idx > grid_pos:
        dts = record_times[grid_pos:idx] - t_mat
        u_grid[grid_pos:idx] = u[None, :] * np.exp(-alpha * dts)[:, None]
    return max(idx, grid_pos)


def _check_guard(envelopes, t, horizon):
    total = float(envelopes.sum())
    if not math.isfinite(total) or total > EXPLOSION_GUARD:
        raise ExplosionError(t, total)
    # factor 2: dyadic band stacks carry at most twice the envelope rate
    work = 2.0 * total * horizon
    if work > CANDIDATE_BUDGET:
        raise ExplosionError(t, work, reason="work")


def _simulate_global(params, positions, horizon, rng, replication):
    """Reference sampler: one global dominating clock, prefix-sum selection."""
    n = positions.shape[0]
    weight_rows = params.weight.pairwise(positions, positions) / n
    u = params.initial(positions).astype(float)
    f = params.firing_rate
    f0, lf, alpha = f.value_at_zero, f.lip_const, params.alpha
    gen = rng.global_stream(replication)

    events = [[] for _ in range(n)]
    t = 0.0
    bound = float(np.sum(f0 + lf * np.abs(u)))
    _check_guard(np.atleast_1d(bound), t, horizon)
    while True:
        if bound <= 0.0:
            break
        t_next = t + gen.standard_exponential() / bound
        v = gen.random()
        if t_next > horizon:
            break
        u *= math.exp(-alpha * (t_next - t))
        t = t_next
        rates = f(u)
        total = float(rates.sum())
        assert total <= bound * (1.0 + 1e-12), "dominating bound violated"
        threshold = v * bound
        if threshold <= total:
            i = min(int(np.searchsorted(np.cumsum(rates), threshold, side="left")), n - 1)
            u += weight_rows[i]
            events[i].append(t)
        bound = float(np.sum(f0 + lf * np.abs(u)))
        _check_guard(np.atleast_1d(bound), t, horizon)
    return _finish_trains(events, horizon)


# ---------------------------------------------------------------------------
# Closed-form moment bounds
# ---------------------------------------------------------------------------

def empirical_weight_norms(params: ModelParams, positions: np.ndarray) -> tuple[float, float]:
    """sup_j of the L1 and L2 norms of w(x_j, .) under the empirical measure."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    w = params.weight.pairwise(positions, positions)
    l1 = np.abs(w).mean(axis=1)
    l2 = np.sqrt((w * w).mean(axis=1))
    return float(l1.max()), float(l2.max())


def moment_bound_first(params: ModelParams, positions: np.ndarray, horizon: float) -> float:
    """Upper bound on the mean per-neuron spike count over [0, T]."""
    w_l1, _ = empirical_weight_norms(params, positions)
    f = params.firing_rate
    base = horizon * (f.value_at_zero + f.lip_const * params.initial.sup_norm)
    return base * math.exp(horizon * f.lip_const * w_l1)


def moment_bound_second(params: ModelParams, positions: np.ndarray, horizon: float) -> float:
    """Upper bound on the mean per-neuron squared spike count over [0, T]."""
    w_l1, w_l2 = empirical_weight_norms(params, positions)
    f = params.firing_rate
    u0 = params.initial.sup_norm
    t = horizon
    first = t * (f.value_at_zero + f.lip_const * u0) * math.exp(t * f.lip_const * w_l1)
    bracket = first + 2.0 * t * f.value_at_zero ** 2 + 4.0 * f.lip_const ** 2 * t * u0 ** 2
    return math.exp(t * (1.0 + 4.0 * f.lip_const ** 2 * w_l2 ** 2)) * bracket
