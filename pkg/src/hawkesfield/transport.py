"""Exact transport distances and the shared-noise coupling experiments.

Transport costs between finite measures are computed exactly: order-p
distances on the line via the monotone coupling, in general via a dense
min-cost-flow solver (successive shortest augmenting paths with potentials).
The coupling estimator runs the finite network and its limit counterpart on
the same per-neuron Poisson sheets and aggregates the proof's error terms
into an itemized upper bound on the path-space Kantorovich-Rubinstein
distance, next to a dictionary-based estimate from below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .limitfield import (
    IntensityField,
    SpatialQuadrature,
    interp_column,
    lambda_space_lipschitz_bound,
    membrane_potential,
    node_indices,
    simulate_limit_process,
)
from .model import ModelParams, decay_integral
from .quantize import scenario_s1_positions
from .simulate import SpikeTrain, _check_guard, simulate_network
from .streams import RngContract, SheetScheduler

__all__ = [
    "DiscreteMeasure",
    "CoupledSample",
    "CouplingReport",
    "ChaosResult",
    "wasserstein_discrete",
    "simulate_coupled_pair",
    "estimate_coupling",
    "dkr_upper_bound",
    "default_dictionary",
    "dkr_dictionary_lower_estimate",
    "compare_potentials",
    "chaos_covariance",
    "DICTIONARY_VERSION",
]

# Sheet stream slots reserved for the two standalone limit samplers used by
# the chaos experiment (kept clear of any realistic neuron count).
RESERVED_LIMIT_SLOT_A = 2 ** 30
RESERVED_LIMIT_SLOT_B = 2 ** 30 + 1


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.shape[0] == 0:
            raise ValueError("empty support")
        if w.shape[0] != pts.shape[0] or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1 within 1e-12")

    @staticmethod
    def uniform(points: np.ndarray) -> "DiscreteMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return DiscreteMeasure(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def distance_matrix(a: np.ndarray, b: np.ndarray, norm: str = "linf") -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    diff = a[:, None, :] - b[None, :, :]
    if norm == "linf":
        return np.abs(diff).max(axis=2)
    if norm == "l2":
        return np.sqrt((diff * diff).sum(axis=2))
    raise ValueError(f"unknown norm {norm!r}")


def _wasserstein_1d(x1, w1, x2, w2, p: float) -> float:
    """Exact order-p cost on the line via the monotone (quantile) coupling."""
    o1 = np.argsort(x1, kind="stable")
    o2 = np.argsort(x2, kind="stable")
    x1, w1 = x1[o1], w1[o1].copy()
    x2, w2 = x2[o2], w2[o2].copy()
    i = j = 0
    cost = 0.0
    while i < x1.size and j < x2.size:
        m = min(w1[i], w2[j])
        if m > 0.0:
            cost += m * abs(x1[i] - x2[j]) ** p
        if w1[i] - m <= w2[j] - m:
            w2[j] -= w1[i]
            i += 1
        else:
            w1[i] -= w2[j]
            j += 1
    return cost


def _min_cost_transport(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray):
    """Exact dense transportation by successive shortest augmenting paths.

    Potentials keep reduced costs nonnegative; Dijkstra runs multi-source
    from every source with residual supply and exits at the nearest sink
    with residual demand; the bottleneck amount is pushed along the path.
    Returns (total_cost, plan).
    """
    n1, n2 = cost.shape
    a = supply.astype(float).copy()
    b = demand.astype(float).copy()
    u = np.zeros(n1)
    v = np.zeros(n2)
    plan = np.zeros((n1, n2))
    sink_sources: list[set[int]] = [set() for _ in range(n2)]
    mass_tol = 1e-14 * max(1.0, n1 + n2)

    active = a > mass_tol
    # per-sink minimum of (cost[i, j] - u[i]) over active sources
    act_idx = np.nonzero(active)[0]
    red = cost[act_idx] - u[act_idx, None]
    arg = np.argmin(red, axis=0)
    m_val = red[arg, np.arange(n2)]
    m_arg = act_idx[arg]

    def _refresh_min(cols: np.ndarray):
        act = np.nonzero(active)[0]
        sub = cost[np.ix_(act, cols)] - u[act, None]
        k = np.argmin(sub, axis=0)
        m_val[cols] = sub[k, np.arange(cols.size)]
        m_arg[cols] = act[k]

    while b.sum() > 1e-12:
        if not np.any(active):
            raise RuntimeError("transportation supplies exhausted before demands")
        dist = m_val - v
        parent_src = m_arg.copy()
        src_parent: dict[int, int] = {}
        done = np.zeros(n2, dtype=bool)
        found = -1
        while True:
            masked = np.where(done, np.inf, dist)
            j = int(np.argmin(masked))
            dj = masked[j]
            if not np.isfinite(dj):
                raise RuntimeError("transportation network disconnected")
            done[j] = True
            if b[j] > mass_tol:
                found = j
                break
            for i in sink_sources[j]:
                if i in src_parent or active[i]:
                    continue  # already reached, or a Dijkstra root
                src_parent[i] = j
                nd = dj + cost[i] - u[i] - v
                better = (nd < dist) & ~done
                if np.any(better):
                    dist[better] = nd[better]
                    parent_src[better] = i
        big = dist[found]
        # keep reduced costs >= 0 and make path edges tight: sources move by
        # big - d_i (roots have d_i = 0), sinks by min(label, big) - big
        for i in src_parent:
            u[i] += big - float(dist[src_parent[i]])
        u[active] += big
        v += np.minimum(dist, big) - big
        m_val -= big  # uniform +big on every active source

        # walk the alternating path back to a root and push the bottleneck
        path = []
        j = found
        while True:
            i = int(parent_src[j])
            path.append((i, j))
            if i not in src_parent:
                break  # reached a Dijkstra root
            j = src_parent[i]
        root = path[-1][0]
        delta = min(float(a[root]), float(b[found]))
        for i, _ in path[:-1]:
            delta = min(delta, float(plan[i, src_parent[i]]))
        a[root] -= delta
        b[found] -= delta
        for i, j in path:
            plan[i, j] += delta
            if plan[i, j] > 0:
                sink_sources[j].add(i)
        for i, _ in path[:-1]:
            jb = src_parent[i]
            plan[i, jb] -= delta
            if plan[i, jb] <= mass_tol:
                plan[i, jb] = max(plan[i, jb], 0.0)
                sink_sources[jb].discard(i)
        if a[root] <= mass_tol:
            active[root] = False
            stale = np.nonzero(m_arg == root)[0]
            if np.any(active) and stale.size:
                _refresh_min(stale)
    return float((plan * cost).sum()), plan


def wasserstein_discrete(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 2,
                         norm: str = "linf", method: str = "auto") -> float:
    """Exact order-p transport distance between finite discrete measures."""
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if method == "auto":
        method = "sorted" if mu.dim == 1 else "flow"
    if method == "sorted":
        if mu.dim != 1:
            raise ValueError("sorted method is specific to dimension 1")
        cost = _wasserstein_1d(mu.points[:, 0], mu.weights, nu.points[:, 0], nu.weights, p)
        return cost ** (1.0 / p)
    if method != "flow":
        raise ValueError(f"unknown method {method!r}")
    cost = distance_matrix(mu.points, nu.points, norm) ** p
    keep1 = mu.weights > 0
    keep2 = nu.weights > 0
    total, _ = _min_cost_transport(cost[np.ix_(keep1, keep2)],
                                   mu.weights[keep1], nu.weights[keep2])
    return max(0.0, total) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Shared-noise coupled pair
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoupledSample:
    """One replication of the jointly driven finite and limit systems."""

    finite: list
    limit: list
    a_value: float  # mean over neurons of sup_t |Z_i - Zbar_i|


def simulate_coupled_pair(
    params: ModelParams,
    positions: np.ndarray,
    lam: IntensityField,
    horizon: float,
    rng: RngContract,
    replication: int = 0,
) -> CoupledSample:
    """Finite network and limit processes driven by the same Poisson sheets.

    Neuron i's candidates are thinned twice at identical (time, level)
    points: once against the network intensity f(U_i(t-)), once against the
    solved limit intensity at x_i.  The per-neuron envelope dominates both.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = positions.shape[0]
    cols = node_indices(lam.nodes, positions)
    lam_cols = lam.values[:, cols]
    lam_bar = lam_cols.max(axis=0)
    times = lam.times

    weight_rows = params.weight.pairwise(positions, positions) / n
    u = params.initial(positions).astype(float)
    f_scalar = params.firing_rate.scalar()
    f0 = params.firing_rate.value_at_zero
    lf = params.firing_rate.lip_const
    alpha = params.alpha

    t_mat = 0.0
    ev_fin = [[] for _ in range(n)]
    ev_lim = [[] for _ in range(n)]
    diff = np.zeros(n, dtype=np.int64)
    sup_diff = np.zeros(n, dtype=np.int64)

    envelopes = np.maximum(f0 + lf * np.abs(u), lam_bar)
    _check_guard(envelopes, 0.0, horizon)
    sched = SheetScheduler(rng, replication, n, horizon)
    sched.ensure_levels(envelopes, 0.0)

    while True:
        item = sched.pop()
        if item is None:
            break
        t, i, band, z = item
        ui = u[i] * math.exp(-alpha * (t - t_mat)) if alpha > 0.0 else u[i]
        hit_fin = z <= f_scalar(ui)
        hit_lim = z <= interp_column(times, lam_cols[:, i], t)
        if hit_fin:
            if alpha > 0.0:
                u *= math.exp(-alpha * (t - t_mat))
            t_mat = t
            u += weight_rows[i]
            ev_fin[i].append(t)
            envelopes = np.maximum(f0 + lf * np.abs(u), lam_bar)
            _check_guard(envelopes, t, horizon)
            sched.ensure_levels(envelopes, t)
            env_i = envelopes[i]
        else:
            env_i = max(f0 + lf * abs(ui), lam_bar[i])
        if hit_lim:
            ev_lim[i].append(t)
        if hit_fin != hit_lim:
            diff[i] += 1 if hit_fin else -1
            if abs(diff[i]) > sup_diff[i]:
                sup_diff[i] = abs(diff[i])
        sched.advance(i, band, env_i)

    finite = [SpikeTrain(i, np.asarray(ev), horizon) for i, ev in enumerate(ev_fin)]
    limit = [SpikeTrain(i, np.asarray(ev), horizon) for i, ev in enumerate(ev_lim)]
    return CoupledSample(finite, limit, float(sup_diff.mean()))


# ---------------------------------------------------------------------------
# Coupling report and the assembled upper bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingReport:
    """Monte-Carlo coupling estimates plus the closed-form bound terms."""

    n: int
    replications: int
    a_mean: float
    a_se: float
    f_term: float
    g_term: float
    h_term: float
    b_bound: float | None = None
    w1: float | None = None
    w2: float | None = None
    w_term: float | None = None
    h_term_bound: float | None = None
    dkr_upper: float | None = None

    def validate(self):
        parts = [self.a_mean, self.f_term, self.g_term, self.h_term]
        if self.dkr_upper is not None:
            parts += [self.b_bound, self.w_term]
            for x in (self.a_mean, self.b_bound, self.w_term):
                if self.dkr_upper < x - 1e-12:
                    raise ValueError("assembled bound smaller than a component")
        if any(x is not None and x < 0 for x in parts):
            raise ValueError("coupling report terms must be nonnegative")

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _decay_weighted_counts(trains, horizon: float, alpha: float) -> np.ndarray:
    """Per train: sum over events of (1 - e^{-alpha (T - s)}) / alpha."""
    out = np.empty(len(trains))
    for k, tr in enumerate(trains):
        if tr.times.size:
            out[k] = np.sum([decay_integral(alpha, horizon - s) for s in tr.times])
        else:
            out[k] = 0.0
    return out


def estimate_coupling(
    params: ModelParams,
    positions: np.ndarray,
    lam: IntensityField,
    horizon: float,
    replications: int,
    rng: RngContract,
    quad: SpatialQuadrature | None = None,
    keep_samples: bool = False,
):
    """Monte-Carlo estimate of the coupling divergence and its decomposition.

    Returns (CouplingReport, samples); samples is the list of CoupledSample
    when ``keep_samples`` else None.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = positions.shape[0]
    cols = node_indices(lam.nodes, positions)
    lam_cols = lam.values[:, cols]
    alpha = params.alpha
    weight_rows_n = params.weight.pairwise(positions, positions) / n
    phi_tail = np.array([decay_integral(alpha, horizon - t) for t in lam.times])
    mean_kernel = np.trapezoid(lam_cols * phi_tail[:, None], lam.times, axis=0)

    a_vals = np.empty(replications)
    f_vals = np.empty(replications)
    g_vals = np.empty(replications)
    samples = [] if keep_samples else None
    for r in range(replications):
        sample = simulate_coupled_pair(params, positions, lam, horizon, rng, replication=r)
        a_vals[r] = sample.a_value
        h_fin = _decay_weighted_counts(sample.finite, horizon, alpha)
        h_lim = _decay_weighted_counts(sample.limit, horizon, alpha)
        f_vals[r] = np.abs((h_fin - h_lim) @ weight_rows_n).mean()
        g_vals[r] = np.abs((h_lim - mean_kernel) @ weight_rows_n).mean()
        if keep_samples:
            samples.append(sample)

    h_term = 0.0
    if quad is not None:
        qidx = node_indices(lam.nodes, quad.nodes)
        mean_kernel_q = np.trapezoid(lam.values[:, qidx] * phi_tail[:, None],
                                     lam.times, axis=0)
        w_quad = params.weight.pairwise(quad.nodes, positions)
        h_term = float(np.abs(mean_kernel @ weight_rows_n
                              - (mean_kernel_q * quad.weights) @ w_quad).mean())

    report = CouplingReport(
        n=n,
        replications=replications,
        a_mean=float(a_vals.mean()),
        a_se=float(a_vals.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0,
        f_term=float(f_vals.mean()),
        g_term=float(g_vals.mean()),
        h_term=h_term,
    )
    report.validate()
    return report, samples


def dkr_upper_bound(
    params: ModelParams,
    positions: np.ndarray,
    lam: IntensityField,
    coupling: CouplingReport,
    quad: SpatialQuadrature,
    rho_proxy: DiscreteMeasure,
    norm: str = "linf",
) -> CouplingReport:
    """Itemized upper bound on the path-space KR distance to the limit law.

    A-term: coupled Monte-Carlo estimate.  B-term: closed-form fluctuation
    bound 2 N^{-1/2} sqrt(mean Lambda + mean Lambda^2) with Lambda the
    per-neuron integrated limit intensity.  W-term: (1 + T L_lambda) x
    exact W1 between the empirical positions and a fine proxy of rho.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = positions.shape[0]
    cols = node_indices(lam.nodes, positions)
    lam_int = np.trapezoid(lam.values[:, cols], lam.times, axis=0)
    b_bound = 2.0 / math.sqrt(n) * math.sqrt(lam_int.mean() + (lam_int ** 2).mean())

    mu_n = DiscreteMeasure.uniform(positions)
    w1 = wasserstein_discrete(mu_n, rho_proxy, p=1, norm=norm)
    w2 = wasserstein_discrete(mu_n, rho_proxy, p=2, norm=norm)
    lam_lip = lambda_space_lipschitz_bound(params, lam.sup_norm, float(lam.times[-1]))
    horizon = float(lam.times[-1])
    w_term = (1.0 + horizon * lam_lip) * w1

    w_rho = params.weight.pairwise(rho_proxy.points, positions)
    w_l2_rho = float(np.sqrt((w_rho ** 2 * rho_proxy.weights[:, None]).sum(axis=0)).max())
    h_bound = horizon ** 2 * (lam.sup_norm * params.weight.lip_const
                              + w_l2_rho * lam_lip) * w2

    out = replace(coupling, b_bound=float(b_bound), w1=float(w1), w2=float(w2),
                  w_term=float(w_term), h_term_bound=float(h_bound),
                  dkr_upper=float(coupling.a_mean + b_bound + w_term))
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Dictionary estimate from below
# ---------------------------------------------------------------------------

DICTIONARY_VERSION = "v1"


def default_dictionary(horizon: float, dim: int, count_clip: float = 50.0,
                       coord_clip: float = 100.0):
    """Versioned list of (name, functional) pairs, 1-Lipschitz for the
    sup-norm-plus-position metric that dominates the path distance."""
    entries = []
    for frac, tag in ((0.25, "T4"), (0.5, "T2"), (1.0, "T")):
        t0 = frac * horizon
        entries.append((f"count_{tag}",
                        lambda tr, x, t0=t0: min(tr.count(t0), count_clip)))
    for (lo, hi, tag) in ((0.25, 0.5, "T4_T2"), (0.5, 1.0, "T2_T")):
        a, b = lo * horizon, hi * horizon
        entries.append((f"window_{tag}",
                        lambda tr, x, a=a, b=b:
                        0.5 * min(tr.count(b) - tr.count(a), count_clip)))
    for k in range(dim):
        entries.append((f"coord_{k}",
                        lambda tr, x, k=k: float(np.clip(x[k], -coord_clip, coord_clip))))
    return entries


def dkr_dictionary_lower_estimate(finite_samples, limit_samples, positions,
                                  dictionary) -> tuple[float, dict]:
    """Best separation achieved by the dictionary: an estimate from below.

    ``finite_samples``/``limit_samples`` are lists over replications of
    per-neuron SpikeTrain lists at the given positions.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    gaps = {}
    for name, fn in dictionary:
        tot_f = tot_l = 0.0
        cnt = 0
        for trains_f, trains_l in zip(finite_samples, limit_samples):
            for i, (tf, tl) in enumerate(zip(trains_f, trains_l)):
                tot_f += fn(tf, positions[i])
                tot_l += fn(tl, positions[i])
                cnt += 1
        gaps[name] = abs(tot_f - tot_l) / cnt
    return max(gaps.values()), gaps


# ---------------------------------------------------------------------------
# Driver-vs-field discrepancy (finite size effect on the potential)
# ---------------------------------------------------------------------------

def compare_potentials(
    params: ModelParams,
    positions: np.ndarray,
    lam: IntensityField,
    quad: SpatialQuadrature,
    horizon: float,
    replications: int,
    rng: RngContract,
) -> tuple[float, float]:
    """Monte-Carlo mean of the time-and-space averaged |U - u| discrepancy."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    pot = membrane_potential(lam, params, quad)
    cols = node_indices(lam.nodes, positions)
    u_ref = pot.values[:, cols]
    vals = np.empty(replications)
    for r in range(replications):
        _, u_grid = simulate_network(params, positions, horizon, rng,
                                     replication=r, record_times=lam.times)
        vals[r] = np.trapezoid(np.abs(u_grid - u_ref), lam.times, axis=0).mean()
    se = float(vals.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    return float(vals.mean()), se


# ---------------------------------------------------------------------------
# Propagation-of-chaos covariance experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChaosResult:
    covariance: float
    covariance_se: float
    cross_minus_limit_product: float
    limit_mean_x: float
    limit_mean_xt: float
    min_window_occupancy: int
    empty_window: bool


def _bump_profile():
    """Smooth bump on (-1, 1) with unit integral (numerical normalization)."""
    grid = np.linspace(-1.0, 1.0, 20001)
    with np.errstate(divide="ignore", over="ignore"):
        raw = np.where(np.abs(grid) < 1.0, np.exp(-1.0 / (1.0 - grid ** 2)), 0.0)
    c = np.trapezoid(raw, grid)

    def bump(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        inner = np.abs(z) < 1.0
        out[inner] = np.exp(-1.0 / (1.0 - z[inner] ** 2)) / c
        return out

    return bump

_BUMP = _bump_profile()


def mollified_window(center: np.ndarray, n: int, p_scale: float, rho,
                     support_halfwidth: float = 0.25):
    """Kernel z -> N^{dp} Phi(N^p (z - x)) / f_rho(z), Phi a product bump."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    dim = center.size
    scale = float(n) ** p_scale
    h = support_halfwidth

    def kernel(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        zs = scale * (pts - center) / h
        vals = np.prod(_BUMP(zs), axis=1) / (h ** dim)
        dens = rho.density(pts)
        out = np.zeros(pts.shape[0])
        pos = (vals > 0) & (dens > 0)  # rho-null regions hold no neurons
        out[pos] = scale ** dim * vals[pos] / dens[pos]
        return out

    return kernel


def chaos_covariance(
    params: ModelParams,
    positions: np.ndarray | None,
    lam: IntensityField,
    x: np.ndarray,
    x_tilde: np.ndarray,
    p_scale: float,
    replications: int,
    rng: RngContract,
    horizon: float,
    clip: float = 20.0,
    support_halfwidth: float = 0.25,
    resample_positions: bool = False,
    n_neurons: int | None = None,
    phi=None,
) -> ChaosResult:
    """Covariance of two mollified window observables of the spike field.

    With fixed positions the estimate is the empirical covariance over the
    jump randomness (zero for non-interacting networks); with
    ``resample_positions`` the positions are redrawn each replication and
    the spatial multinomial fluctuation enters as well.  The cross moment
    minus the product of limit means is reported alongside.
    """
    if positions is None:
        if not resample_positions or n_neurons is None:
            raise ValueError("fixed positions required unless resampling")
        n = n_neurons
    else:
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        n = positions.shape[0]
    win_a = mollified_window(x, n, p_scale, params.rho, support_halfwidth)
    win_b = mollified_window(x_tilde, n, p_scale, params.rho, support_halfwidth)
    if phi is None:
        phi = lambda counts: np.minimum(counts, clip) / clip

    s_a = np.empty(replications)
    s_b = np.empty(replications)
    occupancy = np.empty((replications, 2), dtype=np.int64)
    for r in range(replications):
        pos_r = (scenario_s1_positions(params.rho, n, rng, replication=r)
                 if resample_positions else positions)
        trains = simulate_network(params, pos_r, horizon, rng, replication=r)
        counts = np.array([tr.count(horizon) for tr in trains], dtype=float)
        phi_vals = np.asarray(phi(counts), dtype=float)
        ka = win_a(pos_r)
        kb = win_b(pos_r)
        occupancy[r] = [(ka > 0).sum(), (kb > 0).sum()]
        s_a[r] = np.mean(phi_vals * ka)
        s_b[r] = np.mean(phi_vals * kb)

    prod = s_a * s_b
    cov = float(prod.mean() - s_a.mean() * s_b.mean())
    # jackknife standard error of the covariance estimate
    if replications > 2:
        jack = np.empty(replications)
        sum_p, sum_a, sum_b = prod.sum(), s_a.sum(), s_b.sum()
        m = replications - 1
        for r in range(replications):
            jack[r] = (sum_p - prod[r]) / m - ((sum_a - s_a[r]) / m) * ((sum_b - s_b[r]) / m)
        cov_se = float(math.sqrt(max(0.0, (replications - 1) / replications
                                     * np.sum((jack - jack.mean()) ** 2))))
    else:
        cov_se = float("nan")

    lim_counts_a = np.empty(replications)
    lim_counts_b = np.empty(replications)
    for r in range(replications):
        tr_a = simulate_limit_process(lam, x, horizon, rng, replication=r,
                                      neuron=RESERVED_LIMIT_SLOT_A)
        tr_b = simulate_limit_process(lam, x_tilde, horizon, rng, replication=r,
                                      neuron=RESERVED_LIMIT_SLOT_B)
        lim_counts_a[r] = phi(np.array([float(tr_a.count(horizon))]))[0]
        lim_counts_b[r] = phi(np.array([float(tr_b.count(horizon))]))[0]
    m_a = float(lim_counts_a.mean())
    m_b = float(lim_counts_b.mean())

    return ChaosResult(
        covariance=cov,
        covariance_se=cov_se,
        cross_minus_limit_product=float(prod.mean() - m_a * m_b),
        limit_mean_x=m_a,
        limit_mean_xt=m_b,
        min_window_occupancy=int(occupancy.min()),
        empty_window=bool(np.any(occupancy == 0)),
    )
