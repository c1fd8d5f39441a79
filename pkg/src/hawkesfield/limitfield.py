"""Limit intensity and membrane potential of the infinite-network dynamics.

The intensity solves a fixed-point equation: it is the image of itself under
the memory-integral map F.  We discretize the position law by a quadrature,
keep time integrals in an exact exponential recursion plus trapezoidal
increments (second order), and iterate F to the fixed point, splitting the
horizon into sub-windows whenever the contraction factor is not < 1.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .model import ModelParams, SpatialMeasure, contraction_constant, decay_integral
from .quantize import quantize_measure, truncate_measure
from .streams import BandClock, RngContract, bands_needed

__all__ = [
    "SpatialQuadrature",
    "IntensityField",
    "PotentialField",
    "GridMismatchError",
    "NonConvergenceError",
    "picard_map",
    "solve_limit_intensity",
    "membrane_potential",
    "integrate_neural_field",
    "lambda_space_lipschitz_bound",
    "simulate_limit_process",
    "node_indices",
    "w_l1_sup",
]


class GridMismatchError(ValueError):
    """Field and quadrature grids do not line up."""


class NonConvergenceError(RuntimeError):
    def __init__(self, residual: float, max_iter: int):
        super().__init__(
            f"fixed-point iteration did not reach tolerance in {max_iter} "
            f"iterations; last residual {residual:.3e}")
        self.residual = residual


@dataclass(frozen=True)
class SpatialQuadrature:
    """Nodes and nonnegative weights summing to 1, discretizing rho."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if not np.all(np.isfinite(nodes)):
            raise ValueError("quadrature nodes must be finite")
        if abs(weights.sum() - 1.0) > 1e-12 or np.any(weights < 0):
            raise ValueError("quadrature weights must be nonnegative and sum to 1")

    @staticmethod
    def from_measure(rho: SpatialMeasure, n_nodes: int,
                     cells_per_axis: int | None = None) -> "SpatialQuadrature":
        """Default discretization: greedy cube quantization of rho.

        grid_density measures use their own cells directly.
        """
        if rho.variant == "grid_density":
            pts, masses = rho.atoms_in_box(float("inf"), 0)
            return SpatialQuadrature(pts, masses / masses.sum())
        radius = _covering_radius(rho)
        from .quantize import default_cells_per_axis
        cells = cells_per_axis or default_cells_per_axis(n_nodes, rho.dim)
        trunc = truncate_measure(rho, radius, cells)
        quant = quantize_measure(trunc, n_nodes)
        return SpatialQuadrature(quant.points, quant.weights)


def _covering_radius(rho: SpatialMeasure) -> float:
    """Radius whose tail mass is negligible for quadrature purposes."""
    if rho.variant == "uniform_box":
        return rho.params["radius"]
    if rho.variant == "dirac_mixture":
        from .model import linf_norm
        return float(linf_norm(rho.params["points"]).max()) + 1e-9
    r = 1.0
    while rho.mass_in_box(r) < 1.0 - 1e-9 and r < 1e6:
        r *= 1.5
    return r


@dataclass(frozen=True)
class IntensityField:
    """Spike intensity sampled on a uniform time grid x spatial nodes."""

    times: np.ndarray
    nodes: np.ndarray
    values: np.ndarray  # (len(times), len(nodes)), nonnegative
    sup_norm: float
    residual_history: tuple = dc_field(default=(), compare=False)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def column(self, index: int) -> np.ndarray:
        return self.values[:, index]


@dataclass(frozen=True)
class PotentialField:
    """Membrane potential on the same grids (signed values)."""

    times: np.ndarray
    nodes: np.ndarray
    values: np.ndarray


def node_indices(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Index of each point inside ``nodes`` (exact match), else raise."""
    nodes = np.atleast_2d(nodes)
    points = np.atleast_2d(points)
    out = np.empty(points.shape[0], dtype=np.int64)
    for k, p in enumerate(points):
        hits = np.nonzero(np.all(nodes == p, axis=1))[0]
        if hits.size == 0:
            raise GridMismatchError(f"point {p} is not a field node")
        out[k] = hits[0]
    return out


def w_l1_sup(params: ModelParams, quad: SpatialQuadrature,
             eval_nodes: np.ndarray | None = None) -> float:
    """sup_x of the rho-integral of |w(., x)|, by quadrature over the nodes."""
    tgt = quad.nodes if eval_nodes is None else np.atleast_2d(eval_nodes)
    w = params.weight.pairwise(quad.nodes, tgt)
    return float((np.abs(w) * quad.weights[:, None]).sum(axis=0).max())


def _memory_integrals(lam_quad: np.ndarray, dt: float, alpha: float,
                      carry: np.ndarray | None = None) -> np.ndarray:
    """I[k] = int_0^{t_k} e^{-alpha (t_k - s)} lam(s) ds, one column per node.

    Exact exponential recursion with trapezoidal increments; ``carry`` seeds
    the integral with memory accumulated before the current window.
    """
    steps, m = lam_quad.shape
    decay = math.exp(-alpha * dt)
    out = np.empty((steps, m))
    out[0] = 0.0 if carry is None else carry
    half = 0.5 * dt
    for k in range(steps - 1):
        out[k + 1] = decay * (out[k] + half * lam_quad[k]) + half * lam_quad[k + 1]
    return out


def _base_drive(params: ModelParams, times: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    u0 = params.initial(nodes)
    return np.exp(-params.alpha * times)[:, None] * u0[None, :]


def picard_map(lam: IntensityField, params: ModelParams,
               quad: SpatialQuadrature) -> IntensityField:
    """One application of the fixed-point map F to the field."""
    qidx = _quad_indices(lam, quad)
    interact = params.weight.pairwise(quad.nodes, lam.nodes) * quad.weights[:, None]
    mem = _memory_integrals(lam.values[:, qidx], lam.dt, params.alpha)
    drive = _base_drive(params, lam.times, lam.nodes) + mem @ interact
    values = np.asarray(params.firing_rate(drive))
    return IntensityField(lam.times, lam.nodes, values, float(values.max()))


def _quad_indices(lam: IntensityField, quad: SpatialQuadrature) -> np.ndarray:
    try:
        return node_indices(lam.nodes, quad.nodes)
    except GridMismatchError as exc:
        raise GridMismatchError(
            "quadrature nodes must be a subset of the field's evaluation nodes"
        ) from exc


def _window_steps(params: ModelParams, w_l1: float, horizon: float, dt: float,
                  n_steps: int) -> int:
    """Steps per solver window so the window contraction factor is <= 0.5."""
    total = contraction_constant(params, horizon, w_l1)
    if total < 1.0:
        return n_steps
    lf_w = params.firing_rate.lip_const * w_l1
    alpha = params.alpha
    if alpha > 0.0 and 0.5 * alpha / lf_w < 1.0:
        tau = -math.log(1.0 - 0.5 * alpha / lf_w) / alpha
    elif alpha > 0.0:
        return n_steps  # asymptotic constant L/alpha <= 0.5: no split needed
    else:
        tau = 0.5 / lf_w
    return max(1, int(math.floor(tau / dt)))


def solve_limit_intensity(
    params: ModelParams,
    quad: SpatialQuadrature,
    horizon: float,
    dt: float,
    tol: float = 1e-8,
    max_iter: int = 200,
    extra_nodes: np.ndarray | None = None,
) -> IntensityField:
    """Fixed point of the intensity map on [0, T] x (quadrature + extra nodes).

    Iterates from the no-interaction intensity; when the whole-horizon
    contraction factor is >= 1, solves window by window (factor <= 0.5 each),
    carrying the memory integrals across windows.
    """
    if tol <= 0 or dt <= 0:
        raise ValueError("tol and dt must be positive")
    n_steps = max(1, int(round(horizon / dt)))
    times = np.linspace(0.0, horizon, n_steps + 1)
    dt = float(times[1] - times[0])
    if extra_nodes is None or np.asarray(extra_nodes).size == 0:
        nodes = quad.nodes
    else:
        nodes = np.vstack([quad.nodes, np.atleast_2d(np.asarray(extra_nodes, dtype=float))])
    m = quad.nodes.shape[0]

    w_l1 = w_l1_sup(params, quad, nodes)
    steps_per_window = _window_steps(params, w_l1, horizon, dt, n_steps)

    interact = params.weight.pairwise(quad.nodes, nodes) * quad.weights[:, None]
    base = _base_drive(params, times, nodes)
    values = np.empty((n_steps + 1, nodes.shape[0]))
    carry = np.zeros(m)
    residual_history: list[tuple[float, ...]] = []

    k0 = 0
    while k0 < n_steps:
        k1 = min(n_steps, k0 + steps_per_window)
        w_times = times[k0:k1 + 1]
        span = w_times - w_times[0]
        carry_drive = (np.exp(-params.alpha * span)[:, None] * carry[None, :]) @ interact
        drive0 = base[k0:k1 + 1] + carry_drive
        lam = np.asarray(params.firing_rate(drive0))
        residuals = []
        for _ in range(max_iter):
            mem = _memory_integrals(lam[:, :m], dt, params.alpha)
            lam_next = np.asarray(params.firing_rate(drive0 + mem @ interact))
            res = float(np.max(np.abs(lam_next - lam)))
            residuals.append(res)
            lam = lam_next
            if res <= tol:
                break
        else:
            raise NonConvergenceError(residuals[-1], max_iter)
        residual_history.append(tuple(residuals))
        mem = _memory_integrals(lam[:, :m], dt, params.alpha)
        carry = math.exp(-params.alpha * (w_times[-1] - w_times[0])) * carry + mem[-1]
        values[k0:k1 + 1] = lam
        k0 = k1

    sup = float(values.max())
    field = IntensityField(times, nodes, values, sup, tuple(residual_history))
    _assert_a_priori_integrable(field, quad)
    return field


def _assert_a_priori_integrable(field: IntensityField, quad: SpatialQuadrature):
    """The solved intensity must keep its first two time-integral moments
    finite under the quadrature weights, and stay nonnegative."""
    qidx = _quad_indices(field, quad)
    lam_int = np.trapezoid(field.values[:, qidx], field.times, axis=0)
    total = float(np.sum(quad.weights * (lam_int ** 2 + lam_int)))
    if not (math.isfinite(total) and np.all(field.values >= 0)):
        raise RuntimeError("solved intensity violates the a priori integrability bound")


def membrane_potential(lam: IntensityField, params: ModelParams,
                       quad: SpatialQuadrature) -> PotentialField:
    """Potential whose image under the firing rate is the solved intensity."""
    qidx = _quad_indices(lam, quad)
    interact = params.weight.pairwise(quad.nodes, lam.nodes) * quad.weights[:, None]
    mem = _memory_integrals(lam.values[:, qidx], lam.dt, params.alpha)
    drive = _base_drive(params, lam.times, lam.nodes) + mem @ interact
    return PotentialField(lam.times, lam.nodes, drive)


def integrate_neural_field(
    params: ModelParams,
    quad: SpatialQuadrature,
    horizon: float,
    dt: float,
    extra_nodes: np.ndarray | None = None,
) -> PotentialField:
    """Exponential-Euler integration of the nonlocal field dynamics.

    Independent of the fixed-point solver; first-order in dt, exact for the
    pure-decay part.
    """
    n_steps = max(1, int(round(horizon / dt)))
    times = np.linspace(0.0, horizon, n_steps + 1)
    dt = float(times[1] - times[0])
    if extra_nodes is None or np.asarray(extra_nodes).size == 0:
        nodes = quad.nodes
    else:
        nodes = np.vstack([quad.nodes, np.atleast_2d(np.asarray(extra_nodes, dtype=float))])
    m = quad.nodes.shape[0]
    interact = params.weight.pairwise(quad.nodes, nodes) * quad.weights[:, None]
    decay = math.exp(-params.alpha * dt)
    gain = decay_integral(params.alpha, dt)

    values = np.empty((n_steps + 1, nodes.shape[0]))
    values[0] = params.initial(nodes)
    for k in range(n_steps):
        rates = np.asarray(params.firing_rate(values[k, :m]))
        values[k + 1] = decay * values[k] + gain * (rates @ interact)
    return PotentialField(times, nodes, values)


def lambda_space_lipschitz_bound(params: ModelParams, lam_sup: float,
                                 horizon: float) -> float:
    """Spatial Lipschitz constant of the limit intensity over [0, T]."""
    f = params.firing_rate
    return f.lip_const * (params.initial.lip_const
                          + lam_sup * decay_integral(params.alpha, horizon)
                          * params.weight.lip_const)


def interp_column(times: np.ndarray, column: np.ndarray, t: float) -> float:
    """Piecewise-linear evaluation of one intensity column in time."""
    dt = times[1] - times[0]
    k = min(int(t / dt), times.size - 2)
    frac = (t - times[k]) / dt
    return float(column[k] + frac * (column[k + 1] - column[k]))


def simulate_limit_process(
    lam: IntensityField,
    x: np.ndarray,
    horizon: float,
    rng: RngContract,
    replication: int = 0,
    neuron: int = 0,
) -> np.ndarray:
    """Inhomogeneous Poisson sample at position x by sheet thinning.

    ``x`` must be one of the field nodes (the time-interpolated column is
    the sampled intensity).  Using the stream index of neuron i reproduces,
    point for point, the limit half of the coupled-pair construction.
    """
    idx = int(node_indices(lam.nodes, np.atleast_2d(x))[0])
    column = lam.values[:, idx]
    bound = float(column.max())
    times = lam.times
    events = []
    if bound > 0.0:
        heap = []
        for band in range(bands_needed(bound)):
            clock = BandClock(rng.sheet_stream(replication, neuron, band), band)
            t, z = clock.next_point()
            if t <= horizon:
                heapq.heappush(heap, (t, band, z, clock))
        while heap:
            t, band, z, clock = heapq.heappop(heap)
            if z <= interp_column(times, column, t):
                events.append(t)
            t2, z2 = clock.next_point()
            if t2 <= horizon:
                heapq.heappush(heap, (t2, band, z2, clock))
    from .simulate import SpikeTrain
    return SpikeTrain(neuron, np.asarray(events), horizon)
