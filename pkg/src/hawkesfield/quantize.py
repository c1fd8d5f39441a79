"""Deterministic position construction with certified transport rates.

Truncate the position law to the cube [-r, r]^d (compensating atom at the
origin), then greedily peel off N sub-measures of mass 1/N, each supported
in a cube whose diameter shrinks like k^{-1/d}.  The emitted cube centers
carry a closed-form bound on the order-2 transport distance to the truncated
measure.  All cube geometry uses the l-infinity norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SpatialMeasure, linf_norm
from .streams import RngContract

__all__ = [
    "TruncatedMeasure",
    "QuantizedMeasure",
    "ResolutionError",
    "quantization_bound",
    "truncate_measure",
    "find_heavy_cube",
    "quantize_measure",
    "scenario_s1_positions",
    "scenario_s2_positions",
    "default_epsilon",
    "default_cells_per_axis",
]


class ResolutionError(ValueError):
    """Atom grid too coarse for the requested number of quantization points."""


@dataclass(frozen=True)
class TruncatedMeasure:
    """Atomic stand-in for the restriction of rho to [-r, r]^d.

    ``points``/``masses`` include the compensating origin atom, which is
    also reported separately as ``atom_weight``.  ``tail_bound`` is the
    declared transport cost of the truncation, E_beta r^2 e^{-beta r}.
    """

    points: np.ndarray
    masses: np.ndarray
    radius: float
    atom_weight: float
    cell_size: float
    tail_bound: float

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class QuantizedMeasure:
    """N representative points with uniform weights and the certified bound.

    Each point is the mass centroid of the piece extracted at that step; it
    lies inside the step's cube, so the k^{-1/d} diameter certificate (and
    hence the transport bound) applies unchanged, while point masses are
    reproduced exactly.
    """

    points: np.ndarray
    diameters: np.ndarray  # diameter of the cube extracted at step k, entry k-1
    radius: float
    certified_bound: float

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


def quantization_bound(dim: int, radius: float, n: int) -> float:
    """Closed-form W2 certificate g_d(r, N) of the greedy construction."""
    if dim == 1:
        return (4.0 * math.pi ** 2 * radius / 6.0) / math.sqrt(n)
    return 4.0 * radius * ((1.0 + math.log(n)) / n) ** (1.0 / dim)


def truncate_measure(rho: SpatialMeasure, radius: float,
                     cells_per_axis: int = 256) -> TruncatedMeasure:
    """Restrict rho to [-r, r]^d and move the missing mass to the origin."""
    if radius <= 0:
        raise ValueError("truncation radius must be positive")
    points, masses = rho.atoms_in_box(radius, cells_per_axis)
    inside = float(masses.sum())
    atom = max(0.0, 1.0 - inside)
    if atom > 0.0 or points.shape[0] == 0:
        origin = np.zeros((1, rho.dim))
        points = np.vstack([points, origin]) if points.size else origin
        masses = np.append(masses, atom)
    # renormalize rasterization round-off only; atom carries the real tail
    masses = masses / masses.sum()
    if rho.variant in ("dirac_mixture", ):
        cell = 0.0
    elif rho.variant == "grid_density":
        p = rho.params
        cell = float(np.max((p["box_hi"] - p["box_lo"]) / np.asarray(p["shape"])))
    else:
        cell = 2.0 * radius / cells_per_axis
    tail = rho.exp_moment_value * radius ** 2 * math.exp(-rho.exp_moment_rate * radius)
    return TruncatedMeasure(points, masses, radius, atom, cell, tail)


@dataclass(frozen=True)
class HeavyCube:
    center: np.ndarray
    radius: float
    mass: float
    flat_index: int
    cell_ids: np.ndarray  # indices of the atoms inside


def find_heavy_cube(points: np.ndarray, masses: np.ndarray, radius: float,
                    n: int, cell_size: float = 0.0) -> HeavyCube:
    """A cube of the disjoint covering with mass >= 1/N.

    The covering splits [-r, r]^d into m^d congruent cubes with
    m = floor((N |nu|)^{1/d}); pigeonhole guarantees one of them carries at
    least 1/N of the mass.  Among qualifying cubes the heaviest is returned,
    ties broken by lexicographic corner order.
    """
    dim = points.shape[1]
    mass = float(masses.sum())
    if mass < 1.0 / n - 1e-12:
        raise ValueError("measure mass below 1/N, nothing to extract")
    m = int(math.floor((n * mass) ** (1.0 / dim) + 1e-9))
    m = max(m, 1)
    side = 2.0 * radius / m
    if cell_size > side + 1e-12:
        raise ResolutionError(
            f"atom grid cell {cell_size:.3g} is coarser than the covering cube "
            f"side {side:.3g}; rasterize rho with cells <= {side / 4:.3g}")
    idx = np.clip(((points + radius) // side).astype(np.int64), 0, m - 1)
    flat = idx[:, 0]
    for k in range(1, dim):
        flat = flat * m + idx[:, k]
    cube_mass = np.bincount(flat, weights=masses, minlength=m ** dim)
    best = int(np.argmax(cube_mass))  # first max = lexicographic corner order
    if cube_mass[best] < 1.0 / n - 1e-9 * mass:
        raise ResolutionError("no covering cube reached mass 1/N; refine the atom grid")
    coords = []
    rem = best
    for k in range(dim - 1, -1, -1):
        coords.append(rem % m)
        rem //= m
    coords = np.array(coords[::-1], dtype=float)
    center = -radius + (coords + 0.5) * side
    return HeavyCube(center, side / 2.0, float(cube_mass[best]), best,
                     np.nonzero(flat == best)[0])


def quantize_measure(trunc: TruncatedMeasure, n: int) -> QuantizedMeasure:
    """Greedy extraction of N mass-1/N pieces; returns their cube centers."""
    if n < 1:
        raise ValueError("need n >= 1")
    points = trunc.points
    masses = trunc.masses.astype(float).copy()
    dim = trunc.dim
    out = np.empty((n, dim))
    diams = np.empty(n)
    target = 1.0 / n
    for k in range(n, 0, -1):
        cube = find_heavy_cube(points, masses, trunc.radius, n, trunc.cell_size)
        inside = cube.cell_ids
        out[k - 1] = masses[inside] @ points[inside] / cube.mass
        diams[k - 1] = 2.0 * cube.radius
        scale = max(0.0, 1.0 - target / cube.mass)
        masses[inside] *= scale
    bound = quantization_bound(dim, trunc.radius, n)
    return QuantizedMeasure(out, diams, trunc.radius, bound)


def default_epsilon(dim: int) -> float:
    """Truncation exponent, strictly inside the admissible range (0, 1/(d+2))."""
    return 0.5 / (dim + 2)


def default_cells_per_axis(n: int, dim: int) -> int:
    """Rasterization fine enough for the smallest covering cube (factor 4)."""
    return 4 * max(2, int(math.ceil(n ** (1.0 / dim))))


def scenario_s1_positions(rho: SpatialMeasure, n: int, rng: RngContract,
                          replication: int = 0) -> np.ndarray:
    """Random spatial layout: n i.i.d. draws from rho."""
    return rho.sample(rng.position_stream(replication), n)


def scenario_s2_positions(rho: SpatialMeasure, n: int, epsilon: float | None = None,
                          cells_per_axis: int | None = None):
    """Deterministic spatial layout via truncation radius N^epsilon and
    greedy quantization.  Returns (positions, certificate dict)."""
    eps = default_epsilon(rho.dim) if epsilon is None else epsilon
    if not 0.0 < eps < 1.0 / (rho.dim + 2):
        raise ValueError(f"epsilon must lie in (0, 1/(d+2)) = (0, {1.0/(rho.dim+2):.4g})")
    radius = float(n) ** eps
    cells = default_cells_per_axis(n, rho.dim) if cells_per_axis is None else cells_per_axis
    trunc = truncate_measure(rho, radius, cells)
    quant = quantize_measure(trunc, n)
    certificate = {
        "n": n,
        "dim": rho.dim,
        "epsilon": eps,
        "radius": radius,
        "atom_weight": trunc.atom_weight,
        "tail_bound": trunc.tail_bound,
        "g_bound": quant.certified_bound,
        "diameters": quant.diameters.tolist(),
    }
    return quant.points, certificate
