"""Parameter catalog for spatially structured spiking networks.

Every catalog object carries its analytic constants (Lipschitz norms, sup
norms, exponential-moment bounds) next to the evaluation code, so downstream
bounds are computed from declared constants rather than re-estimated
numerically.  All spatial geometry in this package uses the l-infinity norm
on R^d; the declared Lipschitz constants are with respect to that norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ConfigError",
    "FiringRate",
    "SynapticWeight",
    "InitialCondition",
    "SpatialMeasure",
    "ModelParams",
    "eval_firing_rate",
    "decay_integral",
    "contraction_constant",
]

# Sub-exponential gradient peak of exp(-r^2 / 2s^2), attained at r = s.
_GAUSS_SLOPE = math.exp(-0.5)

# Below this leakage rate the closed forms (1 - e^{-a T}) / a switch to the
# series limit T to stay continuous at a = 0.
ALPHA_SERIES_THRESHOLD = 1e-10


class ConfigError(ValueError):
    """A parameter object or its JSON form violates the schema."""


def _as_point(value, dim: int, path: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape != (dim,):
        raise ConfigError(f"{path}: expected {dim} coordinates, got shape {arr.shape}")
    return arr


def linf_norm(points: np.ndarray) -> np.ndarray:
    """l-infinity norm of each row of an (n, d) array (or of a single point)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.abs(pts).max(axis=1)


def decay_integral(alpha: float, t: float) -> float:
    """Evaluate (1 - e^{-alpha t}) / alpha with the continuous limit at alpha = 0."""
    if alpha < ALPHA_SERIES_THRESHOLD:
        return t
    return -math.expm1(-alpha * t) / alpha


# ---------------------------------------------------------------------------
# Firing rates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiringRate:
    """Nonnegative Lipschitz spike-rate nonlinearity u -> f(u).

    ``lip_const`` and ``value_at_zero`` are declared analytically per variant;
    the property tests only falsify them.
    """

    variant: str
    params: dict
    lip_const: float
    value_at_zero: float

    @staticmethod
    def sigmoid(f_max: float, gain: float, threshold: float) -> "FiringRate":
        if f_max <= 0 or gain <= 0:
            raise ConfigError("sigmoid firing rate needs f_max > 0 and gain > 0")
        return FiringRate(
            "sigmoid",
            {"f_max": f_max, "gain": gain, "threshold": threshold},
            lip_const=f_max * gain / 4.0,
            value_at_zero=f_max / (1.0 + math.exp(gain * threshold)),
        )

    @staticmethod
    def piecewise_linear(slope: float, floor: float, ceiling: float) -> "FiringRate":
        if not (0.0 <= floor <= ceiling) or slope < 0:
            raise ConfigError("piecewise_linear needs 0 <= floor <= ceiling, slope >= 0")
        return FiringRate(
            "piecewise_linear",
            {"slope": slope, "floor": floor, "ceiling": ceiling},
            lip_const=slope,
            value_at_zero=min(max(0.0, floor), ceiling),
        )

    @staticmethod
    def rectified_linear(slope: float, offset: float) -> "FiringRate":
        if slope < 0:
            raise ConfigError("rectified_linear needs slope >= 0")
        return FiringRate(
            "rectified_linear",
            {"slope": slope, "offset": offset},
            lip_const=slope,
            value_at_zero=max(0.0, offset),
        )

    @staticmethod
    def constant(c: float) -> "FiringRate":
        if c < 0:
            raise ConfigError("constant firing rate must be nonnegative")
        return FiringRate("constant", {"c": c}, lip_const=0.0, value_at_zero=c)

    def __call__(self, u):
        p = self.params
        if self.variant == "sigmoid":
            return p["f_max"] / (1.0 + np.exp(-p["gain"] * (np.asarray(u) - p["threshold"])))
        if self.variant == "piecewise_linear":
            return np.clip(p["slope"] * np.asarray(u), p["floor"], p["ceiling"])
        if self.variant == "rectified_linear":
            return np.maximum(0.0, p["slope"] * np.asarray(u) + p["offset"])
        return np.full_like(np.asarray(u, dtype=float), p["c"])

    def scalar(self) -> Callable[[float], float]:
        """Specialized scalar evaluator for event-loop hot paths."""
        p = dict(self.params)
        if self.variant == "sigmoid":
            f_max, gain, thr = p["f_max"], p["gain"], p["threshold"]
            return lambda u: f_max / (1.0 + math.exp(-gain * (u - thr)))
        if self.variant == "piecewise_linear":
            slope, lo, hi = p["slope"], p["floor"], p["ceiling"]
            return lambda u: min(hi, max(lo, slope * u))
        if self.variant == "rectified_linear":
            slope, off = p["slope"], p["offset"]
            return lambda u: max(0.0, slope * u + off)
        c = p["c"]
        return lambda u: c


def eval_firing_rate(f: FiringRate, u: float) -> float:
    """Spike rate f(u); nonnegative by construction of the catalog."""
    return float(f(u))


# ---------------------------------------------------------------------------
# Synaptic weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynapticWeight:
    """Signed synaptic strength kernel (y, x) -> w(y, x).

    ``y`` is the source (presynaptic) position, ``x`` the target.  All
    variants are bounded in each argument and jointly Lipschitz:
    |w(y,x) - w(y',x')| <= lip_const (|x-x'| + |y-y'|) in the l-inf norm.
    """

    variant: str
    params: dict
    lip_const: float

    @staticmethod
    def constant(kappa: float) -> "SynapticWeight":
        return SynapticWeight("constant", {"kappa": kappa}, lip_const=0.0)

    @staticmethod
    def gaussian(amplitude: float, width: float) -> "SynapticWeight":
        if width <= 0:
            raise ConfigError("gaussian weight needs width > 0")
        return SynapticWeight(
            "gaussian",
            {"amplitude": amplitude, "width": width},
            lip_const=abs(amplitude) * _GAUSS_SLOPE / width,
        )

    @staticmethod
    def mexican_hat(a1: float, s1: float, a2: float, s2: float) -> "SynapticWeight":
        if s1 <= 0 or s2 <= 0:
            raise ConfigError("mexican_hat needs positive widths")
        return SynapticWeight(
            "mexican_hat",
            {"a1": a1, "s1": s1, "a2": a2, "s2": s2},
            lip_const=_GAUSS_SLOPE * (abs(a1) / s1 + abs(a2) / s2),
        )

    @staticmethod
    def separable_product(amplitude: float, center_y, width_y: float,
                          center_x, width_x: float,
                          dim: int | None = None) -> "SynapticWeight":
        if width_y <= 0 or width_x <= 0:
            raise ConfigError("separable_product needs positive widths")
        center_y = np.atleast_1d(np.asarray(center_y, dtype=float))
        if dim is None:
            dim = center_y.size
        cy = _as_point(center_y, dim, "weight.center_y")
        cx = _as_point(center_x, dim, "weight.center_x")
        return SynapticWeight(
            "separable_product",
            {"amplitude": amplitude, "center_y": cy, "width_y": width_y,
             "center_x": cx, "width_x": width_x},
            lip_const=abs(amplitude) * _GAUSS_SLOPE * (1.0 / width_y + 1.0 / width_x),
        )

    def pairwise(self, src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
        """Matrix W[j, i] = w(src_j, tgt_i) for src (n, d) and tgt (m, d)."""
        src = np.atleast_2d(np.asarray(src, dtype=float))
        tgt = np.atleast_2d(np.asarray(tgt, dtype=float))
        p = self.params
        if self.variant == "constant":
            return np.full((src.shape[0], tgt.shape[0]), p["kappa"])
        if self.variant == "separable_product":
            gy = np.exp(-0.5 * (linf_norm(src - p["center_y"]) / p["width_y"]) ** 2)
            gx = np.exp(-0.5 * (linf_norm(tgt - p["center_x"]) / p["width_x"]) ** 2)
            return p["amplitude"] * np.outer(gy, gx)
        # radial variants: r = linf distance between source and target
        r = np.abs(src[:, None, :] - tgt[None, :, :]).max(axis=2)
        if self.variant == "gaussian":
            return p["amplitude"] * np.exp(-0.5 * (r / p["width"]) ** 2)
        return (p["a1"] * np.exp(-0.5 * (r / p["s1"]) ** 2)
                - p["a2"] * np.exp(-0.5 * (r / p["s2"]) ** 2))

    def __call__(self, y, x) -> float:
        return float(self.pairwise(np.atleast_2d(y), np.atleast_2d(x))[0, 0])


# ---------------------------------------------------------------------------
# Initial conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialCondition:
    """Bounded Lipschitz initial membrane input x -> u0(x)."""

    variant: str
    params: dict
    lip_const: float
    sup_norm: float

    @staticmethod
    def constant(u: float) -> "InitialCondition":
        return InitialCondition("constant", {"u": u}, lip_const=0.0, sup_norm=abs(u))

    @staticmethod
    def gaussian_bump(height: float, center, width: float,
                      dim: int | None = None) -> "InitialCondition":
        if width <= 0:
            raise ConfigError("gaussian_bump needs width > 0")
        center = np.atleast_1d(np.asarray(center, dtype=float))
        c = _as_point(center, dim if dim is not None else center.size, "initial.center")
        return InitialCondition(
            "gaussian_bump",
            {"height": height, "center": c, "width": width},
            lip_const=abs(height) * _GAUSS_SLOPE / width,
            sup_norm=abs(height),
        )

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.variant == "constant":
            return np.full(pts.shape[0], self.params["u"])
        p = self.params
        r = linf_norm(pts - p["center"])
        return p["height"] * np.exp(-0.5 * (r / p["width"]) ** 2)


# ---------------------------------------------------------------------------
# Spatial measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialMeasure:
    """Probability measure of neuron positions on R^d with exponential moments.

    ``exp_moment_value`` is a declared upper bound on E[e^{beta |X|_inf}]; the
    truncation-tail certificates downstream stay valid for any upper bound.
    """

    variant: str
    dim: int
    params: dict
    exp_moment_rate: float
    exp_moment_value: float

    @staticmethod
    def uniform_box(dim: int, radius: float, beta: float = 1.0) -> "SpatialMeasure":
        if radius <= 0 or dim < 1:
            raise ConfigError("uniform_box needs radius > 0 and dim >= 1")
        return SpatialMeasure(
            "uniform_box", dim, {"radius": radius},
            exp_moment_rate=beta, exp_moment_value=math.exp(beta * radius),
        )

    @staticmethod
    def gaussian(dim: int, mean, cov_diag, beta: float = 1.0) -> "SpatialMeasure":
        m = _as_point(mean, dim, "rho.mean")
        v = _as_point(cov_diag, dim, "rho.cov_diag")
        if np.any(v <= 0):
            raise ConfigError("gaussian measure needs positive diagonal covariance")
        bound = float(sum(2.0 * math.exp(beta * abs(mk) + beta * beta * vk / 2.0)
                          for mk, vk in zip(m, v)))
        return SpatialMeasure(
            "gaussian", dim, {"mean": m, "cov_diag": v},
            exp_moment_rate=beta, exp_moment_value=max(1.0, bound),
        )

    @staticmethod
    def dirac_mixture(points, weights, beta: float = 1.0) -> "SpatialMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(weights, dtype=float)
        if w.shape[0] != pts.shape[0] or np.any(w < 0):
            raise ConfigError("dirac_mixture needs one nonnegative weight per point")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("dirac_mixture weights must sum to 1")
        value = float(np.sum(w * np.exp(beta * linf_norm(pts))))
        return SpatialMeasure(
            "dirac_mixture", pts.shape[1], {"points": pts, "weights": w},
            exp_moment_rate=beta, exp_moment_value=max(1.0, value),
        )

    @staticmethod
    def grid_density(box_lo, box_hi, shape, masses, beta: float = 1.0) -> "SpatialMeasure":
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        dim = len(shape)
        lo = _as_point(box_lo, dim, "rho.box_lo")
        hi = _as_point(box_hi, dim, "rho.box_hi")
        m = np.asarray(masses, dtype=float).reshape(shape)
        if np.any(m < 0):
            raise ConfigError("grid_density cell masses must be nonnegative")
        if abs(m.sum() - 1.0) > 1e-12:
            raise ConfigError("grid_density cell masses must sum to 1 within 1e-12")
        centers = _grid_centers(lo, hi, shape)
        half_cell = float(np.max((hi - lo) / (2.0 * np.asarray(shape))))
        value = float(np.sum(m.ravel() * np.exp(beta * (linf_norm(centers) + half_cell))))
        return SpatialMeasure(
            "grid_density", dim,
            {"box_lo": lo, "box_hi": hi, "shape": shape, "masses": m},
            exp_moment_rate=beta, exp_moment_value=max(1.0, value),
        )

    # -- queries -------------------------------------------------------

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.variant == "uniform_box":
            return gen.uniform(-p["radius"], p["radius"], size=(n, self.dim))
        if self.variant == "gaussian":
            return p["mean"] + gen.standard_normal((n, self.dim)) * np.sqrt(p["cov_diag"])
        if self.variant == "dirac_mixture":
            idx = gen.choice(p["points"].shape[0], size=n, p=p["weights"])
            return p["points"][idx].copy()
        # grid_density: cell by mass, uniform within the cell
        shape = p["shape"]
        cells = np.prod(shape)
        idx = gen.choice(cells, size=n, p=p["masses"].ravel())
        coords = np.unravel_index(idx, shape)
        widths = (p["box_hi"] - p["box_lo"]) / np.asarray(shape)
        out = np.empty((n, self.dim))
        for k in range(self.dim):
            left = p["box_lo"][k] + coords[k] * widths[k]
            out[:, k] = left + gen.uniform(0.0, widths[k], size=n)
        return out

    def density(self, points: np.ndarray) -> np.ndarray:
        """Lebesgue density, for the variants that have a smooth one."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.params
        if self.variant == "uniform_box":
            r = p["radius"]
            inside = np.all(np.abs(pts) <= r, axis=1)
            return inside / (2.0 * r) ** self.dim
        if self.variant == "gaussian":
            z = (pts - p["mean"]) / np.sqrt(p["cov_diag"])
            norm = np.prod(np.sqrt(2.0 * math.pi * p["cov_diag"]))
            return np.exp(-0.5 * np.sum(z * z, axis=1)) / norm
        raise ConfigError(f"{self.variant} measure has no pointwise density")

    def mass_in_box(self, radius: float) -> float:
        """Exact mass of the centered l-inf ball [-r, r]^d."""
        p = self.params
        if self.variant == "uniform_box":
            return min(1.0, (min(radius, p["radius"]) / p["radius"]) ** self.dim)
        if self.variant == "gaussian":
            total = 1.0
            for mk, vk in zip(p["mean"], p["cov_diag"]):
                s = math.sqrt(vk)
                total *= 0.5 * (math.erf((radius - mk) / (s * math.sqrt(2)))
                                - math.erf((-radius - mk) / (s * math.sqrt(2))))
            return total
        if self.variant == "dirac_mixture":
            inside = linf_norm(p["points"]) <= radius
            return float(np.sum(p["weights"][inside]))
        centers = _grid_centers(p["box_lo"], p["box_hi"], p["shape"])
        inside = linf_norm(centers) <= radius
        return float(np.sum(p["masses"].ravel()[inside]))

    def atoms_in_box(self, radius: float, cells_per_axis: int):
        """Discretize the restriction of the measure to [-r, r]^d as atoms.

        Returns (points, masses).  The masses sum to ``mass_in_box(radius)``
        up to rasterization error; for dirac_mixture the result is exact.
        """
        p = self.params
        if self.variant == "dirac_mixture":
            inside = linf_norm(p["points"]) <= radius
            return p["points"][inside].copy(), p["weights"][inside].copy()
        if self.variant == "grid_density":
            centers = _grid_centers(p["box_lo"], p["box_hi"], p["shape"])
            inside = linf_norm(centers) <= radius
            return centers[inside].copy(), p["masses"].ravel()[inside].copy()
        # continuous variants: per-axis exact cell masses, product over axes
        edges = np.linspace(-radius, radius, cells_per_axis + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        axis_masses = []
        for k in range(self.dim):
            if self.variant == "uniform_box":
                r0 = p["radius"]
                lo = np.clip(edges[:-1], -r0, r0)
                hi = np.clip(edges[1:], -r0, r0)
                axis_masses.append((hi - lo) / (2.0 * r0))
            else:
                s = math.sqrt(p["cov_diag"][k])
                z = (edges - p["mean"][k]) / (s * math.sqrt(2))
                cdf = 0.5 * (1.0 + np.array([math.erf(v) for v in z]))
                axis_masses.append(np.diff(cdf))
        grids = np.meshgrid(*([mids] * self.dim), indexing="ij")
        points = np.stack([g.ravel() for g in grids], axis=1)
        masses = axis_masses[0]
        for am in axis_masses[1:]:
            masses = np.outer(masses, am).ravel()
        keep = masses > 0
        return points[keep], masses[keep]


def _grid_centers(lo: np.ndarray, hi: np.ndarray, shape) -> np.ndarray:
    axes = [lo[k] + (np.arange(shape[k]) + 0.5) * (hi[k] - lo[k]) / shape[k]
            for k in range(len(shape))]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


# ---------------------------------------------------------------------------
# Full parameter set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """One experiment's dynamics: (f, w, u0, alpha) plus the position law rho."""

    firing_rate: FiringRate
    weight: SynapticWeight
    initial: InitialCondition
    alpha: float
    rho: SpatialMeasure

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("leakage rate alpha must be >= 0")

    @property
    def dim(self) -> int:
        return self.rho.dim


def contraction_constant(params: ModelParams, horizon: float, w_l1_sup: float) -> float:
    """Fixed-point contraction factor of the limit-intensity map over [0, T].

    ``w_l1_sup`` is sup_x integral of |w(., x)| against rho, supplied by the
    caller from quadrature.  Continuous in alpha at 0.
    """
    return decay_integral(params.alpha, horizon) * params.firing_rate.lip_const * w_l1_sup


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------
# This tagged-object schema is the single config format consumed by the CLI.

def params_to_json(params: ModelParams) -> dict:
    def tag(obj, extra):
        return {"variant": obj.variant, **extra}

    f, w, u0, rho = params.firing_rate, params.weight, params.initial, params.rho
    out = {
        "firing_rate": tag(f, _plain(f.params)),
        "weight": tag(w, _plain(w.params)),
        "initial": tag(u0, _plain(u0.params)),
        "alpha": params.alpha,
        "rho": {"variant": rho.variant, "dim": rho.dim,
                "beta": rho.exp_moment_rate, **_plain(rho.params)},
    }
    return out


def _plain(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            out[k] = v.tolist()
        elif isinstance(v, tuple):
            out[k] = list(v)
        else:
            out[k] = v
    return out


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}: missing required field")
    return obj[key]


def params_from_json(obj: dict, path: str = "model") -> ModelParams:
    fr = _require(obj, "firing_rate", path)
    wt = _require(obj, "weight", path)
    ic = _require(obj, "initial", path)
    alpha = _require(obj, "alpha", path)
    rho = _require(obj, "rho", path)

    rho_obj = _rho_from_json(rho, f"{path}.rho")
    dim = rho_obj.dim
    try:
        f_obj = _firing_from_json(fr)
        w_obj = _weight_from_json(wt, dim)
        u_obj = _initial_from_json(ic, dim)
        return ModelParams(f_obj, w_obj, u_obj, float(alpha), rho_obj)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _firing_from_json(obj: dict) -> FiringRate:
    v = _require(obj, "variant", "model.firing_rate")
    if v == "sigmoid":
        return FiringRate.sigmoid(obj["f_max"], obj["gain"], obj["threshold"])
    if v == "piecewise_linear":
        return FiringRate.piecewise_linear(obj["slope"], obj["floor"], obj["ceiling"])
    if v == "rectified_linear":
        return FiringRate.rectified_linear(obj["slope"], obj["offset"])
    if v == "constant":
        return FiringRate.constant(obj["c"])
    raise ConfigError(f"model.firing_rate.variant: unknown variant {v!r}")


def _weight_from_json(obj: dict, dim: int) -> SynapticWeight:
    v = _require(obj, "variant", "model.weight")
    if v == "constant":
        return SynapticWeight.constant(obj["kappa"])
    if v == "gaussian":
        return SynapticWeight.gaussian(obj["amplitude"], obj["width"])
    if v == "mexican_hat":
        return SynapticWeight.mexican_hat(obj["a1"], obj["s1"], obj["a2"], obj["s2"])
    if v == "separable_product":
        return SynapticWeight.separable_product(
            obj["amplitude"], obj["center_y"], obj["width_y"],
            obj["center_x"], obj["width_x"], dim)
    raise ConfigError(f"model.weight.variant: unknown variant {v!r}")


def _initial_from_json(obj: dict, dim: int) -> InitialCondition:
    v = _require(obj, "variant", "model.initial")
    if v == "constant":
        return InitialCondition.constant(obj["u"])
    if v == "gaussian_bump":
        return InitialCondition.gaussian_bump(obj["height"], obj["center"], obj["width"], dim)
    raise ConfigError(f"model.initial.variant: unknown variant {v!r}")


def _rho_from_json(obj: dict, path: str) -> SpatialMeasure:
    v = _require(obj, "variant", path)
    beta = float(obj.get("beta", 1.0))
    try:
        if v == "uniform_box":
            return SpatialMeasure.uniform_box(int(obj["dim"]), obj["radius"], beta)
        if v == "gaussian":
            return SpatialMeasure.gaussian(int(obj["dim"]), obj["mean"], obj["cov_diag"], beta)
        if v == "dirac_mixture":
            return SpatialMeasure.dirac_mixture(obj["points"], obj["weights"], beta)
        if v == "grid_density":
            return SpatialMeasure.grid_density(
                obj["box_lo"], obj["box_hi"], obj["shape"], obj["masses"], beta)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.variant: unknown variant {v!r}")
