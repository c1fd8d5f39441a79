"""Experiment configuration, study drivers, and deterministic file output.

One JSON config file describes an experiment; the CLI only adds the seed,
output directory, and parallelism degree.  Every output file embeds the
sha256 hash of the resolved config so results can be re-verified.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .limitfield import (
    IntensityField,
    SpatialQuadrature,
    solve_limit_intensity,
)
from .model import ConfigError, ModelParams, params_from_json, params_to_json
from .quantize import (
    default_cells_per_axis,
    scenario_s1_positions,
    scenario_s2_positions,
    truncate_measure,
)
from .simulate import moment_bound_first, moment_bound_second, simulate_network
from .streams import RngContract
from .transport import (
    DiscreteMeasure,
    chaos_covariance,
    default_dictionary,
    dkr_dictionary_lower_estimate,
    dkr_upper_bound,
    estimate_coupling,
)

__all__ = [
    "ExperimentConfig",
    "StudyResult",
    "load_config",
    "config_hash",
    "cmd_simulate",
    "cmd_solve_limit",
    "cmd_quantize",
    "cmd_converge_study",
    "cmd_chaos_study",
    "cmd_verify",
    "rho_proxy_measure",
]

_FMT = "{:.17g}"  # full-precision decimals keep regressions replicable


def _fmt(x) -> str:
    return _FMT.format(float(x))


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    scenario: str
    n_list: tuple[int, ...]
    horizon: float
    dt: float
    tol: float
    replications: int
    seed: int
    epsilon: float | None
    cells_per_axis: int | None
    quadrature_nodes: int
    proxy_atoms: int
    chaos: dict | None
    raw: dict = field(compare=False, repr=False, default=None)

    @property
    def rng(self) -> RngContract:
        return RngContract(self.seed)


def load_config(path_or_dict, seed_override: int | None = None) -> ExperimentConfig:
    if isinstance(path_or_dict, dict):
        raw = json.loads(json.dumps(path_or_dict))
    else:
        with open(path_or_dict) as fh:
            raw = json.load(fh)
    return _parse_config(raw, seed_override)


def _parse_config(raw: dict, seed_override: int | None) -> ExperimentConfig:
    def need(key, typ, path="config"):
        if key not in raw:
            raise ConfigError(f"{path}.{key}: missing required field")
        val = raw[key]
        if typ is float and isinstance(val, (int, float)):
            return float(val)
        if typ is int and isinstance(val, int) and not isinstance(val, bool):
            return val
        if typ is not None and not isinstance(val, typ):
            raise ConfigError(f"{path}.{key}: expected {typ}, got {type(val).__name__}")
        return val

    model = params_from_json(need("model", dict), "config.model")
    scenario = need("scenario", str)
    if scenario not in ("S1", "S2"):
        raise ConfigError("config.scenario: must be 'S1' or 'S2'")
    n_list = tuple(int(n) for n in need("N", list))
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
        raise ConfigError("config.N: must be a nonempty increasing list of positive ints")
    horizon = need("T", float)
    if horizon <= 0:
        raise ConfigError("config.T: must be positive")
    replications = need("replications", int)
    if replications < 1:
        raise ConfigError("config.replications: must be >= 1")
    if seed_override is not None:
        raw = dict(raw)
        raw["seed"] = int(seed_override)
    seed = int(raw.get("seed", 0))
    quant = raw.get("quantization", {}) or {}
    chaos = raw.get("chaos")
    cfg = ExperimentConfig(
        model=model,
        scenario=scenario,
        n_list=n_list,
        horizon=horizon,
        dt=float(raw.get("dt", 1e-3)),
        tol=float(raw.get("tol", 1e-8)),
        replications=replications,
        seed=seed,
        epsilon=quant.get("epsilon"),
        cells_per_axis=quant.get("cells_per_axis"),
        quadrature_nodes=int(raw.get("quadrature_nodes", 128)),
        proxy_atoms=int(raw.get("proxy_atoms", 2048)),
        chaos=chaos,
        raw=raw,
    )
    if cfg.dt <= 0 or cfg.tol <= 0:
        raise ConfigError("config.dt and config.tol must be positive")
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = dict(cfg.raw)
    canonical["model"] = params_to_json(cfg.model)
    canonical["seed"] = cfg.seed
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg.seed, "version": __version__}


@dataclass(frozen=True)
class StudyResult:
    rows: list
    slopes: dict
    provenance: dict

    def to_json(self) -> dict:
        return {"rows": self.rows, "slopes": self.slopes, "provenance": self.provenance}


def loglog_slope(ns, values) -> dict | None:
    """OLS slope of ln(value) on ln(N) with a 95% confidence interval."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if keep.sum() < 4:
        return None
    x = np.log(ns[keep])
    y = np.log(values[keep])
    n = x.size
    xc = x - x.mean()
    slope = float(np.dot(xc, y) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    if n > 2:
        s2 = float(np.dot(resid, resid) / (n - 2))
        stderr = math.sqrt(s2 / np.dot(xc, xc))
        from scipy.stats import t as t_dist
        half = float(t_dist.ppf(0.975, n - 2)) * stderr
    else:
        stderr, half = float("nan"), float("nan")
    return {"slope": slope, "stderr": stderr,
            "ci_low": slope - half, "ci_high": slope + half, "points": int(n)}


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------

def positions_for(cfg: ExperimentConfig, n: int) -> np.ndarray:
    """Scenario positions for one ladder rung (S1 keyed by the rung's N)."""
    if cfg.scenario == "S1":
        return scenario_s1_positions(cfg.model.rho, n, cfg.rng, replication=n)
    pts, _ = scenario_s2_positions(cfg.model.rho, n, cfg.epsilon, cfg.cells_per_axis)
    return pts


def solve_field(cfg: ExperimentConfig, extra_nodes=None,
                quad: SpatialQuadrature | None = None):
    quad = quad or SpatialQuadrature.from_measure(cfg.model.rho, cfg.quadrature_nodes)
    fld = solve_limit_intensity(cfg.model, quad, cfg.horizon, cfg.dt, cfg.tol,
                                extra_nodes=extra_nodes)
    return quad, fld


def rho_proxy_measure(cfg: ExperimentConfig) -> DiscreteMeasure:
    """Fine discrete stand-in for rho used by the transport terms."""
    rho = cfg.model.rho
    if rho.variant == "dirac_mixture":
        return DiscreteMeasure(rho.params["points"], rho.params["weights"])
    from .limitfield import _covering_radius
    radius = _covering_radius(rho)
    cells = max(8, int(round(cfg.proxy_atoms ** (1.0 / rho.dim))))
    trunc = truncate_measure(rho, radius, cells)
    return DiscreteMeasure(trunc.points, trunc.masses)


def _write_lines(path: str, lines: list[str]):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _np_plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path: str, obj: dict):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_np_plain)
        fh.write("\n")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_chunk(args):
    params_json, positions, horizon, seed, reps = args
    params = params_from_json(params_json)
    rng = RngContract(seed)
    out = []
    for r in reps:
        trains = simulate_network(params, positions, horizon, rng, replication=r)
        out.append((r, [tr.times for tr in trains]))
    return out


def _parallel_reps(cfg, positions, jobs):
    reps = list(range(cfg.replications))
    args = (params_to_json(cfg.model), positions, cfg.horizon, cfg.seed)
    if jobs <= 1:
        return _simulate_chunk(args + (reps,))
    chunks = [reps[k::jobs] for k in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_simulate_chunk, [args + (c,) for c in chunks]))
    merged = [item for part in parts for item in part]
    merged.sort(key=lambda kv: kv[0])
    return merged


def cmd_simulate(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> list[str]:
    """Spike trains for every replication plus the moment-bound summary."""
    digest = config_hash(cfg)
    written = []
    for n in cfg.n_list:
        positions = positions_for(cfg, n)
        dim = positions.shape[1]
        results = _parallel_reps(cfg, positions, jobs)
        header = ["replication", "neuron"] + [f"pos_{k}" for k in range(dim)] + ["event_time"]
        lines = [f"# config_hash={digest}", ",".join(header)]
        mean_count = 0.0
        mean_sq = 0.0
        for r, trains in results:
            per_rep = np.array([t.size for t in trains], dtype=float)
            mean_count += per_rep.mean()
            mean_sq += (per_rep ** 2).mean()
            for i, times_arr in enumerate(trains):
                pos_txt = ",".join(_fmt(c) for c in positions[i])
                for t in times_arr:
                    lines.append(f"{r},{i},{pos_txt},{_fmt(t)}")
        mean_count /= len(results)
        mean_sq /= len(results)
        bound1 = moment_bound_first(cfg.model, positions, cfg.horizon)
        bound2 = moment_bound_second(cfg.model, positions, cfg.horizon)
        spikes_path = os.path.join(out_dir, f"spikes_N{n}.csv")
        _write_lines(spikes_path, lines)
        summary = {
            "N": n,
            "replications": cfg.replications,
            "mean_count": mean_count,
            "mean_square_count": mean_sq,
            "moment_bound_first": bound1,
            "moment_bound_second": bound2,
            "first_ok": mean_count <= bound1,
            "second_ok": mean_sq <= bound2,
            **_provenance(cfg),
        }
        summary_path = os.path.join(out_dir, f"moment_check_N{n}.json")
        _write_json(summary_path, summary)
        written += [spikes_path, summary_path]
    return written


# ---------------------------------------------------------------------------
# solve-limit
# ---------------------------------------------------------------------------

def cmd_solve_limit(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> list[str]:
    quad, fld = solve_field(cfg)
    digest = config_hash(cfg)
    dim = fld.nodes.shape[1]
    lines = [f"# config_hash={digest}",
             ",".join(["t", "node"] + [f"pos_{k}" for k in range(dim)] + ["value"])]
    for k, t in enumerate(fld.times):
        for p0 in range(fld.nodes.shape[0]):
            pos_txt = ",".join(_fmt(c) for c in fld.nodes[p0])
            lines.append(f"{_fmt(t)},{p0},{pos_txt},{_fmt(fld.values[k, p0])}")
    csv_path = os.path.join(out_dir, "intensity.csv")
    _write_lines(csv_path, lines)
    header = {
        "t0": 0.0, "t1": cfg.horizon, "dt": fld.dt,
        "n_nodes": int(fld.nodes.shape[0]),
        "nodes": fld.nodes.tolist(),
        "sup_norm": fld.sup_norm,
        "picard_residuals": [list(r) for r in fld.residual_history],
        **_provenance(cfg),
    }
    json_path = os.path.join(out_dir, "intensity_header.json")
    _write_json(json_path, header)
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# quantize
# ---------------------------------------------------------------------------

def cmd_quantize(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> list[str]:
    digest = config_hash(cfg)
    written = []
    for n in cfg.n_list:
        pts, cert = scenario_s2_positions(cfg.model.rho, n, cfg.epsilon, cfg.cells_per_axis)
        dim = pts.shape[1]
        lines = [f"# config_hash={digest}",
                 ",".join(["index"] + [f"pos_{k}" for k in range(dim)] + ["weight"])]
        for i, p in enumerate(pts):
            pos_txt = ",".join(_fmt(c) for c in p)
            lines.append(f"{i},{pos_txt},{_fmt(1.0 / n)}")
        csv_path = os.path.join(out_dir, f"positions_N{n}.csv")
        _write_lines(csv_path, lines)
        cert = dict(cert)
        cert.update(_provenance(cfg))
        json_path = os.path.join(out_dir, f"certificate_N{n}.json")
        _write_json(json_path, cert)
        written += [csv_path, json_path]
    return written


# ---------------------------------------------------------------------------
# converge-study
# ---------------------------------------------------------------------------

def converge_study(cfg: ExperimentConfig, jobs: int = 1) -> StudyResult:
    """Ladder over N of the coupling estimate and the assembled KR bound."""
    proxy = rho_proxy_measure(cfg)
    quad = SpatialQuadrature.from_measure(cfg.model.rho, cfg.quadrature_nodes)
    rows = []
    for n in cfg.n_list:
        positions = positions_for(cfg, n)
        _, fld = solve_field(cfg, extra_nodes=positions, quad=quad)
        report, samples = estimate_coupling(
            cfg.model, positions, fld, cfg.horizon, cfg.replications, cfg.rng,
            quad=quad, keep_samples=True)
        report = dkr_upper_bound(cfg.model, positions, fld, report, quad, proxy)
        dictionary = default_dictionary(cfg.horizon, cfg.model.dim)
        lower, gaps = dkr_dictionary_lower_estimate(
            [s.finite for s in samples], [s.limit for s in samples],
            positions, dictionary)
        rows.append({
            "N": n, "seed_set": cfg.seed,
            "A_mean": report.a_mean, "A_se": report.a_se,
            "B_bound": report.b_bound, "W_term": report.w_term,
            "dkr_upper": report.dkr_upper, "dkr_lower": lower,
            "F_term": report.f_term, "G_term": report.g_term,
            "H_term": report.h_term, "W1": report.w1, "W2": report.w2,
            "dict_gaps": gaps,
        })
    slopes = {
        "A_mean": loglog_slope(cfg.n_list, [r["A_mean"] for r in rows]),
        "dkr_upper": loglog_slope(cfg.n_list, [r["dkr_upper"] for r in rows]),
    }
    return StudyResult(rows, slopes, _provenance(cfg))


def cmd_converge_study(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> list[str]:
    result = converge_study(cfg, jobs)
    digest = config_hash(cfg)
    cols = ["N", "seed_set", "A_mean", "A_se", "B_bound", "W_term", "dkr_upper", "dkr_lower"]
    lines = [f"# config_hash={digest}", ",".join(cols)]
    for row in result.rows:
        lines.append(",".join(
            str(row[c]) if c in ("N", "seed_set") else _fmt(row[c]) for c in cols))
    csv_path = os.path.join(out_dir, "rate_table.csv")
    _write_lines(csv_path, lines)
    json_path = os.path.join(out_dir, "rate_study.json")
    _write_json(json_path, result.to_json())
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# chaos-study
# ---------------------------------------------------------------------------

def default_p_scale(dim: int) -> float:
    """Spatial mollifier scaling below the random-scenario admissibility cap."""
    return 0.9 / ((4 + dim) * (2 * dim + 1))


def chaos_study(cfg: ExperimentConfig, jobs: int = 1) -> StudyResult:
    opts = cfg.chaos or {}
    dim = cfg.model.dim
    x = np.asarray(opts.get("x", [-0.5] * dim), dtype=float)
    x_tilde = np.asarray(opts.get("x_tilde", [0.5] * dim), dtype=float)
    p_scale = opts.get("p_scale") or default_p_scale(dim)
    clip = float(opts.get("clip", 20.0))
    halfwidth = float(opts.get("support_halfwidth", 0.25))
    resample = bool(opts.get("resample_positions", False))
    quad = SpatialQuadrature.from_measure(cfg.model.rho, cfg.quadrature_nodes)
    extra = np.vstack([x, x_tilde])
    fld = solve_limit_intensity(cfg.model, quad, cfg.horizon, cfg.dt, cfg.tol,
                                extra_nodes=extra)
    rows = []
    for n in cfg.n_list:
        positions = None if resample else positions_for(cfg, n)
        res = chaos_covariance(
            cfg.model, positions, fld, x, x_tilde, p_scale,
            cfg.replications, cfg.rng, cfg.horizon, clip=clip,
            support_halfwidth=halfwidth, resample_positions=resample,
            n_neurons=n)
        rows.append({
            "N": n, "covariance": res.covariance, "covariance_se": res.covariance_se,
            "cross_minus_limit": res.cross_minus_limit_product,
            "limit_mean_x": res.limit_mean_x, "limit_mean_xt": res.limit_mean_xt,
            "min_window_occupancy": res.min_window_occupancy,
            "empty_window": res.empty_window,
        })
    slopes = {"abs_covariance": loglog_slope(
        cfg.n_list, [abs(r["covariance"]) for r in rows])}
    return StudyResult(rows, slopes, _provenance(cfg))


def cmd_chaos_study(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> list[str]:
    result = chaos_study(cfg, jobs)
    digest = config_hash(cfg)
    cols = ["N", "covariance", "covariance_se", "cross_minus_limit",
            "min_window_occupancy", "empty_window"]
    lines = [f"# config_hash={digest}", ",".join(cols)]
    for row in result.rows:
        vals = []
        for c in cols:
            v = row[c]
            vals.append(str(v) if isinstance(v, (int, bool)) else _fmt(v))
        lines.append(",".join(vals))
    csv_path = os.path.join(out_dir, "chaos_table.csv")
    _write_lines(csv_path, lines)
    json_path = os.path.join(out_dir, "chaos_study.json")
    _write_json(json_path, result.to_json())
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> list[str]:
    """Re-check that every output file in out_dir embeds this config's hash."""
    digest = config_hash(cfg)
    bad = []
    checked = []
    for name in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, name)
        if name.endswith(".csv"):
            with open(path) as fh:
                first = fh.readline().strip()
            ok = first == f"# config_hash={digest}"
        elif name.endswith(".json"):
            with open(path) as fh:
                obj = json.load(fh)
            embedded = obj.get("config_hash") or obj.get("provenance", {}).get("config_hash")
            ok = embedded == digest
        else:
            continue
        checked.append(name)
        if not ok:
            bad.append(name)
    if bad:
        raise ConfigError(f"config hash mismatch in: {', '.join(bad)}")
    if not checked:
        raise ConfigError(f"no output files found in {out_dir}")
    return checked
