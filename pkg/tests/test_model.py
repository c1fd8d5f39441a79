import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkesfield import (
    ConfigError,
    FiringRate,
    InitialCondition,
    ModelParams,
    SpatialMeasure,
    SynapticWeight,
    contraction_constant,
    eval_firing_rate,
)
from hawkesfield.model import params_from_json, params_to_json

CATALOG_RATES = [
    FiringRate.sigmoid(1.0, 1.0, 0.0),
    FiringRate.sigmoid(3.0, 2.5, -0.4),
    FiringRate.piecewise_linear(2.0, 0.1, 4.0),
    FiringRate.rectified_linear(1.5, 0.3),
    FiringRate.constant(2.0),
]

CATALOG_WEIGHTS = [
    SynapticWeight.constant(0.7),
    SynapticWeight.constant(-0.3),
    SynapticWeight.gaussian(1.2, 0.5),
    SynapticWeight.mexican_hat(2.0, 0.4, 1.0, 1.2),
    SynapticWeight.separable_product(0.8, [0.2, -0.1], 0.6, [0.0, 0.3], 0.9, 2),
]

CATALOG_INITIAL = [
    InitialCondition.constant(-0.4),
    InitialCondition.gaussian_bump(1.5, [0.3], 0.5),
]


def test_firing_rate_examples():
    assert eval_firing_rate(FiringRate.constant(2.0), 123.4) == 2.0
    assert eval_firing_rate(FiringRate.rectified_linear(1.0, 0.0), -3.0) == 0.0
    assert eval_firing_rate(FiringRate.sigmoid(1.0, 1.0, 0.0), 0.0) == pytest.approx(0.5)


@pytest.mark.parametrize("f", CATALOG_RATES, ids=lambda f: f.variant)
def test_firing_rate_declared_constants(f):
    gen = np.random.Generator(np.random.PCG64(1))
    u = gen.uniform(-30, 30, size=(10_000, 2))
    vals = f(u)
    assert np.all(vals >= 0)
    ratios = np.abs(f(u[:, 0]) - f(u[:, 1]))
    bound = f.lip_const * np.abs(u[:, 0] - u[:, 1])
    assert np.all(ratios <= bound * (1 + 1e-9) + 1e-12)
    assert eval_firing_rate(f, 0.0) == pytest.approx(f.value_at_zero, abs=1e-15)


@given(st.floats(-50, 50), st.floats(-50, 50))
@settings(max_examples=200, deadline=None)
def test_firing_rate_lipschitz_hypothesis(u, v):
    for f in CATALOG_RATES:
        assert abs(eval_firing_rate(f, u) - eval_firing_rate(f, v)) <= \
            f.lip_const * abs(u - v) * (1 + 1e-9) + 1e-12
        assert eval_firing_rate(f, u) >= 0


@pytest.mark.parametrize("w", CATALOG_WEIGHTS, ids=lambda w: w.variant)
def test_weight_two_argument_lipschitz(w):
    dim = 2 if w.variant == "separable_product" else 1
    gen = np.random.Generator(np.random.PCG64(2))
    y, x = gen.uniform(-4, 4, (2000, dim)), gen.uniform(-4, 4, (2000, dim))
    y2, x2 = gen.uniform(-4, 4, (2000, dim)), gen.uniform(-4, 4, (2000, dim))
    lhs = np.abs(np.array([w(a, b) for a, b in zip(y, x)])
                 - np.array([w(a, b) for a, b in zip(y2, x2)]))
    dy = np.abs(y - y2).max(axis=1)
    dx = np.abs(x - x2).max(axis=1)
    assert np.all(lhs <= w.lip_const * (dx + dy) * (1 + 1e-9) + 1e-12)


@pytest.mark.parametrize("w", CATALOG_WEIGHTS, ids=lambda w: w.variant)
def test_weight_bounded_sections(w):
    dim = 2 if w.variant == "separable_product" else 1
    gen = np.random.Generator(np.random.PCG64(3))
    pts = gen.uniform(-50, 50, (500, dim))
    origin = np.zeros((1, dim))
    assert np.all(np.isfinite(w.pairwise(origin, pts)))
    assert np.all(np.isfinite(w.pairwise(pts, origin)))


@pytest.mark.parametrize("u0", CATALOG_INITIAL, ids=lambda u: u.variant)
def test_initial_condition_constants(u0):
    dim = u0.params["center"].size if u0.variant == "gaussian_bump" else 1
    gen = np.random.Generator(np.random.PCG64(4))
    pts = gen.uniform(-5, 5, (5000, dim))
    vals = u0(pts)
    assert np.all(np.abs(vals) <= u0.sup_norm * (1 + 1e-12))
    pts2 = gen.uniform(-5, 5, (5000, dim))
    gap = np.abs(vals - u0(pts2))
    dist = np.abs(pts - pts2).max(axis=1)
    assert np.all(gap <= u0.lip_const * dist * (1 + 1e-9) + 1e-12)


def test_spatial_measures_mass_and_moments():
    measures = [
        SpatialMeasure.uniform_box(2, 1.5),
        SpatialMeasure.gaussian(2, [0.1, -0.2], [1.0, 0.5]),
        SpatialMeasure.dirac_mixture([[0.0], [1.0]], [0.25, 0.75]),
        SpatialMeasure.grid_density([-1, -1], [1, 1], (4, 4), np.full(16, 1 / 16)),
    ]
    for rho in measures:
        assert rho.exp_moment_value >= 1.0
        assert math.isfinite(rho.exp_moment_value)
        assert rho.mass_in_box(1e9) == pytest.approx(1.0, abs=1e-12)


def test_grid_density_mass_must_sum_to_one():
    with pytest.raises(ConfigError):
        SpatialMeasure.grid_density([-1], [1], (4,), np.full(4, 0.3))


def test_gaussian_rasterization_matches_cdf():
    rho = SpatialMeasure.gaussian(1, [0.0], [1.0])
    pts, masses = rho.atoms_in_box(3.0, 200)
    want = math.erf(3.0 / math.sqrt(2))
    assert masses.sum() == pytest.approx(want, abs=1e-12)


def test_measure_sampling_shapes(rng):
    for rho in (SpatialMeasure.uniform_box(2, 1.0),
                SpatialMeasure.gaussian(2, [0, 0], [1, 1]),
                SpatialMeasure.dirac_mixture([[0.0, 0.0]], [1.0]),
                SpatialMeasure.grid_density([-1, -1], [1, 1], (2, 2), np.full(4, 0.25))):
        pts = rho.sample(rng.position_stream(), 7)
        assert pts.shape == (7, 2)


def _params(alpha=1.0, lf=1.0):
    return ModelParams(
        FiringRate.rectified_linear(lf, 0.5) if lf else FiringRate.constant(0.5),
        SynapticWeight.constant(0.5),
        InitialCondition.constant(0.0),
        alpha,
        SpatialMeasure.uniform_box(1, 1.0),
    )


def test_contraction_constant_examples():
    assert contraction_constant(_params(alpha=1.0), 1.0, 0.5) == \
        pytest.approx((1 - math.exp(-1)) * 0.5, rel=1e-12)
    assert contraction_constant(_params(lf=0.0), 1.0, 0.5) == 0.0
    assert contraction_constant(_params(alpha=0.0), 2.0, 1.0) == pytest.approx(2.0)


def test_contraction_constant_monotone_and_continuous():
    values = [contraction_constant(_params(), t, 1.0) for t in np.linspace(0.1, 5, 40)]
    assert np.all(np.diff(values) > 0)
    near_zero = contraction_constant(_params(alpha=1e-8), 2.0, 1.0)
    at_zero = contraction_constant(_params(alpha=0.0), 2.0, 1.0)
    assert abs(near_zero - at_zero) < 1e-6


def test_alpha_must_be_nonnegative():
    with pytest.raises(ConfigError):
        ModelParams(FiringRate.constant(1.0), SynapticWeight.constant(0.0),
                    InitialCondition.constant(0.0), -0.1,
                    SpatialMeasure.uniform_box(1, 1.0))


def test_json_round_trip(interacting_params):
    blob = json.dumps(params_to_json(interacting_params))
    back = params_from_json(json.loads(blob))
    assert back.firing_rate.variant == interacting_params.firing_rate.variant
    assert back.weight.lip_const == pytest.approx(interacting_params.weight.lip_const)
    pts = np.array([[0.3], [-0.7]])
    assert np.allclose(back.initial(pts), interacting_params.initial(pts))
    assert np.allclose(back.weight.pairwise(pts, pts),
                       interacting_params.weight.pairwise(pts, pts))


def test_json_errors_carry_path():
    good = params_to_json(_params())
    bad = json.loads(json.dumps(good))
    del bad["rho"]
    with pytest.raises(ConfigError, match="model.rho"):
        params_from_json(bad)
    bad2 = json.loads(json.dumps(good))
    bad2["firing_rate"]["variant"] = "heaviside"
    with pytest.raises(ConfigError, match="variant"):
        params_from_json(bad2)
