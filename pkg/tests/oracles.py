"""Independent reference computations used as test oracles.

Everything here is deliberately brute force and shares no code with the
library paths it checks.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def euler_bernoulli_counts(params, positions, horizon, step, replications, seed):
    """Brute-force law sampler: fixed-step scheme, per-neuron jump
    probability rate*step each step.  Returns (replications, N) counts."""
    positions = np.atleast_2d(positions)
    n = positions.shape[0]
    weight = params.weight.pairwise(positions, positions) / n  # row j = kick of j
    u = np.tile(params.initial(positions).astype(float), (replications, 1))
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    counts = np.zeros((replications, n), dtype=np.int64)
    decay = math.exp(-params.alpha * step)
    steps = int(round(horizon / step))
    draw = np.empty((replications, n))
    for _ in range(steps):
        rates = np.asarray(params.firing_rate(u))
        gen.random(out=draw)
        jumps = draw < rates * step
        u *= decay
        if jumps.any():
            counts += jumps
            u += jumps @ weight
    return counts


def brute_force_wasserstein(points1, weights1, points2, weights2, p, norm="linf"):
    """Exact W_p by splitting rational weights into unit atoms and
    enumerating every pairing.  Denominators must stay tiny."""
    f1 = [Fraction(w).limit_denominator(64) for w in weights1]
    f2 = [Fraction(w).limit_denominator(64) for w in weights2]
    assert sum(f1) == 1 and sum(f2) == 1, "weights must be exactly rational"
    den = int(np.lcm.reduce([f.denominator for f in f1 + f2]))

    def split(points, fracs):
        atoms = []
        for pt, f in zip(np.atleast_2d(points), fracs):
            atoms.extend([pt] * int(f * den))
        return np.array(atoms)

    a1 = split(points1, f1)
    a2 = split(points2, f2)
    assert len(a1) == len(a2) <= 8, "oracle limited to tiny instances"
    d1 = den

    def dist(x, y):
        diff = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        return diff.max() if norm == "linf" else math.sqrt((diff ** 2).sum())

    best = math.inf
    for perm in itertools.permutations(range(len(a2))):
        cost = sum(dist(a1[i], a2[j]) ** p for i, j in enumerate(perm)) / d1
        best = min(best, cost)
    return best ** (1.0 / p)


def linprog_wasserstein(points1, weights1, points2, weights2, p, norm="linf"):
    """Exact W_p via the transportation LP solved by scipy's HiGHS."""
    from scipy.optimize import linprog

    a = np.atleast_2d(np.asarray(points1, dtype=float))
    b = np.atleast_2d(np.asarray(points2, dtype=float))
    diff = a[:, None, :] - b[None, :, :]
    dist = np.abs(diff).max(axis=2) if norm == "linf" else np.sqrt((diff ** 2).sum(axis=2))
    n1, n2 = dist.shape
    c = (dist ** p).ravel()
    a_eq = []
    b_eq = []
    for i in range(n1):
        row = np.zeros(n1 * n2)
        row[i * n2:(i + 1) * n2] = 1.0
        a_eq.append(row)
        b_eq.append(weights1[i])
    for j in range(n2):
        row = np.zeros(n1 * n2)
        row[j::n2] = 1.0
        a_eq.append(row)
        b_eq.append(weights2[j])
    res = linprog(c, A_eq=np.array(a_eq), b_eq=np.array(b_eq), bounds=(0, None),
                  method="highs")
    assert res.status == 0, res.message
    return res.fun ** (1.0 / p)


def poisson_tv_noise(emp_p, emp_q, replications):
    """Monte-Carlo scale of an empirical total-variation estimate: the summed
    standard errors of the per-outcome frequency differences."""
    var = emp_p * (1 - emp_p) + emp_q * (1 - emp_q)
    return 0.5 * np.sqrt(var / replications).sum()
