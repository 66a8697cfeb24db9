"""Hand-built instances shared by the tests."""
from __future__ import annotations

import numpy as np

from kcharge.coverage import CoverageSignatureMap
from kcharge.instance import GenerationParams, SensorNode, SimParams, generate_instance, make_instance
from kcharge.solvers.qnet import QNetwork

B = 10800.0


def params(**kw) -> SimParams:
    base = dict(area_width=100.0, area_height=100.0, sensing_range=200.0, depot=(0.0, 0.0), threshold=0.45,
                coverage_k=1)
    base.update(kw)
    return SimParams(**base)


def sensor(i, x, y, deadline=None, residual=None, beta=0.5) -> SensorNode:
    """Sensor by deadline (residual = deadline * beta) or by residual."""
    if residual is None:
        residual = deadline * beta
    return SensorNode(i, (float(x), float(y)), float(residual), float(beta))


def full(i, x, y) -> SensorNode:
    """A sensor that never requests charging."""
    return SensorNode(i, (float(x), float(y)), B, 0.5)


def instance(sensors, **kw):
    return make_instance(params(**kw), sensors)


def sig_map(signatures, spacing=5.0) -> CoverageSignatureMap:
    regions: dict = {}
    for idx, sig in enumerate(signatures):
        for s in sig:
            regions.setdefault(s, []).append(idx)
    return CoverageSignatureMap(spacing, tuple(tuple(s) for s in signatures), (1,) * len(signatures),
                                {s: tuple(r) for s, r in regions.items()})


def small(seed, n=14, k=2, alpha=0.45, area=250.0, **kw):
    """Small random field: a few requesters, quick for every solver."""
    gen = GenerationParams(n=n, k=k, alpha=alpha, area_width=area, area_height=area, max_attempts=2000, **kw)
    return generate_instance(gen, seed)


def trap():
    """Greedy charges the near sensor first and can no longer reach the far one in time."""
    sensors = [sensor(0, 10, 0, deadline=20000, beta=0.2), sensor(1, 200, 0, deadline=50.0)]
    return instance(sensors, area_width=200.0, area_height=200.0, sensing_range=400.0, coverage_k=2)


TOY_SEED = 0


def toy():
    """Five requesters all covering the field, k = 3: any three of them restore coverage."""
    pts = [(30, 10), (60, 20), (80, 70), (20, 60), (45, 90)]
    return instance([sensor(i, x, y, deadline=20000.0, beta=0.2) for i, (x, y) in enumerate(pts)], coverage_k=3)


def numeric_grad(net, X, y, eps=1e-6):
    out = {}
    for name, arr in net.params.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = net.loss_and_grad(X, y)[0]
            arr[idx] = old - eps
            down = net.loss_and_grad(X, y)[0]
            arr[idx] = old
            g[idx] = (up - down) / (2 * eps)
        out[name] = g
    return out


def max_relative_error(net, X, y):
    _, analytic = net.loss_and_grad(X, y)
    numeric = numeric_grad(net, X, y)
    errs = []
    for name in analytic:
        a, n = analytic[name], numeric[name]
        scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
        errs.append(np.linalg.norm(a - n) / scale)
    return max(errs)


def random_small_net(rng, seed):
    """A small network with random biases, so pre-activations stay off the ReLU kink at 0."""
    dim = int(rng.integers(2, 6))
    net = QNetwork(dim, hidden=(int(rng.integers(3, 8)), int(rng.integers(3, 8))), seed=seed)
    for name in ("b1", "b2", "b3"):
        net.params[name] = rng.normal(size=net.params[name].shape)
    return net, rng.normal(size=(6, dim)), rng.normal(size=6)
