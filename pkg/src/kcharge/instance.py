"""Network data model, seeded instance generator and instance files."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

SCHEMA_VERSION = "kcharge-instance/1"


class InstanceError(ValueError):
    """Raised for invalid instance data (bad parameters, broken references)."""


class MalformedFileError(InstanceError):
    pass


class SchemaVersionError(InstanceError):
    pass


class CoverageUnachievableError(InstanceError):
    pass


Point = tuple[float, float]


@dataclass(frozen=True)
class SimParams:
    area_width: float = 500.0
    area_height: float = 500.0
    sensing_range: float = 135.0
    charger_speed: float = 5.0        # m/s
    move_cost: float = 600.0          # J/m
    battery_capacity: float = 10800.0  # J
    transfer_rate: float = 20.0       # W
    threshold: float = 0.45           # alpha
    coverage_k: int = 2
    depot: Point = (250.0, 250.0)
    departure_time: float = 0.0
    time_step: float = 1.0
    include_return: bool = True
    grid_spacing: float = 5.0

    def __post_init__(self):
        positive = ("area_width", "area_height", "sensing_range", "charger_speed", "move_cost",
                    "battery_capacity", "transfer_rate", "time_step", "grid_spacing")
        for name in positive:
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InstanceError(f"{name} must be positive and finite, got {value!r}")
        if not 0 < self.threshold <= 1:
            raise InstanceError(f"threshold must lie in (0, 1], got {self.threshold!r}")
        if int(self.coverage_k) != self.coverage_k or self.coverage_k < 1:
            raise InstanceError(f"coverage_k must be a positive integer, got {self.coverage_k!r}")
        if self.departure_time < 0:
            raise InstanceError("departure_time must be >= 0")
        object.__setattr__(self, "depot", (float(self.depot[0]), float(self.depot[1])))
        if not self.contains(self.depot):
            raise InstanceError(f"depot {self.depot} lies outside the area")

    def contains(self, p: Point) -> bool:
        return 0.0 <= p[0] <= self.area_width and 0.0 <= p[1] <= self.area_height

    @property
    def diagonal(self) -> float:
        return math.hypot(self.area_width, self.area_height)


@dataclass(frozen=True)
class SensorNode:
    id: int
    position: Point
    residual: float  # B_i(t0), joules
    consumption_rate: float  # beta_i, watts

    @property
    def deadline(self) -> float:
        """Seconds after departure until the battery is exhausted."""
        return self.residual / self.consumption_rate


@dataclass(frozen=True)
class ChargingRequest:
    sensor_id: int
    deadline: float  # absolute seconds, t0 = 0


@dataclass(frozen=True)
class NetworkInstance:
    params: SimParams
    sensors: tuple[SensorNode, ...]
    requests: tuple[ChargingRequest, ...]
    seed: Optional[int] = None
    _by_id: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "requests", tuple(self.requests))
        by_id = {}
        p = self.params
        for s in self.sensors:
            if s.id in by_id:
                raise InstanceError(f"duplicate sensor id {s.id}")
            if not p.contains(s.position):
                raise InstanceError(f"sensor {s.id} at {s.position} lies outside the area")
            if not 0 <= s.residual <= p.battery_capacity:
                raise InstanceError(f"sensor {s.id}: residual {s.residual} outside [0, B]")
            if not s.consumption_rate > 0:
                raise InstanceError(f"sensor {s.id}: consumption rate must be positive")
            by_id[s.id] = s
        object.__setattr__(self, "_by_id", by_id)

        seen = set()
        for r in self.requests:
            if r.sensor_id not in by_id:
                raise InstanceError(f"request references unknown sensor {r.sensor_id}")
            if r.sensor_id in seen:
                raise InstanceError(f"duplicate request for sensor {r.sensor_id}")
            seen.add(r.sensor_id)
        expected = {r.sensor_id for r in derive_requests(self.sensors, p)}
        if seen != expected:
            raise InstanceError("request set does not match the residual-energy threshold rule")

    def sensor(self, sensor_id: int) -> SensorNode:
        try:
            return self._by_id[sensor_id]
        except KeyError:
            raise KeyError(f"unknown sensor id {sensor_id}") from None

    @property
    def n(self) -> int:
        return len(self.sensors)

    @property
    def requester_ids(self) -> tuple[int, ...]:
        return tuple(r.sensor_id for r in self.requests)

    def deadline(self, sensor_id: int) -> float:
        s = self.sensor(sensor_id)
        return self.params.departure_time + s.deadline


@dataclass(frozen=True)
class GenerationParams:
    n: int
    k: int = 2
    alpha: float = 0.45
    area_width: float = 500.0
    area_height: float = 500.0
    sensing_range: float = 135.0
    charger_speed: float = 5.0
    move_cost: float = 600.0
    battery_capacity: float = 10800.0
    transfer_rate: float = 20.0
    depot: Optional[Point] = None  # None -> centre of the area
    residual_min_fraction: float = 0.05  # 0.54 kJ of 10.8 kJ
    beta_range: tuple[float, float] = (0.2, 1.0)
    time_step: float = 1.0
    include_return: bool = True
    grid_spacing: float = 5.0
    max_attempts: int = 200

    def sim_params(self) -> SimParams:
        depot = self.depot if self.depot is not None else (self.area_width / 2, self.area_height / 2)
        return SimParams(
            area_width=self.area_width, area_height=self.area_height,
            sensing_range=self.sensing_range, charger_speed=self.charger_speed,
            move_cost=self.move_cost, battery_capacity=self.battery_capacity,
            transfer_rate=self.transfer_rate, threshold=self.alpha, coverage_k=self.k,
            depot=depot, time_step=self.time_step, include_return=self.include_return,
            grid_spacing=self.grid_spacing,
        )


def derive_requests(sensors, params: SimParams) -> list[ChargingRequest]:
    """One request per sensor whose residual fraction is at or below the threshold."""
    out = []
    for s in sensors:
        if s.residual / params.battery_capacity <= params.threshold:
            out.append(ChargingRequest(s.id, params.departure_time + s.residual / s.consumption_rate))
    return out


def generate_instance(gen: GenerationParams, seed: int) -> NetworkInstance:
    """Draw a random network that k-covers the area on the sampling grid.

    Positions are resampled (up to ``gen.max_attempts`` times) until the grid
    is k-covered; batteries and consumption rates are drawn once afterwards.
    """
    from kcharge.coverage import grid_points, min_coverage

    if gen.n < 1:
        raise InstanceError("n must be >= 1")
    params = gen.sim_params()
    rng = np.random.default_rng(seed)
    pts = grid_points(params.area_width, params.area_height, params.grid_spacing)
    # a subset of the fine grid; rejects most draws cheaply
    coarse = grid_points(params.area_width, params.area_height, params.grid_spacing * 5)
    coarse = coarse[np.isin(coarse[:, 0], pts[:, 0]) & np.isin(coarse[:, 1], pts[:, 1])]
    for _ in range(gen.max_attempts):
        xy = rng.uniform((0.0, 0.0), (params.area_width, params.area_height), size=(gen.n, 2))
        if min_coverage(coarse, xy, params.sensing_range) < gen.k:
            continue
        if min_coverage(pts, xy, params.sensing_range) >= gen.k:
            break
    else:
        raise CoverageUnachievableError(
            f"{gen.n} sensors failed to {gen.k}-cover the area in {gen.max_attempts} attempts")

    lo = gen.residual_min_fraction
    # uniform on (lo, 1]
    frac = 1.0 - rng.random(gen.n) * (1.0 - lo)
    beta = rng.uniform(gen.beta_range[0], gen.beta_range[1], size=gen.n)
    sensors = [
        SensorNode(i, (float(xy[i, 0]), float(xy[i, 1])), float(frac[i] * params.battery_capacity), float(beta[i]))
        for i in range(gen.n)
    ]
    return NetworkInstance(params, sensors, derive_requests(sensors, params), seed)


def make_instance(params: SimParams, sensors, seed: Optional[int] = None) -> NetworkInstance:
    """Build an instance from hand-placed sensors, deriving the requests."""
    sensors = list(sensors)
    return NetworkInstance(params, sensors, derive_requests(sensors, params), seed)


# -- files -----------------------------------------------------------------

def instance_to_dict(inst: NetworkInstance) -> dict:
    params = asdict(inst.params)
    params["depot"] = list(inst.params.depot)
    return {
        "schema_version": SCHEMA_VERSION,
        "params": params,
        "sensors": [
            {"id": s.id, "x": s.position[0], "y": s.position[1], "residual_j": s.residual,
             "beta_w": s.consumption_rate}
            for s in inst.sensors
        ],
        "requests": [{"sensor_id": r.sensor_id, "deadline_s": r.deadline} for r in inst.requests],
        "seed": inst.seed,
    }


def instance_from_dict(doc: dict) -> NetworkInstance:
    if not isinstance(doc, dict):
        raise MalformedFileError("instance document must be a JSON object")
    missing = [k for k in ("schema_version", "params", "sensors", "requests") if k not in doc]
    if missing:
        raise MalformedFileError(f"instance file lacks field(s): {', '.join(missing)}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported schema {doc['schema_version']!r}, expected {SCHEMA_VERSION!r}")
    try:
        p = dict(doc["params"])
        p["depot"] = tuple(p["depot"])
        params = SimParams(**p)
        sensors = [SensorNode(int(s["id"]), (float(s["x"]), float(s["y"])), float(s["residual_j"]),
                              float(s["beta_w"])) for s in doc["sensors"]]
        requests = [ChargingRequest(int(r["sensor_id"]), float(r["deadline_s"])) for r in doc["requests"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InstanceError):
            raise
        raise MalformedFileError(f"bad instance field: {exc}") from exc
    inst = NetworkInstance(params, sensors, requests, doc.get("seed"))
    for r in inst.requests:
        if r.deadline != inst.deadline(r.sensor_id):
            raise InstanceError(f"request deadline for sensor {r.sensor_id} disagrees with residual/beta")
    return inst


def dumps_instance(inst: NetworkInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


def save_instance(inst: NetworkInstance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def load_instance(path) -> NetworkInstance:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(doc)
