from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from kcharge.coverage import verify_k_coverage
from kcharge.instance import NetworkInstance
from kcharge.kinematics import PathEvaluation, evaluate_path


class SolverBugError(RuntimeError):
    """A solver produced a tour that fails re-validation."""


@dataclass(frozen=True)
class Solution:
    order: tuple[int, ...]
    evaluation: PathEvaluation
    algorithm: str = ""
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def distance(self) -> float:
        return self.evaluation.travel_distance

    @property
    def energy_kj(self) -> float:
        return self.evaluation.travel_energy / 1000.0

    @property
    def feasible(self) -> bool:
        return self.evaluation.feasible

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "charge_times_s": list(self.evaluation.charge_times),
            "distance_m": self.distance,
            "energy_kj": self.energy_kj,
            "feasible": self.feasible,
        }


def make_solution(order: Sequence[int], inst: NetworkInstance, algorithm: str = "", **stats) -> Solution:
    return Solution(tuple(order), evaluate_path(order, inst), algorithm, stats)


def check_solution(sol: Solution, inst: NetworkInstance, grid_spacing: Optional[float] = None) -> bool:
    ev = evaluate_path(sol.order, inst)
    return ev.feasible and verify_k_coverage(inst, sol.order, grid_spacing)


def validated(sol: Optional[Solution], inst: NetworkInstance, grid_spacing: Optional[float] = None):
    """Pass ``sol`` through after re-checking deadlines and k-coverage."""
    if sol is not None and not check_solution(sol, inst, grid_spacing):
        raise SolverBugError(f"{sol.algorithm or 'solver'} returned an invalid tour {list(sol.order)}")
    return sol


def save_solution(sol: Solution, path) -> None:
    Path(path).write_text(json.dumps(sol.to_dict(), indent=2) + "\n")


def load_solution_order(path) -> list[int]:
    doc = json.loads(Path(path).read_text())
    if "order" not in doc:
        raise ValueError(f"{path}: solution file lacks 'order'")
    return [int(x) for x in doc["order"]]
