"""Budgets and reports shared by every solver."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any

EXHAUSTIVE = "exhaustive"
FIRST_FEASIBLE = "first_feasible"
TIME_LIMITED = "time_limited"


@dataclass(frozen=True)
class SolveBudget:
    mode: str = EXHAUSTIVE
    seconds: float | None = None

    def __post_init__(self):
        if self.mode not in (EXHAUSTIVE, FIRST_FEASIBLE, TIME_LIMITED):
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if self.mode == TIME_LIMITED and not (self.seconds is not None and self.seconds > 0):
            raise ValueError("time_limited budget needs seconds > 0")

    @classmethod
    def parse(cls, text: str) -> "SolveBudget":
        """``exhaustive`` | ``first-feasible`` | ``time:<seconds>``."""
        text = text.strip()
        if text == EXHAUSTIVE:
            return cls(EXHAUSTIVE)
        if text in ("first-feasible", FIRST_FEASIBLE):
            return cls(FIRST_FEASIBLE)
        if text.startswith("time:"):
            try:
                seconds = float(text[5:])
            except ValueError:
                raise ValueError(f"bad time budget {text!r}") from None
            return cls(TIME_LIMITED, seconds)
        raise ValueError(f"unknown mode {text!r}; use exhaustive, first-feasible or time:<s>")

    def __str__(self) -> str:
        if self.mode == TIME_LIMITED:
            return f"time:{self.seconds:g}"
        return "first-feasible" if self.mode == FIRST_FEASIBLE else EXHAUSTIVE

    @property
    def first_feasible(self) -> bool:
        return self.mode == FIRST_FEASIBLE

    def deadline(self) -> "Deadline":
        return Deadline(self.seconds if self.mode == TIME_LIMITED else None)


class Deadline:
    """Monotonic-clock deadline; ``None`` seconds never expires."""

    def __init__(self, seconds: float | None):
        self.start = time.monotonic()
        self.end = None if seconds is None else self.start + seconds

    def expired(self) -> bool:
        return self.end is not None and time.monotonic() >= self.end

    def elapsed(self) -> float:
        return time.monotonic() - self.start


@dataclass
class SolveReport:
    solver: str
    sample: dict | None
    energy: float
    feasible: bool
    wall_time: float
    iterations: int = 0
    seed: int | None = None
    proof_of_optimality: bool = False
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.sample is not None and not math.isnan(self.energy)

    def summary(self) -> str:
        energy = "NaN" if math.isnan(self.energy) else f"{self.energy:g}"
        return (f"solver={self.solver} energy={energy} feasible={self.feasible} "
                f"time={self.wall_time:.3f}s optimal={self.proof_of_optimality}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "solver": self.solver,
            "energy": None if math.isnan(self.energy) else self.energy,
            "feasible": self.feasible,
            "wall_time": self.wall_time,
            "iterations": self.iterations,
            "seed": self.seed,
            "proof_of_optimality": self.proof_of_optimality,
            "sample": None if self.sample is None
            else {str(k): int(v) for k, v in self.sample.items() if v},
            "extra": self.extra,
        }
