"""Per-iteration optimization log and its CSV form."""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

CSV_COLUMNS = ["iteration", "j_model", "j_oracle", "grad_norm_or_sigma", "evals", "wallclock_ms", "best_j"]


@dataclass
class IterationRow:
    iteration: int
    phi: np.ndarray
    j_model: Optional[float]
    j_oracle: Optional[float]
    grad_norm_or_sigma: float
    evals: int
    wallclock_ms: float
    best_j: float


@dataclass
class OptRunRecord:
    optimizer: str
    simulator: str
    rows: list[IterationRow] = field(default_factory=list)
    final_phi: Optional[np.ndarray] = None

    @property
    def total_evals(self) -> int:
        return sum(r.evals for r in self.rows)

    @property
    def best_so_far(self) -> list[float]:
        return [r.best_j for r in self.rows]

    def best_j(self) -> float:
        return self.rows[-1].best_j if self.rows else -math.inf

    def append(self, row: IterationRow) -> None:
        self.rows.append(row)

    def write_csv(self, path: Union[str, Path], record_wallclock: bool = True) -> None:
        """
        Write the log with a header row; floats use repr so values survive a round trip.

        :param path: destination file
        :param record_wallclock: write 0 instead of timings so reruns are byte-identical
        """
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([
                    r.iteration,
                    _fmt(r.j_model),
                    _fmt(r.j_oracle),
                    _fmt(r.grad_norm_or_sigma),
                    r.evals,
                    _fmt(r.wallclock_ms if record_wallclock else 0.0),
                    _fmt(r.best_j),
                ])

    def write_phi_history(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            width = self.rows[0].phi.size if self.rows else 0
            writer.writerow(["iteration"] + [f"phi_{i}" for i in range(width)])
            for r in self.rows:
                writer.writerow([r.iteration] + [repr(float(v)) for v in r.phi])


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def read_record_csv(path: Union[str, Path]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
