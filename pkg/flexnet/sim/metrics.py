"""Sampled time series and end-of-run statistics of a simulation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


@dataclass
class MetricsSeries:
    """Samples taken every ``sample_every`` slots plus the final slot.

    ``nonempty_fraction`` is the running fraction of slots that started
    with every queue nonempty. Tail statistics cover slots from
    ``tail_start`` to the end of the run, and ``tail_min_nonempty_fraction``
    is the smallest running fraction over every tail slot.
    """

    sample_every: int
    queue_labels: list[str]
    allocation_labels: list[str]
    horizon: int
    tail_start: int
    slots: list[int] = field(default_factory=list)
    queue_lengths: list[np.ndarray] = field(default_factory=list)
    allocation: list[np.ndarray] = field(default_factory=list)
    departures: list[np.ndarray] = field(default_factory=list)
    nonempty_fraction: list[float] = field(default_factory=list)
    all_nonempty_slots: int = 0
    tail_queue_sum: np.ndarray | None = None
    tail_slots: int = 0
    tail_min_nonempty_fraction: float = np.inf

    def record_slot(self, slot: int, lengths: np.ndarray, all_nonempty: bool) -> None:
        """Accumulate the start-of-slot state of slot ``slot`` (0-based)."""
        if all_nonempty:
            self.all_nonempty_slots += 1
        if slot >= self.tail_start:
            if self.tail_queue_sum is None:
                self.tail_queue_sum = np.zeros(len(lengths))
            self.tail_queue_sum += lengths
            self.tail_slots += 1
            fraction = self.all_nonempty_slots / (slot + 1)
            self.tail_min_nonempty_fraction = min(self.tail_min_nonempty_fraction, fraction)

    def sample(self, slots_run: int, lengths: np.ndarray, allocation: np.ndarray, departures: np.ndarray) -> None:
        fraction = self.all_nonempty_slots / slots_run
        self.slots.append(slots_run)
        self.queue_lengths.append(np.array(lengths))
        self.allocation.append(np.array(allocation, dtype=float).ravel())
        self.departures.append(np.array(departures))
        self.nonempty_fraction.append(fraction)

    @property
    def final_slot(self) -> int:
        return self.slots[-1] if self.slots else 0

    @property
    def q_over_n(self) -> list[np.ndarray]:
        return [q / n for q, n in zip(self.queue_lengths, self.slots)]

    @property
    def mean_queue_tail(self) -> np.ndarray:
        if not self.tail_slots:
            return np.zeros(len(self.queue_labels))
        return self.tail_queue_sum / self.tail_slots

    def final_allocation(self) -> np.ndarray:
        return self.allocation[-1]

    def max_q_over_n(self) -> float:
        if not self.slots:
            return 0.0
        return float(np.max(self.queue_lengths[-1]) / self.slots[-1])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"slot": self.slots})
        lengths = np.array(self.queue_lengths).reshape(len(self.slots), len(self.queue_labels))
        for i, label in enumerate(self.queue_labels):
            frame[f"q_{label}"] = lengths[:, i]
        allocation = np.array(self.allocation).reshape(len(self.slots), len(self.allocation_labels))
        for i, label in enumerate(self.allocation_labels):
            frame[f"p_{label}"] = allocation[:, i]
        frame["nonempty_fraction"] = self.nonempty_fraction
        return frame

    def summary(self) -> dict:
        final = self.final_allocation() if self.allocation else np.zeros(len(self.allocation_labels))
        tail_min = self.tail_min_nonempty_fraction
        return {
            "slots": self.final_slot,
            "final_allocation": dict(zip(self.allocation_labels, map(float, final))),
            "final_queue_lengths": dict(
                zip(self.queue_labels, map(int, self.queue_lengths[-1] if self.queue_lengths else []))
            ),
            "max_q_over_n": self.max_q_over_n(),
            "mean_queue_tail": dict(zip(self.queue_labels, map(float, self.mean_queue_tail))),
            "nonempty_fraction": self.nonempty_fraction[-1] if self.nonempty_fraction else 0.0,
            "tail_min_nonempty_fraction": None if np.isinf(tail_min) else float(tail_min),
        }
