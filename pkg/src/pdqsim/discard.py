"""Minimal-discard deadline scheduling on one bottleneck.

Given jobs with processing times and deadlines released together, find a
maximum-cardinality subset that can all finish on time under EDF and
discard the rest. Moore-Hodgson gives the optimum on a single machine; an
exhaustive search cross-checks it for small instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations


@dataclass(frozen=True)
class Job:
    job_id: str
    processing: float
    deadline: float


def edf_feasible(jobs: list[Job]) -> bool:
    t = 0.0
    for job in sorted(jobs, key=lambda j: (j.deadline, j.job_id)):
        t += job.processing
        if t > job.deadline + 1e-9:
            return False
    return True


def moore_hodgson(jobs: list[Job]) -> tuple[list[Job], list[Job]]:
    """Maximum on-time subset (EDF order) and the discarded jobs."""
    kept: list[Job] = []
    discarded: list[Job] = []
    t = 0.0
    for job in sorted(jobs, key=lambda j: (j.deadline, j.job_id)):
        kept.append(job)
        t += job.processing
        if t > job.deadline + 1e-9:
            longest = max(kept, key=lambda j: (j.processing, j.job_id))
            kept.remove(longest)
            discarded.append(longest)
            t -= longest.processing
    return kept, discarded


def optimal_deadline_discard(jobs: list[Job]) -> tuple[list[Job], dict[str, float]]:
    """Kept set plus EDF completion times for the kept jobs."""
    kept, _ = moore_hodgson(jobs)
    schedule: dict[str, float] = {}
    t = 0.0
    for job in sorted(kept, key=lambda j: (j.deadline, j.job_id)):
        t += job.processing
        schedule[job.job_id] = t
    return kept, schedule


def brute_force_max_ontime(jobs: list[Job], limit: int = 12) -> int:
    """Exhaustive maximum on-time cardinality; only for n <= limit."""
    if len(jobs) > limit:
        raise ValueError(f"brute force limited to {limit} jobs")
    for size in range(len(jobs), -1, -1):
        for subset in combinations(jobs, size):
            if edf_feasible(list(subset)):
                return size
    return 0
