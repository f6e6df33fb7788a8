"""View selection along the capture trajectory."""
from __future__ import annotations

import numpy as np


def spread_views(pool: list[int], n: int, total: int, phase: float = 0.5) -> list[int]:
    """``n`` views from ``pool`` spread evenly over a closed trajectory of ``total`` views.

    The ideal positions are ``(i + phase) * total / n``; each takes the
    nearest unused pool view in cyclic index distance (ties to the lower
    index). Result is sorted.
    """
    if n > len(pool):
        raise ValueError(f"need {n} views but the pool has {len(pool)}")
    free = sorted(pool)
    out = []
    for i in range(n):
        ideal = (i + phase) * total / n
        dist = [min(abs(v - ideal), total - abs(v - ideal)) for v in free]
        out.append(free.pop(int(np.argmin(dist))))
    return sorted(out)


def window(pool: list[int], t: int, student: int, teacher: int, total: int, phases: int = 3) -> tuple[list, list]:
    """Student and teacher view sets for iteration ``t``.

    The student set is spread over the trajectory with a phase that cycles
    through ``phases`` positions; the teacher set is the student set plus
    the remaining pool views minus an evenly spaced group of dropped views
    whose start slides by one every ``phases`` iterations.
    """
    if teacher > len(pool):
        raise ValueError(f"teacher needs {teacher} views but the pool has {len(pool)}")
    k = t % phases
    stud = spread_views(pool, student, total, (k + 1) / (phases + 1))
    rest = [v for v in sorted(pool) if v not in stud]
    drop_n = len(pool) - teacher
    start = t // phases
    dropped = {rest[(start + round(j * len(rest) / drop_n)) % len(rest)] for j in range(drop_n)} if drop_n else set()
    teach = sorted(stud + [v for v in rest if v not in dropped])
    return stud, teach
