import statistics
import time
from contextlib import contextmanager
from typing import Dict, Iterable, List, NamedTuple

from pydantic import BaseModel


class SweepRow(BaseModel):
    """One training size of one seed's learning curve."""
    seed: int
    training_size: int
    selected_k: int
    gmm_accuracy: float
    baseline_accuracy: float
    gmm_ci: float
    baseline_ci: float


class SizeSummary(NamedTuple):
    training_size: int
    runs: int
    median_gmm: float
    spread_gmm: float  # max - min over seeds
    median_baseline: float
    runs_beating_baseline: int


def summarize(rows: Iterable[SweepRow]) -> List[SizeSummary]:
    """Per training size: median accuracies over seeds and how far apart the seeds landed."""
    by_size: Dict[int, List[SweepRow]] = {}
    for row in rows:
        by_size.setdefault(row.training_size, []).append(row)

    out = []
    for size, group in sorted(by_size.items()):
        gmm = [r.gmm_accuracy for r in group]
        out.append(SizeSummary(
            training_size=size,
            runs=len(group),
            median_gmm=statistics.median(gmm),
            spread_gmm=max(gmm) - min(gmm),
            median_baseline=statistics.median(r.baseline_accuracy for r in group),
            runs_beating_baseline=sum(1 for r in group if r.gmm_accuracy > r.baseline_accuracy)
        ))
    return out


@contextmanager
def timer(prefix, name, indent=0):
    start = time.monotonic()
    print(f"{' ' * indent}[{prefix}] started {name}")
    yield
    end = time.monotonic()
    print(f"{' ' * indent}[{prefix}] finished {name} in {end - start:.2f}s")
