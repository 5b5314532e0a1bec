"""octask: a desk-scale asynchronous many-task runtime and benchmark app.

Pieces: a task pool with futures and continuations (`octask.runtime`),
parallel algorithm / sender pipelines on top of it (`octask.par`,
`octask.senders`), execution-space kernels (`octask.spaces`), a timestamp
counter (`octask.timebase`), a small global-address-space layer with TCP
and in-process parcelports (`octask.dist`), an adaptive-octree
hydro+gravity application (`octask.amr`) and the benchmark CLI
(`octask.bench`, `octask.cli`).
"""

__version__ = "0.1.0"

from .runtime import FutureHandle, TaskPool, YieldingMutex, run_with_workers

__all__ = [
    "FutureHandle",
    "TaskPool",
    "YieldingMutex",
    "run_with_workers",
    "__version__",
]
