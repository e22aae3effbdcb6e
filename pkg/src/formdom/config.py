"""Central tolerance and run-parameter defaults.

Every module reads its default thresholds from :data:`DEFAULTS`; the CLI builds
an overridden copy with :meth:`Tolerances.replace`.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_T_GRID: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0)
DENSE_LIMIT = 2000
KRYLOV_MAX_DIM = 60


@dataclass(frozen=True)
class Tolerances:
    unitarity: float = 1e-12
    unitarity_repair: float = 1e-8
    hermitian: float = 1e-12
    endomorphism_psd: float = 1e-12
    psd: float = 1e-10
    form: float = 1e-10
    positivity: float = 1e-12
    domination: float = 1e-10
    sgn_lemma: float = 1e-12
    intrinsic: float = 1e-12
    krylov: float = 1e-8
    resolvent: float = 1e-10
    spectral_gap: float = 1e-10

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"tolerance {f.name} must be >= 0")

    def replace(self, **overrides) -> "Tolerances":
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **overrides)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULTS = Tolerances()


def thread_cap() -> int:
    """Worker count from ``FORMDOM_THREADS`` (default 1, i.e. serial)."""
    raw = os.environ.get("FORMDOM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map ``fn`` over ``items``, possibly in threads; result order is input order."""
    items = list(items)
    workers = min(thread_cap(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
