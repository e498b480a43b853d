"""SECODA: iterative constellation-frequency anomaly scoring.

Each iteration discretizes the working cases at arity ``b``, counts how many
working cases share each case's constellation (its tuple of categorical
values and bin indices), and folds that count into the case's average anomaly
score. Lower scores are more anomalous; a score can be read as the average
number of cases similar to the case.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import IO, NamedTuple

import numpy as np

from .data_model import MISSING, Dataset, min_ranks
from .discretizer import DiscretizedView, RangePolicy, discretize

# Iterations that use the fine s/b steps; afterwards steps grow.
FINE_STEP_ITERATIONS = 10
_KEY_SPAN_LIMIT = 2**62


class ConvergenceError(RuntimeError):
    """``max_iterations`` reached without convergence; ``trace`` holds the run."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class DetectionConfig:
    anomaly_fraction: float = 0.003
    prune_quantile: float = 0.95
    prune_start_iteration: int = 11
    pruning_enabled: bool = True
    accelerated_stepping: bool = True
    weighted_scores: bool = True
    range_policy: RangePolicy = RangePolicy.WORKING
    max_iterations: int = 1000
    initial_b: int = 2
    initial_s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "range_policy", RangePolicy(self.range_policy))
        if not 0 < self.anomaly_fraction < 1:
            raise ValueError("anomaly_fraction must lie in (0, 1)")
        if not 0 < self.prune_quantile <= 1:
            raise ValueError("prune_quantile must lie in (0, 1]")
        if self.initial_b < 2:
            raise ValueError("initial_b must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @classmethod
    def variant(cls, name: str, **overrides) -> DetectionConfig:
        """Named variants: final, pruneless, stepless, unweighted."""
        flags = {
            "final": {},
            "pruneless": {"pruning_enabled": False},
            "stepless": {"accelerated_stepping": False},
            "unweighted": {"weighted_scores": False},
        }
        if name not in flags:
            raise ValueError(f"unknown variant {name!r}; expected one of {sorted(flags)}")
        return cls(**{**flags[name], **overrides})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["range_policy"] = self.range_policy.value
        return d


@dataclass(frozen=True)
class IterationRecord:
    i: int
    b: int
    s: float
    working: int
    pruned: int
    below_s: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class DetectionResult:
    scores: np.ndarray
    iterations_run: int
    trace: list[IterationRecord] = field(default_factory=list)
    config: DetectionConfig | None = None

    @property
    def ranks(self) -> np.ndarray:
        return min_ranks(self.scores)

    def top(self, k: int) -> list[tuple[int, float, int]]:
        """``(case_id, aas, rank)`` for the ``k`` most anomalous cases."""
        order = np.argsort(self.scores, kind="stable")[:k]
        ranks = self.ranks
        return [(int(g), float(self.scores[g]), int(ranks[g])) for g in order]

    def write_trace(self, fh: IO[str]) -> None:
        for rec in self.trace:
            fh.write(rec.to_json() + "\n")


# ------------------------------------------------------------ constellations


def encode_constellation(tokens: Sequence) -> tuple:
    """Injective key for an ordered token tuple.

    Each token is tagged with its type, so text, bin indices and missing never
    collide and no separator escaping is needed.
    """
    key = []
    for t in tokens:
        if t is MISSING:
            key.append(("m",))
        elif isinstance(t, str):
            key.append(("c", t))
        elif isinstance(t, (int, np.integer)) and not isinstance(t, bool):
            key.append(("b", int(t)))
        else:
            raise TypeError(f"unsupported token {t!r}")
    return tuple(key)


def constellation_keys(view: DiscretizedView) -> tuple[np.ndarray, int]:
    """Integer key per case and the key span; equal keys iff equal token tuples."""
    m = len(view)
    key = np.zeros(m, dtype=np.int64)
    span = 1
    for codes, radix in zip(view.codes, view.radix):
        if span * radix > _KEY_SPAN_LIMIT:
            _, key = np.unique(key, return_inverse=True)
            key = key.astype(np.int64)
            span = int(key.max()) + 1
        key = key * radix + codes
        span *= radix
    return key, span


def _dense(span: int, m: int) -> bool:
    return span <= 4 * m + (1 << 20)


def frequencies_from_keys(keys: np.ndarray, span: int | None = None, workers: int = 1) -> np.ndarray:
    """Per-case count of cases sharing the same key.

    Small key spans are counted with a direct table, others by sorting. With
    ``workers > 1`` contiguous partitions are counted separately and merged;
    integer counts make the merged result identical to the serial one.
    """
    keys = np.asarray(keys, dtype=np.int64)
    m = len(keys)
    if span is None:
        span = int(keys.max()) + 1 if m else 0
    parts = np.array_split(keys, workers) if workers > 1 and m >= 2 * workers else [keys]
    if _dense(span, m):
        count = lambda part: np.bincount(part, minlength=span)  # noqa: E731
        if len(parts) == 1:
            return count(keys)[keys]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            totals = sum(ex.map(count, parts))
        return totals[keys]
    if len(parts) == 1:
        _, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        return counts[inv]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        partial = list(ex.map(lambda part: np.unique(part, return_counts=True), parts))
    all_keys = np.concatenate([u for u, _ in partial])
    all_counts = np.concatenate([c for _, c in partial])
    uniq, inv = np.unique(all_keys, return_inverse=True)
    totals = np.bincount(inv, weights=all_counts, minlength=len(uniq)).astype(np.int64)
    return totals[np.searchsorted(uniq, keys)]


def constellation_frequencies(view: DiscretizedView, workers: int = 1) -> np.ndarray:
    if len(view) == 0:
        raise ValueError("empty view")
    keys, span = constellation_keys(view)
    return frequencies_from_keys(keys, span, workers)


# ------------------------------------------------------------------ scoring


def update_scores(prev_aas, cf, weighted: bool = True, iteration: int | None = None):
    """Fold this iteration's frequencies into the average anomaly scores.

    Weighted: the new frequency counts as much as all earlier iterations
    together. Unweighted: plain running mean, which needs the 1-based
    ``iteration`` number of ``cf``.
    """
    cf = np.asarray(cf, dtype=np.float64)
    if prev_aas is None:
        return cf.copy()
    prev = np.asarray(prev_aas, dtype=np.float64)
    if prev.shape != cf.shape:
        raise ValueError("score and frequency vectors differ in length")
    if weighted:
        return (prev + cf) / 2
    if iteration is None or iteration < 2:
        raise ValueError("unweighted update needs the iteration number (>= 2)")
    return prev + (cf - prev) / iteration


def exponential_weights(i: int) -> np.ndarray:
    """Weight of each iteration's frequency in the weighted score after ``i`` iterations."""
    if i < 1:
        raise ValueError("i must be >= 1")
    if i == 1:
        return np.array([1.0])
    j = np.arange(1, i + 1)
    w = np.ldexp(1.0, -(i - j + 1))
    w[0] = math.ldexp(1.0, -(i - 1))
    return w


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def _next_step(i: int, s: Fraction, b: int, accelerated: bool) -> tuple[Fraction, int]:
    if i <= FINE_STEP_ITERATIONS:
        return s + Fraction(1, 10), b + 1
    s = s + 1
    if not accelerated:
        return s, b + 1
    return s, b + max(1, math.floor(s - 2))


def schedule_step(i: int, s: float, b: int, accelerated: bool = True) -> tuple[float, int]:
    """Stop point and arity for the iteration after iteration ``i``."""
    if i < 1:
        raise ValueError("i must be >= 1")
    s2, b2 = _next_step(i, _as_fraction(s), b, accelerated)
    return float(s2), b2


def _at_most(values: np.ndarray, s: Fraction) -> np.ndarray:
    """``values <= s`` with ``s`` compared exactly, not as its nearest double."""
    sf = float(s)
    mask = values <= sf
    if s.denominator != 1:
        tied = np.flatnonzero(values == sf)
        for t in tied:
            mask[t] = Fraction(float(values[t])) <= s
    return mask


def prune_threshold(aas: np.ndarray, quantile) -> float:
    """Empirical ``quantile`` of ``aas``: the order statistic at 0-based rank floor(q*m).

    Every case at or above it is frozen, so at least a ``1 - q`` share of
    the working set is frozen whenever pruning runs.
    """
    m = len(aas)
    k = min(math.floor(_as_fraction(quantile) * m), m - 1)
    return float(np.partition(aas, k)[k])


class PruneResult(NamedTuple):
    retained: np.ndarray  # ids
    frozen: np.ndarray  # ids
    frozen_scores: np.ndarray
    threshold: float
    guarded: bool


def prune(ids, aas, quantile=0.95) -> PruneResult:
    """Freeze working cases whose score is at or above the quantile value.

    Skipped entirely if fewer than two cases would remain.
    """
    ids = np.asarray(ids)
    aas = np.asarray(aas, dtype=np.float64)
    if ids.size == 0:
        raise ValueError("cannot prune an empty working set")
    thr = prune_threshold(aas, quantile)
    frozen = aas >= thr
    if ids.size - int(frozen.sum()) < 2:
        return PruneResult(ids, ids[:0], aas[:0], thr, True)
    return PruneResult(ids[~frozen], ids[frozen], aas[frozen], thr, False)


def check_convergence(working_aas, s, n0: int, fraction=0.003) -> bool:
    """True to continue: stop once more than ``fraction`` of the original cases score <= s."""
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    q = int(_at_most(np.asarray(working_aas, dtype=np.float64), _as_fraction(s)).sum())
    return not Fraction(q, n0) > _as_fraction(fraction)


# --------------------------------------------------------------- main loop


def detect(
    data: Dataset,
    config: DetectionConfig | None = None,
    *,
    workers: int = 1,
) -> DetectionResult:
    """Score every case of ``data``; returns one average anomaly score per case id."""
    config = config or DetectionConfig()
    n = data.n
    if n < 1:
        raise ValueError("dataset is empty")
    if data.schema.p < 1:
        raise ValueError("dataset has no attributes")

    fraction = _as_fraction(config.anomaly_fraction)
    scores = np.full(n, np.nan)
    working = np.arange(n)
    aas = None
    i, b, s = 0, config.initial_b, _as_fraction(config.initial_s)
    trace: list[IterationRecord] = []

    while True:
        i += 1
        if i > config.max_iterations:
            raise ConvergenceError(
                f"no convergence after {config.max_iterations} iterations", trace
            )
        view = discretize(data, b, working, config.range_policy)
        cf = constellation_frequencies(view, workers)
        aas = update_scores(aas, cf, config.weighted_scores, i)
        b_used = b
        s, b = _next_step(i, s, b, config.accelerated_stepping)

        scores[working] = aas
        below = int(_at_most(aas, s).sum())
        pruned = 0
        if config.pruning_enabled and i >= config.prune_start_iteration:
            res = prune(np.arange(len(working)), aas, config.prune_quantile)
            if not res.guarded:
                keep = res.retained
                pruned = len(res.frozen)
                working = working[keep]
                aas = aas[keep]

        trace.append(IterationRecord(i, b_used, float(s), len(view), pruned, below))
        if Fraction(below, n) > fraction:
            break

    return DetectionResult(scores, i, trace, config)
