"""Global-mode search over high-dimensional binary output sequences.

Per time step the number of candidate frames is exponential in the
number of output units, so the beam expands each node through a k-best
oracle: exact lazy enumeration when the per-step distribution
factorises (zero estimator weights), otherwise a stochastic pool of
ancestral samples scored by their exact conditional likelihood.
"""

from __future__ import annotations

import heapq
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from .estimators import EstimatorParams, nade_sample_batch, sigmoid
from .transducer import DimensionError, TransducerParams, _advance, _step_estimator

PROB_CLAMP = 1e-12


@dataclass(eq=False)
class RankedConfig:
    """One candidate binary configuration with its log-probability."""

    logp: float
    bits: np.ndarray


@dataclass
class EnumerationStats:
    """Queue-cost counters filled in by enumerate_independent."""

    insertions: int = 0
    peak_queue: int = 0


@dataclass
class BeamConfig:
    width: int = 1  # beam width: surviving nodes per time step
    branch: int = 1  # candidate configurations expanded per node
    samples: int | None = None  # stochastic pool size, default 10 * branch
    restart_period: int | None = None  # commit to the best path every M steps
    prefix_lag: int | None = None  # merge nodes identical over the last L frames
    seed: int = 0

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be at least 1")
        if self.branch < 1:
            raise ValueError("branch must be at least 1")
        if self.samples is not None and self.samples < self.branch:
            raise ValueError("samples must be at least branch")
        if self.restart_period is not None and self.restart_period < 1:
            raise ValueError("restart_period must be at least 1")
        if self.prefix_lag is not None and self.prefix_lag < 1:
            raise ValueError("prefix_lag must be at least 1")

    @property
    def effective_samples(self) -> int:
        return self.samples if self.samples is not None else 10 * self.branch


def enumerate_independent(probs, limit: int | None = None, stats: EnumerationStats | None = None):
    """Lazily yield configurations of independent bits by decreasing
    log-probability.

    The most probable configuration takes each bit's majority choice;
    every other configuration is that one with some subset of bits
    flipped, paying |logit| per flip.  A min-priority queue over flip
    subsets (seeded with the single cheapest flip, growing each popped
    subset by "append next flip" and "replace last flip with next")
    visits every subset exactly once in order of total cost, with at
    most two insertions per yield.  Ties in total cost break toward the
    lexicographically smallest bit vector among the queued candidates.

    ``limit`` bounds the number of yields (None enumerates all 2**N);
    ``stats`` (if given) collects insertion counts and peak queue size.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probs must be a nonempty vector")
    if not np.isfinite(p).all() or np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probs must lie in [0, 1]")
    if np.any((p == 0.0) | (p == 1.0)):
        warnings.warn(
            "probabilities at exactly 0 or 1 clamped to the open interval",
            RuntimeWarning,
            stacklevel=2,
        )
        p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    if limit is not None and limit < 0:
        raise ValueError("limit must be nonnegative")
    return _enumerate(p, limit, stats)


def _enumerate(p: np.ndarray, limit: int | None, stats: EnumerationStats | None):
    if limit == 0:
        return
    n = p.size
    log_p = np.log(p)
    log_q = np.log1p(-p)
    base = (p >= 0.5).astype(float)
    best_logp = float(np.where(base == 1.0, log_p, log_q).sum())
    yield RankedConfig(best_logp, base.copy())
    count = 1
    if limit is not None and count >= limit:
        return

    flip_cost = np.abs(log_p - log_q)
    order = np.argsort(flip_cost, kind="stable")  # sorted position -> bit index
    cost = flip_cost[order]

    def flipped(bits: tuple[int, ...], pos: int) -> tuple[int, ...]:
        out = list(bits)
        j = order[pos]
        out[j] = 1 - out[j]
        return tuple(out)

    base_key = tuple(int(b) for b in base)
    heap: list[tuple[float, tuple[int, ...], tuple[int, ...]]] = []
    first = flipped(base_key, 0)
    heapq.heappush(heap, (float(cost[0]), first, (0,)))
    if stats is not None:
        stats.insertions += 1
        stats.peak_queue = max(stats.peak_queue, len(heap))
    while heap:
        penalty, key, subset = heapq.heappop(heap)
        yield RankedConfig(best_logp - penalty, np.asarray(key, dtype=float))
        count += 1
        if limit is not None and count >= limit:
            return
        last = subset[-1]
        if last + 1 < n:
            grown = flipped(key, last + 1)
            heapq.heappush(heap, (penalty + float(cost[last + 1]), grown, subset + (last + 1,)))
            shifted = flipped(grown, last)
            heapq.heappush(
                heap,
                (
                    penalty + float(cost[last + 1]) - float(cost[last]),
                    shifted,
                    subset[:-1] + (last + 1,),
                ),
            )
            if stats is not None:
                stats.insertions += 2
                stats.peak_queue = max(stats.peak_queue, len(heap))


def stochastic_search(
    est: EstimatorParams, k: int, num_samples: int, rng
) -> list[RankedConfig]:
    """Top-k unique configurations found by ancestral sampling.

    Draws ``num_samples`` samples, deduplicates, and ranks the unique
    configurations by their exact log-likelihood (ties toward the
    lexicographically smallest bit vector).  May return fewer than k
    items when the pool holds fewer unique configurations.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if num_samples < k:
        raise ValueError("num_samples must be at least k")
    bits, logp = nade_sample_batch(est, num_samples, rng)
    unique, first = np.unique(bits, axis=0, return_index=True)
    ranked = sorted(
        (RankedConfig(float(logp[i]), unique[row]) for row, i in enumerate(first)),
        key=lambda rc: (-rc.logp, tuple(rc.bits)),
    )
    return ranked[:k]


@dataclass(eq=False)
class BeamNode:
    """Partial output sequence with its cumulative log-probability."""

    logp: float
    hidden: np.ndarray
    prefix: tuple[tuple[int, ...], ...] = field(default_factory=tuple)


class _BoundedQueue:
    """Min-priority queue of fixed capacity keeping the best entries.

    Priority is (logp, lexicographically smallest prefix); once full,
    inserting evicts the current worst when the candidate beats it.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._heap: list[tuple[float, tuple[int, ...], int, tuple, object]] = []
        self._counter = 0

    @staticmethod
    def _anti_lex(prefix) -> tuple[int, ...]:
        # flipping bits reverses lexicographic order, so the heap's
        # minimum is the worst entry under (logp asc, prefix desc)
        return tuple(1 - b for frame in prefix for b in frame)

    def insert(self, logp: float, prefix, payload):
        entry = (logp, self._anti_lex(prefix), self._counter, prefix, payload)
        self._counter += 1
        if len(self._heap) < self.capacity:
            heapq.heappush(self._heap, entry)
        elif entry[:2] > self._heap[0][:2]:
            heapq.heappushpop(self._heap, entry)

    def best_first(self) -> list:
        ordered = sorted(self._heap, key=lambda e: (-e[0], e[3]))
        return [e[4] for e in ordered]


def _node_rng(seed: int, t: int, prefix) -> np.random.Generator:
    digest = zlib.crc32(bytes(b for frame in prefix for b in frame))
    entropy = [seed & 0xFFFFFFFFFFFFFFFF, t, digest]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def beam_search(
    params: TransducerParams, inputs, cfg: BeamConfig | None = None
) -> tuple[np.ndarray, float]:
    """Most probable output sequence found under a capacity-w beam.

    Every surviving node is expanded into up to cfg.branch candidate
    frames per step; all children compete for the cfg.width slots of a
    fresh bounded queue.  Width 1 with branch 1 is greedy decoding;
    width 2**(N T) with branch 2**N is exhaustive for factorised
    models.  Returns the best frame sequence and its cumulative
    log-probability (per-step terms summed along the search path).
    """
    cfg = cfg if cfg is not None else BeamConfig()
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DimensionError("inputs must be a (T, D) array with T >= 1")
    if x.shape[1] != params.num_inputs:
        raise DimensionError(
            f"inputs have D={x.shape[1]}, model expects {params.num_inputs}"
        )
    exact = params.independent_outputs
    num_samples = cfg.effective_samples
    beam = [BeamNode(0.0, np.zeros(params.num_rec))]
    for t in range(x.shape[0]):
        pool: dict[tuple, tuple[float, BeamNode, np.ndarray]] = {}
        for node in beam:
            if exact:
                est_t = _step_estimator(params, node.hidden, x[t])
                p = np.clip(sigmoid(est_t.visible_bias), PROB_CLAMP, 1.0 - PROB_CLAMP)
                children = list(enumerate_independent(p, limit=cfg.branch))
            else:
                est_t = _step_estimator(params, node.hidden, x[t])
                rng = _node_rng(cfg.seed, t, node.prefix)
                children = stochastic_search(est_t, cfg.branch, num_samples, rng)
            for child in children:
                key = node.prefix + (tuple(int(b) for b in child.bits),)
                cand = (node.logp + child.logp, node, child.bits)
                held = pool.get(key)
                if held is None or cand[0] > held[0]:
                    pool[key] = cand
        entries = list(pool.items())
        if cfg.prefix_lag is not None:
            # nodes identical over the last prefix_lag frames collapse to
            # the one with the best logp (ties: lexicographically
            # smallest full prefix)
            merged: dict[tuple, tuple[tuple, tuple[float, BeamNode, np.ndarray]]] = {}
            for key, cand in entries:
                suffix = key[-cfg.prefix_lag :]
                held = merged.get(suffix)
                if (
                    held is None
                    or cand[0] > held[1][0]
                    or (cand[0] == held[1][0] and key < held[0])
                ):
                    merged[suffix] = (key, cand)
            entries = list(merged.values())
        queue = _BoundedQueue(cfg.width)
        for key, (logp, parent, bits) in entries:
            queue.insert(logp, key, (key, logp, parent, bits))
        survivors = queue.best_first()
        if cfg.restart_period is not None and (t + 1) % cfg.restart_period == 0:
            survivors = survivors[:1]
        beam = [
            BeamNode(logp, _advance(params, parent.hidden, x[t], np.asarray(bits, dtype=float)), key)
            for key, logp, parent, bits in survivors
        ]
    best = beam[0]
    return np.asarray(best.prefix, dtype=float), best.logp


def greedy_decode(params: TransducerParams, inputs, seed: int = 0) -> np.ndarray:
    """Most probable single path: beam search with width and branch 1."""
    sequence, _ = beam_search(params, inputs, BeamConfig(width=1, branch=1, seed=seed))
    return sequence
