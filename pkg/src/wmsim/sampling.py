"""Monte Carlo plumbing shared by the quantum and classical simulators.

Random streams are counter-based (Philox) and keyed by ``(seed, chunk, step)``.
Samples are processed in fixed-size chunks, so the numbers drawn for a given
sample never depend on how many workers are used.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

CHUNK_SIZE = 1 << 16


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream labelled by `key` under `seed`."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def chunk_bounds(n: int, chunk_size: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]


def map_chunks(fn: Callable[[int, int, int], np.ndarray], n: int, workers: int = 1,
               chunk_size: int = CHUNK_SIZE) -> np.ndarray:
    """Run ``fn(chunk_index, lo, hi)`` over all chunks and stack results in order."""
    bounds = chunk_bounds(n, chunk_size)
    jobs = [(i, lo, hi) for i, (lo, hi) in enumerate(bounds)]
    if workers <= 1 or len(jobs) == 1:
        parts = [fn(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda job: fn(*job), jobs))
    return np.concatenate(parts, axis=0)


@dataclass
class SampleBatch:
    """Detector readings of a sequence of measurements, in a-units.

    ``noise_var`` is the variance of the additive Gaussian detector noise on
    each reading (``1/g**2`` for the quantum Kraus detector); a scalar or one
    value per step.
    """

    outcomes: np.ndarray
    g: float
    seed: int
    noise_var: float | np.ndarray = 0.0

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=float)
        if self.outcomes.ndim != 2:
            raise ValueError("outcomes must be a (n_samples, n_steps) array")

    @property
    def n_samples(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_steps(self) -> int:
        return self.outcomes.shape[1]


@dataclass
class MomentTable:
    """Estimated mixed moments keyed by sorted step-index tuples, e.g. ``(0, 2)``
    for <a_0 a_2> or ``(1, 1)`` for <a_1^2>."""

    values: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    n_samples: int = 0

    def __getitem__(self, key):
        return self.values[tuple(sorted(key))]

    def keys(self):
        return self.values.keys()

    def error(self, key) -> float:
        return self.stderr[tuple(sorted(key))]


def moment_keys(n_steps: int, max_order: int = 3) -> list[tuple[int, ...]]:
    keys = []
    for order in range(1, max_order + 1):
        keys.extend(itertools.combinations_with_replacement(range(n_steps), order))
    return keys


def _deconvolved_terms(q: np.ndarray, key: tuple[int, ...], var: np.ndarray) -> np.ndarray:
    """Per-sample unbiased estimator of <a_key> when q_k = a_k + independent N(0, var_k)."""
    counts = {k: key.count(k) for k in sorted(set(key))}
    out = np.ones(q.shape[0])
    for k, c in counts.items():
        col = q[:, k]
        v = var[k]
        if c == 1:
            out = out * col
        elif c == 2:
            out = out * (col * col - v)
        elif c == 3:
            out = out * (col ** 3 - 3.0 * v * col)
        else:
            raise ValueError("only moments up to order 3 are supported")
    return out


def gaussian_deconvolved_moments(outcomes: np.ndarray, noise_var,
                                 keys: Sequence[tuple[int, ...]] | None = None) -> MomentTable:
    """Mixed moments (order <= 3) of the signal after removing additive,
    independent, zero-mean Gaussian noise of variance `noise_var` per step.

    Products of distinct steps are unchanged; a repeated index picks up the
    Hermite-type correction (q^2 - v, q^3 - 3 v q), so third cumulants are
    left untouched.
    """
    q = np.asarray(outcomes, dtype=float)
    if q.ndim != 2 or q.shape[0] < 2:
        raise ValueError("need at least 2 samples to estimate moments")
    n = q.shape[0]
    var = np.broadcast_to(np.asarray(noise_var, dtype=float), (q.shape[1],))
    table = MomentTable(n_samples=n)
    for key in keys if keys is not None else moment_keys(q.shape[1]):
        key = tuple(sorted(key))
        terms = _deconvolved_terms(q, key, var)
        table.values[key] = float(np.mean(terms))
        table.stderr[key] = float(np.std(terms, ddof=1) / np.sqrt(n))
    return table
