"""Catalog of context mechanisms and value-mechanism operators.

Everything here follows three loosely-coupled protocols used across the
package (all optional except the plain call):

* scalar call — ``phi(parent_contexts, u)`` for context mechanisms,
  ``gamma(beta, parent_set, u) -> handle`` then ``handle(parent_values, u)``
  for value mechanisms;
* ``pmf(...)`` — exact conditional laws for finite mechanisms, consumed by
  the enumeration oracle;
* ``batch(...)`` / ``batch_eval(...)`` — vectorized forms over replicate
  arrays, bit-identical to the scalar call row by row (same inverse-CDF
  convention, same slot consumption).

Finite sampling convention everywhere: with cumulative weights ``cum`` over
the label order, the sampled index is ``searchsorted(cum, u, side="right")``
clipped to the last label.
"""

from __future__ import annotations

from typing import Any, Callable, Sequence

import numpy as np

from .core import MechanismError


def _pick(labels: Sequence, probs, u: float):
    cum = np.cumsum(np.asarray(probs, dtype=float))
    if not np.isclose(cum[-1], 1.0, atol=1e-9):
        raise MechanismError(f"pmf sums to {cum[-1]}, not 1")
    idx = int(np.searchsorted(cum, u, side="right"))
    return labels[min(idx, len(labels) - 1)]


def _pick_batch(labels_arr: np.ndarray, prob_matrix: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(prob_matrix, axis=1)
    idx = (u[:, None] >= cum).sum(axis=1)
    return labels_arr[np.minimum(idx, len(labels_arr) - 1)]


# ---------------------------------------------------------------------------
# Context mechanisms


class ConstantContext:
    """Degenerate context: always the same label/value."""

    supports_batch = True

    def __init__(self, value):
        self.value = value

    def __call__(self, parent_ctx, u):
        return self.value

    def batch(self, parent_ctx, parent_mask, u):
        return np.full(len(u), self.value)

    def pmf(self, parent_ctx):
        return {self.value: 1.0}


class FiniteContext:
    """Finite-label context drawn from a pmf over the declared labels.

    ``pmf_fn(parent_contexts) -> probs`` aligned with ``labels``; parents
    absent from the realized set simply do not appear in the dict.  An
    optional ``pmf_batch(ctx_arrays, mask_arrays, count) -> (count, k)``
    enables the vectorized path.
    """

    def __init__(self, labels: Sequence, pmf_fn: Callable, pmf_batch: Callable | None = None):
        self.labels = list(labels)
        self.pmf_fn = pmf_fn
        self.pmf_batch = pmf_batch
        self._labels_arr = np.asarray(self.labels)

    @property
    def supports_batch(self) -> bool:
        return self.pmf_batch is not None

    def __call__(self, parent_ctx, u):
        return _pick(self.labels, self.pmf_fn(parent_ctx), u)

    def batch(self, parent_ctx, parent_mask, u):
        probs = np.asarray(self.pmf_batch(parent_ctx, parent_mask, len(u)), dtype=float)
        return _pick_batch(self._labels_arr, probs, u)

    def pmf(self, parent_ctx) -> dict:
        probs = np.asarray(self.pmf_fn(parent_ctx), dtype=float)
        return {lab: float(p) for lab, p in zip(self.labels, probs)}

    @staticmethod
    def prior(labels: Sequence, probs: Sequence) -> "FiniteContext":
        probs = tuple(float(p) for p in probs)

        def pmf_batch(ctx, mask, count):
            return np.tile(probs, (count, 1))

        return FiniteContext(labels, lambda ctx: probs, pmf_batch)


class IntervalContext:
    """Continuous context on a real interval.

    ``sample_fn(parent_contexts, u) -> float``; optional
    ``batch_fn(ctx_arrays, mask_arrays, u) -> array`` for vectorization.
    No pmf: continuous mechanisms are outside the enumeration oracle.
    """

    def __init__(self, sample_fn: Callable, batch_fn: Callable | None = None):
        self.sample_fn = sample_fn
        self.batch_fn = batch_fn

    @property
    def supports_batch(self) -> bool:
        return self.batch_fn is not None

    def __call__(self, parent_ctx, u):
        return float(self.sample_fn(parent_ctx, u))

    def batch(self, parent_ctx, parent_mask, u):
        return np.asarray(self.batch_fn(parent_ctx, parent_mask, u), dtype=float)

    @staticmethod
    def uniform(lo: float, hi: float) -> "IntervalContext":
        return IntervalContext(
            lambda ctx, u: lo + (hi - lo) * u,
            lambda ctx, mask, u: lo + (hi - lo) * u,
        )


# ---------------------------------------------------------------------------
# Mechanism handles (Phase-II objects produced by a gamma operator)


class FiniteValueHandle:
    """Mechanism over a finite value set: pmf conditioned on parent values.

    ``probs_fn(parent_values) -> probs`` aligned with ``labels``.  The handle
    accepts exactly the parents it was built for.
    """

    def __init__(self, labels: Sequence, probs_fn: Callable, parents: frozenset,
                 probs_batch: Callable | None = None, tag: Any = None):
        self.labels = list(labels)
        self.probs_fn = probs_fn
        self.probs_batch = probs_batch
        self.parents = frozenset(parents)
        self.tag = tag
        self._labels_arr = np.asarray(self.labels)

    def _check(self, parent_values):
        if set(parent_values) != self.parents:
            raise MechanismError(
                f"handle built for parents {sorted(self.parents)} got values for "
                f"{sorted(parent_values)}")

    def __call__(self, parent_values: dict, u):
        self._check(parent_values)
        return _pick(self.labels, self.probs_fn(parent_values), u)

    @property
    def supports_batch(self) -> bool:
        return self.probs_batch is not None

    def batch(self, parent_values: dict, u: np.ndarray) -> np.ndarray:
        probs = np.asarray(self.probs_batch(parent_values, len(u)), dtype=float)
        return _pick_batch(self._labels_arr, probs, u)

    def pmf(self, parent_values: dict) -> dict:
        self._check(parent_values)
        probs = np.asarray(self.probs_fn(parent_values), dtype=float)
        return {lab: float(p) for lab, p in zip(self.labels, probs)}


class DeterministicHandle:
    """Noise-free mechanism: value = fn(parent_values)."""

    def __init__(self, fn: Callable, parents: frozenset,
                 batch_fn: Callable | None = None, tag: Any = None):
        self.fn = fn
        self.batch_fn = batch_fn
        self.parents = frozenset(parents)
        self.tag = tag

    def __call__(self, parent_values: dict, u):
        if set(parent_values) != self.parents:
            raise MechanismError(
                f"handle built for parents {sorted(self.parents)} got values for "
                f"{sorted(parent_values)}")
        return self.fn(parent_values)

    @property
    def supports_batch(self) -> bool:
        return self.batch_fn is not None

    def batch(self, parent_values: dict, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.batch_fn(parent_values, len(u)))

    def pmf(self, parent_values: dict) -> dict:
        return {self(parent_values, 0.0): 1.0}


# ---------------------------------------------------------------------------
# Gamma operators


class FunctionalGamma:
    """Wrap a plain builder (beta, parent_set, u) -> handle."""

    supports_batch = False
    message_capable = False

    def __init__(self, build: Callable):
        self.build = build

    def __call__(self, beta, parents: frozenset, u):
        return self.build(beta, parents, u)


class TableGamma:
    """Deterministic operator over finite tables.

    ``table(beta, parent_set) -> (labels, probs_fn)`` is resolved once per
    world; the mechanism draw consumes no randomness (the operator is a
    deterministic function of context and parent set).
    """

    supports_batch = False
    message_capable = False

    def __init__(self, table: Callable):
        self.table = table

    def __call__(self, beta, parents: frozenset, u):
        labels, probs_fn, probs_batch = self.table(beta, parents)
        return FiniteValueHandle(labels, probs_fn, parents,
                                 probs_batch=probs_batch, tag=(beta, parents))
