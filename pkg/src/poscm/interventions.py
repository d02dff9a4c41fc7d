"""Intervention variants, regimes, and structural-endogeneity diagnostics.

Four primitive intervention types:

* ``BetaNode(j, b)`` — hard override of node j's context at its own Phase-I
  slot; downstream edge formation and context propagation see the value.
* ``VNode(j, v)`` — hard override of node j's value in Phase II.
* ``BetaEdge(s, t, repl)`` / ``VEdge(j, i, repl)`` — replace a single
  message channel of the target's context / value mechanism; ``repl`` is a
  message function or a constant clamp.  A replacement on an edge that is
  absent in the realized world changes nothing (messages are gated).

A regime is a set of interventions applied together; at most one per target.
Conflicting interventions are rejected at construction since do-semantics
are defined per target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import core
from .core import InterventionError
from .stats import EmpiricalLaw, TwoSampleResult, fisher_binary_test, pattern_chi2_test


@dataclass(frozen=True)
class BetaNode:
    node: int
    value: Any

    @property
    def target(self):
        return ("beta", self.node)

    phase = 1


@dataclass(frozen=True)
class VNode:
    node: int
    value: Any

    @property
    def target(self):
        return ("v", self.node)

    phase = 2


@dataclass(frozen=True)
class BetaEdge:
    source: int
    target_node: int
    replacement: Any  # message callable or constant clamp

    @property
    def target(self):
        return ("beta_edge", self.source, self.target_node)

    phase = 1


@dataclass(frozen=True)
class VEdge:
    source: int
    target_node: int
    replacement: Any

    @property
    def target(self):
        return ("v_edge", self.source, self.target_node)

    phase = 2


class Regime:
    """An intervention set applied in one experiment."""

    def __init__(self, interventions=(), label: str = ""):
        self.interventions = tuple(interventions)
        self.label = label or " & ".join(_describe(iv) for iv in self.interventions) \
            or "observational"
        seen = set()
        self.beta_node: dict[int, Any] = {}
        self.v_node: dict[int, Any] = {}
        self.beta_edge: dict[tuple[int, int], Any] = {}
        self.v_edge: dict[tuple[int, int], Any] = {}
        for iv in self.interventions:
            if iv.target in seen:
                raise InterventionError(f"conflicting interventions on target {iv.target}")
            seen.add(iv.target)
            if isinstance(iv, BetaNode):
                self.beta_node[iv.node] = iv.value
            elif isinstance(iv, VNode):
                self.v_node[iv.node] = iv.value
            elif isinstance(iv, BetaEdge):
                self.beta_edge[(iv.source, iv.target_node)] = iv.replacement
            elif isinstance(iv, VEdge):
                self.v_edge[(iv.source, iv.target_node)] = iv.replacement
            else:
                raise InterventionError(f"unknown intervention {iv!r}")

    @property
    def is_value_level(self) -> bool:
        """True when every intervention binds in Phase II."""
        return not self.beta_node and not self.beta_edge

    def __repr__(self):
        return f"Regime({self.label!r})"


def _describe(iv) -> str:
    if isinstance(iv, BetaNode):
        return f"do(beta_{iv.node}={iv.value!r})"
    if isinstance(iv, VNode):
        return f"do(V_{iv.node}={iv.value!r})"
    if isinstance(iv, BetaEdge):
        return f"do(beta-edge {iv.source}->{iv.target_node})"
    return f"do(V-edge {iv.source}->{iv.target_node})"


observational = core.NULL_REGIME


# ---------------------------------------------------------------------------
# Supervising measures and intervention-induced structural change


@dataclass
class SupervisingMeasure:
    """Empirical law of one source's outgoing edge vector under a regime."""

    source: int
    targets: tuple
    law: EmpiricalLaw  # label kind over 0/1 row patterns
    regime_label: str

    def marginal(self, target: int) -> float:
        """Empirical edge frequency for one dyad."""
        slot = self.targets.index(target)
        total = sum(c for pat, c in self.law.counts.items() if pat[slot])
        return total / self.law.n


def supervising_measure(spec, regime, j: int, n: int, seed: int = 0) -> SupervisingMeasure:
    """Sample n worlds under the regime and collect node j's outgoing rows."""
    if n < 1:
        raise InterventionError("need n >= 1 samples")
    targets = tuple(t for t in spec.order if spec.tau[t] > spec.tau[j])
    rows = []
    from . import batch

    bw = batch.maybe_generate_batch(spec, regime, seed, n)
    if bw is not None:
        cols = [bw.adjacency[(j, t)].astype(int) for t in targets]
        mat = np.stack(cols, axis=1) if cols else np.zeros((n, 0), dtype=int)
        rows = [tuple(r) for r in mat]
    else:
        for world, _ in core.sample_worlds(spec, regime, None, seed, n):
            rows.append(tuple(world.adjacency[(j, t)] for t in targets))
    return SupervisingMeasure(j, targets, EmpiricalLaw.from_labels(rows),
                              getattr(regime, "label", "observational"))


@dataclass
class IiscResult:
    changed: bool
    statistic: float
    p_value: float
    per_dyad: dict
    joint: TwoSampleResult | None


def iisc_detect(mu_base: SupervisingMeasure, mu_int: SupervisingMeasure,
                alpha: float = 0.01, max_patterns_joint: int = 64) -> IiscResult:
    """Decide whether an intervention altered a supervising measure.

    Per-dyad exact tests (each marginal is Bernoulli) with a Bonferroni
    correction across dyads, plus a joint chi-square over whole row patterns
    when the pattern support is small.  ``changed`` is True when any
    corrected p-value falls below alpha.
    """
    if mu_base.source != mu_int.source or mu_base.targets != mu_int.targets:
        raise InterventionError("supervising measures cover different dyad sets")
    n1, n2 = mu_base.law.n, mu_int.law.n
    if min(n1, n2) < 30:
        raise InterventionError("need at least 30 samples per arm")

    targets = mu_base.targets
    per_dyad = {}
    worst_p, worst_stat = 1.0, 0.0
    m = max(len(targets), 1)
    for slot, t in enumerate(targets):
        k1 = sum(c for pat, c in mu_base.law.counts.items() if pat[slot])
        k2 = sum(c for pat, c in mu_int.law.counts.items() if pat[slot])
        res = fisher_binary_test(k1, n1, k2, n2)
        corrected = min(1.0, res.p_value * m)
        per_dyad[t] = TwoSampleResult(res.statistic, corrected, res.method)
        if corrected < worst_p:
            worst_p, worst_stat = corrected, res.statistic

    joint = None
    support = set(mu_base.law.counts) | set(mu_int.law.counts)
    if 1 < len(support) <= max_patterns_joint and targets:
        joint = pattern_chi2_test(mu_base.law, mu_int.law)

    changed = worst_p < alpha or (joint is not None and joint.p_value < alpha)
    if joint is not None and joint.p_value < worst_p:
        worst_p, worst_stat = joint.p_value, joint.statistic
    return IiscResult(changed=changed, statistic=worst_stat, p_value=worst_p,
                      per_dyad=per_dyad, joint=joint)
