"""Exact interventional laws for finite models by full enumeration.

Walks every Phase-I configuration (edge pattern, context assignment) with
its exact probability, then every value assignment through the mechanisms'
declared pmfs.  Serves as the independent oracle against which the Monte
Carlo paths are checked; it shares no code with the samplers (enumeration
multiplies declared conditional probabilities, sampling thresholds addressed
uniforms).

Requirements: finite context and value domains, context mechanisms and
aggregators exposing ``pmf``, a mechanism operator that is deterministic in
(context, parent set) — the u argument is ignored — and a product-form
structure kernel.  Interventions of all four primitive kinds are supported.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import core
from .core import PoscmError


def _phase1_configs(spec, regime):
    """Yield (adjacency dict, beta dict, probability) over all Phase-I atoms."""
    if spec.alpha.row_sampler is not None:
        raise PoscmError("enumeration requires the product-form structure kernel")
    order = spec.order
    configs = [({}, {}, 1.0)]
    for i in order:
        parents_pot = spec.potential_parents(i)
        step = []
        for adjacency, beta, prob in configs:
            for bits in itertools.product((0, 1), repeat=len(parents_pot)):
                p_edges = prob
                for j, a in zip(parents_pot, bits):
                    pj = spec.alpha.prob(j, i, beta[j])
                    p_edges *= pj if a else (1.0 - pj)
                    if p_edges == 0.0:
                        break
                if p_edges == 0.0:
                    continue
                adj2 = dict(adjacency)
                adj2.update({(j, i): a for j, a in zip(parents_pot, bits)})
                realized = {j for j, a in zip(parents_pot, bits) if a}
                if i in regime.beta_node:
                    step.append((adj2, {**beta, i: regime.beta_node[i]}, p_edges))
                    continue
                phi = spec.phi[i]
                overrides = {s: r for (s, t), r in regime.beta_edge.items() if t == i}
                if overrides:
                    phi = phi.with_channels(overrides)
                if not hasattr(phi, "pmf"):
                    raise PoscmError(f"context mechanism of node {i} exposes no pmf")
                ctx = {j: beta[j] for j in realized}
                for b, pb in phi.pmf(ctx).items():
                    if pb > 0.0:
                        step.append((adj2, {**beta, i: b}, p_edges * pb))
        configs = step
    return configs


def enumerate_interventional(spec, regime, nodes) -> dict:
    """Exact joint law of `nodes` under the regime: {value tuple: probability}."""
    regime = core.NULL_REGIME if regime is None else regime
    core._validate_regime(spec, regime)
    nodes = list(nodes)
    order = spec.order
    law: dict = {}
    for adjacency, beta, p_cfg in _phase1_configs(spec, regime):
        # values: distribution over assignments, built node by node
        partial = [({}, 1.0)]
        for i in order:
            pa = {j for j in spec.potential_parents(i) if adjacency[(j, i)]}
            if i in regime.v_node:
                partial = [({**vals, i: regime.v_node[i]}, pv) for vals, pv in partial]
                continue
            handle = spec.gamma[i](beta[i], frozenset(pa), 0.5)
            overrides = {s: r for (s, t), r in regime.v_edge.items() if t == i}
            if overrides:
                handle = handle.with_channels(overrides)
            if not hasattr(handle, "pmf"):
                raise PoscmError(f"mechanism of node {i} exposes no pmf")
            step = []
            for vals, pv in partial:
                for v, p in handle.pmf({j: vals[j] for j in pa}).items():
                    if p > 0.0:
                        step.append(({**vals, i: v}, pv * p))
            partial = step
        for vals, pv in partial:
            key = tuple(vals[i] for i in nodes)
            law[key] = law.get(key, 0.0) + p_cfg * pv
    total = sum(law.values())
    if not np.isclose(total, 1.0, atol=1e-9):
        raise PoscmError(f"enumeration mass {total} != 1 (mechanism pmfs inconsistent?)")
    return law


def exact_law(spec, regime, node: int) -> dict:
    """Exact marginal law of one node under the regime."""
    joint = enumerate_interventional(spec, regime, [node])
    return {k[0]: p for k, p in joint.items()}
