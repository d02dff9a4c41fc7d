"""Ground-truth model zoo: worked examples and random discrete models.

Everything here is a plain spec accepted by :func:`poscm.core.generate`; the
message-structured ones additionally accept edge-channel interventions.  The
layered graded-synapse network lives in :mod:`poscm.layered`.
"""

from __future__ import annotations

import numpy as np

from . import rng
from .core import Domain, PoscmSpec, PoscmError, StructureKernel
from .mechanisms import ConstantContext, FiniteContext, TableGamma
from .messages import (
    BernoulliAggregator,
    DeterministicAggregator,
    MessageGamma,
)


def _degenerate_context():
    return Domain.finite([0]), ConstantContext(0)


def two_node_confounding(p: float, q0: float, q1: float) -> PoscmSpec:
    """Two binary nodes with an unobserved random edge.

    The edge is present with probability p; with the edge absent the sink is
    a fair coin, with it present the sink is Bernoulli(q_{v}) in the source
    value v.  Message form: the source's channel carries (1, q_v) and the
    aggregator fires iff u < (1 - m1)/2 + m2, so a constant clamp (1, c)
    forces the edge-present branch to Bernoulli(c) while absent-edge worlds
    are untouched.
    """
    for name, val in (("p", p), ("q0", q0), ("q1", q1)):
        if not 0.0 < val < 1.0:
            raise PoscmError(f"{name}={val} must lie in (0,1)")
    cdom, cmech = _degenerate_context()

    def channel(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.ones_like(x), q0 + (q1 - q0) * x], axis=-1)

    channel.message_d = 2

    root = MessageGamma([], 2, {}, aggregator=BernoulliAggregator(
        lambda msgs, beta: 0.5, lambda msgs, beta: np.full(msgs.shape[0], 0.5)))
    sink = MessageGamma([0], 2, {0: channel}, aggregator=BernoulliAggregator(
        lambda msgs, beta: (1.0 - msgs[0, 0]) / 2.0 + msgs[1, 0],
        lambda msgs, beta: (1.0 - msgs[:, 0, 0]) / 2.0 + msgs[:, 1, 0]))

    return PoscmSpec(
        n=2, tau=(0, 1),
        context_domain=(cdom, cdom),
        value_domain=(Domain.finite([0, 1]), Domain.finite([0, 1])),
        alpha=StructureKernel.constant(p),
        phi=(cmech, cmech),
        gamma=(root, sink),
        name=f"two-node-confounding(p={p},q0={q0},q1={q1})",
    )


def copy_edge_replacement():
    """Channel replacement (1, v): with the edge present, the sink copies the
    source exactly; a no-op where the edge is absent."""

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.ones_like(x), x], axis=-1)

    fn.message_d = 2
    return fn


# ---------------------------------------------------------------------------
# Distributive toy


def _flag_value_channel():
    """Message (1, v): presence flag plus the raw value."""

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.ones_like(x), x], axis=-1)

    fn.message_d = 2
    return fn


def _flagged_sum():
    def fn(msgs):
        flags = msgs[0]
        return float((msgs[1] * (flags == 1.0)).sum())

    def batch_fn(msgs):
        return (msgs[:, 1, :] * (msgs[:, 0, :] == 1.0)).sum(axis=1)

    return DeterministicAggregator(fn, batch_fn)


def _flagged_product():
    def fn(msgs):
        flags = msgs[0]
        vals = np.where(flags == 1.0, msgs[1], 1.0)
        return float(vals.prod())

    def batch_fn(msgs):
        return np.where(msgs[:, 0, :] == 1.0, msgs[:, 1, :], 1.0).prod(axis=1)

    return DeterministicAggregator(fn, batch_fn)


def _const_root():
    return MessageGamma([], 2, {}, aggregator=DeterministicAggregator(
        lambda msgs: 0.0, lambda msgs: np.zeros(msgs.shape[0])))


def distributive_toy(side: str) -> PoscmSpec:
    """Deterministic models computing x*(y+z) two ways.

    Side "lhs": an internal sum node feeds one product, W = x * (y + z).
    Side "rhs": two internal products feed a sum, W = x*y + x*z.  Inputs are
    nodes 0..2 (x, y, z); the output W is the last node.  Both sides agree
    under any joint input assignment, but replacing a single x-channel
    separates them.
    """
    cdom, cmech = _degenerate_context()
    wide = Domain.real_interval(-1e9, 1e9)
    flag = _flag_value_channel()

    if side.lower() == "lhs":
        n = 5  # x y z | s=y+z | W=x*s
        fixed = {(1, 3), (2, 3), (0, 4), (3, 4)}
        gammas = (
            _const_root(), _const_root(), _const_root(),
            MessageGamma([0, 1, 2], 2, {0: flag, 1: flag, 2: flag},
                         aggregator=_flagged_sum()),
            MessageGamma([0, 1, 2, 3], 2, {j: flag for j in (0, 1, 2, 3)},
                         aggregator=_flagged_product()),
        )
    elif side.lower() == "rhs":
        n = 6  # x y z | u1=x*y | u2=x*z | W=u1+u2
        fixed = {(0, 3), (1, 3), (0, 4), (2, 4), (3, 5), (4, 5)}
        gammas = (
            _const_root(), _const_root(), _const_root(),
            MessageGamma([0, 1, 2], 2, {j: flag for j in (0, 1, 2)},
                         aggregator=_flagged_product()),
            MessageGamma([0, 1, 2, 3], 2, {j: flag for j in (0, 1, 2, 3)},
                         aggregator=_flagged_product()),
            MessageGamma([0, 1, 2, 3, 4], 2, {j: flag for j in (0, 1, 2, 3, 4)},
                         aggregator=_flagged_sum()),
        )
    else:
        raise PoscmError(f"side must be 'lhs' or 'rhs', got {side!r}")

    alpha = StructureKernel(
        lambda j, i, b: 1.0 if (j, i) in fixed else 0.0,
        edge_prob_batch=lambda j, i, b: np.full(len(np.atleast_1d(b)),
                                                1.0 if (j, i) in fixed else 0.0),
    )
    return PoscmSpec(
        n=n, tau=tuple(range(n)),
        context_domain=(cdom,) * n,
        value_domain=(wide,) * n,
        alpha=alpha,
        phi=(cmech,) * n,
        gamma=gammas,
        name=f"distributive-{side.lower()}",
    )


def toy_output_node(spec: PoscmSpec) -> int:
    return spec.n - 1


# ---------------------------------------------------------------------------
# Random discrete models (parity mechanisms: every edge carries a strong,
# clip-free effect at any co-clamp)


def _parity_table(base: float, swing: float, weights: dict, beta_weight: int):
    """P(V=1 | parents, beta) = base + swing * parity(sum w_j v_j + w0 beta)."""

    def table(beta, parents):
        def probs_fn(parent_values):
            tot = beta_weight * int(beta) + sum(weights[j] * int(parent_values[j])
                                                for j in parents)
            p1 = base + swing * (tot % 2)
            return (1.0 - p1, p1)

        def probs_batch(parent_values, count):
            tot = np.full(count, beta_weight * int(beta))
            for j in parents:
                tot = tot + weights[j] * np.asarray(parent_values[j], dtype=int)
            p1 = base + swing * (tot % 2)
            return np.stack([1.0 - p1, p1], axis=1)

        return ([0, 1], probs_fn, probs_batch)

    return table


def random_discrete_poscm(n: int, seed: int, edge_lo: float = 0.35,
                          edge_hi: float = 0.65) -> PoscmSpec:
    """Random n-node binary model with parity value mechanisms.

    Edge probabilities are context-dependent constants drawn in
    [edge_lo, edge_hi]; value mechanisms flip a biased coin on the parity of
    the realized parent values, so toggling any single parent moves the
    sink's law by 0.7 at every co-clamp.
    """
    gen = rng.generator(seed, rng.DOMAIN_TEST, 99)
    dyad_lo = {}
    dyad_hi = {}
    for i in range(n):
        for j in range(i):
            a, b = sorted(gen.uniform(edge_lo, edge_hi, size=2))
            dyad_lo[(j, i)], dyad_hi[(j, i)] = a, b

    def edge_prob(j, i, beta_j):
        lo, hi = dyad_lo[(j, i)], dyad_hi[(j, i)]
        return lo + (hi - lo) * float(beta_j)

    def edge_prob_batch(j, i, beta_j):
        lo, hi = dyad_lo[(j, i)], dyad_hi[(j, i)]
        return lo + (hi - lo) * np.asarray(beta_j, dtype=float)

    bdom = Domain.finite([0, 1])
    phis = []
    gammas = []
    for i in range(n):
        base_p1 = float(gen.uniform(0.3, 0.7))

        def pmf_fn(ctx, _b=base_p1):
            if ctx:
                mean = sum(ctx.values()) / len(ctx)
                p1 = 0.2 + 0.6 * mean
            else:
                p1 = _b
            return (1.0 - p1, p1)

        phis.append(FiniteContext([0, 1], pmf_fn))
        weights = {j: 1 for j in range(i)}
        gammas.append(TableGamma(_parity_table(0.15, 0.7, weights, beta_weight=1)))

    return PoscmSpec(
        n=n, tau=tuple(range(n)),
        context_domain=(bdom,) * n,
        value_domain=(bdom,) * n,
        alpha=StructureKernel(edge_prob, edge_prob_batch),
        phi=tuple(phis),
        gamma=tuple(gammas),
        name=f"random-discrete(n={n},seed={seed})",
    )


def four_node_discrete() -> PoscmSpec:
    """Fixed 4-node binary model with closed-form kernels.

    Structure: edge probability 0.25 + 0.5*beta_j on every dyad (positivity
    holds strictly).  Contexts: root prior P(1)=0.45, children
    P(1) = 0.2 + 0.6 * mean(parent contexts).  Values: parity mechanism
    P(V=1) = 0.15 + 0.7 * parity(beta_i + sum of parent values).

    Closed-form conditionals back the recovery tests:
    p_edge(b) = 0.25 + 0.5 b; context kernel = same linear-in-mean form;
    value kernel follows from the parity formula.
    """
    bdom = Domain.finite([0, 1])

    def edge_prob(j, i, b):
        return 0.25 + 0.5 * float(b)

    def edge_prob_batch(j, i, b):
        return 0.25 + 0.5 * np.asarray(b, dtype=float)

    phis = []
    for i in range(4):
        def pmf_fn(ctx, _root=0.45):
            p1 = (0.2 + 0.6 * (sum(ctx.values()) / len(ctx))) if ctx else _root
            return (1.0 - p1, p1)

        phis.append(FiniteContext([0, 1], pmf_fn))

    gammas = [TableGamma(_parity_table(0.15, 0.7, {j: 1 for j in range(i)}, 1))
              for i in range(4)]

    return PoscmSpec(
        n=4, tau=(0, 1, 2, 3),
        context_domain=(bdom,) * 4,
        value_domain=(bdom,) * 4,
        alpha=StructureKernel(edge_prob, edge_prob_batch),
        phi=tuple(phis),
        gamma=tuple(gammas),
        name="four-node-discrete",
    )


def four_node_true_edge_prob(b) -> float:
    return 0.25 + 0.5 * float(b)


def four_node_true_context_kernel(parent_ctx: dict) -> dict:
    p1 = (0.2 + 0.6 * (sum(parent_ctx.values()) / len(parent_ctx))) if parent_ctx else 0.45
    return {0: 1.0 - p1, 1: p1}


def four_node_true_value_kernel(beta_i: int, parent_values: dict) -> dict:
    p1 = 0.15 + 0.7 * ((int(beta_i) + sum(int(v) for v in parent_values.values())) % 2)
    return {0: 1.0 - p1, 1: p1}
