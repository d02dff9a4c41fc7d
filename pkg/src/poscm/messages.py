"""Message-structured mechanisms and sum-of-univariate (KAS-style) forms.

A message-structured node mechanism factors into per-source univariate
message functions H_{i<-j} (each mapping the source's scalar value into a
fixed d_i-dimensional message) and a single aggregator over the stacked
message matrix plus the node's own noise.  Messages on unrealized edges are
identically zero, so replacing a channel's message function is a no-op in
worlds where that edge is absent.  The message dimension is a property of
the target node and never varies with the realized parent count.

Edge-channel interventions operate directly on these primitives: a
replacement is either a callable (a new message function) or a constant
vector clamp.

The fixed-dimension sum-of-univariate form with d = 2m+1,

    value = sum_q Psi( q + sum_j A_j * lam_j * psi(v_j + eta*q)
                         + lam_u * psi(u + eta*q) ),

is supported both as a direct evaluator and compiled into message functions
with coordinates [H_j(x)]_q = lam_j * psi(x + eta*q); the two evaluation
paths agree to floating-point roundoff.  Universal inner functions are not
constructed: callers pick Psi/psi from the univariate catalog (identity,
tanh, sin, piecewise linear).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .core import MechanismError, InterventionError


# ---------------------------------------------------------------------------
# Univariate catalog (serializable by name + params)


@dataclass(frozen=True)
class Univariate:
    """Named scalar function, vectorized over numpy arrays."""

    name: str
    fn: Callable
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.fn(x)


def make_univariate(name: str, **params) -> Univariate:
    if name == "identity":
        return Univariate("identity", lambda x: x)
    if name == "tanh":
        a = params.get("scale", 1.0)
        b = params.get("shift", 0.0)
        return Univariate("tanh", lambda x: np.tanh(a * x + b), {"scale": a, "shift": b})
    if name == "sin":
        a = params.get("scale", 1.0)
        b = params.get("shift", 0.0)
        return Univariate("sin", lambda x: np.sin(a * x + b), {"scale": a, "shift": b})
    if name == "affine":
        a = params.get("scale", 1.0)
        b = params.get("shift", 0.0)
        return Univariate("affine", lambda x: a * x + b, {"scale": a, "shift": b})
    if name == "piecewise_linear":
        xs = np.asarray(params["xs"], dtype=float)
        ys = np.asarray(params["ys"], dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or np.any(np.diff(xs) <= 0):
            raise MechanismError("piecewise_linear needs increasing xs and matching ys")
        return Univariate("piecewise_linear", lambda x: np.interp(x, xs, ys),
                          {"xs": xs.tolist(), "ys": ys.tolist()})
    raise MechanismError(f"unknown univariate {name!r}")


# ---------------------------------------------------------------------------
# Fixed-dimension sum-of-univariate form


@dataclass
class KasForm:
    """Sum-of-univariate mechanism over m potential parents (d = 2m + 1).

    ``lambdas[j]`` weights potential source j; sources absent from a world
    contribute nothing (their term is gated by the edge indicator).  The
    noise term is never gated: it belongs to the node, not to any edge.
    """

    outer: Univariate
    inner: Univariate
    eta: float
    lambdas: dict
    lambda_u: float
    m: int

    @property
    def d(self) -> int:
        return 2 * self.m + 1

    def qs(self) -> np.ndarray:
        return np.arange(self.d, dtype=float)


def kas_eval_direct(form: KasForm, adjacency_row: dict, parent_values: dict, u: float):
    """Evaluate the displayed sum directly (no message intermediates)."""
    qs = form.qs()
    acc = qs.copy()
    for j, lam in form.lambdas.items():
        if adjacency_row.get(j, 0):
            if j not in parent_values:
                raise MechanismError(f"edge {j} realized but no parent value supplied")
            acc = acc + lam * form.inner(parent_values[j] + form.eta * qs)
    acc = acc + form.lambda_u * form.inner(u + form.eta * qs)
    return float(np.sum(form.outer(acc)))


def kas_message_fn(form: KasForm, source: int) -> "EdgeMessageFn":
    """Message function induced by the form: [H(x)]_q = lam_j psi(x + eta q)."""
    lam = form.lambdas[source]
    qs = form.qs()

    def fn(x):
        x = np.asarray(x, dtype=float)
        return lam * form.inner(x[..., None] + form.eta * qs)

    return EdgeMessageFn(source=source, target=-1, channel="value", d=form.d, fn=fn,
                         name="kas", params={"lambda": lam, "eta": form.eta,
                                             "psi": form.inner.name})


def kas_to_messages(form: KasForm) -> tuple[dict, "KasAggregator"]:
    """Split the form into per-source message functions plus an aggregator."""
    return {j: kas_message_fn(form, j) for j in form.lambdas}, KasAggregator(form)


# ---------------------------------------------------------------------------
# Message functions and edge replacements


@dataclass
class EdgeMessageFn:
    """Univariate message map for one directed channel.

    ``fn`` maps a scalar (or a replicate array) of the source's domain to an
    R^d message (or a (count, d) stack).  Gating by the edge indicator is
    applied by the consuming handle, not here.
    """

    source: int
    target: int
    channel: str  # "context" | "value"
    d: int
    fn: Callable
    name: str = ""
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        out = np.asarray(self.fn(x), dtype=float)
        want = np.shape(np.asarray(x)) + (self.d,)
        if out.shape != want:
            out = np.broadcast_to(out, want).copy()
        return out


def constant_message(m, d: int | None = None) -> Callable:
    """Clamp: replace a channel by the constant message m (scalar or vector)."""
    vec = np.atleast_1d(np.asarray(m, dtype=float))
    if d is not None and vec.shape != (d,):
        raise InterventionError(f"clamp has dimension {vec.shape[0]}, channel needs {d}")

    def fn(x):
        x = np.asarray(x)
        return np.broadcast_to(vec, x.shape + vec.shape).copy()

    fn.clamp_value = vec
    fn.message_d = vec.shape[0]
    return fn


def resolve_replacement(repl, d: int) -> Callable:
    """Normalize an edge replacement (callable or constant) to a message fn."""
    if callable(repl):
        out_d = getattr(repl, "message_d", None) or getattr(repl, "d", None)
        if out_d is not None and out_d != d:
            raise InterventionError(f"replacement dimension {out_d} != channel dimension {d}")
        return repl
    return constant_message(repl, d)


# ---------------------------------------------------------------------------
# Aggregators


class KasAggregator:
    """Aggregator completing a KasForm from its message matrix."""

    def __init__(self, form: KasForm):
        self.form = form
        self.deterministic_given_noise = True

    def __call__(self, msgs: np.ndarray, u, beta=None) -> float:
        f = self.form
        qs = f.qs()
        acc = qs + msgs.sum(axis=1) + f.lambda_u * f.inner(u + f.eta * qs)
        return float(np.sum(f.outer(acc)))

    def batch(self, msgs: np.ndarray, u: np.ndarray, beta=None) -> np.ndarray:
        f = self.form
        qs = f.qs()
        acc = qs[None, :] + msgs.sum(axis=2) + f.lambda_u * f.inner(u[:, None] + f.eta * qs[None, :])
        return np.sum(f.outer(acc), axis=1)


class BernoulliAggregator:
    """Finite {0,1} aggregator: success probability is a function of the
    flattened message matrix (and optionally the node context)."""

    def __init__(self, prob_fn: Callable, prob_batch: Callable | None = None):
        self.prob_fn = prob_fn
        self.prob_batch = prob_batch
        self.deterministic_given_noise = True

    def _p(self, msgs, beta):
        p = float(self.prob_fn(msgs, beta))
        if not 0.0 <= p <= 1.0:
            raise MechanismError(f"aggregator probability {p} outside [0,1]")
        return p

    def __call__(self, msgs: np.ndarray, u, beta=None) -> int:
        return int(u < self._p(msgs, beta))

    def batch(self, msgs: np.ndarray, u: np.ndarray, beta=None) -> np.ndarray:
        if self.prob_batch is not None:
            p = np.asarray(self.prob_batch(msgs, beta), dtype=float)
        else:
            p = np.asarray(self.prob_fn(msgs, beta), dtype=float)
        return (u < p).astype(np.int64)

    def pmf(self, msgs: np.ndarray, beta=None) -> dict:
        p = self._p(msgs, beta)
        return {0: 1.0 - p, 1: p}


class DeterministicAggregator:
    """Noise-free aggregator: value = fn(msgs)."""

    def __init__(self, fn: Callable, batch_fn: Callable | None = None):
        self.fn = fn
        self.batch_fn = batch_fn
        self.deterministic_given_noise = True

    def __call__(self, msgs: np.ndarray, u, beta=None):
        return self.fn(msgs)

    def batch(self, msgs: np.ndarray, u: np.ndarray, beta=None) -> np.ndarray:
        if self.batch_fn is not None:
            return np.asarray(self.batch_fn(msgs))
        return np.asarray(self.fn(msgs))

    def pmf(self, msgs: np.ndarray, beta=None) -> dict:
        return {self.fn(msgs): 1.0}


class AdditiveNoiseAggregator:
    """value = combine(msgs) + noise_scale * ndtri(u): stochastic across
    draws, strictly monotone in any single d=1 message slot given the noise.

    ``combine`` takes the (d, m) matrix; the default sums every entry.
    """

    def __init__(self, noise_scale: float, combine: Callable | None = None):
        self.noise_scale = float(noise_scale)
        self.combine = combine
        self.deterministic_given_noise = True

    def _noise(self, u):
        from scipy.special import ndtri
        return self.noise_scale * ndtri(u) if self.noise_scale else 0.0 * np.asarray(u)

    def _combined(self, msgs: np.ndarray):
        return msgs.sum() if self.combine is None else self.combine(msgs)

    def __call__(self, msgs: np.ndarray, u, beta=None) -> float:
        return float(self._combined(msgs) + self._noise(u))

    def batch(self, msgs: np.ndarray, u: np.ndarray, beta=None) -> np.ndarray:
        if self.combine is None:
            summed = msgs.sum(axis=(1, 2))
        else:
            summed = np.array([self.combine(m) for m in msgs])
        return summed + self._noise(u)


class GaugedAggregator:
    """Wrap an aggregator so it first undoes a message-space bijection
    slotwise; used by gauge transforms."""

    def __init__(self, base, inverse: Callable):
        self.base = base
        self.inverse = inverse
        self.deterministic_given_noise = getattr(base, "deterministic_given_noise", False)

    def _undo(self, msgs: np.ndarray) -> np.ndarray:
        out = np.empty_like(msgs)
        for s in range(msgs.shape[-1]):
            out[..., s] = self.inverse(msgs[..., s])
        return out

    def __call__(self, msgs, u, beta=None):
        return self.base(self._undo(msgs), u, beta)

    def batch(self, msgs, u, beta=None):
        return self.base.batch(self._undo(msgs), u, beta)

    def pmf(self, msgs, beta=None):
        return self.base.pmf(self._undo(msgs), beta)


# ---------------------------------------------------------------------------
# Message-structured mechanisms


class MessageValueHandle:
    """Phase-II handle of a message-structured node: gate, stack, aggregate."""

    def __init__(self, owner: "MessageGamma", parents: frozenset, beta,
                 overrides: dict | None = None):
        self.owner = owner
        self.parents = frozenset(parents)
        self.beta = beta
        self.overrides = dict(overrides or {})
        self.tag = (beta, self.parents)

    def with_channels(self, replacements: dict) -> "MessageValueHandle":
        new = dict(self.overrides)
        for j, repl in replacements.items():
            if j not in self.owner.channels:
                raise InterventionError(f"node has no channel from source {j}")
            new[j] = resolve_replacement(repl, self.owner.d)
        return MessageValueHandle(self.owner, self.parents, self.beta, new)

    def _channel(self, j):
        return self.overrides.get(j, self.owner.channels[j])

    def messages(self, parent_values: dict) -> np.ndarray:
        """Gated message matrix, shape (d, m); zero columns off the realized set."""
        if set(parent_values) != self.parents:
            raise MechanismError(
                f"handle built for parents {sorted(self.parents)} got values for "
                f"{sorted(parent_values)}")
        msgs = np.zeros((self.owner.d, self.owner.m))
        for slot, j in enumerate(self.owner.sources):
            if j in self.parents:
                msgs[:, slot] = self._channel(j)(parent_values[j])
        return msgs

    def __call__(self, parent_values: dict, u):
        agg = self.owner.make_aggregator(self.beta)
        return agg(self.messages(parent_values), u, beta=self.beta)

    @property
    def supports_batch(self) -> bool:
        return hasattr(self.owner.make_aggregator(self.beta), "batch")

    def batch(self, parent_values: dict, u: np.ndarray) -> np.ndarray:
        count = len(u)
        msgs = np.zeros((count, self.owner.d, self.owner.m))
        for slot, j in enumerate(self.owner.sources):
            if j in self.parents:
                msgs[:, :, slot] = self._channel(j)(np.broadcast_to(
                    np.asarray(parent_values[j], dtype=float), (count,)))
        agg = self.owner.make_aggregator(self.beta)
        return agg.batch(msgs, u, beta=self.beta)

    def pmf(self, parent_values: dict) -> dict:
        agg = self.owner.make_aggregator(self.beta)
        if not hasattr(agg, "pmf"):
            raise MechanismError("aggregator does not expose an exact pmf")
        return agg.pmf(self.messages(parent_values), beta=self.beta)


class MessageGamma:
    """Mechanism operator producing message-structured handles.

    ``channels[j]`` is the message function for potential source j (all
    potential sources must be covered); ``aggregator`` is shared across
    worlds, or supply ``make_aggregator(beta)`` for context-dependent
    aggregation.  The operator itself is deterministic: stochasticity enters
    through the aggregator's noise argument.
    """

    message_capable = True

    def __init__(self, sources: Sequence[int], d: int, channels: dict,
                 aggregator=None, make_aggregator: Callable | None = None):
        self.sources = list(sources)
        self.d = d
        self.m = len(self.sources)
        if set(channels) != set(self.sources):
            raise MechanismError(
                f"channels cover {sorted(channels)} but potential sources are "
                f"{sorted(self.sources)}")
        self.channels = {j: fn if isinstance(fn, EdgeMessageFn)
                         else resolve_replacement(fn, d) for j, fn in channels.items()}
        if (aggregator is None) == (make_aggregator is None):
            raise MechanismError("supply exactly one of aggregator / make_aggregator")
        self._aggregator = aggregator
        self._make_aggregator = make_aggregator

    def make_aggregator(self, beta):
        return self._aggregator if self._aggregator is not None else self._make_aggregator(beta)

    def __call__(self, beta, parents: frozenset, u) -> MessageValueHandle:
        return MessageValueHandle(self, parents, beta)

    @property
    def supports_batch(self) -> bool:
        if self._aggregator is not None:
            return hasattr(self._aggregator, "batch")
        return True  # per-context aggregators are grouped and batched per value

    def batch_eval(self, beta: np.ndarray, masks: dict, values: dict,
                   u_mech: np.ndarray, u_value: np.ndarray,
                   overrides: dict | None = None) -> np.ndarray:
        count = len(u_value)
        over = {j: resolve_replacement(r, self.d) for j, r in (overrides or {}).items()}
        msgs = np.zeros((count, self.d, self.m))
        for slot, j in enumerate(self.sources):
            fn = over.get(j, self.channels[j])
            gated = np.asarray(fn(np.asarray(values[j], dtype=float)), dtype=float)
            msgs[:, :, slot] = gated * masks[j][:, None]
        if self._aggregator is not None:
            return self._aggregator.batch(msgs, u_value, beta=beta)
        # Context-dependent aggregation: group replicates by context value.
        out = np.empty(count)
        beta = np.asarray(beta)
        for b in np.unique(beta):
            sel = beta == b
            out[sel] = self.make_aggregator(b).batch(msgs[sel], u_value[sel], beta=b)
        return out


class MessageContext:
    """Context mechanism in message form: gated context messages, aggregated
    with the node's own noise."""

    def __init__(self, sources: Sequence[int], d: int, channels: dict, aggregator):
        self.sources = list(sources)
        self.d = d
        self.m = len(self.sources)
        if set(channels) != set(self.sources):
            raise MechanismError(
                f"channels cover {sorted(channels)} but potential sources are "
                f"{sorted(self.sources)}")
        self.channels = dict(channels)
        self.aggregator = aggregator
        self._overrides: dict = {}

    def with_channels(self, replacements: dict) -> "MessageContext":
        clone = MessageContext(self.sources, self.d, self.channels, self.aggregator)
        clone._overrides = dict(self._overrides)
        for s, repl in replacements.items():
            if s not in self.channels:
                raise InterventionError(f"node has no context channel from source {s}")
            clone._overrides[s] = resolve_replacement(repl, self.d)
        return clone

    def _channel(self, j):
        return self._overrides.get(j, self.channels[j])

    def messages(self, parent_ctx: dict) -> np.ndarray:
        msgs = np.zeros((self.d, self.m))
        for slot, j in enumerate(self.sources):
            if j in parent_ctx:
                msgs[:, slot] = self._channel(j)(parent_ctx[j])
        return msgs

    def __call__(self, parent_ctx: dict, u):
        return self.aggregator(self.messages(parent_ctx), u)

    @property
    def supports_batch(self) -> bool:
        return hasattr(self.aggregator, "batch")

    def batch(self, parent_ctx: dict, parent_mask: dict, u: np.ndarray) -> np.ndarray:
        count = len(u)
        msgs = np.zeros((count, self.d, self.m))
        for slot, j in enumerate(self.sources):
            fn = self._channel(j)
            gated = np.asarray(fn(np.asarray(parent_ctx[j], dtype=float)), dtype=float)
            msgs[:, :, slot] = gated * parent_mask[j][:, None]
        return self.aggregator.batch(msgs, u)

    def pmf(self, parent_ctx: dict) -> dict:
        if not hasattr(self.aggregator, "pmf"):
            raise MechanismError("aggregator does not expose an exact pmf")
        return self.aggregator.pmf(self.messages(parent_ctx))


# ---------------------------------------------------------------------------
# Spec-level helpers


class PerContext:
    """Marks an aggregator factory keyed by the node context in
    :func:`build_message_poscm` parameterizations."""

    def __init__(self, make: Callable):
        self.make = make


def build_message_poscm(base, value_params: dict, context_params: dict | None = None):
    """Re-express a spec's mechanisms as gated-message aggregation.

    ``value_params[i]`` is a ``(d, channels, aggregator)`` triple covering
    every potential source of node i (wrap the aggregator in
    :class:`PerContext` for context-dependent aggregation); similarly for
    ``context_params``.  Nodes absent from the dicts keep their original
    mechanisms.  Missing channels raise.
    """
    from . import core

    phi = list(base.phi)
    gamma = list(base.gamma)
    for i, (d, channels, agg) in (context_params or {}).items():
        phi[i] = MessageContext(base.potential_parents(i), d, channels, agg)
    for i, (d, channels, agg) in value_params.items():
        sources = base.potential_parents(i)
        if isinstance(agg, PerContext):
            gamma[i] = MessageGamma(sources, d, channels, make_aggregator=agg.make)
        else:
            gamma[i] = MessageGamma(sources, d, channels, aggregator=agg)
    return core.PoscmSpec(
        n=base.n, tau=base.tau, context_domain=base.context_domain,
        value_domain=base.value_domain, alpha=base.alpha,
        phi=tuple(phi), gamma=tuple(gamma),
        beta_noise_arity=base.beta_noise_arity,
        mech_noise_arity=base.mech_noise_arity,
        value_noise_arity=base.value_noise_arity,
        name=base.name + "+messages" if base.name else "message-augmented",
    )


def gauge_transform(mechanism, forward: Callable, inverse: Callable):
    """Reparameterize a message mechanism's internal message space.

    Channels become forward(H(x)); the aggregator undoes the map slotwise, so
    the induced parent-to-value kernel is unchanged on worlds where the
    touched channels are realized (the bijection must be invertible on the
    reachable message set, including the gated zero vector if unrealized
    edges occur).  Raw message values do change: the representation is only
    fixed up to this gauge.
    """
    probe = np.zeros(mechanism.d)
    back = np.asarray(inverse(forward(probe)), dtype=float)
    if not np.allclose(back, probe, atol=1e-8):
        raise MechanismError("inverse does not undo forward on the zero message")

    def wrap(fn):
        def g(x):
            out = np.asarray(fn(x), dtype=float)
            return np.apply_along_axis(forward, -1, out) if out.ndim > 1 else forward(out)
        g.message_d = mechanism.d
        return g

    channels = {j: wrap(mechanism._channel(j)) for j in mechanism.sources}
    if isinstance(mechanism, MessageGamma):
        if mechanism._aggregator is not None:
            return MessageGamma(mechanism.sources, mechanism.d, channels,
                                aggregator=GaugedAggregator(mechanism._aggregator, inverse))
        make = mechanism._make_aggregator
        return MessageGamma(mechanism.sources, mechanism.d, channels,
                            make_aggregator=lambda b: GaugedAggregator(make(b), inverse))
    if isinstance(mechanism, MessageContext):
        return MessageContext(mechanism.sources, mechanism.d, channels,
                              GaugedAggregator(mechanism.aggregator, inverse))
    raise MechanismError("gauge transform requires a message-structured mechanism")


def affine_gauge(scale, shift) -> tuple[Callable, Callable]:
    """Componentwise affine bijection of the message space and its inverse."""
    a = np.asarray(scale, dtype=float)
    b = np.asarray(shift, dtype=float)
    if np.any(a == 0):
        raise MechanismError("affine gauge needs nonzero scale")
    return (lambda m: a * m + b), (lambda m: (m - b) / a)


def sampled_message_hull(spec, node: int, seed: int, count: int = 512,
                         regime=None) -> np.ndarray:
    """Sampled reachable message matrices for one node (hull bookkeeping for
    gauge checks); shape (count, d, m)."""
    from . import core

    gamma = spec.gamma[node]
    if not getattr(gamma, "message_capable", False):
        raise MechanismError("node is not message-structured")
    out = []
    for world, _ in core.sample_worlds(spec, regime, None, seed, count):
        handle = world.mech[node]
        vals = {j: world.value[j] for j in world.parent_set(node)}
        out.append(handle.messages(vals))
    return np.asarray(out)
