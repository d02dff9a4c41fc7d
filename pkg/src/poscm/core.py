"""Structural causal models with endogenous graphs: ordered two-phase generation.

A spec describes a generative program over n nodes under a fixed total order.
Phase I walks the order and, for each node, (a) draws its incoming edges from
a structure kernel conditioned on each source's already-realized context and
(b) draws the node's own context from the realized parents' contexts.  Phase
II assigns each node a mechanism from the operator ``gamma`` (conditioned on
local context and realized parent set) and evaluates node values along the
realized graph.  The expanded dependency graph (contexts, edge indicators,
values) is acyclic by construction.

Randomness is addressed through :mod:`poscm.rng`: a draw is an immutable
store of uniforms keyed by (seed, replicate, slot), so the same draw can be
replayed under different regimes and the resulting worlds differ only
downstream of the intervened targets.

Interventions are applied by the generator itself: context-level overrides
take effect at the node's Phase-I slot (so downstream edge formation and
context propagation see the intervened value), value-level overrides in
Phase II, and edge-channel replacements are delegated to message-structured
mechanisms (see :mod:`poscm.messages`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from . import rng


class PoscmError(Exception):
    """Base failure type for model construction and simulation."""


class DomainError(PoscmError):
    """A value (model output or intervention target) left its declared domain."""


class InterventionError(PoscmError):
    """A regime references an invalid target or an unsupported mechanism."""


class MechanismError(PoscmError):
    """A mechanism could not be evaluated on its declared inputs."""


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True)
class Domain:
    """Value space of a context or endogenous variable.

    Either a finite label set or a closed real interval.  Finite labels may
    be any hashables; batched generation additionally requires them to be
    numeric.
    """

    kind: str  # "finite" | "real"
    labels: tuple = ()
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind == "finite":
            if not self.labels:
                raise DomainError("finite domain needs at least one label")
            if len(set(self.labels)) != len(self.labels):
                raise DomainError("finite domain labels must be distinct")
        elif self.kind == "real":
            if not self.lo < self.hi:
                raise DomainError(f"real interval needs lo < hi, got [{self.lo}, {self.hi}]")
        else:
            raise DomainError(f"unknown domain kind {self.kind!r}")

    @staticmethod
    def finite(labels: Sequence) -> "Domain":
        return Domain("finite", labels=tuple(labels))

    @staticmethod
    def real_interval(lo: float, hi: float) -> "Domain":
        return Domain("real", lo=float(lo), hi=float(hi))

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def is_numeric(self) -> bool:
        if self.kind == "real":
            return True
        return all(isinstance(x, (int, float, np.integer, np.floating)) for x in self.labels)

    def contains(self, value) -> bool:
        if self.kind == "finite":
            return value in self.labels
        return self.lo <= value <= self.hi

    def clamp(self, value):
        """(value clipped into the interval, whether clipping occurred)."""
        if self.kind == "finite":
            if value not in self.labels:
                raise MechanismError(f"value {value!r} outside finite domain {self.labels}")
            return value, False
        if value < self.lo:
            return self.lo, True
        if value > self.hi:
            return self.hi, True
        return value, False


# ---------------------------------------------------------------------------
# Structure kernel


class StructureKernel:
    """Conditional law of outgoing edges given the source context.

    The canonical parameterization is a per-dyad probability
    ``edge_prob(j, i, beta_j)``; dyads are then conditionally independent
    Bernoullis.  A joint ``row_sampler(j, targets, beta_j, u_by_target)`` hook
    replaces the product form for a given source when outgoing edges must be
    dependent; it receives the same addressed uniforms the product form would
    have consumed.
    """

    def __init__(self, edge_prob: Callable[[int, int, Any], float],
                 edge_prob_batch: Callable | None = None,
                 row_sampler: Callable | None = None):
        self._edge_prob = edge_prob
        self._edge_prob_batch = edge_prob_batch
        self.row_sampler = row_sampler

    def prob(self, j: int, i: int, beta_j) -> float:
        p = float(self._edge_prob(j, i, beta_j))
        if not 0.0 <= p <= 1.0:
            raise MechanismError(f"edge_prob({j},{i}) = {p} outside [0,1]")
        return p

    @property
    def supports_batch(self) -> bool:
        return self._edge_prob_batch is not None and self.row_sampler is None

    def prob_batch(self, j: int, i: int, beta_j: np.ndarray) -> np.ndarray:
        return np.asarray(self._edge_prob_batch(j, i, beta_j), dtype=float)

    @staticmethod
    def constant(p: float) -> "StructureKernel":
        return StructureKernel(
            lambda j, i, b: p,
            edge_prob_batch=lambda j, i, b: np.full(np.shape(b) or (1,), p, dtype=float),
        )

    @staticmethod
    def from_function(fn: Callable[[int, int, Any], float],
                      batch_fn: Callable | None = None) -> "StructureKernel":
        return StructureKernel(fn, edge_prob_batch=batch_fn)


# ---------------------------------------------------------------------------
# Spec


@dataclass
class PoscmSpec:
    """The generative program: order, domains, structure kernel, mechanisms.

    ``tau[i]`` is the generation rank of node i (a bijection on 0..n-1);
    a dyad (j, i) is *potential* iff tau[j] < tau[i].  ``phi[i]`` maps
    (realized parent contexts keyed by node id, uniform noise) to the node's
    context; ``gamma[i]`` maps (context, realized parent set, uniform noise)
    to a mechanism handle, itself called as handle(parent_values, noise).

    Noise arities default to one uniform per node and channel; a node whose
    mechanism consumes k uniforms declares it in the corresponding arity
    tuple and receives an ndarray slice instead of a float.
    """

    n: int
    tau: tuple
    context_domain: tuple
    value_domain: tuple
    alpha: StructureKernel
    phi: tuple
    gamma: tuple
    beta_noise_arity: tuple = ()
    mech_noise_arity: tuple = ()
    value_noise_arity: tuple = ()
    name: str = ""

    def __post_init__(self):
        if sorted(self.tau) != list(range(self.n)):
            raise PoscmError(f"tau must be a permutation of 0..{self.n - 1}")
        for attr in ("context_domain", "value_domain", "phi", "gamma"):
            if len(getattr(self, attr)) != self.n:
                raise PoscmError(f"{attr} must have length n={self.n}")
        if not self.beta_noise_arity:
            self.beta_noise_arity = (1,) * self.n
        if not self.mech_noise_arity:
            self.mech_noise_arity = (1,) * self.n
        if not self.value_noise_arity:
            self.value_noise_arity = (1,) * self.n
        self._layout = None

    @property
    def order(self) -> list[int]:
        """Node ids in generation order."""
        return sorted(range(self.n), key=lambda i: self.tau[i])

    def potential_parents(self, i: int) -> list[int]:
        """Nodes ranked before i, in rank order."""
        ri = self.tau[i]
        return [j for j in self.order if self.tau[j] < ri]

    def potential_dyads(self) -> list[tuple[int, int]]:
        return [(j, i) for i in self.order for j in self.potential_parents(i)]

    @property
    def layout(self) -> "DrawLayout":
        if self._layout is None:
            self._layout = DrawLayout(self)
        return self._layout

    @property
    def supports_batch(self) -> bool:
        """Whether the vectorized generation path can run this spec."""
        if not self.alpha.supports_batch:
            return False
        if not all(d.is_numeric for d in self.context_domain):
            return False
        if not all(d.is_numeric for d in self.value_domain):
            return False
        if not all(getattr(p, "supports_batch", False) for p in self.phi):
            return False
        return all(getattr(g, "supports_batch", False) for g in self.gamma)


class DrawLayout:
    """Fixed slot assignment of every exogenous uniform for one spec shape."""

    def __init__(self, spec: PoscmSpec):
        off = 0
        self.edge_slot: dict[tuple[int, int], int] = {}
        for j, i in spec.potential_dyads():
            self.edge_slot[(j, i)] = off
            off += 1
        self.beta_slice: dict[int, slice] = {}
        for i in spec.order:
            k = spec.beta_noise_arity[i]
            self.beta_slice[i] = slice(off, off + k)
            off += k
        self.mech_slice: dict[int, slice] = {}
        for i in spec.order:
            k = spec.mech_noise_arity[i]
            self.mech_slice[i] = slice(off, off + k)
            off += k
        self.value_slice: dict[int, slice] = {}
        for i in spec.order:
            k = spec.value_noise_arity[i]
            self.value_slice[i] = slice(off, off + k)
            off += k
        self.total = off


def _squeeze(u: np.ndarray):
    return float(u[0]) if u.shape == (1,) else u


@dataclass(frozen=True)
class ExogenousDraw:
    """Frozen store of one replicate's exogenous randomness.

    Regenerable bit-exactly from (spec shape, seed, replicate); immutable.
    """

    seed: int
    replicate: int
    u: np.ndarray
    layout: DrawLayout

    def u_edge(self, j: int, i: int) -> float:
        return float(self.u[self.layout.edge_slot[(j, i)]])

    def u_beta(self, i: int):
        return _squeeze(self.u[self.layout.beta_slice[i]])

    def u_mech(self, i: int):
        return _squeeze(self.u[self.layout.mech_slice[i]])

    def u_value(self, i: int):
        return _squeeze(self.u[self.layout.value_slice[i]])


def sample_exogenous(spec: PoscmSpec, seed: int, replicate: int = 0) -> ExogenousDraw:
    """Materialize the addressed uniforms backing one replicate."""
    lay = spec.layout
    u = rng.uniform_vector(seed, rng.DOMAIN_WORLD, replicate, lay.total)
    u.setflags(write=False)
    return ExogenousDraw(seed, replicate, u, lay)


def sample_exogenous_block(spec: PoscmSpec, seed: int, replicates) -> np.ndarray:
    """Uniform matrix (len(replicates), layout.total); row r backs replicate r."""
    return rng.uniform_block(seed, rng.DOMAIN_WORLD, replicates, spec.layout.total)


# ---------------------------------------------------------------------------
# Worlds


@dataclass
class World:
    """One realized sample: adjacency, contexts, mechanisms, values."""

    adjacency: dict
    beta: list
    mech: list
    value: list
    draw: ExogenousDraw
    regime: Any
    clamp_events: list = field(default_factory=list)

    def parent_set(self, i: int) -> frozenset:
        return frozenset(j for (j, t), a in self.adjacency.items() if t == i and a)

    def adjacency_matrix(self, n: int) -> np.ndarray:
        m = np.zeros((n, n), dtype=np.int8)
        for (j, i), a in self.adjacency.items():
            m[j, i] = a
        return m

    @property
    def replicate(self) -> int:
        return self.draw.replicate


class _NullRegime:
    """Empty regime; stands in when no interventions are applied."""

    label = "observational"
    beta_node: dict = {}
    v_node: dict = {}
    beta_edge: dict = {}
    v_edge: dict = {}
    interventions: tuple = ()

    @property
    def is_value_level(self) -> bool:
        return True


NULL_REGIME = _NullRegime()


def _validate_regime(spec: PoscmSpec, regime) -> None:
    dyads = set(spec.layout.edge_slot)
    for j, b in regime.beta_node.items():
        if not 0 <= j < spec.n:
            raise InterventionError(f"context intervention on unknown node {j}")
        if not spec.context_domain[j].contains(b):
            raise DomainError(f"do(beta_{j}={b!r}) outside {spec.context_domain[j]}")
    for j, v in regime.v_node.items():
        if not 0 <= j < spec.n:
            raise InterventionError(f"value intervention on unknown node {j}")
        if not spec.value_domain[j].contains(v):
            raise DomainError(f"do(V_{j}={v!r}) outside {spec.value_domain[j]}")
    for (s, t) in regime.beta_edge:
        if (s, t) not in dyads:
            raise InterventionError(f"({s}->{t}) is not a potential dyad under tau")
        if not hasattr(spec.phi[t], "with_channels"):
            raise InterventionError(
                f"context-edge intervention on node {t} requires a message-structured "
                f"context mechanism")
    for (j, i) in regime.v_edge:
        if (j, i) not in dyads:
            raise InterventionError(f"({j}->{i}) is not a potential dyad under tau")
        if not getattr(spec.gamma[i], "message_capable", False):
            raise InterventionError(
                f"value-edge intervention on node {i} requires a message-structured "
                f"mechanism operator")


def _clamped(domain: Domain, value, node: int, phase: str, events: list):
    out, hit = domain.clamp(value)
    if hit:
        events.append((phase, node, value))
    return out


def generate(spec: PoscmSpec, draw: ExogenousDraw, regime=None) -> World:
    """Run ordered two-phase generation for one draw under one regime.

    Pure in (spec, draw, regime): repeated calls return byte-identical
    worlds.  Context-level overrides bind at the node's own Phase-I slot and
    are seen by every later step; value-level overrides bind in Phase II and
    leave (adjacency, contexts, mechanisms) untouched.
    """
    regime = NULL_REGIME if regime is None else regime
    _validate_regime(spec, regime)
    order = spec.order
    beta: dict[int, Any] = {}
    adjacency: dict[tuple[int, int], int] = {}
    events: list = []
    row_cache: dict[int, dict[int, int]] = {}

    # Phase I: interleaved edge formation and context propagation.
    for i in order:
        parents = []
        for j in spec.potential_parents(i):
            if spec.alpha.row_sampler is not None:
                if j not in row_cache:
                    targets = [t for t in order if spec.tau[t] > spec.tau[j]]
                    u_row = {t: draw.u_edge(j, t) for t in targets}
                    row_cache[j] = spec.alpha.row_sampler(j, targets, beta[j], u_row)
                a = int(row_cache[j][i])
            else:
                a = int(draw.u_edge(j, i) < spec.alpha.prob(j, i, beta[j]))
            adjacency[(j, i)] = a
            if a:
                parents.append(j)
        if i in regime.beta_node:
            beta[i] = regime.beta_node[i]
        else:
            phi = spec.phi[i]
            overrides = {s: r for (s, t), r in regime.beta_edge.items() if t == i}
            if overrides:
                phi = phi.with_channels(overrides)
            ctx = {j: beta[j] for j in parents}
            beta[i] = _clamped(spec.context_domain[i], phi(ctx, draw.u_beta(i)),
                               i, "context", events)

    # Phase II: mechanism assignment, then value generation.
    mech: dict[int, Any] = {}
    value: dict[int, Any] = {}
    for i in order:
        pa = frozenset(j for j in spec.potential_parents(i) if adjacency[(j, i)])
        handle = spec.gamma[i](beta[i], pa, draw.u_mech(i))
        overrides = {s: r for (s, t), r in regime.v_edge.items() if t == i}
        if overrides:
            handle = handle.with_channels(overrides)
        mech[i] = handle
        if i in regime.v_node:
            value[i] = regime.v_node[i]
        else:
            value[i] = _clamped(spec.value_domain[i],
                                handle({j: value[j] for j in pa}, draw.u_value(i)),
                                i, "value", events)

    return World(adjacency=adjacency,
                 beta=[beta[i] for i in range(spec.n)],
                 mech=[mech[i] for i in range(spec.n)],
                 value=[value[i] for i in range(spec.n)],
                 draw=draw, regime=regime, clamp_events=events)


# ---------------------------------------------------------------------------
# Measurement


@dataclass(frozen=True)
class MeasurementModel:
    """Which of (adjacency, contexts, values) is observed, and through what
    noise.  A channel of None is the identity; excluded symbols produce no
    data at all."""

    included: frozenset
    channel_adj: Callable | None = None
    channel_beta: Callable | None = None
    channel_value: Callable | None = None

    def __post_init__(self):
        bad = self.included - {"A", "beta", "V"}
        if bad:
            raise PoscmError(f"unknown observation symbols {bad}")

    @staticmethod
    def value_only(channel=None) -> "MeasurementModel":
        return MeasurementModel(frozenset({"V"}), channel_value=channel)

    @staticmethod
    def latent_context(channel_value=None, channel_adj=None) -> "MeasurementModel":
        return MeasurementModel(frozenset({"A", "V"}),
                                channel_adj=channel_adj, channel_value=channel_value)

    @staticmethod
    def full(channel_value=None) -> "MeasurementModel":
        return MeasurementModel(frozenset({"A", "beta", "V"}), channel_value=channel_value)


@dataclass(frozen=True)
class Observation:
    """Observed channels of one world; excluded channels are absent (None)."""

    adj_tilde: dict | None = None
    beta_tilde: list | None = None
    value_tilde: list | None = None


class GaussianChannel:
    """Additive N(0, sigma^2) noise on each scalar entry.

    Noise is derived from addressed uniforms, so looped and batched
    observation agree bit-exactly.  sigma = 0 is the exact identity.
    """

    kind = "gaussian"
    slots_per_entry = 1

    def __init__(self, sigma: float):
        self.sigma = float(sigma)

    def __call__(self, values, u: np.ndarray) -> list:
        if self.sigma == 0.0:
            return list(values)
        from scipy.special import ndtri
        return list(np.asarray(values, dtype=float) + self.sigma * ndtri(u[:, 0]))

    def batch(self, values: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.sigma == 0.0:
            return values
        from scipy.special import ndtri
        return values + self.sigma * ndtri(u[..., 0])


class LabelFlipChannel:
    """Symbol-error channel: with probability p, switch to one of the other
    labels (chosen by the rescaled uniform).  Labels must be numeric for the
    batched form."""

    kind = "label_flip"
    slots_per_entry = 1

    def __init__(self, p: float, labels: Sequence):
        self.p = float(p)
        self.labels = list(labels)

    def _flip(self, v, u):
        if u >= self.p or len(self.labels) < 2:
            return v
        alt = [x for x in self.labels if x != v]
        return alt[min(int(u / self.p * len(alt)), len(alt) - 1)]

    def __call__(self, values, u: np.ndarray) -> list:
        return [self._flip(v, float(ui)) for v, ui in zip(values, u[:, 0])]

    def batch(self, values: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = values.copy()
        flat_v, flat_u = out.ravel(), u[..., 0].ravel()
        hit = np.nonzero(flat_u < self.p)[0]
        for k in hit:
            flat_v[k] = self._flip(flat_v[k], flat_u[k])
        return out


def gaussian_channel(sigma: float) -> GaussianChannel:
    return GaussianChannel(sigma)


def label_flip_channel(p: float, labels: Sequence) -> LabelFlipChannel:
    return LabelFlipChannel(p, labels)


class ObsLayout:
    """Slot assignment for measurement noise under one (spec shape, model)."""

    def __init__(self, spec: PoscmSpec, om: MeasurementModel):
        def slots(ch, n_entries, on):
            return n_entries * getattr(ch, "slots_per_entry", 1) if (on and ch) else 0

        n_dyads = len(spec.layout.edge_slot)
        self.n_adj = slots(om.channel_adj, n_dyads, "A" in om.included)
        self.n_beta = slots(om.channel_beta, spec.n, "beta" in om.included)
        self.n_value = slots(om.channel_value, spec.n, "V" in om.included)
        self.total = self.n_adj + self.n_beta + self.n_value


def _obs_uniform(u: np.ndarray, start: int, n_entries: int, ch) -> np.ndarray:
    k = getattr(ch, "slots_per_entry", 1)
    return u[start:start + n_entries * k].reshape(n_entries, k)


def observe(world: World, om: MeasurementModel, obs_seed: int,
            spec: PoscmSpec | None = None) -> Observation:
    """Apply the measurement model with fresh noise keyed by (obs_seed, world).

    Channel noise is addressed per (obs seed, draw seed, replicate), i.i.d.
    across probes of the same world under varying obs_seed or replicate.
    """
    lay = world.draw.layout
    n_dyads = len(lay.edge_slot)
    n = len(world.beta)
    key = rng.derive_seed(obs_seed, world.draw.seed)

    def ch_slots(ch, entries, on):
        return entries * getattr(ch, "slots_per_entry", 1) if (on and ch) else 0

    total = (ch_slots(om.channel_adj, n_dyads, "A" in om.included)
             + ch_slots(om.channel_beta, n, "beta" in om.included)
             + ch_slots(om.channel_value, n, "V" in om.included))
    u = (rng.uniform_vector(key, rng.DOMAIN_OBSERVE, world.draw.replicate, total)
         if total else np.empty(0))

    adj = beta = value = None
    off = 0
    if "A" in om.included:
        adj = dict(world.adjacency)
        if om.channel_adj is not None:
            dyads = sorted(lay.edge_slot, key=lay.edge_slot.get)
            noisy = om.channel_adj([adj[d] for d in dyads],
                                   _obs_uniform(u, off, n_dyads, om.channel_adj))
            adj = dict(zip(dyads, noisy))
            off += n_dyads * om.channel_adj.slots_per_entry
    if "beta" in om.included:
        beta = list(world.beta)
        if om.channel_beta is not None:
            beta = om.channel_beta(beta, _obs_uniform(u, off, n, om.channel_beta))
            off += n * om.channel_beta.slots_per_entry
    if "V" in om.included:
        value = list(world.value)
        if om.channel_value is not None:
            value = om.channel_value(value, _obs_uniform(u, off, n, om.channel_value))
    return Observation(adj_tilde=adj, beta_tilde=beta, value_tilde=value)


class Instance:
    """A frozen Phase-I outcome: realized structure, contexts, mechanisms.

    Probes re-run Phase II only, with fresh value noise addressed by
    (probe_seed, probe index); the frozen (adjacency, contexts, mechanisms)
    are stationary across probes.  Only value-level regimes are allowed.
    """

    def __init__(self, spec: PoscmSpec, seed: int, world: World, regime):
        self.spec = spec
        self.seed = seed
        self.world = world
        self.regime = regime
        # compact per-node slots for fresh Phase-II noise
        self._value_off = {}
        off = 0
        for i in spec.order:
            k = spec.value_noise_arity[i]
            self._value_off[i] = slice(off, off + k)
            off += k
        self._value_slots = off

    @property
    def adjacency(self) -> dict:
        return self.world.adjacency

    @property
    def beta(self) -> list:
        return self.world.beta

    def parent_set(self, i: int) -> frozenset:
        return self.world.parent_set(i)

    def _handles(self, regime) -> dict:
        handles = {}
        for i in self.spec.order:
            h = self.world.mech[i]
            overrides = {s: r for (s, t), r in regime.v_edge.items() if t == i}
            if overrides:
                if not hasattr(h, "with_channels"):
                    raise InterventionError(
                        f"value-edge intervention on node {i} requires a "
                        f"message-structured mechanism")
                h = h.with_channels(overrides)
            handles[i] = h
        return handles

    def probe(self, regime, probe_seed: int, count: int) -> dict:
        """Probe the instance `count` times; returns node -> value array.

        Value noise is resampled i.i.d. across probes; everything frozen in
        Phase I (and the mechanism draws) is reused as-is.
        """
        regime = NULL_REGIME if regime is None else regime
        if not regime.is_value_level:
            raise InterventionError("only value-level regimes can probe a frozen instance")
        _validate_regime(self.spec, regime)
        handles = self._handles(regime)
        key = rng.derive_seed(probe_seed, self.seed)
        U = rng.uniform_block(key, rng.DOMAIN_PROBE, np.arange(count), self._value_slots)

        order = self.spec.order
        batchable = all(getattr(handles[i], "supports_batch", False)
                        for i in order if i not in regime.v_node)
        out: dict = {}
        if batchable:
            for i in order:
                if i in regime.v_node:
                    out[i] = np.full(count, regime.v_node[i])
                    continue
                pa = self.parent_set(i)
                u = U[:, self._value_off[i]]
                vals = handles[i].batch({j: out[j] for j in pa},
                                        u[:, 0] if u.shape[1] == 1 else u)
                out[i] = np.asarray(vals)
            return out
        cols: dict = {i: [] for i in order}
        for r in range(count):
            vals: dict = {}
            for i in order:
                if i in regime.v_node:
                    vals[i] = regime.v_node[i]
                else:
                    u = U[r, self._value_off[i]]
                    vals[i] = handles[i]({j: vals[j] for j in self.parent_set(i)},
                                         _squeeze(u))
            for i in order:
                cols[i].append(vals[i])
        return {i: np.asarray(cols[i]) for i in order}


def freeze_instance(spec: PoscmSpec, seed: int, regime=None) -> Instance:
    """Fix one Phase-I outcome (structure, contexts, mechanisms) for probing.

    An optional regime shapes the frozen draw (context-level interventions
    included); subsequent probes may only add value-level interventions.
    """
    world = generate(spec, sample_exogenous(spec, seed, 0), regime)
    return Instance(spec, seed, world, regime)


def sample_worlds(spec: PoscmSpec, regime, om: MeasurementModel | None,
                  seed: int, count: int) -> Iterator[tuple[World, Observation | None]]:
    """Stream of i.i.d. (world, observation) pairs.

    Replicate r is fully determined by (spec, regime, om, seed, r), so two
    streams with the same seed are identical and results cannot depend on
    consumption order.
    """
    if count < 1:
        raise PoscmError("count must be >= 1")
    lay = spec.layout
    chunk = 4096
    for start in range(0, count, chunk):
        reps = np.arange(start, min(start + chunk, count))
        block = rng.uniform_block(seed, rng.DOMAIN_WORLD, reps, lay.total)
        for r, row in zip(reps, block):
            row.setflags(write=False)
            world = generate(spec, ExogenousDraw(seed, int(r), row, lay), regime)
            obs = observe(world, om, seed) if om is not None else None
            yield world, obs
