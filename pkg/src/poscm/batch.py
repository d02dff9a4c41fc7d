"""Vectorized generation across replicates.

Runs the same two-phase semantics as :func:`poscm.core.generate` but over
whole replicate arrays at once, consuming the identical addressed uniforms;
for specs whose pieces implement the batch protocols the rows of a batch are
bit-identical to the looped worlds.  Samplers elsewhere in the package call
:func:`maybe_generate_batch` and quietly fall back to the loop when a spec
does not support batching (non-numeric domains, joint row samplers, custom
closures).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core, rng


@dataclass
class BatchWorlds:
    """Column-oriented view of `count` worlds under one regime."""

    spec: core.PoscmSpec
    seed: int
    replicates: np.ndarray
    adjacency: dict        # (j, i) -> bool array
    beta: dict             # i -> array
    value: dict            # i -> array
    regime: object
    clamp_counts: dict

    @property
    def count(self) -> int:
        return len(self.replicates)

    def parent_mask(self, i: int) -> dict:
        return {j: self.adjacency[(j, i)] for j in self.spec.potential_parents(i)}


def _clip_batch(domain: core.Domain, arr: np.ndarray, node: int, phase: str,
                clamp_counts: dict) -> np.ndarray:
    if domain.kind != "real":
        return arr
    hit = (arr < domain.lo) | (arr > domain.hi)
    nhit = int(hit.sum())
    if nhit:
        clamp_counts[(phase, node)] = clamp_counts.get((phase, node), 0) + nhit
        arr = np.clip(arr, domain.lo, domain.hi)
    return arr


def generate_batch(spec: core.PoscmSpec, regime, seed: int, count: int,
                   start: int = 0) -> BatchWorlds:
    """Generate `count` worlds (replicates start..start+count-1) at once."""
    regime = core.NULL_REGIME if regime is None else regime
    core._validate_regime(spec, regime)
    if not spec.supports_batch:
        raise core.PoscmError("spec does not support batched generation")
    lay = spec.layout
    reps = np.arange(start, start + count)
    U = rng.uniform_block(seed, rng.DOMAIN_WORLD, reps, lay.total)
    order = spec.order
    clamp_counts: dict = {}

    adjacency: dict = {}
    beta: dict = {}
    for i in order:
        for j in spec.potential_parents(i):
            p = spec.alpha.prob_batch(j, i, beta[j])
            adjacency[(j, i)] = U[:, lay.edge_slot[(j, i)]] < p
        if i in regime.beta_node:
            beta[i] = np.full(count, regime.beta_node[i])
        else:
            phi = spec.phi[i]
            overrides = {s: r for (s, t), r in regime.beta_edge.items() if t == i}
            if overrides:
                phi = phi.with_channels(overrides)
            ctx = {j: beta[j] for j in spec.potential_parents(i)}
            masks = {j: adjacency[(j, i)] for j in spec.potential_parents(i)}
            u = U[:, lay.beta_slice[i]]
            out = phi.batch(ctx, masks, u[:, 0] if u.shape[1] == 1 else u)
            beta[i] = _clip_batch(spec.context_domain[i], np.asarray(out), i,
                                  "context", clamp_counts)

    value: dict = {}
    for i in order:
        if i in regime.v_node:
            value[i] = np.full(count, regime.v_node[i])
            continue
        masks = {j: adjacency[(j, i)] for j in spec.potential_parents(i)}
        vals = {j: value[j] for j in spec.potential_parents(i)}
        overrides = {s: r for (s, t), r in regime.v_edge.items() if t == i}
        um = U[:, lay.mech_slice[i]]
        uv = U[:, lay.value_slice[i]]
        out = spec.gamma[i].batch_eval(
            beta[i], masks, vals,
            um[:, 0] if um.shape[1] == 1 else um,
            uv[:, 0] if uv.shape[1] == 1 else uv,
            overrides=overrides or None)
        value[i] = _clip_batch(spec.value_domain[i], np.asarray(out), i,
                               "value", clamp_counts)

    return BatchWorlds(spec=spec, seed=seed, replicates=reps, adjacency=adjacency,
                       beta=beta, value=value, regime=regime, clamp_counts=clamp_counts)


def maybe_generate_batch(spec, regime, seed, count, start: int = 0) -> BatchWorlds | None:
    """Batch when supported, else None (caller falls back to the loop)."""
    if spec.supports_batch:
        return generate_batch(spec, regime, seed, count, start)
    return None


def node_values(spec, regime, seed: int, count: int, node: int) -> np.ndarray:
    """Sampled values of one node under a regime, batched when possible."""
    bw = maybe_generate_batch(spec, regime, seed, count)
    if bw is not None:
        return bw.value[node]
    out = np.empty(count, dtype=object)
    for k, (world, _) in enumerate(core.sample_worlds(spec, regime, None, seed, count)):
        out[k] = world.value[node]
    try:
        return out.astype(float)
    except (TypeError, ValueError):
        return out


def observe_batch(bw: BatchWorlds, om: core.MeasurementModel, obs_seed: int) -> dict:
    """Batched measurement: dict with the included channels as arrays.

    Row r matches core.observe on the corresponding world bit-exactly (both
    consume the same addressed measurement uniforms).
    """
    spec = bw.spec
    lay = spec.layout
    n_dyads = len(lay.edge_slot)
    key = rng.derive_seed(obs_seed, bw.seed)

    def ch_slots(ch, entries, on):
        return entries * getattr(ch, "slots_per_entry", 1) if (on and ch) else 0

    total = (ch_slots(om.channel_adj, n_dyads, "A" in om.included)
             + ch_slots(om.channel_beta, spec.n, "beta" in om.included)
             + ch_slots(om.channel_value, spec.n, "V" in om.included))
    U = (rng.uniform_block(key, rng.DOMAIN_OBSERVE, bw.replicates, total)
         if total else np.empty((bw.count, 0)))

    out: dict = {}
    off = 0
    if "A" in om.included:
        dyads = sorted(lay.edge_slot, key=lay.edge_slot.get)
        mat = np.stack([bw.adjacency[d].astype(float) for d in dyads], axis=1) \
            if dyads else np.zeros((bw.count, 0))
        if om.channel_adj is not None:
            k = om.channel_adj.slots_per_entry
            u = U[:, off:off + n_dyads * k].reshape(bw.count, n_dyads, k)
            mat = om.channel_adj.batch(mat, u)
            off += n_dyads * k
        out["A"] = {d: mat[:, s] for s, d in enumerate(dyads)}
    if "beta" in om.included:
        mat = np.stack([np.asarray(bw.beta[i], dtype=float) for i in range(spec.n)], axis=1)
        if om.channel_beta is not None:
            k = om.channel_beta.slots_per_entry
            u = U[:, off:off + spec.n * k].reshape(bw.count, spec.n, k)
            mat = om.channel_beta.batch(mat, u)
            off += spec.n * k
        out["beta"] = mat
    if "V" in om.included:
        mat = np.stack([np.asarray(bw.value[i], dtype=float) for i in range(spec.n)], axis=1)
        if om.channel_value is not None:
            k = om.channel_value.slots_per_entry
            u = U[:, off:off + spec.n * k].reshape(bw.count, spec.n, k)
            mat = om.channel_value.batch(mat, u)
        out["V"] = mat
    return out
