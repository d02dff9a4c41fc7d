"""Layered graded-synapse network: the desk-scale stand-in for a detailed
biophysical circuit.

Cells sit in ordered layers (the layer order is the generation order at
layer granularity).  Phase I draws each cell's discrete type from its
layer's mixing proportions and wires directed synapses layer-to-layer with
per-rule probabilities; synaptic transfer parameters are assigned from the
(pre type, post type) pair.  Phase II integrates leaky somata driven by a
constant stimulus current and graded tanh synapses:

    s_inf = max(0, tanh((v_pre - v_thr) / v_slope))
    ds/dt = (s_inf - s) / (tau * max(1 - s_inf, 1e-3))
    i_syn = +/- g_max * s * (v_post - e_rev)

with forward Euler at a fixed step.  The drive is rectified to [0, 1):
release cannot run negative, which also keeps conductance-signed synapses
dissipative at any operating point.  Units: mV, ms, uS (micro-siemens),
nF, nA.  The sign convention: currents are added to C dv/dt, so a
non-inverting synapse contributes -g s (v - e_rev) (an ordinary conductance
pulling toward its reversal) and a sign-inverting one +g s (v - e_rev)
(pushing away).  Response polarity in the stock networks is coded by the
reversal potential, which keeps every synapse an ordinary conductance and
the integration unconditionally stable.

Interventions: VNode(cell, v) holds that cell at v for the whole trace
(voltage clamp); VEdge(pre, post, g) replaces the conductance magnitude on
that dyad, a no-op when the synapse is absent in the realized wiring.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from . import core, kernels, rng
from .core import InterventionError, PoscmError

KINETICS_EPS = 1e-3


@dataclass(frozen=True)
class SynapseParams:
    g_max: float          # uS
    v_thr: float          # mV
    v_slope: float        # mV, > 0
    tau_syn: float        # ms, > 0
    e_rev: float          # mV
    sign_inverting: bool = False

    def __post_init__(self):
        if self.v_slope <= 0:
            raise PoscmError("v_slope must be positive")
        if self.tau_syn <= 0:
            raise PoscmError("tau_syn must be positive")


@dataclass(frozen=True)
class SomaParams:
    g_leak: float         # uS
    e_leak: float         # mV
    capacitance: float    # nF


@dataclass(frozen=True)
class LayerSpec:
    name: str
    size: int
    types: dict           # label -> mixing proportion (sums to 1)
    soma: SomaParams

    def __post_init__(self):
        total = sum(self.types.values())
        if not np.isclose(total, 1.0, atol=1e-9):
            raise PoscmError(f"type proportions of layer {self.name} sum to {total}")


@dataclass(frozen=True)
class ConnectionRule:
    pre_layer: str
    post_layer: str
    prob: float
    params: dict          # (pre type, post type) -> SynapseParams

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise PoscmError("connection probability outside [0,1]")


@dataclass(frozen=True)
class StimulusSpec:
    amplitude_na: float
    layer: str


@dataclass(frozen=True)
class LayeredNetSpec:
    layers: tuple
    rules: tuple
    stimulus: StimulusSpec
    within_layer_noise_na: float = 0.0
    name: str = "layered-net"

    def layer(self, name: str) -> LayerSpec:
        for lay in self.layers:
            if lay.name == name:
                return lay
        raise PoscmError(f"no layer named {name!r}")

    def layer_offsets(self) -> dict:
        off = {}
        at = 0
        for lay in self.layers:
            off[lay.name] = at
            at += lay.size
        return off

    @property
    def n_cells(self) -> int:
        return sum(lay.size for lay in self.layers)

    def cells_of(self, layer_name: str) -> range:
        off = self.layer_offsets()[layer_name]
        return range(off, off + self.layer(layer_name).size)


@dataclass
class Trace:
    dt_ms: float
    samples: np.ndarray
    cell_id: int

    def __post_init__(self):
        if self.dt_ms <= 0:
            raise PoscmError("dt must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise PoscmError("trace contains non-finite samples")


class SimulationUnstable(PoscmError):
    pass


# ---------------------------------------------------------------------------
# Single-synapse primitives


def steady_drive(v_pre: float, params: SynapseParams) -> float:
    """Rectified tanh drive in [0, 1): release cannot be negative."""
    return max(0.0, float(np.tanh((v_pre - params.v_thr) / params.v_slope)))


def synapse_step(s: float, v_pre: float, params: SynapseParams, dt: float) -> float:
    """One Euler step of the binding kinetics toward the rectified drive.

    The relaxation denominator is floored at 1e-3 because the drive can come
    arbitrarily close to 1 under strong depolarization; near that floor the
    effective time constant tau*(1 - s_inf) can fall below dt, so the
    relaxation coefficient is capped at 1 (the step lands on the target
    instead of overshooting).  Away from saturation this is plain Euler.
    """
    if dt <= 0:
        raise PoscmError("dt must be positive")
    s_inf = steady_drive(v_pre, params)
    den = max(1.0 - s_inf, KINETICS_EPS)
    alpha = min(dt / (params.tau_syn * den), 1.0)
    return s + alpha * (s_inf - s)


def synaptic_current(s: float, v_post: float, params: SynapseParams) -> float:
    """Signed synaptic current (nA), as added to C dv/dt."""
    sign = 1.0 if params.sign_inverting else -1.0
    return sign * params.g_max * s * (v_post - params.e_rev)


def signed_conductance(params: SynapseParams) -> float:
    return (1.0 if params.sign_inverting else -1.0) * params.g_max


def single_synapse_steady_state(params: SynapseParams, soma: SomaParams,
                                v_pre: float, i_stim: float = 0.0) -> float:
    """Closed-form fixed point of the leak + one-synapse soma ODE."""
    gs = signed_conductance(params) * steady_drive(v_pre, params)
    # 0 = -gl (v - el) + i + gs (v - e_rev)
    return (soma.g_leak * soma.e_leak + i_stim - gs * params.e_rev) / (soma.g_leak - gs)


# ---------------------------------------------------------------------------
# Phase I: instantiation


@dataclass
class LayeredInstance:
    spec: LayeredNetSpec
    seed: int
    cell_types: list
    cell_layer: list
    syn_pre: np.ndarray
    syn_post: np.ndarray
    syn_params: list
    syn_index: dict       # (pre, post) -> synapse position
    bias_na: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.cell_types)

    def cells_of(self, layer_name: str) -> range:
        return self.spec.cells_of(layer_name)


def instantiate(spec: LayeredNetSpec, seed: int) -> LayeredInstance:
    """Draw types and wiring from addressed uniforms (Phase I only).

    A synapse (pre, post) exists iff its dyad uniform falls below the rule's
    probability and the (pre type, post type) pair has transfer parameters;
    pairs without parameters cannot connect.
    """
    n = spec.n_cells
    n_dyads = sum(spec.layer(r.pre_layer).size * spec.layer(r.post_layer).size
                  for r in spec.rules)
    u = rng.uniform_vector(seed, rng.DOMAIN_WORLD, 0, n + n_dyads + n)

    cell_types = []
    cell_layer = []
    at = 0
    for lay in spec.layers:
        labels = list(lay.types)
        cum = np.cumsum([lay.types[t] for t in labels])
        for _ in range(lay.size):
            idx = int(np.searchsorted(cum, u[at], side="right"))
            cell_types.append(labels[min(idx, len(labels) - 1)])
            cell_layer.append(lay.name)
            at += 1

    pre_list, post_list, par_list = [], [], []
    syn_index = {}
    for rule in spec.rules:
        for pre in spec.cells_of(rule.pre_layer):
            for post in spec.cells_of(rule.post_layer):
                hit = u[at] < rule.prob
                at += 1
                if not hit:
                    continue
                pair = (cell_types[pre], cell_types[post])
                if pair not in rule.params:
                    continue
                syn_index[(pre, post)] = len(pre_list)
                pre_list.append(pre)
                post_list.append(post)
                par_list.append(rule.params[pair])

    sigma = spec.within_layer_noise_na
    bias = sigma * ndtri(np.clip(u[at:at + n], 1e-12, 1 - 1e-12)) if sigma > 0 \
        else np.zeros(n)
    return LayeredInstance(spec=spec, seed=seed, cell_types=cell_types,
                           cell_layer=cell_layer,
                           syn_pre=np.asarray(pre_list, dtype=np.int64),
                           syn_post=np.asarray(post_list, dtype=np.int64),
                           syn_params=par_list, syn_index=syn_index, bias_na=bias)


# ---------------------------------------------------------------------------
# Phase II: integration


@dataclass
class LayeredRun:
    instance: LayeredInstance
    dt_ms: float
    traces: np.ndarray    # (nsteps, ncells)

    def trace(self, cell: int) -> Trace:
        return Trace(self.dt_ms, self.traces[:, cell], cell)

    def layer_traces(self, layer_name: str) -> np.ndarray:
        cells = self.instance.cells_of(layer_name)
        return self.traces[:, cells.start:cells.stop]


def integrate(instance: LayeredInstance, regime, t_ms: float, dt_ms: float) -> LayeredRun:
    """Integrate the instance under a value-level regime.

    Deterministic in (instance, regime, t_ms, dt_ms).  Raises
    SimulationUnstable when any trace leaves +/-500 mV.
    """
    regime = core.NULL_REGIME if regime is None else regime
    if not getattr(regime, "is_value_level", True):
        raise InterventionError("layered networks accept value-level regimes only")
    if t_ms < dt_ms:
        raise PoscmError("need t_ms >= dt_ms")
    spec = instance.spec
    n = instance.n_cells
    nsyn = instance.syn_pre.size

    g_signed = np.array([signed_conductance(p) for p in instance.syn_params])
    thr = np.array([p.v_thr for p in instance.syn_params])
    slope = np.array([p.v_slope for p in instance.syn_params])
    tau = np.array([p.tau_syn for p in instance.syn_params])
    e_rev = np.array([p.e_rev for p in instance.syn_params])
    for k in (g_signed, thr, slope, tau, e_rev):
        k.shape = (nsyn,)

    for (pre, post), repl in regime.v_edge.items():
        if not isinstance(repl, (int, float, np.integer, np.floating)):
            raise InterventionError(
                "layered edge interventions replace the conductance: pass a number")
        pos = instance.syn_index.get((pre, post))
        if pos is None:
            continue  # absent synapse: no-op
        sign = 1.0 if instance.syn_params[pos].sign_inverting else -1.0
        g_signed[pos] = sign * float(repl)

    g_leak = np.empty(n)
    e_leak = np.empty(n)
    cap = np.empty(n)
    for lay in spec.layers:
        cells = spec.cells_of(lay.name)
        g_leak[cells.start:cells.stop] = lay.soma.g_leak
        e_leak[cells.start:cells.stop] = lay.soma.e_leak
        cap[cells.start:cells.stop] = lay.soma.capacitance

    i_stim = instance.bias_na.copy()
    stim_cells = spec.cells_of(spec.stimulus.layer)
    i_stim[stim_cells.start:stim_cells.stop] += spec.stimulus.amplitude_na

    clamp_mask = np.zeros(n, dtype=bool)
    clamp_value = np.zeros(n)
    for cell, v in regime.v_node.items():
        if not 0 <= cell < n:
            raise InterventionError(f"clamp on unknown cell {cell}")
        clamp_mask[cell] = True
        clamp_value[cell] = float(v)

    nsteps = int(round(t_ms / dt_ms))
    traces, ok = kernels.integrate_layered(
        e_leak.copy(), np.zeros(nsyn), instance.syn_pre, instance.syn_post,
        g_signed, thr, slope, tau, e_rev, g_leak, e_leak, cap, i_stim,
        clamp_mask, clamp_value, dt_ms, nsteps)
    if not ok:
        step = traces.shape[0]
        worst = int(np.argmax(np.abs(traces[-1])))
        raise SimulationUnstable(
            f"|v| exceeded 500 mV at step {step} (cell {worst}, "
            f"v={traces[-1, worst]:.1f} mV); reduce dt or conductances")
    return LayeredRun(instance=instance, dt_ms=dt_ms, traces=traces)


def simulate_layered(spec: LayeredNetSpec, seed: int, regime=None,
                     t_ms: float = 200.0, dt_ms: float = 0.1) -> LayeredRun:
    """Instantiate (Phase I) and integrate (Phase II) in one call."""
    return integrate(instantiate(spec, seed), regime, t_ms, dt_ms)


# ---------------------------------------------------------------------------
# Spec surgery: twins, calibrated pairs, composition sweeps


def _swap(x, a, b):
    if x == a:
        return b
    if x == b:
        return a
    return x


def type_swapped_twin(spec: LayeredNetSpec, layer_name: str, pair: tuple) -> LayeredNetSpec:
    """Swap two type labels of one layer together with every synaptic
    parameter entry that references them (both as pre and post type).

    Applying the swap twice returns the original spec.  With contexts
    (types) unobserved, the twin induces the same trace laws.
    """
    a, b = pair
    layers = []
    for lay in spec.layers:
        if lay.name != layer_name:
            layers.append(lay)
            continue
        if a not in lay.types or b not in lay.types:
            raise PoscmError(f"layer {layer_name} lacks type {a!r} or {b!r}")
        types = {t: lay.types[_swap(t, a, b)] for t in lay.types}
        layers.append(replace(lay, types=types))
    rules = []
    for rule in spec.rules:
        params = {}
        for (tp, tq), sp in rule.params.items():
            kp = _swap(tp, a, b) if rule.pre_layer == layer_name else tp
            kq = _swap(tq, a, b) if rule.post_layer == layer_name else tq
            params[(kp, kq)] = sp
        rules.append(replace(rule, params=params))
    return replace(spec, layers=tuple(layers), rules=tuple(rules),
                   name=spec.name + f"+swap({a},{b})")


def calibrated_density_pair(spec: LayeredNetSpec, pre_layer: str, post_layer: str,
                            block_fraction: float = 0.4):
    """Blocked-but-rescaled twin: connection probability scaled by
    (1 - fraction), conductances scaled by 1/(1 - fraction), so the mean
    synaptic drive per postsynaptic cell matches."""
    if not 0.0 <= block_fraction < 1.0:
        raise PoscmError("block fraction must lie in [0, 1)")
    keep = 1.0 - block_fraction
    rules = []
    for rule in spec.rules:
        if rule.pre_layer == pre_layer and rule.post_layer == post_layer:
            params = {k: replace(sp, g_max=sp.g_max / keep)
                      for k, sp in rule.params.items()}
            rules.append(replace(rule, prob=rule.prob * keep, params=params))
        else:
            rules.append(rule)
    twin = replace(spec, rules=tuple(rules),
                   name=spec.name + f"+blocked({block_fraction})")
    return spec, twin


def scaled_spec(spec: LayeredNetSpec, factor: float) -> LayeredNetSpec:
    """Composition sweep: scale every layer's population size (min 1 cell)."""
    layers = tuple(replace(lay, size=max(1, int(round(lay.size * factor))))
                   for lay in spec.layers)
    return replace(spec, layers=layers, name=spec.name + f"*{factor}")


# ---------------------------------------------------------------------------
# Stock network


def demo_net(name: str = "demo") -> LayeredNetSpec:
    """Five-layer feedforward network at desk scale.

    Sensor cells (PR) get the stimulus; the BC layer mixes two types whose
    response polarity differs via the reversal potential (on-type synapses
    hyperpolarize, off-type depolarize); output cells (RGC) pool BC drive
    with weak relayed inhibition (AC).  Every synapse is an ordinary
    conductance, so integration is unconditionally stable.
    """
    fast = SomaParams(g_leak=0.004, e_leak=-65.0, capacitance=0.04)
    slow = SomaParams(g_leak=0.02, e_leak=-65.0, capacitance=0.2)

    def syn(g, thr, e_rev, slope=10.0):
        return SynapseParams(g_max=g, v_thr=thr, v_slope=slope, tau_syn=10.0,
                             e_rev=e_rev, sign_inverting=False)

    layers = (
        LayerSpec("PR", 12, {"rod": 0.5, "cone": 0.5}, fast),
        LayerSpec("HZ", 4, {"hz": 1.0}, slow),
        LayerSpec("BC", 10, {"on": 0.65, "off": 0.35}, slow),
        LayerSpec("AC", 4, {"aii": 1.0}, slow),
        LayerSpec("RGC", 6, {"gon": 0.5, "goff": 0.5}, slow),
    )
    # The output stage uses a steeper slope (5 mV) so the rectified drive's
    # half-rise sits within a couple of mV of the configured threshold.
    rules = (
        ConnectionRule("PR", "HZ", 0.6, {
            ("rod", "hz"): syn(0.00256, -45.0, 0.0),
            ("cone", "hz"): syn(0.00256, -45.0, 0.0),
        }),
        ConnectionRule("PR", "BC", 0.5, {
            ("cone", "on"): syn(0.00256, -40.0, -75.0),
            ("rod", "on"): syn(0.00256, -40.0, -75.0),
            ("cone", "off"): syn(0.00256, -42.0, 0.0),
            ("rod", "off"): syn(0.00256, -42.0, 0.0),
        }),
        ConnectionRule("HZ", "BC", 0.4, {
            ("hz", "on"): syn(0.001, -45.0, -75.0),
            ("hz", "off"): syn(0.001, -45.0, -75.0),
        }),
        ConnectionRule("BC", "AC", 0.5, {
            ("on", "aii"): syn(0.001, -45.0, 0.0, slope=5.0),
            ("off", "aii"): syn(0.001, -45.0, 0.0, slope=5.0),
        }),
        ConnectionRule("BC", "RGC", 0.5, {
            ("on", "gon"): syn(0.00256, -45.0, 0.0, slope=5.0),
            ("on", "goff"): syn(0.00256, -45.0, 0.0, slope=5.0),
            ("off", "gon"): syn(0.00256, -45.0, 0.0, slope=5.0),
            ("off", "goff"): syn(0.00256, -45.0, 0.0, slope=5.0),
        }),
        ConnectionRule("AC", "RGC", 0.5, {
            ("aii", "gon"): syn(0.0005, -45.0, -75.0, slope=5.0),
            ("aii", "goff"): syn(0.0005, -45.0, -75.0, slope=5.0),
        }),
    )
    return LayeredNetSpec(layers=layers, rules=rules,
                          stimulus=StimulusSpec(0.12, "PR"), name=name)
