"""JSON model and regime descriptions.

Configs never carry code: mechanisms are picked from a registered catalog by
name plus parameters.  Three document kinds:

* ``{"kind": "builtin", "name": ..., "params": {...}}`` — a zoo constructor;
* ``{"kind": "poscm", ...}`` — an explicit model (domains, structure kernel,
  catalog mechanisms per node);
* ``{"kind": "layered", ...}`` — a layered graded-synapse network.

Regime documents are lists of intervention records (see
:func:`regime_from_config`).  World/observation dumps are JSON lines, one
record per replicate (:func:`dump_worlds_jsonl`).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import core, layered as lay, models
from .core import Domain, PoscmError, StructureKernel
from .interventions import BetaEdge, BetaNode, Regime, VEdge, VNode
from .mechanisms import ConstantContext, FiniteContext, IntervalContext
from .messages import (
    BernoulliAggregator,
    KasAggregator,
    KasForm,
    MessageGamma,
    kas_message_fn,
    make_univariate,
)


class ConfigError(PoscmError):
    pass


# ---------------------------------------------------------------------------
# Domains


def domain_from_config(doc) -> Domain:
    if "finite" in doc:
        return Domain.finite(doc["finite"])
    if "interval" in doc:
        lo, hi = doc["interval"]
        return Domain.real_interval(lo, hi)
    raise ConfigError(f"domain needs 'finite' or 'interval': {doc}")


def domain_to_config(dom: Domain) -> dict:
    if dom.is_finite:
        return {"finite": list(dom.labels)}
    return {"interval": [dom.lo, dom.hi]}


# ---------------------------------------------------------------------------
# Structure kernels


def alpha_from_config(doc, n: int) -> StructureKernel:
    if "constant" in doc:
        return StructureKernel.constant(float(doc["constant"]))
    if "table" in doc:
        probs = {(int(e["source"]), int(e["target"])): float(e["prob"])
                 for e in doc["table"]}

        def edge_prob(j, i, b):
            return probs.get((j, i), 0.0)

        def edge_prob_batch(j, i, b):
            return np.full(len(np.atleast_1d(b)), probs.get((j, i), 0.0))

        return StructureKernel(edge_prob, edge_prob_batch)
    if "affine_context" in doc:
        a = float(doc["affine_context"].get("intercept", 0.0))
        b = float(doc["affine_context"].get("slope", 0.0))

        def edge_prob(j, i, beta_j):
            return float(np.clip(a + b * beta_j, 0.0, 1.0))

        def edge_prob_batch(j, i, beta_j):
            return np.clip(a + b * np.asarray(beta_j, dtype=float), 0.0, 1.0)

        return StructureKernel(edge_prob, edge_prob_batch)
    raise ConfigError(f"unknown structure kernel config {doc}")


# ---------------------------------------------------------------------------
# Mechanism catalog


def _phi_from_config(doc):
    name = doc["name"]
    params = doc.get("params", {})
    if name == "constant":
        return ConstantContext(params["value"])
    if name == "prior":
        return FiniteContext.prior(params["labels"], params["probs"])
    if name == "uniform_interval":
        lo, hi = float(params["lo"]), float(params["hi"])
        return IntervalContext.uniform(lo, hi)
    raise ConfigError(f"unknown context mechanism {name!r}")


def _gamma_from_config(doc, node: int, sources: list):
    name = doc["name"]
    params = doc.get("params", {})
    if name == "coin":
        p = float(params["p"])
        return MessageGamma([], 1, {}, aggregator=BernoulliAggregator(
            lambda msgs, beta, _p=p: _p,
            lambda msgs, beta, _p=p: np.full(msgs.shape[0], _p)))
    if name == "gated_bernoulli":
        src = int(params["source"])
        q0, q1 = float(params["q0"]), float(params["q1"])
        base = float(params.get("base", 0.5))

        def channel(x, _q0=q0, _q1=q1):
            x = np.asarray(x, dtype=float)
            return np.stack([np.ones_like(x), _q0 + (_q1 - _q0) * x], axis=-1)

        channel.message_d = 2
        channels = {src: channel}
        for other in sources:
            if other != src:
                zero = _zero_channel(2)
                channels[other] = zero
        return MessageGamma(sources, 2, channels, aggregator=BernoulliAggregator(
            lambda msgs, beta, _b=base: (1.0 - msgs[0, sources.index(src)]) * _b
            + msgs[1, sources.index(src)],
            lambda msgs, beta, _b=base: (1.0 - msgs[:, 0, sources.index(src)]) * _b
            + msgs[:, 1, sources.index(src)]))
    if name == "kas":
        lambdas = {int(k): float(v) for k, v in params["lambdas"].items()}
        form = KasForm(
            outer=make_univariate(params["Psi"]["name"], **params["Psi"].get("params", {})),
            inner=make_univariate(params["psi"]["name"], **params["psi"].get("params", {})),
            eta=float(params.get("eta", 0.0)),
            lambdas=lambdas,
            lambda_u=float(params.get("lambda_u", 0.0)),
            m=len(sources),
        )
        channels = {}
        for j in sources:
            if j in lambdas:
                channels[j] = kas_message_fn(form, j)
            else:
                channels[j] = _zero_channel(form.d)
        return MessageGamma(sources, form.d, channels, aggregator=KasAggregator(form))
    raise ConfigError(f"unknown value mechanism {name!r}")


def _zero_channel(d: int):
    def fn(x):
        x = np.asarray(x)
        return np.zeros(x.shape + (d,))

    fn.message_d = d
    return fn


def kas_to_config(form: KasForm) -> dict:
    return {"name": "kas", "params": {
        "psi": {"name": form.inner.name, "params": form.inner.params},
        "Psi": {"name": form.outer.name, "params": form.outer.params},
        "eta": form.eta,
        "lambdas": {str(k): v for k, v in form.lambdas.items()},
        "lambda_u": form.lambda_u,
    }}


# ---------------------------------------------------------------------------
# Models


_BUILTINS = {
    "two_node_confounding": models.two_node_confounding,
    "distributive_toy": models.distributive_toy,
    "four_node_discrete": models.four_node_discrete,
    "random_discrete_poscm": models.random_discrete_poscm,
    "demo_net": lay.demo_net,
}


def model_from_config(doc):
    """Build a model from a config document (dict, JSON string, or path)."""
    if isinstance(doc, (str, Path)):
        path = Path(doc)
        doc = json.loads(path.read_text())
    kind = doc.get("kind")
    if kind == "builtin":
        name = doc["name"]
        if name not in _BUILTINS:
            raise ConfigError(f"unknown builtin model {name!r}")
        return _BUILTINS[name](**doc.get("params", {}))
    if kind == "poscm":
        n = int(doc["n"])
        tau = tuple(doc.get("tau", range(n)))
        ctx = tuple(domain_from_config(d) for d in doc["context_domains"])
        val = tuple(domain_from_config(d) for d in doc["value_domains"])
        order = sorted(range(n), key=lambda i: tau[i])
        gammas = tuple(
            _gamma_from_config(d, i, [j for j in order if tau[j] < tau[i]])
            for i, d in enumerate(doc["gamma"]))
        return core.PoscmSpec(
            n=n, tau=tau, context_domain=ctx, value_domain=val,
            alpha=alpha_from_config(doc["alpha"], n),
            phi=tuple(_phi_from_config(d) for d in doc["phi"]),
            gamma=gammas,
            name=doc.get("name", "config-poscm"))
    if kind == "layered":
        return layered_from_config(doc)
    raise ConfigError(f"model config needs kind builtin/poscm/layered, got {kind!r}")


def layered_from_config(doc) -> lay.LayeredNetSpec:
    layers = []
    for d in doc["layers"]:
        soma = d["soma"]
        layers.append(lay.LayerSpec(
            d["name"], int(d["size"]), dict(d["types"]),
            lay.SomaParams(float(soma["g_leak"]), float(soma["e_leak"]),
                           float(soma["capacitance"]))))
    rules = []
    for d in doc["rules"]:
        params = {}
        for e in d["params"]:
            params[(e["pre_type"], e["post_type"])] = lay.SynapseParams(
                g_max=float(e["g_max"]), v_thr=float(e["v_thr"]),
                v_slope=float(e["v_slope"]), tau_syn=float(e["tau_syn"]),
                e_rev=float(e["e_rev"]),
                sign_inverting=bool(e.get("sign_inverting", False)))
        rules.append(lay.ConnectionRule(d["pre"], d["post"], float(d["prob"]), params))
    stim = doc["stimulus"]
    return lay.LayeredNetSpec(
        layers=tuple(layers), rules=tuple(rules),
        stimulus=lay.StimulusSpec(float(stim["amplitude_na"]), stim["layer"]),
        within_layer_noise_na=float(doc.get("within_layer_noise_na", 0.0)),
        name=doc.get("name", "config-layered"))


def layered_to_config(spec: lay.LayeredNetSpec) -> dict:
    return {
        "kind": "layered",
        "name": spec.name,
        "layers": [{
            "name": l.name, "size": l.size, "types": dict(l.types),
            "soma": {"g_leak": l.soma.g_leak, "e_leak": l.soma.e_leak,
                     "capacitance": l.soma.capacitance},
        } for l in spec.layers],
        "rules": [{
            "pre": r.pre_layer, "post": r.post_layer, "prob": r.prob,
            "params": [{
                "pre_type": tp, "post_type": tq, "g_max": sp.g_max,
                "v_thr": sp.v_thr, "v_slope": sp.v_slope, "tau_syn": sp.tau_syn,
                "e_rev": sp.e_rev, "sign_inverting": sp.sign_inverting,
            } for (tp, tq), sp in r.params.items()],
        } for r in spec.rules],
        "stimulus": {"amplitude_na": spec.stimulus.amplitude_na,
                     "layer": spec.stimulus.layer},
        "within_layer_noise_na": spec.within_layer_noise_na,
    }


# ---------------------------------------------------------------------------
# Regimes


_REPLACEMENTS = {
    "copy_channel": models.copy_edge_replacement,
}


def regime_from_config(doc, label: str = "") -> Regime:
    """Build a regime from a list of intervention records.

    Records: {"type": "beta-node"|"v-node", "node": j, "value": x} or
    {"type": "beta-edge"|"v-edge", "source": s, "target": t, ...} where the
    edge payload is one of "clamp" (a constant message), "conductance" (a
    number, layered networks), or "replacement" (a catalog name).
    """
    ivs = []
    for rec in doc:
        t = rec.get("type")
        if t == "beta-node":
            ivs.append(BetaNode(int(rec["node"]), rec["value"]))
        elif t == "v-node":
            ivs.append(VNode(int(rec["node"]), rec["value"]))
        elif t in ("beta-edge", "v-edge"):
            if "clamp" in rec:
                repl = np.asarray(rec["clamp"], dtype=float)
            elif "conductance" in rec:
                repl = float(rec["conductance"])
            elif "replacement" in rec:
                name = rec["replacement"]
                if name not in _REPLACEMENTS:
                    raise ConfigError(f"unknown replacement {name!r}")
                repl = _REPLACEMENTS[name]()
            else:
                raise ConfigError(f"edge intervention needs clamp/conductance/"
                                  f"replacement: {rec}")
            cls = BetaEdge if t == "beta-edge" else VEdge
            ivs.append(cls(int(rec["source"]), int(rec["target"]), repl))
        else:
            raise ConfigError(f"unknown intervention type {t!r}")
    return Regime(ivs, label=label)


# ---------------------------------------------------------------------------
# World dumps


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def dump_worlds_jsonl(spec, regime, om, seed: int, count: int, path) -> int:
    """Write one JSON record per replicate: realized world plus observation."""
    path = Path(path)
    written = 0
    with path.open("w") as fh:
        for world, obs in core.sample_worlds(spec, regime, om, seed, count):
            rec = {
                "replicate": world.draw.replicate,
                "adjacency": {f"{j}->{i}": int(a) for (j, i), a in
                              sorted(world.adjacency.items())},
                "beta": [_jsonable(b) for b in world.beta],
                "value": [_jsonable(v) for v in world.value],
            }
            if obs is not None:
                rec["observation"] = {
                    "adj": None if obs.adj_tilde is None else
                    {f"{j}->{i}": _jsonable(a) for (j, i), a in sorted(obs.adj_tilde.items())},
                    "beta": None if obs.beta_tilde is None else
                    [_jsonable(b) for b in obs.beta_tilde],
                    "value": None if obs.value_tilde is None else
                    [_jsonable(v) for v in obs.value_tilde],
                }
            fh.write(json.dumps(rec) + "\n")
            written += 1
    return written


def load_worlds_jsonl(path) -> list:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line]
