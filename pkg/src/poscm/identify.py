"""Identification procedures: structure readout, kernel estimation, message
recovery, equivalence testing, and the constructive counterexample builders.

Adjacency is never read off a world directly by the estimators: realized
parent sets are recovered by probing a frozen instance with paired value
interventions and two-sample tests, and every conditioning event of the form
{parents of i = S} goes through that readout.  Context and value readout go
through measurement channels (identity by default).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import batch, core, exact, rng
from .core import Domain, PoscmError
from .interventions import BetaNode, Regime, VEdge, VNode
from .mechanisms import ConstantContext, FiniteContext, IntervalContext
from .stats import (
    EmpiricalLaw,
    TwoSampleResult,
    ks_statistic,
    total_variation,
    two_sample_test,
)


# ---------------------------------------------------------------------------
# Probing-based structure readout


@dataclass
class ProbeProtocol:
    """How to probe a frozen instance for its realized adjacency.

    For a dyad (j, i): for every ordered pair of distinct values from
    ``value_grid[j]`` and every co-clamp assignment (fixing all other
    potential parents of i), compare the induced laws of node i between the
    two settings; the dyad is declared present when any Bonferroni-corrected
    test rejects at ``test_alpha``.
    """

    value_grid: dict
    co_clamps: list
    probes_per_setting: int = 100
    test_alpha: float = 0.01
    correction: str = "bonferroni"

    def __post_init__(self):
        if self.probes_per_setting < 30:
            raise PoscmError("need at least 30 probes per setting")
        if any(len(g) < 2 for g in self.value_grid.values()):
            raise PoscmError("value grids need at least two points per node")
        if self.correction != "bonferroni":
            raise PoscmError("only Bonferroni correction is implemented")

    @staticmethod
    def for_spec(spec, probes_per_setting: int = 100, test_alpha: float = 0.01,
                 max_grid: int = 2) -> "ProbeProtocol":
        """Default protocol: finite domains probe their first labels, real
        domains probe the interval endpoints; one co-clamp at the base value."""
        grid = {}
        base = {}
        for i in range(spec.n):
            dom = spec.value_domain[i]
            if dom.is_finite:
                grid[i] = list(dom.labels[:max_grid])
            else:
                grid[i] = [dom.lo, dom.hi]
            base[i] = grid[i][0]
        return ProbeProtocol(grid, [base], probes_per_setting, test_alpha)


@dataclass
class StructureReadout:
    adjacency: dict              # (j, i) -> 0/1
    p_values: dict               # (j, i) -> smallest corrected p
    flags: list = field(default_factory=list)

    def parent_set(self, i: int) -> frozenset:
        return frozenset(j for (j, t), a in self.adjacency.items() if t == i and a)


def _law_of(samples: np.ndarray, domain: Domain) -> EmpiricalLaw:
    if domain.is_finite:
        vals = samples
        if vals.dtype.kind == "f":
            vals = np.rint(vals).astype(int)
        return EmpiricalLaw.from_labels(vals.tolist())
    return EmpiricalLaw.from_scalars(np.asarray(samples, dtype=float))


def probe_structure(instance: core.Instance, protocol: ProbeProtocol,
                    dyads=None, probe_seed: int = 0) -> StructureReadout:
    """Estimate the instance's realized adjacency by paired value probes.

    Per dyad (j, i): hold every other potential parent of i at a co-clamp,
    move V_j across value pairs, and two-sample-test the induced laws of
    V_i.  Absent edges make the mechanism of i ignore V_j, so the null is
    exact; present edges are detected when the probed pairs are
    edge-faithful at some co-clamp.
    """
    spec = instance.spec
    dyads = list(dyads) if dyads is not None else spec.potential_dyads()
    adjacency = {}
    p_values = {}
    flags = []
    for (j, i) in dyads:
        others = [k for k in spec.potential_parents(i) if k != j]
        pairs = list(itertools.combinations(protocol.value_grid[j], 2))
        n_tests = max(len(pairs) * len(protocol.co_clamps), 1)
        best_p = 1.0
        ran = 0
        for c_idx, co in enumerate(protocol.co_clamps):
            base_ivs = [VNode(k, co[k]) for k in others]
            for p_idx, (v, v2) in enumerate(pairs):
                seed_a = rng.derive_seed(probe_seed, j, i, c_idx, 2 * p_idx)
                seed_b = rng.derive_seed(probe_seed, j, i, c_idx, 2 * p_idx + 1)
                arm_a = instance.probe(Regime(base_ivs + [VNode(j, v)]),
                                       seed_a, protocol.probes_per_setting)[i]
                arm_b = instance.probe(Regime(base_ivs + [VNode(j, v2)]),
                                       seed_b, protocol.probes_per_setting)[i]
                res = two_sample_test(_law_of(arm_a, spec.value_domain[i]),
                                      _law_of(arm_b, spec.value_domain[i]))
                best_p = min(best_p, min(1.0, res.p_value * n_tests))
                ran += 1
        adjacency[(j, i)] = int(best_p < protocol.test_alpha)
        p_values[(j, i)] = best_p
        if ran == 0:
            flags.append((j, i, "no probe settings; reported absent"))
    return StructureReadout(adjacency, p_values, flags)


# ---------------------------------------------------------------------------
# Kernel estimation (population targets, independent instances per sample)


@dataclass
class KernelEstimate:
    target: str
    grid: list
    laws: list                    # EmpiricalLaw per grid point
    n_per: int
    conditioning: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)


def estimate_structure_kernel(spec, j: int, beta_grid, n_per: int,
                              protocol: ProbeProtocol, seed: int = 0) -> KernelEstimate:
    """Empirical law of node j's outgoing edge row under do(beta_j = b).

    Each sample freezes an independent instance under the context
    intervention and reads the row off probing (adjacency stays latent).
    Flags a positivity violation when an empirical dyad marginal hits 0/1.
    """
    targets = [t for t in spec.order if spec.tau[t] > spec.tau[j]]
    dyads = [(j, t) for t in targets]
    laws = []
    flags = []
    for g, b in enumerate(beta_grid):
        regime = Regime([BetaNode(j, b)])
        rows = []
        for r in range(n_per):
            inst = core.freeze_instance(spec, rng.derive_seed(seed, j, g, r), regime)
            readout = probe_structure(inst, protocol, dyads=dyads,
                                      probe_seed=rng.derive_seed(seed, 1, g, r))
            rows.append(tuple(readout.adjacency[(j, t)] for t in targets))
        law = EmpiricalLaw.from_labels(rows)
        laws.append(law)
        for s, t in enumerate(targets):
            marg = sum(c for pat, c in law.counts.items() if pat[s]) / law.n
            if marg in (0.0, 1.0):
                flags.append((b, t, f"empirical marginal {marg} (positivity)"))
    return KernelEstimate(target=f"structure-kernel({j})", grid=list(beta_grid),
                          laws=laws, n_per=n_per,
                          conditioning={"targets": targets}, flags=flags)


def estimate_context_kernel(spec, i: int, parent_set, beta_grid, n_per: int,
                            protocol: ProbeProtocol, seed: int = 0,
                            max_attempt_factor: int = 50,
                            context_channel=None) -> KernelEstimate:
    """Conditional law of beta_i given do(beta_S = b_S) and probed parents = S.

    ``beta_grid`` is a list of dicts {source node: context value} over S.
    Sampling per grid point continues until n_per accepted instances (or the
    attempt budget runs out; the acceptance frequency is recorded).
    """
    S = frozenset(parent_set)
    into_i = [(j, i) for j in spec.potential_parents(i)]
    laws = []
    freqs = []
    flags = []
    for g, b_s in enumerate(beta_grid):
        if set(b_s) != set(S):
            raise PoscmError(f"grid point {b_s} does not cover parent set {sorted(S)}")
        regime = Regime([BetaNode(k, v) for k, v in sorted(b_s.items())])
        got = []
        attempts = 0
        budget = n_per * max_attempt_factor
        while len(got) < n_per and attempts < budget:
            inst = core.freeze_instance(spec, rng.derive_seed(seed, i, g, attempts), regime)
            readout = probe_structure(inst, protocol, dyads=into_i,
                                      probe_seed=rng.derive_seed(seed, 7, g, attempts))
            attempts += 1
            if readout.parent_set(i) != S:
                continue
            b_i = inst.beta[i]
            if context_channel is not None:
                b_i = context_channel([b_i], np.array([[0.5]]))[0]
            got.append(b_i)
        if not got:
            raise PoscmError(f"empty conditioning cell for parents={sorted(S)} at {b_s}")
        if len(got) < n_per:
            flags.append((g, f"only {len(got)}/{n_per} accepted within budget"))
        freqs.append(len(got) / attempts)
        laws.append(_law_of(np.asarray(got), spec.context_domain[i]))
    return KernelEstimate(target=f"context-kernel({i},S={sorted(S)})",
                          grid=list(beta_grid), laws=laws, n_per=n_per,
                          conditioning={"parent_set": sorted(S),
                                        "acceptance_freq": freqs},
                          flags=flags)


def estimate_value_kernel(spec, i: int, parent_set, v_grid, beta_condition,
                          n_per: int, protocol: ProbeProtocol, seed: int = 0,
                          max_attempt_factor: int = 50) -> KernelEstimate:
    """Conditional law of V_i given do(V_S = v_S), context beta_i = b, and
    probed parents = S.

    ``v_grid`` is a list of dicts {source: value} over S.  Every accepted
    instance contributes one fresh probe per grid point, so the estimate
    aggregates mechanism draws across instances (a population kernel).
    """
    S = frozenset(parent_set)
    into_i = [(j, i) for j in spec.potential_parents(i)]
    per_point: list[list] = [[] for _ in v_grid]
    attempts = 0
    accepted = 0
    budget = n_per * max_attempt_factor
    while accepted < n_per and attempts < budget:
        inst = core.freeze_instance(spec, rng.derive_seed(seed, i, 13, attempts), None)
        attempts += 1
        if inst.beta[i] != beta_condition:
            continue
        readout = probe_structure(inst, protocol, dyads=into_i,
                                  probe_seed=rng.derive_seed(seed, 17, attempts))
        if readout.parent_set(i) != S:
            continue
        accepted += 1
        for g, v_s in enumerate(v_grid):
            if set(v_s) != set(S):
                raise PoscmError(f"grid point {v_s} does not cover parent set {sorted(S)}")
            regime = Regime([VNode(k, v) for k, v in sorted(v_s.items())])
            out = inst.probe(regime, rng.derive_seed(seed, 19, attempts, g), 1)[i]
            per_point[g].append(out[0])
    if accepted == 0:
        raise PoscmError(
            f"empty conditioning cell: parents={sorted(S)}, beta={beta_condition!r}")
    flags = []
    if accepted < n_per:
        flags.append(f"only {accepted}/{n_per} accepted within budget")
    laws = [_law_of(np.asarray(col), spec.value_domain[i]) for col in per_point]
    return KernelEstimate(target=f"value-kernel({i},S={sorted(S)},beta={beta_condition!r})",
                          grid=list(v_grid), laws=laws, n_per=accepted,
                          conditioning={"parent_set": sorted(S),
                                        "beta": beta_condition,
                                        "acceptance_freq": accepted / attempts},
                          flags=flags)


# ---------------------------------------------------------------------------
# Message recovery


@dataclass
class MessagePoint:
    v: float
    m_hat: object
    residual: float
    residual_p: float | None
    tied: bool


@dataclass
class MessageRecovery:
    points: list
    tie_tolerance: float
    method: str

    def as_dict(self) -> dict:
        return {p.v: p.m_hat for p in self.points}


def _collect_node(spec, regime, seed, count, node) -> np.ndarray:
    return batch.node_values(spec, regime, seed, count, node)


def _null_distance_quantile(spec, regime, node, n_per, seed, reps: int = 20,
                            q: float = 0.95) -> float:
    """Null quantile of the matching distance at the working sample size:
    distances between independent re-draws under the same regime."""
    dom = spec.value_domain[node]
    ds = []
    for r in range(reps):
        a = _collect_node(spec, regime, rng.derive_seed(seed, 101, r), n_per, node)
        b = _collect_node(spec, regime, rng.derive_seed(seed, 102, r), n_per, node)
        if dom.is_finite:
            ds.append(total_variation(_law_of(a, dom), _law_of(b, dom)))
        else:
            ds.append(ks_statistic(np.asarray(a, float), np.asarray(b, float)))
    return float(np.quantile(ds, q))


def identify_message_route_ab(spec, i: int, j: int, v_grid, clamp_grid,
                              n_per: int, seed: int = 0, co_clamps: dict | None = None,
                              tie_factor: float = 1.5) -> MessageRecovery:
    """Recover the value-message function on a grid by clamp matching.

    Baseline arm per v: do(V_j = v) (plus fixed co-clamps on the other
    potential parents); clamp arms: replace the (j -> i) channel by each
    constant in ``clamp_grid``.  The estimate at v is the clamp whose induced
    law of V_i is closest (KS distance for scalar nodes, total variation for
    finite ones); near-minimizers beyond a contiguous grid neighborhood are
    flagged as an injectivity failure.
    """
    dom = spec.value_domain[i]
    co = [VNode(k, val) for k, val in sorted((co_clamps or {}).items())]
    clamp_laws = []
    for c_idx, m in enumerate(clamp_grid):
        regime = Regime(co + [VEdge(j, i, m)])
        samples = _collect_node(spec, regime, rng.derive_seed(seed, 3, c_idx), n_per, i)
        clamp_laws.append(samples)

    null_regime = Regime(co + [VNode(j, v_grid[0])])
    tie_tol = tie_factor * _null_distance_quantile(spec, null_regime, i, n_per, seed)

    points = []
    for v_idx, v in enumerate(v_grid):
        regime = Regime(co + [VNode(j, v)])
        base = _collect_node(spec, regime, rng.derive_seed(seed, 5, v_idx), n_per, i)
        dists = []
        for samples in clamp_laws:
            if dom.is_finite:
                dists.append(total_variation(_law_of(base, dom), _law_of(samples, dom)))
            else:
                dists.append(ks_statistic(np.asarray(base, float),
                                          np.asarray(samples, float)))
        dists = np.asarray(dists)
        best = int(np.argmin(dists))
        near = np.nonzero(dists <= dists[best] + tie_tol)[0]
        tied = bool(near.size and (near.max() - near.min() + 1 != near.size))
        res = two_sample_test(_law_of(base, dom), _law_of(clamp_laws[best], dom))
        points.append(MessagePoint(v=v, m_hat=clamp_grid[best],
                                   residual=float(dists[best]),
                                   residual_p=res.p_value, tied=tied))
    return MessageRecovery(points=points, tie_tolerance=tie_tol, method="clamp-matching")


def identify_message_route_c(spec, i: int, j: int, clamp_grid, n_blocks: int,
                             seed: int = 0, regime_base=None, tol: float = 1e-9,
                             refine: str = "bisect", max_refine: int = 80) -> MessageRecovery:
    """Pointwise message recovery by paired-world replay.

    Each block replays one exogenous draw under the baseline regime and under
    every clamp; the estimate at the block's realized source value is the
    clamp reproducing the baseline target value within ``tol``.  Blocks where
    the edge is absent are skipped (clamps are no-ops there).  With
    ``refine="bisect"`` and a scalar clamp grid bracketing the match, the
    grid is refined by bisection (valid for aggregators monotone in the
    message); multiple or missing matches are flagged.
    """
    regime_base = regime_base if regime_base is not None else Regime([])
    base_ivs = list(regime_base.interventions)
    grid = [np.atleast_1d(np.asarray(m, dtype=float)) for m in clamp_grid]
    scalar_grid = all(g.shape == (1,) for g in grid)
    if scalar_grid:
        order = np.argsort([g[0] for g in grid])
        grid = [grid[k] for k in order]
    points = []
    for blk in range(n_blocks):
        draw = core.sample_exogenous(spec, seed, blk)
        base = core.generate(spec, draw, regime_base)
        if not base.adjacency.get((j, i), 0):
            continue  # message replacement would be a no-op
        target = float(base.value[i])
        vj = base.value[j]

        def value_at(mvec) -> float:
            reg = Regime(base_ivs + [VEdge(j, i, mvec)])
            return float(core.generate(spec, draw, reg).value[i])

        vals = np.array([value_at(g) for g in grid])
        hits = np.nonzero(np.abs(vals - target) <= tol)[0]
        if hits.size == 1:
            points.append(MessagePoint(vj, float(grid[hits[0]][0]) if scalar_grid
                                       else grid[hits[0]], 0.0, None, False))
            continue
        if hits.size > 1:
            points.append(MessagePoint(vj, float(grid[hits[0]][0]) if scalar_grid
                                       else grid[hits[0]], 0.0, None, True))
            continue
        if not (scalar_grid and refine == "bisect"):
            points.append(MessagePoint(vj, None, float(np.min(np.abs(vals - target))),
                                       None, True))
            continue
        # bracket the sign change of (value - target), then bisect
        diffs = vals - target
        bracket = None
        for k in range(len(grid) - 1):
            if diffs[k] == 0.0 or diffs[k] * diffs[k + 1] < 0:
                bracket = (float(grid[k][0]), float(grid[k + 1][0]))
                break
        if bracket is None:
            points.append(MessagePoint(vj, None, float(np.min(np.abs(diffs))), None, True))
            continue
        lo, hi = bracket
        flo = value_at(np.array([lo])) - target
        m_hat = None
        for _ in range(max_refine):
            mid = 0.5 * (lo + hi)
            fmid = value_at(np.array([mid])) - target
            if abs(fmid) <= tol:
                m_hat = mid
                break
            if flo * fmid <= 0:
                hi = mid
            else:
                lo, flo = mid, fmid
        if m_hat is None:
            m_hat = 0.5 * (lo + hi)
        resid = abs(value_at(np.array([m_hat])) - target)
        points.append(MessagePoint(vj, m_hat, float(resid), None, resid > tol))
    return MessageRecovery(points=points, tie_tolerance=tol, method="paired-replay")


# ---------------------------------------------------------------------------
# Equivalence testing


@dataclass
class EquivalenceVerdict:
    per_regime: list              # (label, {channel: TwoSampleResult (corrected)})
    overall: str                  # "indistinguishable" | "distinguished"
    distinguished_at: tuple | None
    n_tests: int
    alpha: float
    exact_equal: bool | None = None


def _observed_channel_samples(spec, regime, om, seed, count) -> dict:
    """{(symbol, index): sample array} for every observed channel entry."""
    bw = batch.maybe_generate_batch(spec, regime, seed, count)
    out = {}
    if bw is not None:
        obs = batch.observe_batch(bw, om, seed)
        if "A" in obs:
            for d, col in obs["A"].items():
                out[("A", d)] = col
        if "beta" in obs:
            for i in range(spec.n):
                out[("beta", i)] = obs["beta"][:, i]
        if "V" in obs:
            for i in range(spec.n):
                out[("V", i)] = obs["V"][:, i]
        return out
    cols: dict = {}
    for world, ob in core.sample_worlds(spec, regime, om, seed, count):
        if ob.adj_tilde is not None:
            for d, a in ob.adj_tilde.items():
                cols.setdefault(("A", d), []).append(a)
        if ob.beta_tilde is not None:
            for i, b in enumerate(ob.beta_tilde):
                cols.setdefault(("beta", i), []).append(b)
        if ob.value_tilde is not None:
            for i, v in enumerate(ob.value_tilde):
                cols.setdefault(("V", i), []).append(v)
    return {k: np.asarray(v) for k, v in cols.items()}


def _channel_domain(spec, key) -> Domain:
    symbol, idx = key
    if symbol == "A":
        return Domain.finite([0, 1])
    if symbol == "beta":
        return spec.context_domain[idx]
    return spec.value_domain[idx]


def check_equivalence(spec_a, spec_b, regimes, om, n_per: int, alpha: float,
                      seed: int = 0, verify_exact: bool = False,
                      exact_nodes=None) -> EquivalenceVerdict:
    """Statistical equivalence of two models across an intervention family.

    Per regime and per observed channel entry, a two-sample test between the
    induced observation laws (independent seeds per model and regime);
    Bonferroni over all tests.  ``overall`` is "distinguished" iff some
    corrected p-value < alpha.  With ``verify_exact`` the finite-model
    enumeration oracle additionally checks whether the value laws are equal
    to numerical precision (reported, not used for the statistical verdict).
    """
    per_regime = []
    raw: list[tuple] = []
    for r_idx, regime in enumerate(regimes):
        sa = _observed_channel_samples(spec_a, regime, om,
                                       rng.derive_seed(seed, 2 * r_idx), n_per)
        sb = _observed_channel_samples(spec_b, regime, om,
                                       rng.derive_seed(seed, 2 * r_idx + 1), n_per)
        if set(sa) != set(sb):
            raise PoscmError("models expose different observation channels")
        results = {}
        for key in sorted(sa, key=repr):
            # noisy channels can smear finite values; treat as scalar then
            dom = _channel_domain(spec_a, key)
            noisy = (key[0] == "V" and om.channel_value is not None
                     and getattr(om.channel_value, "kind", "") == "gaussian")
            law_dom = Domain.real_interval(-1e18, 1e18) if noisy else dom
            res = two_sample_test(_law_of(sa[key], law_dom), _law_of(sb[key], law_dom))
            results[key] = res
            raw.append((getattr(regime, "label", str(r_idx)), key, res))
        per_regime.append((getattr(regime, "label", str(r_idx)), results))

    n_tests = max(len(raw), 1)
    distinguished_at = None
    best = None
    for label, key, res in raw:
        corrected = min(1.0, res.p_value * n_tests)
        if corrected < alpha and (best is None or corrected < best):
            best = corrected
            distinguished_at = (label, key)
    corrected_regimes = [
        (label, {key: TwoSampleResult(res.statistic,
                                      min(1.0, res.p_value * n_tests), res.method)
                 for key, res in results.items()})
        for (label, results) in per_regime
    ]

    exact_equal = None
    if verify_exact:
        nodes = list(exact_nodes) if exact_nodes is not None else list(range(spec_a.n))
        exact_equal = True
        for regime in regimes:
            la = exact.enumerate_interventional(spec_a, regime, nodes)
            lb = exact.enumerate_interventional(spec_b, regime, nodes)
            support = set(la) | set(lb)
            if any(abs(la.get(k, 0.0) - lb.get(k, 0.0)) > 1e-9 for k in support):
                exact_equal = False
                break

    return EquivalenceVerdict(
        per_regime=corrected_regimes,
        overall="distinguished" if distinguished_at else "indistinguishable",
        distinguished_at=distinguished_at,
        n_tests=n_tests, alpha=alpha, exact_equal=exact_equal)


# ---------------------------------------------------------------------------
# Constructive twins


class _ReparamContext:
    """gamma . phi . gamma^{-1}: pushforward of a context mechanism."""

    def __init__(self, inner, fwd, inv):
        self.inner = inner
        self.fwd = fwd
        self.inv = inv

    @property
    def supports_batch(self) -> bool:
        return getattr(self.inner, "supports_batch", False)

    def __call__(self, parent_ctx, u):
        return self.fwd(self.inner({j: self.inv(b) for j, b in parent_ctx.items()}, u))

    def batch(self, parent_ctx, parent_mask, u):
        ctx = {j: self.inv(np.asarray(b)) for j, b in parent_ctx.items()}
        return self.fwd(np.asarray(self.inner.batch(ctx, parent_mask, u)))

    def pmf(self, parent_ctx):
        inner = self.inner.pmf({j: self.inv(b) for j, b in parent_ctx.items()})
        return {self.fwd(b): p for b, p in inner.items()}


class _ReparamGamma:
    """Mechanism operator precomposed with gamma^{-1} on the context."""

    def __init__(self, inner, inv):
        self.inner = inner
        self.inv = inv

    @property
    def message_capable(self):
        return getattr(self.inner, "message_capable", False)

    @property
    def supports_batch(self):
        return getattr(self.inner, "supports_batch", False)

    def __call__(self, beta, parents, u):
        return self.inner(self.inv(beta), parents, u)

    def batch_eval(self, beta, masks, values, u_mech, u_value, overrides=None):
        return self.inner.batch_eval(self.inv(np.asarray(beta)), masks, values,
                                     u_mech, u_value, overrides=overrides)


def _image_domain(domain: Domain, fwd) -> Domain:
    if domain.is_finite:
        labels = [fwd(x) for x in domain.labels]
        if set(labels) != set(domain.labels):
            raise PoscmError("bijection must permute the finite context labels")
        return domain
    lo, hi = fwd(domain.lo), fwd(domain.hi)
    return Domain.real_interval(min(lo, hi), max(lo, hi))


def reparameterize_context(spec, fwd, inv) -> core.PoscmSpec:
    """Observationally equivalent twin under a context reparameterization.

    Root priors are pushed forward through the bijection, the structure
    kernel and mechanism operator are precomposed with its inverse, and
    interior context mechanisms are conjugated.  Value-level interventional
    laws (with contexts latent) are unchanged; the context coordinates
    themselves differ whenever the bijection is not the identity.

    ``fwd``/``inv`` must be mutually inverse on each context domain and
    accept numpy arrays (vectorized) for the batched path; for real interval
    domains they must be monotone so the interval maps onto an interval.
    """
    for dom in set(spec.context_domain):
        probe = list(dom.labels) if dom.is_finite else \
            list(np.linspace(dom.lo, dom.hi, 7))
        for x in probe:
            back = inv(fwd(x))
            ok = (back == x) if dom.is_finite else math.isclose(back, x, abs_tol=1e-9)
            if not ok:
                raise PoscmError(f"inv(fwd({x!r})) = {back!r}; not a bijection pair")

    def edge_prob(j, i, b):
        return spec.alpha.prob(j, i, inv(b))

    batch_inner = spec.alpha._edge_prob_batch

    def edge_prob_batch(j, i, b):
        return batch_inner(j, i, inv(np.asarray(b)))

    alpha = core.StructureKernel(
        edge_prob,
        edge_prob_batch=edge_prob_batch if batch_inner is not None else None,
        row_sampler=None if spec.alpha.row_sampler is None else _reparam_row(spec, inv))

    return core.PoscmSpec(
        n=spec.n, tau=spec.tau,
        context_domain=tuple(_image_domain(d, fwd) for d in spec.context_domain),
        value_domain=spec.value_domain,
        alpha=alpha,
        phi=tuple(_ReparamContext(p, fwd, inv) for p in spec.phi),
        gamma=tuple(_ReparamGamma(g, inv) for g in spec.gamma),
        beta_noise_arity=spec.beta_noise_arity,
        mech_noise_arity=spec.mech_noise_arity,
        value_noise_arity=spec.value_noise_arity,
        name=(spec.name + "+reparam") if spec.name else "reparameterized",
    )


def _reparam_row(spec, inv):
    inner = spec.alpha.row_sampler

    def row(j, targets, beta_j, u_row):
        return inner(j, targets, inv(beta_j), u_row)

    return row


def calibrated_confounding_pair(p: float, q0: float, q1: float, p_prime: float):
    """The dense-weak / sparse-strong pair matched on node-level laws.

    Solves (1-p')/2 + p' q'_v = (1-p)/2 + p q_v for q'_v; raises when the
    solution leaves (0,1) (the calibration is infeasible there).
    """
    from . import models

    out = {}
    for v, q in ((0, q0), (1, q1)):
        q_prime = ((1.0 - p) / 2.0 + p * q - (1.0 - p_prime) / 2.0) / p_prime
        if not 0.0 < q_prime < 1.0:
            raise PoscmError(
                f"calibrated q'_{v} = {q_prime} outside (0,1); pair infeasible")
        out[v] = q_prime
    return (models.two_node_confounding(p, q0, q1),
            models.two_node_confounding(p_prime, out[0], out[1]))
