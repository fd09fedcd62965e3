"""Seeded population generators, replicated experiments, and the empirical
verification harnesses for the theory results (identity, interpolation,
sign-flip existence, and the two stylized-framework characterizations).
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np

from ._rng import generator, spawn_seed, standard_normal, uniform_open
from .core import (
    Allocation,
    CapacityVector,
    Population,
    delta_metrics,
    envelope,
)
from .errors import EmptyGroupError, InfeasibleError, NoHeterogeneityError
from .policies import Allocator, PolicySpec, allocate_mixture, compile_spec

GROUP_ATTRIBUTE = "group"
_POLICY_STREAM = 101  # sub-stream tag separating policy seeds from population seeds
_Z95 = 1.96

METRIC_KEYS = ("delta_improvement", "delta_regret", "delta_gain", "delta_shortfall")


def _as_matrix(values, rows: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != rows:
        raise ValueError(f"{name} must be a {rows} x K matrix")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GaussianGroupParams:
    """Two groups whose service utilities are independent normals.

    ``means[s, k]`` and ``variances[s, k]`` parameterize group ``s``'s utility
    for service ``k + 1``. Draws are not clamped; multiplicative metrics are
    automatically unavailable for populations containing a draw <= 0.
    """

    means: np.ndarray
    variances: np.ndarray
    group_sizes: tuple[int, int]
    capacities: CapacityVector
    attribute: str = GROUP_ATTRIBUTE

    def __post_init__(self):
        object.__setattr__(self, "means", _as_matrix(self.means, 2, "means"))
        object.__setattr__(self, "variances", _as_matrix(self.variances, 2, "variances"))
        object.__setattr__(self, "group_sizes", tuple(int(v) for v in self.group_sizes))
        if self.variances.shape != self.means.shape:
            raise ValueError("means and variances must have matching shapes")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")
        if min(self.group_sizes) < 1:
            raise ValueError("both groups need at least one individual")

    @property
    def k(self) -> int:
        return self.means.shape[1]

    def sample(self, seed: int) -> Population:
        gen = generator(seed)
        n0, n1 = self.group_sizes
        labels = np.repeat(np.array([0, 1], dtype=np.int8), [n0, n1])
        mu = np.repeat(self.means, [n0, n1], axis=0)
        sd = np.repeat(np.sqrt(self.variances), [n0, n1], axis=0)
        utilities = mu + sd * standard_normal(gen, (n0 + n1, self.k))
        return Population(utilities=utilities, groups={self.attribute: labels})


def _stratified_vectors(
    gen: np.random.Generator, u_min: np.ndarray, u_max: np.ndarray, k: int
) -> np.ndarray:
    """Utility vectors holding u_min and u_max plus stratified interior draws,
    randomly permuted per individual so no service index is systematically
    better. The construction depends on (u_min, u_max) only, which is what
    makes the stylized frameworks' conditional-homogeneity assumptions hold."""
    n = u_min.size
    cols = [u_min]
    if k > 2:
        spread = (u_max - u_min) / (k - 2)
        for j in range(k - 2):
            cols.append(u_min + (j + uniform_open(gen, n)) * spread)
    cols.append(u_max)
    return gen.permuted(np.column_stack(cols), axis=1)


@dataclass(frozen=True)
class SF1Params:
    """Stylized framework where heterogeneity lives in r = u_min / u_max.

    Type A individuals have ratio ``r_high``, type B ratio ``r_low``;
    ``pi0``/``pi1`` are the type-B proportions per group. u_max is uniform on
    ``u_max_range`` and the conditional construction is shared across groups
    and types.
    """

    r_high: float
    r_low: float
    pi0: float
    pi1: float
    group_sizes: tuple[int, int]
    capacities: CapacityVector
    u_max_range: tuple[float, float] = (1.0, 2.0)
    k: int = 3
    attribute: str = GROUP_ATTRIBUTE
    type_attribute: str = "type_b"

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(v) for v in self.group_sizes))
        object.__setattr__(self, "u_max_range", tuple(float(v) for v in self.u_max_range))
        if not 0.0 < self.r_low < self.r_high <= 1.0:
            raise ValueError("require 0 < r_low < r_high <= 1")
        if not (0.0 <= self.pi0 <= 1.0 and 0.0 <= self.pi1 <= 1.0):
            raise ValueError("type proportions must lie in [0, 1]")
        if self.u_max_range[0] <= 0 or self.u_max_range[1] < self.u_max_range[0]:
            raise ValueError("u_max_range must be a positive interval")
        if self.k < 2:
            raise ValueError("need at least two services")
        if min(self.group_sizes) < 1:
            raise ValueError("both groups need at least one individual")

    def sample(self, seed: int) -> Population:
        gen = generator(seed)
        n0, n1 = self.group_sizes
        labels = np.repeat(np.array([0, 1], dtype=np.int8), [n0, n1])
        pi = np.where(labels == 1, self.pi1, self.pi0)
        type_b = (uniform_open(gen, n0 + n1) < pi).astype(np.int8)
        lo, hi = self.u_max_range
        u_max = lo + (hi - lo) * uniform_open(gen, n0 + n1)
        ratio = np.where(type_b == 1, self.r_low, self.r_high)
        utilities = _stratified_vectors(gen, ratio * u_max, u_max, self.k)
        return Population(
            utilities=utilities,
            groups={self.attribute: labels, self.type_attribute: type_b},
        )


@dataclass(frozen=True)
class SF2Params:
    """Stylized framework where heterogeneity lives in the level of u_min.

    Type C individuals have u_min = ``u_low``, type D u_min = ``u_high``;
    ``p0``/``p1`` are the type-C proportions per group. The spread above
    u_min is uniform on ``spread_range`` regardless of type.
    """

    u_low: float
    u_high: float
    p0: float
    p1: float
    group_sizes: tuple[int, int]
    capacities: CapacityVector
    spread_range: tuple[float, float] = (0.5, 1.0)
    k: int = 3
    attribute: str = GROUP_ATTRIBUTE
    type_attribute: str = "type_c"

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(v) for v in self.group_sizes))
        object.__setattr__(self, "spread_range", tuple(float(v) for v in self.spread_range))
        if not 0.0 < self.u_low < self.u_high:
            raise ValueError("require 0 < u_low < u_high")
        if not (0.0 <= self.p0 <= 1.0 and 0.0 <= self.p1 <= 1.0):
            raise ValueError("type proportions must lie in [0, 1]")
        if self.spread_range[0] <= 0 or self.spread_range[1] < self.spread_range[0]:
            raise ValueError("spread_range must be a positive interval")
        if self.k < 2:
            raise ValueError("need at least two services")
        if min(self.group_sizes) < 1:
            raise ValueError("both groups need at least one individual")

    def sample(self, seed: int) -> Population:
        gen = generator(seed)
        n0, n1 = self.group_sizes
        labels = np.repeat(np.array([0, 1], dtype=np.int8), [n0, n1])
        p = np.where(labels == 1, self.p1, self.p0)
        type_c = (uniform_open(gen, n0 + n1) < p).astype(np.int8)
        u_min = np.where(type_c == 1, self.u_low, self.u_high)
        lo, hi = self.spread_range
        u_max = u_min + lo + (hi - lo) * uniform_open(gen, n0 + n1)
        utilities = _stratified_vectors(gen, u_min, u_max, self.k)
        return Population(
            utilities=utilities,
            groups={self.attribute: labels, self.type_attribute: type_c},
        )


PopulationParams = GaussianGroupParams | SF1Params | SF2Params


@dataclass(frozen=True)
class MetricEstimate:
    """Mean over replications with a 95% normal-approximation CI."""

    estimate: float
    ci_half_width: float
    replications: int

    def excludes_zero(self) -> bool:
        return abs(self.estimate) > self.ci_half_width

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate,
            "ci95_half_width": self.ci_half_width,
            "replications": self.replications,
        }


@dataclass(frozen=True)
class ExperimentResult:
    """Replicated metric estimates for one population model and policy."""

    policy: str
    attribute: str
    base_seed: int
    replications: int
    metrics: Mapping[str, MetricEstimate | None]
    aux: Mapping[str, MetricEstimate]

    def to_dict(self) -> dict[str, Any]:
        return {
            "policy": self.policy,
            "attribute": self.attribute,
            "base_seed": self.base_seed,
            "replications": self.replications,
            "metrics": {k: (v.to_dict() if v else None) for k, v in self.metrics.items()},
            "aux": {k: v.to_dict() for k, v in self.aux.items()},
        }


def _aggregate(values: Sequence[float | None]) -> MetricEstimate | None:
    defined = np.array([v for v in values if v is not None], dtype=np.float64)
    if defined.size < 2:
        return None
    sd = float(np.std(defined, ddof=1))
    return MetricEstimate(
        estimate=float(np.mean(defined)),
        ci_half_width=_Z95 * sd / float(np.sqrt(defined.size)),
        replications=int(defined.size),
    )


def _replicate_once(
    params: PopulationParams, allocator: Allocator, base_seed: int, rep: int
) -> dict[str, float | None]:
    pop_seed = base_seed + rep
    pop = params.sample(pop_seed)
    alloc = allocator(pop, params.capacities, spawn_seed(pop_seed, _POLICY_STREAM))
    report = delta_metrics(pop, alloc, params.attribute)
    env = envelope(pop)
    g1 = pop.group_mask(params.attribute, 1)
    du_diff = float(np.mean(env.delta_u[g1])) - float(np.mean(env.delta_u[~g1]))
    residual = report.delta_improvement + report.delta_regret - du_diff
    if abs(residual) > 1e-9:
        raise RuntimeError(f"additive-identity violation: residual {residual:g}")
    best = np.argmax(pop.utilities, axis=1) + 1 == alloc.assignment
    return {
        "delta_improvement": report.delta_improvement,
        "delta_regret": report.delta_regret,
        "delta_gain": report.delta_gain,
        "delta_shortfall": report.delta_shortfall,
        "best_service_fraction_group0": float(np.mean(best[~g1])),
        "best_service_fraction_group1": float(np.mean(best[g1])),
        "mean_delta_u_group0": float(np.mean(env.delta_u[~g1])),
        "mean_delta_u_group1": float(np.mean(env.delta_u[g1])),
        "delta_mean_delta_u": du_diff,
    }


def _spec_worker(args) -> dict[str, float | None]:
    params, spec, base_seed, rep = args
    return _replicate_once(params, compile_spec(spec), base_seed, rep)


def default_threads() -> int:
    """Worker count from FAIRALLOC_THREADS (default 1 = serial)."""
    try:
        return max(1, int(os.environ.get("FAIRALLOC_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(
    params: PopulationParams,
    policy: PolicySpec | Allocator,
    replications: int,
    base_seed: int,
    threads: int | None = None,
) -> ExperimentResult:
    """Replicate a policy over freshly sampled populations.

    Replication ``r`` samples its population with seed ``base_seed + r`` and
    derives the policy seed from it, so results are a pure function of
    ``base_seed`` regardless of thread count. Metrics that are undefined in a
    replication (multiplicative metrics when a utility draw is <= 0) are
    aggregated over the remaining replications; the per-metric count is
    reported. The additive identity (improvement delta + regret delta equals
    the group difference in mean max gain) is asserted in every replication.

    Raises:
        ValueError: if ``replications`` < 2.
    """
    if replications < 2:
        raise ValueError("replications must be >= 2")
    threads = default_threads() if threads is None else max(1, threads)

    if isinstance(policy, PolicySpec):
        spec, allocator, label = policy, compile_spec(policy), policy.describe()
    else:
        spec, allocator, label = None, policy, getattr(policy, "__name__", "custom")

    if threads > 1 and spec is not None:
        jobs = [(params, spec, base_seed, r) for r in range(replications)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_spec_worker, jobs))
    else:
        rows = [_replicate_once(params, allocator, base_seed, r) for r in range(replications)]

    def collect(key: str) -> list[float | None]:
        return [row[key] for row in rows]

    metrics = {key: _aggregate(collect(key)) for key in METRIC_KEYS}
    aux_keys = [k for k in rows[0] if k not in METRIC_KEYS]
    aux = {key: _aggregate(collect(key)) for key in aux_keys}
    return ExperimentResult(
        policy=label,
        attribute=params.attribute,
        base_seed=base_seed,
        replications=replications,
        metrics=metrics,
        aux={k: v for k, v in aux.items() if v is not None},
    )


def allocate_group_priority(
    pop: Population, caps: CapacityVector, attribute: str, first_group: int
) -> Allocation:
    """Greedy allocation serving one group first.

    Members of ``first_group`` (in index order) each take their best service
    with remaining capacity, then everyone else does. A deterministic way to
    build a policy that favors the prioritized group on improvement.
    """
    if caps.total < pop.n:
        raise InfeasibleError("infeasible: total capacity below population size")
    mask = pop.group_mask(attribute, first_group)
    order = np.concatenate([np.nonzero(mask)[0], np.nonzero(~mask)[0]])
    remaining = caps.capacities.copy()
    prefs = np.argsort(-pop.utilities, axis=1, kind="stable")
    assignment = np.zeros(pop.n, dtype=np.int64)
    for i in order:
        for k in prefs[i]:
            if remaining[k] > 0:
                remaining[k] -= 1
                assignment[i] = k + 1
                break
    return Allocation(assignment)


def gain_fair_allocator(params: SF1Params, q_high: float = 0.5) -> Allocator:
    """Policy that is gain-fair by construction in the SF1 framework.

    Each individual receives their best service with a type-dependent
    probability (else their worst); the probabilities are calibrated so the
    expected gain is identical for both types, hence for both groups. Under
    it, the equitability delta keeps the sign of pi0 - pi1. Intended for
    harness runs with non-binding capacities.
    """
    boost_high = 1.0 / params.r_high - 1.0
    boost_low = 1.0 / params.r_low - 1.0
    q_a = q_high
    q_b = q_high * boost_high / boost_low

    def run(pop: Population, caps: CapacityVector, seed: int) -> Allocation:
        gen = generator(seed)
        type_b = pop.groups[params.type_attribute] == 1
        q = np.where(type_b, q_b, q_a)
        take_best = uniform_open(gen, pop.n) < q
        assignment = np.where(
            take_best, np.argmax(pop.utilities, axis=1), np.argmin(pop.utilities, axis=1)
        ) + 1
        alloc = Allocation(assignment)
        if not alloc.is_feasible(pop, caps):
            raise InfeasibleError("infeasible: gain-fair harness policy needs slack capacities")
        return alloc

    return run


def _conditional_means(values: np.ndarray, type_mask: np.ndarray) -> tuple[float, float]:
    if not type_mask.any() or type_mask.all():
        raise EmptyGroupError("empty-group: both types must be present")
    return float(np.mean(values[type_mask])), float(np.mean(values[~type_mask]))


def sf1_identity(pop: Population, alloc: Allocation, params: SF1Params) -> dict[str, float]:
    """Empirical SF1 decomposition of the multiplicative deltas.

    Returns actual and predicted gain/equitability deltas, where the
    predictions are (pi0_hat - pi1_hat) times the spread in pooled
    type-conditional means of gain (respectively shortfall).
    """
    env = envelope(pop)
    realized = alloc.realized(pop)
    type_b = pop.groups[params.type_attribute] == 1
    g1 = pop.group_mask(params.attribute, 1)
    pi0_hat = float(np.mean(type_b[~g1]))
    pi1_hat = float(np.mean(type_b[g1]))

    gains = realized / env.u_min
    shortfalls = realized / env.u_max
    gain_low_r, gain_high_r = _conditional_means(gains, type_b)
    short_low_r, short_high_r = _conditional_means(shortfalls, type_b)

    report = delta_metrics(pop, alloc, params.attribute)
    return {
        "pi0_hat": pi0_hat,
        "pi1_hat": pi1_hat,
        "alpha_high": gain_high_r,
        "alpha_low": gain_low_r,
        "delta_gain": report.delta_gain,
        "delta_gain_predicted": (pi0_hat - pi1_hat) * (gain_high_r - gain_low_r),
        "delta_shortfall": report.delta_shortfall,
        "delta_shortfall_predicted": (pi0_hat - pi1_hat) * (short_high_r - short_low_r),
    }


def sf2_identity(pop: Population, alloc: Allocation, params: SF2Params) -> dict[str, float]:
    """Empirical SF2 decomposition of the improvement and gain deltas.

    Predictions use the pooled type-conditional means of realized utility:
    delta improvement ~ (p1-p0) * [(beta_low - u_low) - (beta_high - u_high)]
    and delta gain ~ (p1-p0) * (beta_low/u_low - beta_high/u_high).
    """
    realized = alloc.realized(pop)
    type_c = pop.groups[params.type_attribute] == 1
    g1 = pop.group_mask(params.attribute, 1)
    p0_hat = float(np.mean(type_c[~g1]))
    p1_hat = float(np.mean(type_c[g1]))
    beta_low, beta_high = _conditional_means(realized, type_c)

    report = delta_metrics(pop, alloc, params.attribute)
    return {
        "p0_hat": p0_hat,
        "p1_hat": p1_hat,
        "beta_low": beta_low,
        "beta_high": beta_high,
        "delta_improvement": report.delta_improvement,
        "delta_improvement_predicted": (p1_hat - p0_hat)
        * ((beta_low - params.u_low) - (beta_high - params.u_high)),
        "delta_gain": report.delta_gain,
        "delta_gain_predicted": (p1_hat - p0_hat)
        * (beta_low / params.u_low - beta_high / params.u_high),
    }


@dataclass(frozen=True)
class SignFlipReport:
    """Outcome of the mixture search for conflicting improvement/regret verdicts."""

    found: bool
    lam: float | None
    precondition_delta_u: MetricEstimate
    endpoint_deltas: tuple[float, float]
    evaluations: tuple[dict[str, float], ...]
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "found": self.found,
            "lambda": self.lam,
            "precondition_delta_u": self.precondition_delta_u.to_dict(),
            "endpoint_delta_improvements": list(self.endpoint_deltas),
            "evaluations": list(self.evaluations),
            "message": self.message,
        }


def verify_sign_flip(
    params: PopulationParams,
    replications: int = 40,
    base_seed: int = 0,
    lambda_grid: Sequence[float] | None = None,
    endpoint_a: Allocator | None = None,
    endpoint_b: Allocator | None = None,
) -> SignFlipReport:
    """Search lambda-mixtures for a policy favoring group 1 on improvement
    while favoring group 0 on regret (both CIs excluding zero).

    Defaults mix two greedy policies: one serving group 0 first (improvement
    delta < 0) and one serving group 1 first (> 0). On top of the supplied
    grid, the search adds the lambda suggested by the interpolation argument,
    targeting half the group difference in mean max gain.

    Raises:
        NoHeterogeneityError: when the mean max-gain difference between
            groups is not confidently positive, in which case the additive
            identity pins improvement and regret deltas to opposite signs.
    """
    attr = params.attribute
    if endpoint_a is None:
        endpoint_a = lambda pop, caps, seed: allocate_group_priority(pop, caps, attr, 0)
    if endpoint_b is None:
        endpoint_b = lambda pop, caps, seed: allocate_group_priority(pop, caps, attr, 1)

    du_diffs = []
    for r in range(replications):
        pop = params.sample(base_seed + r)
        env = envelope(pop)
        g1 = pop.group_mask(attr, 1)
        du_diffs.append(float(np.mean(env.delta_u[g1])) - float(np.mean(env.delta_u[~g1])))
    du = _aggregate(du_diffs)
    if du is None or du.estimate - du.ci_half_width <= 0:
        raise NoHeterogeneityError(
            "no-heterogeneity: mean max-gain difference between groups is not positive"
        )

    run_a = run_experiment(params, endpoint_a, replications, base_seed)
    run_b = run_experiment(params, endpoint_b, replications, base_seed)
    delta = run_a.metrics["delta_improvement"].estimate
    delta_prime = run_b.metrics["delta_improvement"].estimate

    grid = [round(float(x), 10) for x in (lambda_grid if lambda_grid is not None else np.arange(0, 1.05, 0.1))]
    if delta < 0.0 < delta_prime:
        # Constructive target: the smaller of half the heterogeneity and half
        # the group-1-favoring endpoint, mapped to its mixture weight.
        target = min(du.estimate / 2.0, delta_prime / 2.0)
        lam_star = (delta_prime - target) / (delta_prime - delta)
        grid.append(round(float(np.clip(lam_star, 0.0, 1.0)), 6))

    evaluations = []
    found_lam = None
    for lam in sorted(set(grid)):
        mixer: Allocator = lambda pop, caps, seed, _l=lam: allocate_mixture(
            pop, caps, _l, endpoint_a, endpoint_b, seed
        )
        res = run_experiment(params, mixer, replications, base_seed)
        mi = res.metrics["delta_improvement"]
        mr = res.metrics["delta_regret"]
        evaluations.append(
            {
                "lambda": lam,
                "delta_improvement": mi.estimate,
                "delta_improvement_ci": mi.ci_half_width,
                "delta_regret": mr.estimate,
                "delta_regret_ci": mr.ci_half_width,
            }
        )
        if mi.estimate - mi.ci_half_width > 0 and mr.estimate - mr.ci_half_width > 0:
            found_lam = lam
            break

    if found_lam is None:
        message = "not found in grid"
        if not (delta < 0.0 < delta_prime):
            message = "endpoint policies do not bracket zero improvement delta"
    else:
        message = f"sign flip at lambda={found_lam:g}"
    return SignFlipReport(
        found=found_lam is not None,
        lam=found_lam,
        precondition_delta_u=du,
        endpoint_deltas=(delta, delta_prime),
        evaluations=tuple(evaluations),
        message=message,
    )


# --- experiment configuration files -----------------------------------------

PRESET_NAMES = ("experiment1", "experiment2")


@dataclass(frozen=True)
class ExperimentConfig:
    """A parameter file: population model, policy, replications, base seed."""

    name: str
    params: PopulationParams
    policy: PolicySpec
    replications: int
    base_seed: int


def params_from_dict(data: Mapping[str, Any]) -> PopulationParams:
    kind = data.get("kind", "gaussian")
    caps = CapacityVector(data["capacities"])
    sizes = tuple(data["group_sizes"])
    if kind == "gaussian":
        return GaussianGroupParams(
            means=data["means"],
            variances=data["variances"],
            group_sizes=sizes,
            capacities=caps,
            attribute=data.get("attribute", GROUP_ATTRIBUTE),
        )
    if kind == "sf1":
        return SF1Params(
            r_high=data["r_high"],
            r_low=data["r_low"],
            pi0=data["pi0"],
            pi1=data["pi1"],
            group_sizes=sizes,
            capacities=caps,
            u_max_range=tuple(data.get("u_max_range", (1.0, 2.0))),
            k=data.get("k", 3),
        )
    if kind == "sf2":
        return SF2Params(
            u_low=data["u_low"],
            u_high=data["u_high"],
            p0=data["p0"],
            p1=data["p1"],
            group_sizes=sizes,
            capacities=caps,
            spread_range=tuple(data.get("spread_range", (0.5, 1.0))),
            k=data.get("k", 3),
        )
    raise ValueError(f"unknown population kind {kind!r}")


def config_from_dict(data: Mapping[str, Any], name: str = "") -> ExperimentConfig:
    return ExperimentConfig(
        name=data.get("name", name),
        params=params_from_dict(data),
        policy=PolicySpec.from_dict(data.get("policy", {"kind": "random"})),
        replications=int(data.get("replications", 100)),
        base_seed=int(data.get("base_seed", 0)),
    )


def load_experiment_config(path_or_preset: str) -> ExperimentConfig:
    """Load an experiment config from a JSON file or a shipped preset name."""
    if path_or_preset in PRESET_NAMES:
        text = resources.files("fairalloc.presets").joinpath(f"{path_or_preset}.json").read_text()
        return config_from_dict(json.loads(text), name=path_or_preset)
    with open(path_or_preset, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh), name=os.path.basename(path_or_preset))


# --- invariant check suite (backs the `check` CLI subcommand) ---------------


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str


def _small_exp1(n_per_group: int = 200) -> GaussianGroupParams:
    cap = (2 * n_per_group) // 3 + 1
    return GaussianGroupParams(
        means=[[0.2, 0.3, 0.4], [0.4, 0.5, 0.63]],
        variances=[[1e-4, 4e-4, 9e-4]] * 2,
        group_sizes=(n_per_group, n_per_group),
        capacities=CapacityVector([cap, cap, cap]),
    )


def _check_additive_identity(seed: int) -> CheckOutcome:
    gen = generator(seed)
    worst = 0.0
    for _ in range(200):
        n = int(gen.integers(2, 60))
        k = int(gen.integers(1, 5))
        utilities = gen.normal(0.0, 1.0, (n, k))
        labels = np.zeros(n, dtype=np.int8)
        labels[int(gen.integers(1, n)) :] = 1
        pop = Population(utilities, {"group": labels})
        alloc = Allocation(gen.integers(1, k + 1, n))
        report = delta_metrics(pop, alloc, "group")
        env = envelope(pop)
        g1 = labels == 1
        du = float(np.mean(env.delta_u[g1])) - float(np.mean(env.delta_u[~g1]))
        worst = max(worst, abs(report.delta_improvement + report.delta_regret - du))
    return CheckOutcome(
        "additive-identity", worst <= 1e-12, f"max |dI + dR - dDU| = {worst:.3e}"
    )


def _check_mixture_interpolation(seed: int) -> CheckOutcome:
    # slack capacities: one child ignores them and must still fit its half
    params = GaussianGroupParams(
        means=[[0.2, 0.3, 0.4], [0.4, 0.5, 0.63]],
        variances=[[1e-4, 4e-4, 9e-4]] * 2,
        group_sizes=(150, 150),
        capacities=CapacityVector([300, 300, 300]),
    )
    reps = 300
    spec_a = PolicySpec("assign-best-ignoring-capacity")
    spec_b = PolicySpec("random")
    run_a = run_experiment(params, spec_a, reps, seed)
    run_b = run_experiment(params, spec_b, reps, seed)
    mix = PolicySpec("mixture", lam=0.5, children=(spec_a, spec_b))
    run_m = run_experiment(params, mix, reps, seed)
    target = 0.5 * (
        run_a.metrics["delta_improvement"].estimate + run_b.metrics["delta_improvement"].estimate
    )
    got = run_m.metrics["delta_improvement"]
    ok = abs(got.estimate - target) <= got.ci_half_width
    return CheckOutcome(
        "mixture-interpolation",
        ok,
        f"mixture dI {got.estimate:.5f} vs midpoint {target:.5f} (ci {got.ci_half_width:.5f})",
    )


def _sf1_params(pi0: float, pi1: float, n: int = 400) -> SF1Params:
    return SF1Params(
        r_high=0.8,
        r_low=0.2,
        pi0=pi0,
        pi1=pi1,
        group_sizes=(n, n),
        capacities=CapacityVector([2 * n] * 3),
    )


def _check_sf1(seed: int) -> CheckOutcome:
    reps = 60
    balanced = _sf1_params(0.5, 0.5)
    res = run_experiment(balanced, PolicySpec("random"), reps, seed)
    dg, ds = res.metrics["delta_gain"], res.metrics["delta_shortfall"]
    ok = abs(dg.estimate) <= 2 * dg.ci_half_width and abs(ds.estimate) <= 2 * ds.ci_half_width
    detail = f"pi0=pi1: |dG|={abs(dg.estimate):.4f}<=2ci={2 * dg.ci_half_width:.4f}"

    skewed = _sf1_params(0.7, 0.3)
    res2 = run_experiment(skewed, gain_fair_allocator(skewed), reps, seed)
    dg2, ds2 = res2.metrics["delta_gain"], res2.metrics["delta_shortfall"]
    gain_fair = abs(dg2.estimate) <= 2 * dg2.ci_half_width
    sign_ok = ds2.estimate - ds2.ci_half_width > 0  # sign(pi0 - pi1) > 0 here
    ok = ok and gain_fair and sign_ok
    detail += f"; calibrated: dG~0 ({dg2.estimate:.4f}), dS={ds2.estimate:.4f}>0"

    # pooled-conditional-mean decomposition, averaged over replications
    resid = []
    allocator = compile_spec(PolicySpec("random"))
    for r in range(reps):
        pop = skewed.sample(seed + r)
        alloc = allocator(pop, skewed.capacities, spawn_seed(seed + r, _POLICY_STREAM))
        ident = sf1_identity(pop, alloc, skewed)
        resid.append(ident["delta_gain"] - ident["delta_gain_predicted"])
    est = _aggregate(resid)
    ok = ok and abs(est.estimate) <= 2 * est.ci_half_width
    detail += f"; decomposition residual {est.estimate:.5f} (ci {est.ci_half_width:.5f})"
    return CheckOutcome("sf1-multiplicative-tradeoff", ok, detail)


def _check_sf2(seed: int) -> CheckOutcome:
    params = SF2Params(
        u_low=0.5,
        u_high=1.5,
        p0=0.7,
        p1=0.3,
        group_sizes=(400, 400),
        capacities=CapacityVector([800] * 3),
    )
    reps = 60
    res = run_experiment(params, PolicySpec("assign-worst-ignoring-capacity"), reps, seed)
    di, dg = res.metrics["delta_improvement"], res.metrics["delta_gain"]
    exact_zero = di.estimate == 0.0 and di.ci_half_width == 0.0 and dg.estimate == 0.0
    detail = f"worst policy: dI={di.estimate}, dG={dg.estimate}"

    resid_i, resid_g = [], []
    allocator = compile_spec(PolicySpec("random"))
    for r in range(reps):
        pop = params.sample(seed + r)
        alloc = allocator(pop, params.capacities, spawn_seed(seed + r, _POLICY_STREAM))
        ident = sf2_identity(pop, alloc, params)
        resid_i.append(ident["delta_improvement"] - ident["delta_improvement_predicted"])
        resid_g.append(ident["delta_gain"] - ident["delta_gain_predicted"])
    est_i, est_g = _aggregate(resid_i), _aggregate(resid_g)
    ok = (
        exact_zero
        and abs(est_i.estimate) <= 2 * est_i.ci_half_width
        and abs(est_g.estimate) <= 2 * est_g.ci_half_width
    )
    detail += (
        f"; residuals dI {est_i.estimate:.5f} (ci {est_i.ci_half_width:.5f}),"
        f" dG {est_g.estimate:.5f} (ci {est_g.ci_half_width:.5f})"
    )
    return CheckOutcome("sf2-normalization-tradeoff", ok, detail)


def _check_sign_flip(seed: int) -> CheckOutcome:
    report = verify_sign_flip(_small_exp1(200), replications=30, base_seed=seed)
    return CheckOutcome("improvement-regret-sign-flip", report.found, report.message)


def run_invariant_checks(base_seed: int = 7) -> list[CheckOutcome]:
    """Run the full empirical verification suite; used by ``fairalloc check``."""
    return [
        _check_additive_identity(base_seed),
        _check_mixture_interpolation(base_seed + 1),
        _check_sf1(base_seed + 2),
        _check_sf2(base_seed + 3),
        _check_sign_flip(base_seed + 4),
    ]
