"""Feasible allocation policies.

The utilitarian policy is solved as a transportation problem (min-cost flow
over an individual/service bipartite graph) with integerized costs. Among
all utility-maximizing assignments it deterministically returns the
lexicographically least one, recovered from LP duals: any optimal assignment
uses only zero-reduced-cost arcs and saturates every service with a strictly
negative price, so a greedy first-fit with a Hall-type feasibility check
walks straight to the lexicographic minimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._rng import generator, spawn_seed
from .core import Allocation, CapacityVector, Population
from .errors import InfeasibleError

DEFAULT_TIE_BREAK_SCALE = 1e7

#: A policy realized as a callable: (population, capacities, seed) -> Allocation.
Allocator = Callable[[Population, CapacityVector, int], Allocation]

KIND_UTILITARIAN = "utilitarian"
KIND_RANDOM = "random"
KIND_MIXTURE = "mixture"
KIND_BEST = "assign-best-ignoring-capacity"
KIND_WORST = "assign-worst-ignoring-capacity"
KINDS = (KIND_UTILITARIAN, KIND_RANDOM, KIND_MIXTURE, KIND_BEST, KIND_WORST)

# Hall-style subset enumeration is exponential in K; beyond this many services
# tie resolution falls back to an LP feasibility probe per candidate.
_MAX_SUBSET_K = 12


@dataclass(frozen=True)
class PolicySpec:
    """Declarative policy description; ``mixture`` composes two child specs.

    ``seed`` pins the policy's random stream; when None, the seed supplied at
    allocation time is used (mixtures derive child seeds from their own).
    """

    kind: str
    seed: int | None = None
    lam: float | None = None
    children: tuple["PolicySpec", "PolicySpec"] | None = None
    tie_break_scale: float = DEFAULT_TIE_BREAK_SCALE

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == KIND_MIXTURE:
            if self.lam is None or not (0.0 <= self.lam <= 1.0):
                raise ValueError("mixture requires lambda in [0, 1]")
            if self.children is None or len(self.children) != 2:
                raise ValueError("mixture requires exactly two child specs")
            object.__setattr__(self, "children", tuple(self.children))
        elif self.lam is not None or self.children is not None:
            raise ValueError(f"{self.kind} takes neither lambda nor children")

    def describe(self) -> str:
        if self.kind == KIND_MIXTURE:
            a, b = self.children
            return f"mixture({self.lam:g}, {a.describe()}, {b.describe()})"
        return self.kind

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.seed is not None:
            out["seed"] = self.seed
        if self.kind == KIND_MIXTURE:
            out["lambda"] = self.lam
            out["children"] = [c.to_dict() for c in self.children]
        if self.kind == KIND_UTILITARIAN and self.tie_break_scale != DEFAULT_TIE_BREAK_SCALE:
            out["tie_break_scale"] = self.tie_break_scale
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PolicySpec":
        children = data.get("children")
        return cls(
            kind=data["kind"],
            seed=data.get("seed"),
            lam=data.get("lambda"),
            children=None if children is None else tuple(cls.from_dict(c) for c in children),
            tie_break_scale=data.get("tie_break_scale", DEFAULT_TIE_BREAK_SCALE),
        )


def _check_instance(pop: Population, caps: CapacityVector):
    if caps.k != pop.k:
        raise ValueError("capacity vector length must equal the number of services")
    if caps.total < pop.n:
        raise InfeasibleError(f"infeasible: total capacity {caps.total} < population {pop.n}")


def allocate_best(pop: Population) -> Allocation:
    """Everyone gets their highest-utility service, ignoring capacities."""
    return Allocation(np.argmax(pop.utilities, axis=1) + 1)


def allocate_worst(pop: Population) -> Allocation:
    """Everyone gets their lowest-utility service, ignoring capacities."""
    return Allocation(np.argmin(pop.utilities, axis=1) + 1)


def allocate_random(pop: Population, caps: CapacityVector, seed: int) -> Allocation:
    """Uniform random feasible allocation.

    Builds the multiset holding ``c_k`` copies of each service, shuffles it
    with the seeded generator, and hands the first N slots to individuals
    1..N. Identical seeds produce identical allocations.
    """
    _check_instance(pop, caps)
    slots = np.repeat(np.arange(1, pop.k + 1, dtype=np.int64), caps.capacities)
    gen = generator(seed)
    return Allocation(slots[gen.permutation(slots.size)][: pop.n])


def _subset_sums(values: np.ndarray, n_subsets: int) -> np.ndarray:
    """sums[S] = sum of values[k] over services k in bitmask S."""
    sums = np.zeros(n_subsets, dtype=np.int64)
    for s in range(1, n_subsets):
        low = s & -s
        sums[s] = sums[s ^ low] + values[low.bit_length() - 1]
    return sums


def _completion_feasible_hall(counts: dict[int, int], lo: np.ndarray, hi: np.ndarray, k: int) -> bool:
    """Feasibility of assigning the remaining individuals (counted by allowed-set
    bitmask) so every service fill lands in [lo, hi]. Hall/Hoffman conditions,
    enumerated over service subsets."""
    n_subsets = 1 << k
    confined = np.zeros(n_subsets, dtype=np.int64)
    for mask, cnt in counts.items():
        confined[mask] += cnt
    for bit in range(k):
        step = 1 << bit
        for s in range(n_subsets):
            if s & step:
                confined[s] += confined[s ^ step]
    total = int(confined[n_subsets - 1])
    hi_sums = _subset_sums(hi, n_subsets)
    lo_sums = _subset_sums(lo, n_subsets)
    full = n_subsets - 1
    for s in range(n_subsets):
        if confined[s] > hi_sums[s]:
            return False
        if lo_sums[s] > total - confined[full ^ s]:
            return False
    return True


def _completion_feasible_lp(counts: dict[int, int], lo: np.ndarray, hi: np.ndarray, k: int) -> bool:
    """LP feasibility probe for the same question; used when K is too large for
    subset enumeration. The constraint polytope is integral, so LP emptiness
    decides integral feasibility."""
    masks = sorted(counts)
    if not masks:
        return bool(np.all(lo <= 0))
    arcs = [(mi, kk) for mi, m in enumerate(masks) for kk in range(k) if m >> kk & 1]
    nv = len(arcs)
    a_eq = sparse.csr_matrix(
        (np.ones(nv), ([mi for mi, _ in arcs], np.arange(nv))), shape=(len(masks), nv)
    )
    a_sv = sparse.csr_matrix(
        (np.ones(nv), ([kk for _, kk in arcs], np.arange(nv))), shape=(k, nv)
    )
    res = linprog(
        np.zeros(nv),
        A_ub=sparse.vstack([a_sv, -a_sv]),
        b_ub=np.concatenate([hi.astype(float), -lo.astype(float)]),
        A_eq=a_eq,
        b_eq=np.array([counts[m] for m in masks], dtype=float),
        bounds=(0, None),
        method="highs",
    )
    return res.status == 0


def _lex_least_allowed(allowed: np.ndarray, caps: np.ndarray, mandatory: np.ndarray) -> np.ndarray:
    """Lexicographically least assignment using only allowed (i, k) pairs with
    service fills in [mandatory_k, caps_k]. Assumes at least one such
    assignment exists."""
    n, k = allowed.shape
    feasible = _completion_feasible_hall if k <= _MAX_SUBSET_K else _completion_feasible_lp
    masks = allowed @ (1 << np.arange(k, dtype=np.int64))
    counts: dict[int, int] = {}
    for m in masks.tolist():
        counts[m] = counts.get(m, 0) + 1

    assigned = np.zeros(k, dtype=np.int64)
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        m = int(masks[i])
        counts[m] -= 1
        if counts[m] == 0:
            del counts[m]
        if m & (m - 1) == 0:  # single allowed service: forced
            kk = m.bit_length() - 1
            assigned[kk] += 1
            out[i] = kk + 1
            continue
        placed = False
        for kk in range(k):
            if not (m >> kk & 1) or assigned[kk] >= caps[kk]:
                continue
            assigned[kk] += 1
            lo_rem = np.maximum(mandatory - assigned, 0)
            hi_rem = caps - assigned
            if feasible(counts, lo_rem, hi_rem, k):
                out[i] = kk + 1
                placed = True
                break
            assigned[kk] -= 1
        if not placed:
            raise RuntimeError("internal: no feasible completion during tie resolution")
    return out


def allocate_utilitarian(
    pop: Population,
    caps: CapacityVector,
    tie_break_scale: float = DEFAULT_TIE_BREAK_SCALE,
) -> Allocation:
    """Feasible allocation maximizing total utility.

    Utilities are integerized as round(u * tie_break_scale); utilities that
    differ by less than 1/tie_break_scale may therefore tie. Among optimal
    assignments, returns the lexicographically least vector (individual 1's
    service first). Deterministic.

    Raises:
        InfeasibleError: if total capacity is below the population size.
    """
    _check_instance(pop, caps)
    n, k = pop.n, pop.k
    cost = -np.round(pop.utilities * tie_break_scale)
    if not np.all(np.isfinite(cost)) or np.abs(cost).max() >= 2**53:
        raise ValueError("tie_break_scale too large for these utilities")

    nv = n * k
    cols = np.arange(nv)
    a_eq = sparse.csr_matrix(
        (np.ones(nv), (np.repeat(np.arange(n), k), cols)), shape=(n, nv)
    )
    a_ub = sparse.csr_matrix((np.ones(nv), (np.tile(np.arange(k), n), cols)), shape=(k, nv))
    res = linprog(
        cost.ravel(),
        A_ub=a_ub,
        b_ub=caps.capacities.astype(np.float64),
        A_eq=a_eq,
        b_eq=np.ones(n),
        bounds=(0, None),
        method="highs",
    )
    if res.status == 2:
        raise InfeasibleError("infeasible: no assignment satisfies the capacities")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed with status {res.status}: {res.message}")

    # Costs are integers, so an optimal basis has integer duals; rounding
    # removes solver noise and makes the reduced costs exact.
    pi = np.round(res.eqlin.marginals)
    sigma = np.round(res.ineqlin.marginals)
    rc = cost - pi[:, None] - sigma[None, :]
    support = res.x.reshape(n, k) > 0.5
    if rc.min() < 0 or np.any(rc[support] != 0) or sigma.max() > 0:
        raise RuntimeError("internal: LP duals failed the integrality check")

    mandatory = np.where(sigma < 0, caps.capacities, 0)
    assignment = _lex_least_allowed(rc == 0, caps.capacities.copy(), mandatory)
    alloc = Allocation(assignment)

    total_cost = float(cost[np.arange(n), assignment - 1].sum())
    if abs(total_cost - res.fun) > 0.5 or not alloc.is_feasible(pop, caps):
        raise RuntimeError("internal: tie resolution lost optimality or feasibility")
    return alloc


def allocate_mixture(
    pop: Population,
    caps: CapacityVector,
    lam: float,
    alloc_a: Allocator,
    alloc_b: Allocator,
    seed: int,
) -> Allocation:
    """Lambda-mixture of two policies.

    A seeded shuffle splits the individuals into parts of size
    round(lam * N) and the rest. The first part receives floor(lam * c_k)
    units of each service; when rounding leaves that part short, it borrows
    one unit per service in index order (cycling) from the second part until
    its sub-problem is feasible. Each part is then allocated by its child
    policy with a seed derived from ``seed``.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    _check_instance(pop, caps)
    n, k = pop.n, pop.k

    n_a = int(np.floor(lam * n + 0.5 + 1e-9))  # round half up
    gen = generator(seed, stream=0)
    perm = gen.permutation(n)
    idx_a = np.sort(perm[:n_a])
    idx_b = np.sort(perm[n_a:])

    caps_a = np.floor(lam * caps.capacities + 1e-9).astype(np.int64)
    caps_b = caps.capacities - caps_a
    while caps_a.sum() < n_a:
        borrowed = False
        for kk in range(k):
            if caps_a.sum() >= n_a:
                break
            if caps_b[kk] > 0:
                caps_a[kk] += 1
                caps_b[kk] -= 1
                borrowed = True
        if not borrowed:
            raise InfeasibleError("infeasible: split repair exhausted capacity")
    if caps_b.sum() < n - n_a:
        raise InfeasibleError("infeasible after split repair")

    assignment = np.zeros(n, dtype=np.int64)
    for idx, sub_caps, child, stream in (
        (idx_a, caps_a, alloc_a, 1),
        (idx_b, caps_b, alloc_b, 2),
    ):
        if idx.size == 0:
            continue
        sub = child(pop.subset(idx), CapacityVector(sub_caps), spawn_seed(seed, stream))
        assignment[idx] = sub.assignment
    alloc = Allocation(assignment)
    if not alloc.is_feasible(pop, caps):
        # a child that ignores capacities can overflow the shared budget
        raise InfeasibleError("infeasible: mixture children exceeded the capacities")
    return alloc


def compile_spec(spec: PolicySpec) -> Allocator:
    """Turn a PolicySpec into a callable allocator.

    Specs with an explicit ``seed`` pin their stream regardless of the seed
    passed at call time.
    """
    if spec.kind == KIND_MIXTURE:
        child_a, child_b = (compile_spec(c) for c in spec.children)

    def run(pop: Population, caps: CapacityVector, seed: int) -> Allocation:
        s = spec.seed if spec.seed is not None else seed
        if spec.kind == KIND_UTILITARIAN:
            return allocate_utilitarian(pop, caps, spec.tie_break_scale)
        if spec.kind == KIND_RANDOM:
            return allocate_random(pop, caps, s)
        if spec.kind == KIND_BEST:
            return allocate_best(pop)
        if spec.kind == KIND_WORST:
            return allocate_worst(pop)
        return allocate_mixture(pop, caps, spec.lam, child_a, child_b, s)

    return run


def apply_policy(
    spec: PolicySpec, pop: Population, caps: CapacityVector, seed: int | None = None
) -> Allocation:
    """Allocate ``pop`` under ``spec``; seed precedence: call > spec > 0."""
    effective = seed if seed is not None else (spec.seed if spec.seed is not None else 0)
    return compile_spec(spec)(pop, caps, effective)
