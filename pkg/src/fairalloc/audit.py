"""Audit real allocation records: ingest a CSV of per-service re-entry
probabilities, derive utilities u = 1 - p, and report group heterogeneity
(max-gain distributions, Welch tests, best-service shares) together with the
fairness verdicts of the observed assignment.

The observed assignment is audited as-is: administrative records define the
realized capacity use, so no feasibility re-check is performed.
"""

from __future__ import annotations

import ast
import csv
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ._io import dump_json, write_text_atomic
from .core import Allocation, FairnessReport, Population, delta_metrics, envelope
from .errors import (
    DataValidationError,
    EmptyGroupError,
    SchemaMismatchError,
)
from .stats import KdeCurve, TTestResult, kde, welch_t

DEFAULT_BANDWIDTH = 0.2
DEFAULT_FAIR_TOLERANCE = 1e-3


@dataclass(frozen=True)
class GroupPair:
    """Two disjoint sub-populations defined by boolean expressions over group
    columns (operators ``&``, ``|``, ``~`` and parentheses)."""

    name: str
    group1: str
    group0: str


@dataclass(frozen=True)
class AuditSchema:
    """Maps service names and group attributes to CSV columns."""

    services: tuple[tuple[str, str], ...]  # (service name, probability column)
    observed_column: str
    group_columns: Mapping[str, str]  # attribute -> column
    pairs: tuple[GroupPair, ...]
    id_column: str = "id"

    @property
    def service_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.services)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AuditSchema":
        services = tuple((s["name"], s["column"]) for s in data["services"])
        pairs = tuple(
            GroupPair(name=p["name"], group1=p["group1"], group0=p["group0"])
            for p in data.get("pairs", [])
        )
        return cls(
            services=services,
            observed_column=data["observed"],
            group_columns=dict(data.get("groups", {})),
            pairs=pairs,
            id_column=data.get("id", "id"),
        )


@dataclass(frozen=True)
class AuditDataset:
    """Validated audit records; utilities are 1 - p, elementwise."""

    ids: tuple[str, ...]
    probabilities: np.ndarray
    observed: np.ndarray  # 1-based service indices
    groups: Mapping[str, np.ndarray]
    service_names: tuple[str, ...]

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        obs = np.array(self.observed, dtype=np.int64)
        obs.setflags(write=False)
        object.__setattr__(self, "observed", obs)
        groups = {}
        for name, vals in dict(self.groups).items():
            g = np.array(vals, dtype=np.int8)
            g.setflags(write=False)
            groups[name] = g
        object.__setattr__(self, "groups", groups)

    @property
    def n(self) -> int:
        return self.probabilities.shape[0]

    @property
    def k(self) -> int:
        return self.probabilities.shape[1]

    @property
    def utilities(self) -> np.ndarray:
        return 1.0 - self.probabilities

    def population(self) -> Population:
        return Population(utilities=self.utilities, groups=self.groups)


def eval_group_expr(expr: str, columns: Mapping[str, np.ndarray]) -> np.ndarray:
    """Evaluate a boolean expression over 0/1 columns; returns a bool mask."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"invalid group expression {expr!r}: {exc}") from None

    def walk(node) -> np.ndarray:
        if isinstance(node, ast.Name):
            if node.id not in columns:
                raise SchemaMismatchError(
                    f"schema-mismatch: unknown attribute {node.id!r} in expression {expr!r}"
                )
            return columns[node.id].astype(bool)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Invert):
            return ~walk(node.operand)
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.BitAnd, ast.BitOr)):
            left, right = walk(node.left), walk(node.right)
            return left & right if isinstance(node.op, ast.BitAnd) else left | right
        raise ValueError(f"unsupported syntax in group expression {expr!r}")

    return walk(tree.body)


def ingest_csv(path: str, schema: AuditSchema, delimiter: str = ",") -> AuditDataset:
    """Read and validate an audit CSV.

    Row-level problems are collected with their 1-based line numbers (the
    header is line 1) and raised together.

    Raises:
        SchemaMismatchError: if the header lacks configured columns.
        DataValidationError: if any row fails validation.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatchError("schema-mismatch: file is empty") from None
        needed = (
            [schema.id_column, schema.observed_column]
            + [col for _, col in schema.services]
            + list(schema.group_columns.values())
        )
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaMismatchError(f"schema-mismatch: missing columns {missing}")
        index = {c: header.index(c) for c in needed}

        ids: list[str] = []
        probs: list[list[float]] = []
        observed: list[int] = []
        groups: dict[str, list[int]] = {attr: [] for attr in schema.group_columns}
        errors: list[str] = []
        label_to_index = {name: i + 1 for i, name in enumerate(schema.service_names)}

        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                errors.append(f"schema-mismatch(line {line}): expected {len(header)} fields")
                continue
            row_ok = True
            p_row = []
            for name, col in schema.services:
                raw = row[index[col]]
                try:
                    value = float(raw)
                except ValueError:
                    value = np.nan
                if not 0.0 <= value <= 1.0:
                    errors.append(f"range-violation(line {line}): {col}={raw!r} not in [0, 1]")
                    row_ok = False
                    break
                p_row.append(value)
            if not row_ok:
                continue
            label = row[index[schema.observed_column]]
            if label not in label_to_index:
                errors.append(f"label-violation(line {line}): unknown service {label!r}")
                continue
            g_row = {}
            for attr, col in schema.group_columns.items():
                raw = row[index[col]]
                if raw not in ("0", "1"):
                    errors.append(f"range-violation(line {line}): {col}={raw!r} must be 0 or 1")
                    row_ok = False
                    break
                g_row[attr] = int(raw)
            if not row_ok:
                continue
            ids.append(row[index[schema.id_column]])
            probs.append(p_row)
            observed.append(label_to_index[label])
            for attr, val in g_row.items():
                groups[attr].append(val)

    if errors:
        raise DataValidationError(errors)
    if not ids:
        raise DataValidationError(["schema-mismatch(line 2): no data rows"])
    return AuditDataset(
        ids=tuple(ids),
        probabilities=np.array(probs, dtype=np.float64),
        observed=np.array(observed, dtype=np.int64),
        groups={attr: np.array(vals, dtype=np.int8) for attr, vals in groups.items()},
        service_names=schema.service_names,
    )


def export_csv(dataset: AuditDataset, path: str, schema: AuditSchema):
    """Write a dataset back in the canonical form ``ingest_csv`` reads.

    Floats are rendered with ``repr`` so a canonical file round-trips byte
    for byte.
    """
    header = (
        [schema.id_column]
        + [col for _, col in schema.services]
        + [schema.observed_column]
        + list(schema.group_columns.values())
    )
    lines = [",".join(header)]
    for i in range(dataset.n):
        row = [dataset.ids[i]]
        row += [repr(float(v)) for v in dataset.probabilities[i]]
        row.append(dataset.service_names[dataset.observed[i] - 1])
        row += [str(int(dataset.groups[attr][i])) for attr in schema.group_columns]
        lines.append(",".join(row))
    write_text_atomic(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class ShareRow:
    """Fraction of a group whose highest utility sits at each service."""

    label: str
    count: int
    shares: tuple[float, ...]

    def to_dict(self, service_names: Sequence[str]) -> dict[str, Any]:
        out: dict[str, Any] = {"group": self.label, "count": self.count}
        out.update({name: share for name, share in zip(service_names, self.shares)})
        return out


def _shares_for_mask(dataset: AuditDataset, mask: np.ndarray, label: str) -> ShareRow:
    count = int(mask.sum())
    if count == 0:
        raise EmptyGroupError(f"empty-group: {label}")
    best = np.argmax(dataset.utilities[mask], axis=1)  # ties go to the lowest index
    counts = np.bincount(best, minlength=dataset.k)
    return ShareRow(label=label, count=count, shares=tuple(float(c) / count for c in counts))


def best_service_shares(dataset: AuditDataset, attribute: str | None = None) -> list[ShareRow]:
    """Best-service share rows; one 'all' row, or one row per attribute value."""
    if attribute is None:
        return [_shares_for_mask(dataset, np.ones(dataset.n, dtype=bool), "all")]
    if attribute not in dataset.groups:
        raise SchemaMismatchError(f"schema-mismatch: unknown attribute {attribute!r}")
    column = dataset.groups[attribute]
    return [
        _shares_for_mask(dataset, column == value, f"{attribute}={value}") for value in (0, 1)
    ]


@dataclass(frozen=True)
class DeltaUAnalysis:
    """Group comparison of the per-household max utility gain."""

    mean_0: float
    mean_1: float
    welch: TTestResult
    kde_0: KdeCurve
    kde_1: KdeCurve

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_delta_u": [self.mean_0, self.mean_1],
            "welch": self.welch.to_dict(),
            "kde": [
                {
                    "grid": curve.grid.tolist(),
                    "density": curve.density.tolist(),
                    "bandwidth": curve.bandwidth,
                }
                for curve in (self.kde_0, self.kde_1)
            ],
        }


def _pair_masks(dataset: AuditDataset, pair: GroupPair) -> tuple[np.ndarray, np.ndarray]:
    mask1 = eval_group_expr(pair.group1, dataset.groups)
    mask0 = eval_group_expr(pair.group0, dataset.groups)
    if np.any(mask0 & mask1):
        raise ValueError(f"pair {pair.name!r}: group expressions overlap")
    for value, mask in ((0, mask0), (1, mask1)):
        if not mask.any():
            raise EmptyGroupError(f"empty-group: pair {pair.name!r} group {value}")
    return mask0, mask1


def pair_from_attribute(attribute: str) -> GroupPair:
    return GroupPair(name=attribute, group1=attribute, group0=f"~{attribute}")


def delta_u_analysis(
    dataset: AuditDataset, pair: GroupPair, bandwidth: float = DEFAULT_BANDWIDTH
) -> DeltaUAnalysis:
    """Means, Welch test, and KDE curves of the max gain for a group pair."""
    mask0, mask1 = _pair_masks(dataset, pair)
    env = envelope(dataset.population())
    du0, du1 = env.delta_u[mask0], env.delta_u[mask1]
    pooled = np.concatenate([du0, du1])
    grid = np.linspace(
        pooled.min() - 3.0 * bandwidth, pooled.max() + 3.0 * bandwidth, 512
    )
    return DeltaUAnalysis(
        mean_0=float(np.mean(du0)),
        mean_1=float(np.mean(du1)),
        welch=welch_t(du1, du0),
        kde_0=kde(du0, bandwidth, grid=grid),
        kde_1=kde(du1, bandwidth, grid=grid),
    )


def trade_off_flags(report: FairnessReport, tolerance: float) -> tuple[str, ...]:
    """Flags for metric disagreements about which group is favored.

    ``tolerance`` declares a delta "fair" when its magnitude is at most that
    value; disagreement between the worst-baseline and best-baseline metric
    of the same normalization raises a trade-off flag.
    """
    flags = []
    d_imp, d_reg = report.delta_improvement, report.delta_regret
    imp_fair, reg_fair = abs(d_imp) <= tolerance, abs(d_reg) <= tolerance
    if imp_fair and not reg_fair:
        flags.append("improvement-fair-regret-unfair")
    elif reg_fair and not imp_fair:
        flags.append("regret-fair-improvement-unfair")
    elif not imp_fair and not reg_fair and np.sign(d_imp) != np.sign(-d_reg):
        flags.append("improvement-regret-trade-off")
    if report.multiplicative_defined:
        d_gain, d_short = report.delta_gain, report.delta_shortfall
        gain_fair, short_fair = abs(d_gain) <= tolerance, abs(d_short) <= tolerance
        if gain_fair and not short_fair:
            flags.append("gain-fair-equitability-unfair")
        elif short_fair and not gain_fair:
            flags.append("equitability-fair-gain-unfair")
        elif not gain_fair and not short_fair and np.sign(d_gain) != np.sign(d_short):
            flags.append("gain-equitability-trade-off")
    return tuple(flags)


@dataclass(frozen=True)
class ObservedAudit:
    """Fairness verdicts of the observed assignment for one group pair."""

    report: FairnessReport
    flags: tuple[str, ...]
    tolerance: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "fairness": self.report.to_dict(),
            "flags": list(self.flags),
            "fair_tolerance": self.tolerance,
        }


def audit_observed(
    dataset: AuditDataset, pair: GroupPair, fair_tolerance: float = DEFAULT_FAIR_TOLERANCE
) -> ObservedAudit:
    """Core fairness metrics of the observed assignment for a group pair.

    Capacity feasibility is deliberately not re-checked: the records define
    the capacities implicitly.
    """
    mask0, mask1 = _pair_masks(dataset, pair)
    included = np.nonzero(mask0 | mask1)[0]
    pop = Population(
        utilities=dataset.utilities[included],
        groups={pair.name: mask1[included].astype(np.int8)},
    )
    alloc = Allocation(dataset.observed[included])
    report = delta_metrics(pop, alloc, pair.name)
    return ObservedAudit(
        report=report, flags=trade_off_flags(report, fair_tolerance), tolerance=fair_tolerance
    )


@dataclass(frozen=True)
class PairAudit:
    pair: GroupPair
    n_0: int
    n_1: int
    shares: tuple[ShareRow, ShareRow]
    delta_u: DeltaUAnalysis
    observed: ObservedAudit


@dataclass(frozen=True)
class AuditReport:
    """Full audit bundle: overall shares plus every configured pair."""

    service_names: tuple[str, ...]
    n: int
    overall_shares: ShareRow
    pairs: tuple[PairAudit, ...]
    bandwidth: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "services": list(self.service_names),
            "households": self.n,
            "bandwidth": self.bandwidth,
            "overall_best_service_shares": self.overall_shares.to_dict(self.service_names),
            "pairs": {
                p.pair.name: {
                    "group0": p.pair.group0,
                    "group1": p.pair.group1,
                    "sizes": [p.n_0, p.n_1],
                    "best_service_shares": [r.to_dict(self.service_names) for r in p.shares],
                    "delta_u": p.delta_u.to_dict(),
                    "observed": p.observed.to_dict(),
                }
                for p in self.pairs
            },
        }


def run_audit(
    dataset: AuditDataset,
    schema: AuditSchema,
    bandwidth: float = DEFAULT_BANDWIDTH,
    fair_tolerance: float = DEFAULT_FAIR_TOLERANCE,
) -> AuditReport:
    """Run every configured pair analysis over the dataset."""
    pairs = []
    for pair in schema.pairs:
        mask0, mask1 = _pair_masks(dataset, pair)
        pairs.append(
            PairAudit(
                pair=pair,
                n_0=int(mask0.sum()),
                n_1=int(mask1.sum()),
                shares=(
                    _shares_for_mask(dataset, mask0, f"{pair.name}:0"),
                    _shares_for_mask(dataset, mask1, f"{pair.name}:1"),
                ),
                delta_u=delta_u_analysis(dataset, pair, bandwidth),
                observed=audit_observed(dataset, pair, fair_tolerance),
            )
        )
    return AuditReport(
        service_names=dataset.service_names,
        n=dataset.n,
        overall_shares=best_service_shares(dataset)[0],
        pairs=tuple(pairs),
        bandwidth=bandwidth,
    )


def write_report_bundle(report: AuditReport, outdir: str) -> list[str]:
    """Write report.json, shares.csv and per-pair KDE CSVs; returns the paths."""
    from pathlib import Path

    outdir_path = Path(outdir)
    written = []

    json_path = outdir_path / "report.json"
    write_text_atomic(json_path, dump_json(report.to_dict()))
    written.append(str(json_path))

    share_lines = ["pair,group,count," + ",".join(report.service_names)]
    rows = [("all", report.overall_shares)] + [
        (p.pair.name, row) for p in report.pairs for row in p.shares
    ]
    for pair_name, row in rows:
        shares = ",".join(repr(float(s)) for s in row.shares)
        share_lines.append(f"{pair_name},{row.label},{row.count},{shares}")
    shares_path = outdir_path / "shares.csv"
    write_text_atomic(shares_path, "\n".join(share_lines) + "\n")
    written.append(str(shares_path))

    for p in report.pairs:
        for value, curve in ((0, p.delta_u.kde_0), (1, p.delta_u.kde_1)):
            lines = ["grid,density,bandwidth"]
            lines += [
                f"{repr(float(g))},{repr(float(d))},{repr(curve.bandwidth)}"
                for g, d in zip(curve.grid, curve.density)
            ]
            path = outdir_path / f"kde_{p.pair.name}_{value}.csv"
            write_text_atomic(path, "\n".join(lines) + "\n")
            written.append(str(path))
    return written
