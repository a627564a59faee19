"""Target-domain accuracy, the dropout-rate sweep, and baseline-vs-RTM tables.

The sweep picks the best p by *target* accuracy. That mirrors how
transfer results are usually reported (best over a grid) but it peeks at
target labels, so it is an upper-bound protocol rather than a usable
model-selection rule. Reports carry ``selection = "target-oracle"``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import RtmConfig, predict, train_rtm, train_ridge
from .dataset import DomainPair, LabelSet
from .errors import DimensionError, ProtocolError, ValidationError

SELECTION = "target-oracle"


def default_grid() -> tuple[float, ...]:
    """p = 0.05, 0.10, ..., 0.95 built from integers (no accumulated drift)."""
    return tuple(i / 20 for i in range(1, 20))


def parse_grid(spec: str) -> tuple[float, ...]:
    spec = spec.strip()
    if spec in ("", "default"):
        return default_grid()
    try:
        grid = tuple(float(s) for s in spec.split(",") if s.strip())
    except ValueError:
        raise ValidationError(f"grid must be 'default' or comma-separated numbers, got {spec!r}") from None
    _check_grid(grid)
    return grid


def _check_grid(grid):
    if not grid:
        raise ValidationError("grid is empty")
    for p in grid:
        if not (0.0 <= p < 1.0):
            raise ValidationError(f"grid value {p} is outside [0, 1)")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("grid values must be strictly increasing")


def accuracy(predicted, truth) -> float:
    pred = np.asarray(predicted).ravel()
    true = truth.class_ids if isinstance(truth, LabelSet) else np.asarray(truth).ravel()
    if pred.size != true.size:
        raise DimensionError(f"{pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise ValidationError("accuracy of an empty prediction set is undefined")
    return float(np.count_nonzero(pred == true)) / pred.size


@dataclass(frozen=True)
class SweepReport:
    task_name: str
    grid: tuple[tuple[float, float], ...]
    best_p: float
    best_accuracy: float
    baseline_accuracy: float
    alpha: float
    selection: str = SELECTION

    def __post_init__(self):
        ps = [p for p, _ in self.grid]
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValidationError("sweep grid must be strictly increasing in p")

    def to_json(self) -> dict:
        return {
            "task": self.task_name,
            "alpha": self.alpha,
            "grid": [{"p": p, "acc": a} for p, a in self.grid],
            "best_p": self.best_p,
            "best_acc": self.best_accuracy,
            "baseline_acc": self.baseline_accuracy,
            "selection": self.selection,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SweepReport":
        try:
            return cls(
                task_name=str(obj["task"]),
                grid=tuple((float(g["p"]), float(g["acc"])) for g in obj["grid"]),
                best_p=float(obj["best_p"]),
                best_accuracy=float(obj["best_acc"]),
                baseline_accuracy=float(obj["baseline_acc"]),
                alpha=float(obj["alpha"]),
                selection=str(obj.get("selection", SELECTION)),
            )
        except (KeyError, TypeError) as e:
            raise ValidationError(f"malformed sweep report: {e}") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "p", "accuracy"])
        w.writerow(["baseline", repr(0.0), repr(self.baseline_accuracy)])
        for p, a in self.grid:
            w.writerow(["rtm", repr(p), repr(a)])
        return buf.getvalue()


def _best(grid):
    # max accuracy, smallest p among ties (grid is sorted)
    best_p, best_a = grid[0]
    for p, a in grid[1:]:
        if a > best_a:
            best_p, best_a = p, a
    return best_p, best_a


def sweep_p(pair: DomainPair, alpha: float, grid: Sequence[float] | None = None) -> SweepReport:
    """Train one RTM per grid value and score each on the labelled target."""
    if pair.target_labels is None:
        raise ProtocolError(f"task {pair.task_name!r}: sweep needs target labels for evaluation")
    grid = default_grid() if grid is None else tuple(float(p) for p in grid)
    _check_grid(grid)

    Z, Y = pair.source, pair.source_labels
    C = Y.C
    if pair.target_labels.C > C:
        C = pair.target_labels.C
        Y = LabelSet(Y.class_ids, C)

    base = train_ridge(Z, Y, alpha, task=pair.task_name)
    base_acc = accuracy(predict(base, pair.target)[0], pair.target_labels)

    rows = []
    for p in grid:
        model = train_rtm(Z, Y, RtmConfig(p, alpha), task=pair.task_name)
        rows.append((p, accuracy(predict(model, pair.target)[0], pair.target_labels)))
    best_p, best_a = _best(rows)
    return SweepReport(pair.task_name, tuple(rows), best_p, best_a, base_acc, float(alpha))


@dataclass(frozen=True)
class ComparisonRow:
    task_name: str
    baseline_accuracy: float
    rtm_accuracy: float

    @property
    def winner(self) -> str:
        return "rtm" if self.rtm_accuracy > self.baseline_accuracy else "baseline"


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]
    groups: tuple[tuple[str, tuple[str, ...]], ...] = ()
    group_means: dict = field(default_factory=dict)
    overall_mean: tuple[float, float] = (0.0, 0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "baseline_acc", "rtm_best_acc", "winner"])
        for r in self.rows:
            w.writerow([r.task_name, repr(r.baseline_accuracy), repr(r.rtm_accuracy), r.winner])
        for g, _ in self.groups:
            b, m = self.group_means[g]
            w.writerow([f"Mean[{g}]", repr(b), repr(m), _winner(b, m)])
        b, m = self.overall_mean
        w.writerow(["Mean", repr(b), repr(m), _winner(b, m)])
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned table in percent, two decimals; winner marked with '*'."""
        lines = []

        def row(name, b, m):
            mark_b = "*" if _winner(b, m) == "baseline" else " "
            mark_m = "*" if _winner(b, m) == "rtm" else " "
            return f"{name:<{width}}  {100 * b:>8.2f}{mark_b}  {100 * m:>8.2f}{mark_m}"

        labels = [r.task_name for r in self.rows] + [f"Mean[{g}]" for g, _ in self.groups] + ["Mean"]
        width = max(len(s) for s in labels + ["Task"])
        header = f"{'Task':<{width}}  {'Baseline':>9}  {'RTM':>9}"
        lines += [header, "-" * len(header)]
        by_name = {r.task_name: r for r in self.rows}
        placed = set()
        for g, tasks in self.groups:
            for t in tasks:
                r = by_name[t]
                lines.append(row(t, r.baseline_accuracy, r.rtm_accuracy))
                placed.add(t)
            lines.append(row(f"Mean[{g}]", *self.group_means[g]))
            lines.append("-" * len(header))
        for r in self.rows:
            if r.task_name not in placed:
                lines.append(row(r.task_name, r.baseline_accuracy, r.rtm_accuracy))
        lines.append(row("Mean", *self.overall_mean))
        return "\n".join(lines) + "\n"


def _winner(b, m):
    return "rtm" if m > b else "baseline"


def _mean(values):
    return float(np.mean(values))


def compare(reports: Sequence[SweepReport], grouping: Mapping[str, str] | None = None) -> ComparisonTable:
    """Per-task baseline vs best-RTM rows plus per-group and overall means.

    Tasks missing from ``grouping`` only count toward the overall mean.
    """
    if not reports:
        raise ValidationError("compare needs at least one report")
    names = [r.task_name for r in reports]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValidationError(f"duplicate task names: {', '.join(dupes)}")
    grouping = dict(grouping or {})

    rows = tuple(ComparisonRow(r.task_name, r.baseline_accuracy, r.best_accuracy) for r in reports)
    order: dict[str, list[str]] = {}
    for r in rows:
        g = grouping.get(r.task_name)
        if g is not None:
            order.setdefault(g, []).append(r.task_name)
    by_name = {r.task_name: r for r in rows}
    group_means = {
        g: (_mean([by_name[t].baseline_accuracy for t in ts]), _mean([by_name[t].rtm_accuracy for t in ts]))
        for g, ts in order.items()
    }
    overall = (_mean([r.baseline_accuracy for r in rows]), _mean([r.rtm_accuracy for r in rows]))
    return ComparisonTable(
        rows, tuple((g, tuple(ts)) for g, ts in order.items()), group_means, overall
    )


def dump_report_json(report: SweepReport) -> str:
    return json.dumps(report.to_json(), indent=2) + "\n"
