"""Disparity functions: group instances -> score, plus normalization and ranking.

The default metric is total variation between the grouped-code distribution
of the black box's predicted sets and that of the ground truth. TV equals the
1-Wasserstein distance under the 0/1 ground metric, so the closed form and
the transport solver are interchangeable there; `wasserstein` always runs the
solver so the two routes stay independently checkable.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass

from .blackbox import PredictionInstance
from .data_model import CodeOntology, ontology_distance
from .errors import AuditError, DataError
from .strata import Group
from .transport import min_cost_transport

CodeDistribution = Mapping[str, float]
GroundMetric = Callable[[str, str], float]


def unit_ground(a: str, b: str) -> float:
    return 0.0 if a == b else 1.0


def ontology_ground(onto: CodeOntology) -> GroundMetric:
    def ground(a: str, b: str) -> float:
        return ontology_distance(a, b, onto)

    return ground


def top_codes(ranking: Sequence[tuple[str, float]], k: int) -> frozenset[str]:
    """Top-k codes of a (code, score) ranking.

    Score ties at the cut boundary go to the lexicographically smaller code.
    """
    if k <= 0:
        raise AuditError(f"top_codes needs k >= 1, got {k}")
    if len(ranking) < k:
        raise AuditError(f"ranking of length {len(ranking)} is shorter than k={k}")
    ordered = sorted(ranking, key=lambda cs: (-cs[1], cs[0]))
    return frozenset(code for code, _ in ordered[:k])


def predicted_set(instance: PredictionInstance, k: int | None = None) -> frozenset[str]:
    """Top-k codes of the instance's ranking, k = |truth| unless fixed."""
    want = len(instance.truth) if k is None else k
    try:
        return top_codes(instance.prediction, want)
    except AuditError as exc:
        raise AuditError(
            f"{exc} (patient {instance.patient_id}, visit {instance.visit_index})"
        ) from None


def code_distribution(
    instances: Sequence[PredictionInstance], source: str
) -> dict[str, float]:
    """Relative code frequencies over truth or predicted sets (pooled)."""
    if not instances:
        raise AuditError("cannot compute a code distribution for an empty group")
    counts: Counter[str] = Counter()
    if source == "truth":
        for inst in instances:
            counts.update(inst.truth)
    elif source == "predicted":
        for inst in instances:
            counts.update(predicted_set(inst))
    else:
        raise AuditError(f"unknown distribution source {source!r}")
    total = sum(counts.values())
    return {code: n / total for code, n in counts.items()}


def total_variation(p: CodeDistribution, q: CodeDistribution) -> float:
    """Closed form 1/2 * sum |p_x - q_x| over the union support."""
    support = set(p) | set(q)
    return 0.5 * sum(abs(p.get(x, 0.0) - q.get(x, 0.0)) for x in support)


def wasserstein(
    p: CodeDistribution, q: CodeDistribution, ground: GroundMetric = unit_ground
) -> float:
    """Exact 1-Wasserstein via the transport solver on the union support."""
    src = sorted(x for x, mass in p.items() if mass > 0.0)
    dst = sorted(x for x, mass in q.items() if mass > 0.0)
    if not src or not dst:
        raise AuditError("wasserstein needs non-empty distributions")
    supply = [p[x] for x in src]
    demand = [q[x] for x in dst]
    cost = [[ground(x, y) for y in dst] for x in src]
    value, _ = min_cost_transport(supply, demand, cost)
    return value


def recall_at_k(instances: Sequence[PredictionInstance], k: int) -> float:
    """Mean over instances of |top-k(prediction) ∩ truth| / |truth|."""
    if not instances:
        raise AuditError("recall_at_k over an empty instance list")
    if k <= 0:
        raise AuditError(f"recall_at_k needs k >= 1, got {k}")
    total = 0.0
    for inst in instances:
        top = predicted_set(inst, k=k)
        total += len(top & inst.truth) / len(inst.truth)
    return total / len(instances)


class DisparityMetric:
    """A higher-is-worse group score; only the induced ranking matters."""

    name: str = "abstract"
    higher_is_worse: bool = True

    def evaluate(self, instances: Sequence[PredictionInstance]) -> float:
        raise NotImplementedError


class TotalVariationMetric(DisparityMetric):
    name = "tv"

    def evaluate(self, instances: Sequence[PredictionInstance]) -> float:
        p = code_distribution(instances, "predicted")
        q = code_distribution(instances, "truth")
        return total_variation(p, q)


class WassersteinMetric(DisparityMetric):
    def __init__(self, ground: GroundMetric = unit_ground, ground_name: str = "unit"):
        self.ground = ground
        self.name = f"wasserstein[{ground_name}]"

    def evaluate(self, instances: Sequence[PredictionInstance]) -> float:
        p = code_distribution(instances, "predicted")
        q = code_distribution(instances, "truth")
        return wasserstein(p, q, self.ground)


class MicroF1Metric(DisparityMetric):
    """1 - micro-F1 of adaptive predicted sets against truth sets."""

    name = "f1"

    def evaluate(self, instances: Sequence[PredictionInstance]) -> float:
        tp = fp = fn = 0
        for inst in instances:
            pred = predicted_set(inst)
            tp += len(pred & inst.truth)
            fp += len(pred - inst.truth)
            fn += len(inst.truth - pred)
        denom = 2 * tp + fp + fn
        if denom == 0:
            return 0.0
        return 1.0 - 2 * tp / denom


class RecallAtKMetric(DisparityMetric):
    """1 - recall@k, so that worse-served groups score higher."""

    def __init__(self, k: int):
        if k <= 0:
            raise AuditError(f"recall@K needs K >= 1, got {k}")
        self.k = k
        self.name = f"recall@{k}"

    def evaluate(self, instances: Sequence[PredictionInstance]) -> float:
        return 1.0 - recall_at_k(instances, self.k)


def metric_from_name(
    name: str, ground: str = "unit", ontology: CodeOntology | None = None
) -> DisparityMetric:
    """Resolve a CLI metric token: tv | wasserstein | f1 | recall@K."""
    if name == "tv":
        return TotalVariationMetric()
    if name == "wasserstein":
        if ground == "unit":
            return WassersteinMetric(unit_ground, "unit")
        if ground == "ontology":
            if ontology is None:
                raise DataError("ontology ground metric requires an ontology file")
            return WassersteinMetric(ontology_ground(ontology), "ontology")
        raise DataError(f"unknown ground metric {ground!r}")
    if name == "f1":
        return MicroF1Metric()
    match = re.fullmatch(r"recall@(\d+)", name)
    if match:
        return RecallAtKMetric(int(match.group(1)))
    raise DataError(f"unknown disparity metric {name!r}")


@dataclass(frozen=True)
class GroupScore:
    group: Group
    raw: float
    normalized: float
    metric: str

    @property
    def size(self) -> int:
        return self.group.size

    @property
    def condition_text(self) -> str:
        return self.group.gid


def score_and_rank(
    groups: Iterable[Group], metric: DisparityMetric, min_size: int = 10
) -> tuple[list[GroupScore], list[Group]]:
    """Score size-filtered groups, min-max normalize, rank descending.

    Returns (ranked scores, excluded small groups). Ties break toward the
    larger group, then the lexicographically smaller condition text.
    """
    kept: list[Group] = []
    excluded: list[Group] = []
    for group in groups:
        (kept if group.size >= min_size else excluded).append(group)
    if not kept:
        raise AuditError(f"no group reaches min_size={min_size}")

    raws = [metric.evaluate(group.members) for group in kept]
    for group, raw in zip(kept, raws):
        if not math.isfinite(raw):
            raise AuditError(f"metric {metric.name} not finite on group {group.gid}")
    lo, hi = min(raws), max(raws)
    span = hi - lo
    scores = [
        GroupScore(
            group=group,
            raw=raw,
            normalized=(raw - lo) / span if span > 0 else 0.0,
            metric=metric.name,
        )
        for group, raw in zip(kept, raws)
    ]
    scores.sort(key=lambda s: (-s.normalized, -s.size, s.condition_text))
    excluded.sort(key=lambda g: (-g.size, g.gid))
    return scores, excluded
