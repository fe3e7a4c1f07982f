"""Binarize-then-explain engine.

The multi-label output is projected onto one focus code beta: label l = 1 iff
beta is in the adaptive predicted set. Each misclassified history is explained
by perturbing its prefix (code drops and ontology-sibling swaps), querying the
black box on the neighborhood, encoding samples as per-code recency features,
and fitting a small Gini decision tree whose root-to-leaf path for the
original instance is the local rule. Rules aggregate into per-code drivers.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .blackbox import BlackBoxAdapter, PredictionInstance
from .data_model import CodeOntology
from .disparity import predicted_set, top_codes
from .errors import AuditError, DataError
from .rng import Xoshiro256StarStar, derive_seed

DIRECTIONS = ("over", "under")
ENCODINGS = ("recency", "count")

PlainPrefix = tuple[frozenset[str], ...]


@dataclass(frozen=True)
class ExplainConfig:
    n_samples: int = 1000
    p_drop: float = 0.2
    p_swap: float = 0.1
    max_depth: int = 4
    min_leaf: int = 5
    max_instances: int = 200
    fidelity_floor: float = 0.8
    encoding: str = "recency"

    def validate(self) -> None:
        if self.n_samples < 100:
            raise DataError(f"n_samples must be >= 100, got {self.n_samples}")
        for name in ("p_drop", "p_swap"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must be in [0, 1], got {value}")
        if self.max_depth < 1 or self.min_leaf < 1 or self.max_instances < 1:
            raise DataError("max_depth, min_leaf and max_instances must be >= 1")
        if not 0.0 <= self.fidelity_floor <= 1.0:
            raise DataError(f"fidelity_floor must be in [0, 1], got {self.fidelity_floor}")
        if self.encoding not in ENCODINGS:
            raise DataError(f"unknown encoding {self.encoding!r}; expected {ENCODINGS}")


@dataclass(frozen=True)
class BinaryLabeling:
    """Per-instance binarized labels and misclassification flags for beta."""

    beta: str
    direction: str
    labels: tuple[int, ...]
    misclassified: tuple[bool, ...]


def binarize(
    instances: Sequence[PredictionInstance], beta: str, direction: str
) -> BinaryLabeling:
    """l = 1 iff beta in predicted_set; misclassified per direction.

    over: predicted but not true (false positive on beta);
    under: true but not predicted (false negative on beta).
    """
    if direction not in DIRECTIONS:
        raise DataError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
    if not instances:
        raise AuditError("cannot binarize an empty group")
    labels = []
    flags = []
    seen = False
    for inst in instances:
        predicted = beta in predicted_set(inst)
        true = beta in inst.truth
        seen = seen or predicted or true
        labels.append(1 if predicted else 0)
        if direction == "over":
            flags.append(predicted and not true)
        else:
            flags.append(true and not predicted)
    if not seen:
        raise AuditError(f"code {beta} is never predicted nor true in this group")
    return BinaryLabeling(
        beta=beta, direction=direction, labels=tuple(labels), misclassified=tuple(flags)
    )


def encode_prefix(prefix: Sequence[frozenset[str]], encoding: str = "recency") -> dict[str, float]:
    """Per-code temporal feature over a prefix.

    recency: (1 + most recent visit index containing the code) / prefix length;
    count: number of visits containing the code / prefix length.
    """
    length = len(prefix)
    if length == 0:
        raise AuditError("cannot encode an empty prefix")
    features: dict[str, float] = {}
    if encoding == "recency":
        for idx, codes in enumerate(prefix):
            value = (1 + idx) / length
            for code in codes:
                features[code] = value  # later visits overwrite: most recent wins
    elif encoding == "count":
        for codes in prefix:
            for code in codes:
                features[code] = features.get(code, 0.0) + 1.0 / length
    else:
        raise DataError(f"unknown encoding {encoding!r}")
    return features


def perturb_neighborhood(
    prefix: Sequence[frozenset[str]],
    n_samples: int,
    onto: CodeOntology,
    seed: int,
    p_drop: float = 0.2,
    p_swap: float = 0.1,
) -> list[PlainPrefix]:
    """Synthetic prefixes around the given one; sample 0 is the original.

    Per visit each code is independently dropped w.p. p_drop; a kept code is
    replaced w.p. p_swap by a uniformly chosen ontology sibling. Visits left
    empty are removed, so samples may be shorter than the original (possibly
    length 0 at extreme drop rates; callers filter those).
    """
    if n_samples < 100:
        raise AuditError(f"neighborhood needs n_samples >= 100, got {n_samples}")
    original = tuple(frozenset(codes) for codes in prefix)
    rng = Xoshiro256StarStar(seed)
    # Sibling lookups are deterministic (sorted) and cached across samples.
    sibling_cache: dict[str, list[str]] = {}

    def siblings_of(code: str) -> list[str]:
        if code not in sibling_cache:
            sibling_cache[code] = onto.siblings(code)
        return sibling_cache[code]

    samples: list[PlainPrefix] = [original]
    for _ in range(n_samples - 1):
        visits: list[frozenset[str]] = []
        for codes in original:
            kept: set[str] = set()
            for code in sorted(codes):  # fixed order so draws line up across runs
                if p_drop > 0.0 and rng.random() < p_drop:
                    continue
                if p_swap > 0.0 and rng.random() < p_swap:
                    sibs = siblings_of(code)
                    if sibs:
                        code = sibs[rng.randbelow(len(sibs))]
                kept.add(code)
            if kept:
                visits.append(frozenset(kept))
        samples.append(tuple(visits))
    return samples


@dataclass(frozen=True)
class RuleCondition:
    code: str
    comparator: str  # ">" or "<="
    threshold: float

    def satisfied(self, features: Mapping[str, float]) -> bool:
        value = features.get(self.code, 0.0)
        return value > self.threshold if self.comparator == ">" else value <= self.threshold

    @property
    def presence(self) -> str:
        return "present" if self.comparator == ">" else "absent"

    def as_text(self) -> str:
        return f"recency({self.code}) {self.comparator} {self.threshold:.4f}"

    def to_json(self) -> dict:
        return {"code": self.code, "comparator": self.comparator, "threshold": self.threshold}


@dataclass(frozen=True)
class ExplanationRule:
    conditions: tuple[RuleCondition, ...]
    label: int
    fidelity: float
    degenerate: bool = False
    low_fidelity: bool = False

    def mentions(self) -> frozenset[str]:
        return frozenset(c.code for c in self.conditions)

    def to_json(self) -> dict:
        return {
            "conditions": [c.to_json() for c in self.conditions],
            "label": self.label,
            "fidelity": self.fidelity,
            "degenerate": self.degenerate,
            "low_fidelity": self.low_fidelity,
        }


# --- decision-tree surrogate (Gini, binary labels) ---------------------------


class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "label")

    def __init__(self, label: int, feature: int = -1, threshold: float = 0.0):
        self.feature = feature
        self.threshold = threshold
        self.left: _TreeNode | None = None
        self.right: _TreeNode | None = None
        self.label = label


def _majority(y: np.ndarray) -> int:
    ones = int(y.sum())
    return 1 if 2 * ones >= y.size else 0


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[float, float] | None:
    """Best (gini, threshold) for one feature column, or None.

    Ties inside a column resolve to the smallest threshold.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    n = xs.size
    pos = np.cumsum(ys)
    total_pos = pos[-1]
    # Candidate cuts fall between distinct consecutive values.
    cuts = np.nonzero(xs[:-1] < xs[1:])[0]
    if cuts.size == 0:
        return None
    n_left = cuts + 1
    n_right = n - n_left
    valid = (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    cuts = cuts[valid]
    n_left = n_left[valid]
    n_right = n_right[valid]
    pos_left = pos[cuts]
    pos_right = total_pos - pos_left
    p_l = pos_left / n_left
    p_r = pos_right / n_right
    weighted = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
    best = int(np.argmin(weighted))  # argmin takes the first, i.e. smallest cut
    threshold = 0.5 * (xs[cuts[best]] + xs[cuts[best] + 1])
    return float(weighted[best]), float(threshold)


def _grow(
    X: np.ndarray, y: np.ndarray, depth: int, max_depth: int, min_leaf: int
) -> _TreeNode:
    node = _TreeNode(label=_majority(y))
    n = y.size
    if depth >= max_depth or n < 2 * min_leaf or y.min() == y.max():
        return node
    best: tuple[float, int, float] | None = None  # (gini, feature, threshold)
    for f in range(X.shape[1]):
        found = _best_split(X[:, f], y, min_leaf)
        if found is None:
            continue
        gini, threshold = found
        candidate = (gini, f, threshold)
        if best is None or candidate < best:
            best = candidate
    if best is None:
        return node
    parent_pos = y.sum() / n
    parent_gini = 2 * parent_pos * (1 - parent_pos)
    if best[0] >= parent_gini - 1e-12:  # no impurity reduction
        return node
    node.feature, node.threshold = best[1], best[2]
    mask = X[:, node.feature] <= node.threshold
    node.left = _grow(X[mask], y[mask], depth + 1, max_depth, min_leaf)
    node.right = _grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf)
    return node


def _predict_one(node: _TreeNode, x: np.ndarray) -> int:
    while node.left is not None:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.label


def _path_for(node: _TreeNode, x: np.ndarray, codes: list[str]) -> list[RuleCondition]:
    path: list[RuleCondition] = []
    while node.left is not None:
        code = codes[node.feature]
        if x[node.feature] <= node.threshold:
            path.append(RuleCondition(code, "<=", node.threshold))
            node = node.left
        else:
            path.append(RuleCondition(code, ">", node.threshold))
            node = node.right
    return path


def explain_instance(
    instance: PredictionInstance,
    beta: str,
    bb: BlackBoxAdapter,
    onto: CodeOntology,
    config: ExplainConfig,
    seed: int,
) -> ExplanationRule:
    """Local surrogate rule for one instance.

    The neighborhood label of a sample is 1 iff beta lands in the black box's
    top-k over the perturbed prefix, with k = |original truth| (samples carry
    no truth of their own). Degenerate neighborhoods (all labels equal) yield
    the trivial rule with fidelity 1.0.
    """
    config.validate()
    prefix = tuple(v.codes for v in instance.prefix)
    samples = perturb_neighborhood(
        prefix, config.n_samples, onto, seed, config.p_drop, config.p_swap
    )
    samples = [s for s in samples if len(s) > 0]  # black box needs >= 1 visit
    k = len(instance.truth)
    rankings = bb.predict_batch(samples, top_k=k)
    y = np.fromiter(
        (1 if beta in top_codes(r, k) else 0 for r in rankings),
        dtype=np.int8,
        count=len(rankings),
    )
    if y.min() == y.max():
        return ExplanationRule(
            conditions=(), label=int(y[0]), fidelity=1.0, degenerate=True
        )

    feature_maps = [encode_prefix(s, config.encoding) for s in samples]
    codes = sorted(set().union(*feature_maps))
    index = {code: i for i, code in enumerate(codes)}
    X = np.zeros((len(samples), len(codes)))
    for row, fmap in enumerate(feature_maps):
        for code, value in fmap.items():
            X[row, index[code]] = value

    root = _grow(X, y.astype(np.int64), 0, config.max_depth, config.min_leaf)
    agree = sum(_predict_one(root, X[i]) == y[i] for i in range(len(samples)))
    fidelity = agree / len(samples)
    conditions = tuple(_path_for(root, X[0], codes))
    label = _predict_one(root, X[0])
    return ExplanationRule(
        conditions=conditions,
        label=label,
        fidelity=fidelity,
        degenerate=len(conditions) == 0,
        low_fidelity=fidelity < config.fidelity_floor,
    )


@dataclass(frozen=True)
class Driver:
    code: str
    frequency: float
    direction: str  # present | absent

    def to_json(self) -> dict:
        return {"code": self.code, "frequency": self.frequency, "direction": self.direction}


@dataclass(frozen=True)
class AggregatedExplanation:
    drivers: tuple[Driver, ...]
    n_rules: int
    n_degenerate: int


def aggregate(rules: Sequence[ExplanationRule]) -> AggregatedExplanation:
    """Per-code frequency over all explained instances, plus direction.

    frequency(x) = fraction of explained instances whose rule mentions x.
    Direction is the majority comparator over mentions ('>' = present,
    '<=' = absent); exact ties read as present.
    """
    if not rules:
        raise AuditError("nothing to aggregate")
    active = [r for r in rules if not r.degenerate]
    if not active:
        raise AuditError("all rules degenerate; no conditions to aggregate")
    mentions: dict[str, int] = {}
    present_votes: dict[str, int] = {}
    for rule in rules:
        by_code: dict[str, list[str]] = {}
        for cond in rule.conditions:
            by_code.setdefault(cond.code, []).append(cond.comparator)
        for code, comparators in by_code.items():
            mentions[code] = mentions.get(code, 0) + 1
            # One vote per instance: the deepest condition decides, being the
            # most specific test along the path.
            present_votes[code] = present_votes.get(code, 0) + (
                1 if comparators[-1] == ">" else 0
            )
    total = len(rules)
    drivers = tuple(
        sorted(
            (
                Driver(
                    code=code,
                    frequency=count / total,
                    direction="present" if 2 * present_votes[code] >= count else "absent",
                )
                for code, count in mentions.items()
            ),
            key=lambda d: (-d.frequency, d.code),
        )
    )
    return AggregatedExplanation(
        drivers=drivers, n_rules=total, n_degenerate=total - len(active)
    )


@dataclass(frozen=True)
class ExplainResult:
    group: str
    code: str
    direction: str
    n_explained: int
    n_degenerate: int
    n_low_fidelity: int
    mean_fidelity: float
    drivers: tuple[Driver, ...]

    def to_json(self) -> dict:
        return {
            "group": self.group,
            "code": self.code,
            "direction": self.direction,
            "n_explained": self.n_explained,
            "n_degenerate": self.n_degenerate,
            "n_low_fidelity": self.n_low_fidelity,
            "mean_fidelity": self.mean_fidelity,
            "drivers": [d.to_json() for d in self.drivers],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ExplainResult":
        return cls(
            group=data["group"],
            code=data["code"],
            direction=data["direction"],
            n_explained=data["n_explained"],
            n_degenerate=data["n_degenerate"],
            n_low_fidelity=data["n_low_fidelity"],
            mean_fidelity=data["mean_fidelity"],
            drivers=tuple(
                Driver(d["code"], d["frequency"], d["direction"]) for d in data["drivers"]
            ),
        )


def explain_group(
    instances: Sequence[PredictionInstance],
    group_id: str,
    beta: str,
    direction: str,
    bb: BlackBoxAdapter,
    onto: CodeOntology,
    config: ExplainConfig,
    seed: int,
) -> ExplainResult:
    """Explain every misclassified instance of a group (capped, seeded)."""
    config.validate()
    labeling = binarize(instances, beta, direction)
    targets = [inst for inst, bad in zip(instances, labeling.misclassified) if bad]
    if not targets:
        raise AuditError(
            f"group {group_id} has no {direction}-misclassified instances for {beta}"
        )
    if len(targets) > config.max_instances:
        picker = Xoshiro256StarStar(derive_seed(seed, 3))
        order = list(range(len(targets)))
        picker.shuffle(order)
        keep = sorted(order[: config.max_instances])
        targets = [targets[i] for i in keep]

    rules = [
        explain_instance(inst, beta, bb, onto, config, derive_seed(seed, 4, idx))
        for idx, inst in enumerate(targets)
    ]
    aggregated = aggregate(rules)
    mean_fidelity = sum(r.fidelity for r in rules) / len(rules)
    return ExplainResult(
        group=group_id,
        code=beta,
        direction=direction,
        n_explained=len(rules),
        n_degenerate=aggregated.n_degenerate,
        n_low_fidelity=sum(1 for r in rules if r.low_fidelity),
        mean_fidelity=mean_fidelity,
        drivers=aggregated.drivers,
    )


__all__ = [
    "AggregatedExplanation",
    "BinaryLabeling",
    "Driver",
    "ExplainConfig",
    "ExplainResult",
    "ExplanationRule",
    "RuleCondition",
    "aggregate",
    "binarize",
    "encode_prefix",
    "explain_group",
    "explain_instance",
    "perturb_neighborhood",
]
