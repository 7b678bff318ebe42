"""Predictor encoding and assembly of the labeled training set.

The predictor set is fixed: gender, employment status, course level, the
common-Italian-name dummy, years enrolled and ECTS earned.  Categoricals are
one-hot encoded against a reference level; numerics are z-scored with
statistics computed on the training rows (trees are insensitive to the
monotone rescaling, the logistic solver benefits from the conditioning).

The positive class throughout is pa=0, i.e. "at least one foreign-born
parent": the event whose probability the logistic model targets.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyClass
from .ingest import AdminRecord, LinkedDataset, NameFrequencyTable, is_common_name

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# (group, source field, reference level, encoded levels) in fixed order
_CATEGORICALS = [
    ("gender", "gender", "F", ["M"]),
    ("employment", "employment", "student", ["worker_student", "student_worker", "not_available"]),
    ("course_level", "course_level", "bachelor", ["master", "bachelor_and_master"]),
]
_NUMERICS = ["years_enrolled", "ects_earned"]


@dataclass
class Column:
    name: str
    kind: str  # "onehot" | "binary" | "numeric"
    group: str
    source: str = ""
    level: str = ""
    mean: float = 0.0
    sd: float = 1.0


@dataclass
class FeatureSchema:
    """Fixed, serialized column layout; travels with any fitted model."""

    columns: list
    dropped: list = field(default_factory=list)
    name_rule: dict = field(default_factory=lambda: {"min_count": 5, "top_k": None})
    version: int = SCHEMA_VERSION
    unknown_level_count: int = 0

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    @property
    def groups(self) -> list:
        """Distinct column groups in order; unit of grouped permutation."""
        seen = []
        for c in self.columns:
            if c.group not in seen:
                seen.append(c.group)
        return seen

    def group_indices(self, group: str) -> list:
        return [i for i, c in enumerate(self.columns) if c.group == group]

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "columns": [vars(c) for c in self.columns],
            "dropped": self.dropped,
            "name_rule": self.name_rule,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        payload = json.loads(text)
        return cls(
            columns=[Column(**c) for c in payload["columns"]],
            dropped=payload.get("dropped", []),
            name_rule=payload.get("name_rule", {"min_count": 5, "top_k": None}),
            version=payload["version"],
        )


@dataclass
class LabeledDataset:
    """Encoded design matrix with binary labels (1 = pa=0, migrant-background parent)."""

    X: np.ndarray
    y: np.ndarray
    row_ids: list

    def __post_init__(self):
        if len(self.X) != len(self.y):
            raise ValueError("X and y length mismatch")


def build_schema(
    records: list[AdminRecord],
    name_table: NameFrequencyTable,
    *,
    name_rule: dict | None = None,
) -> FeatureSchema:
    """Derive the column layout and z-scoring stats from the training rows.

    Degenerate features (single observed level, zero-variance numeric) are
    dropped with a warning and recorded in schema.dropped.
    """
    if not records:
        raise ValueError("cannot build a schema from zero records")
    name_rule = dict(name_rule or {"min_count": 5, "top_k": None})
    columns = []
    dropped = []

    for group, source, ref, levels in _CATEGORICALS:
        observed = {getattr(r, source) for r in records}
        if len(observed) < 2:
            dropped.append(group)
            log.warning("feature %r degenerate (only %s observed), dropped", group, observed)
            continue
        for level in levels:
            if level in observed:
                columns.append(
                    Column(name=f"{source}={level}", kind="onehot", group=group,
                           source=source, level=level)
                )

    flags = [
        int(is_common_name(r.given_name, name_table,
                           min_count=name_rule["min_count"], top_k=name_rule["top_k"]))
        for r in records
    ]
    if len(set(flags)) < 2:
        dropped.append("common_italian_name")
        log.warning("common_italian_name degenerate, dropped")
    else:
        columns.append(Column(name="common_italian_name", kind="binary",
                              group="common_italian_name", source="given_name"))

    for source in _NUMERICS:
        values = np.array([getattr(r, source) for r in records], dtype=float)
        sd = float(values.std(ddof=0))
        if sd == 0.0:
            dropped.append(source)
            log.warning("numeric feature %r has zero variance, dropped", source)
            continue
        columns.append(Column(name=source, kind="numeric", group=source,
                              source=source, mean=float(values.mean()), sd=sd))

    return FeatureSchema(columns=columns, dropped=dropped, name_rule=name_rule)


def encode(
    record: AdminRecord,
    schema: FeatureSchema,
    name_table: NameFrequencyTable,
) -> np.ndarray:
    """Encode one standardized record into the schema's column order.

    Category levels unseen at schema build fall back to the reference level
    (all-zero dummies) and bump schema.unknown_level_count.
    """
    out = np.empty(schema.width)
    known_levels = {}
    for c in schema.columns:
        if c.kind == "onehot":
            known_levels.setdefault(c.source, set()).add(c.level)
    reference = {source: ref for _, source, ref, _ in _CATEGORICALS}
    for i, c in enumerate(schema.columns):
        if c.kind == "onehot":
            value = getattr(record, c.source)
            if value != c.level and value != reference[c.source] \
                    and value not in known_levels[c.source]:
                schema.unknown_level_count += 1
                log.warning("unknown %s level %r mapped to reference", c.source, value)
            out[i] = float(value == c.level)
        elif c.kind == "binary":
            out[i] = float(
                is_common_name(record.given_name, name_table,
                               min_count=schema.name_rule["min_count"],
                               top_k=schema.name_rule["top_k"])
            )
        else:
            out[i] = (getattr(record, c.source) - c.mean) / c.sd
    return out


def encode_matrix(records, schema, name_table) -> np.ndarray:
    if not records:
        return np.empty((0, schema.width))
    return np.stack([encode(r, schema, name_table) for r in records])


def assemble_training_set(
    linked: LinkedDataset,
    schema: FeatureSchema,
    name_table: NameFrequencyTable,
) -> LabeledDataset:
    """Training rows: linked students with bp=cit=1, labeled 1 iff pa_observed=0.

    Only in the (bp,cit)=(1,1) stratum does pa carry information; everywhere
    else membership is already determined by the register.
    """
    rows = []
    labels = []
    ids = []
    for arec, srec in sorted(linked.matched, key=lambda pair: pair[0].link_key):
        if arec.bp == 1 and arec.cit == 1:
            rows.append(encode(arec, schema, name_table))
            labels.append(int(srec.pa_observed == 0))
            ids.append(arec.link_key)
    if not rows:
        raise EmptyClass("no linked rows with bp=cit=1")
    y = np.array(labels, dtype=int)
    if y.min() == y.max():
        raise EmptyClass(f"training labels are all {y[0]}")
    X = np.stack(rows)
    log.info("training set: %d rows, %.1f%% positive (pa=0)", len(y), 100 * y.mean())
    return LabeledDataset(X=X, y=y, row_ids=ids)


def correlation_report(data: LabeledDataset, schema: FeatureSchema) -> dict:
    """Pearson correlation matrix of the encoded predictors (reported, never acted on)."""
    X = data.X
    sd = X.std(axis=0, ddof=0)
    safe = np.where(sd == 0, 1.0, sd)
    Z = (X - X.mean(axis=0)) / safe
    corr = Z.T @ Z / len(X)
    return {"names": schema.names, "matrix": corr.tolist()}
