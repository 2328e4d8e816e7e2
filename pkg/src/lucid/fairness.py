"""Canonical-set distribution analysis and output-based group metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2

from .data_pipeline import CATEGORICAL, NUMERIC, FeatureSchema, decode_numeric
from .inverse_design import CanonicalSet

log = logging.getLogger(__name__)

SIGNIFICANCE = 0.01
HISTOGRAM_BINS = 20
STAGES = ("initial", "formatted")


@dataclass
class UniformityTest:
    feature: str
    categories: list[str]
    counts: list[int]
    chi_square_statistic: float
    degrees_of_freedom: int
    p_value: float
    flagged: bool
    expected_std_per_category: float
    low_power: bool = False

    @property
    def top_category(self) -> str:
        return self.categories[int(np.argmax(self.counts))]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["top_category"] = self.top_category
        return d


@dataclass
class NumericShift:
    feature: str
    mean_before: float
    mean_after: float
    std_before: float
    std_after: float
    bin_edges: list[float]
    counts_before: list[int]
    counts_after: list[int]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GroupMetrics:
    feature: str
    categories: dict = field(default_factory=dict)
    statistical_parity_gap: float = 0.0
    equal_opportunity_gap: float | None = None
    excluded: list[str] = field(default_factory=list)

    def positivity_rate(self, category: str) -> float:
        return self.categories[category]["positivity_rate"]

    def true_positive_rate(self, category: str) -> float | None:
        return self.categories[category]["true_positive_rate"]

    @property
    def top_category(self) -> str:
        return max(self.categories, key=lambda c: self.categories[c]["positivity_rate"])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["top_category"] = self.top_category if self.categories else None
        return d


# --------------------------------------------------------------------------
# canonical-set side

def categorical_counts(cs: CanonicalSet, schema: FeatureSchema, feature: str,
                       stage: str = "formatted") -> np.ndarray:
    """Category counts of ``feature`` over the canonical inputs at ``stage``.

    Unformatted stages are read through the argmax of each one-hot group.
    """
    spec = schema.feature(feature)
    if spec.kind != CATEGORICAL:
        raise ValueError(f"{feature!r} is numeric; categorical_counts needs a categorical feature")
    block = cs.stage(stage)[:, schema.slot_range(feature)]
    return np.bincount(np.argmax(block, axis=1), minlength=spec.width)


def chi_square_uniformity(counts: Sequence[int], feature: str = "",
                          categories: Sequence[str] | None = None,
                          significance: float = SIGNIFICANCE) -> UniformityTest:
    """Pearson goodness-of-fit of ``counts`` against the uniform distribution."""
    counts = np.asarray(counts, dtype=np.int64)
    k = len(counts)
    if k < 2:
        raise ValueError(f"need at least 2 categories, got {k}")
    n = int(counts.sum())
    if n <= 0:
        raise ValueError("counts sum to zero")
    expected = n / k
    stat = float(((counts - expected) ** 2).sum() / expected)
    p = float(chi2.sf(stat, k - 1))
    low_power = n < 5 * k
    if low_power:
        log.warning("%s: only %d samples for %d categories; chi-square test has low power",
                    feature or "counts", n, k)
    q = 1.0 / k
    return UniformityTest(
        feature=feature,
        categories=list(categories) if categories is not None else [str(i) for i in range(k)],
        counts=counts.tolist(),
        chi_square_statistic=stat,
        degrees_of_freedom=k - 1,
        p_value=min(max(p, 0.0), 1.0),
        flagged=p < significance,
        expected_std_per_category=math.sqrt(q * (1.0 - q) / n),
        low_power=low_power,
    )


def uniformity_tests(cs: CanonicalSet, schema: FeatureSchema, features: Sequence[str],
                     significance: float = SIGNIFICANCE, stage: str = "formatted") -> dict:
    out = {}
    for f in features:
        if schema.feature(f).kind != CATEGORICAL:
            continue
        counts = categorical_counts(cs, schema, f, stage)
        out[f] = chi_square_uniformity(counts, f, schema.feature(f).categories, significance)
    return out


def numeric_shift(cs: CanonicalSet, schema: FeatureSchema, feature: str,
                  bins: int = HISTOGRAM_BINS) -> NumericShift:
    """Before/after statistics of a numeric feature in raw units."""
    if schema.feature(feature).kind != NUMERIC:
        raise ValueError(f"{feature!r} is not numeric")
    before = decode_numeric(schema, cs.initial, feature)
    after = decode_numeric(schema, cs.optimized, feature)
    lo = float(min(before.min(), after.min()))
    hi = float(max(before.max(), after.max()))
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    return NumericShift(feature, float(before.mean()), float(after.mean()),
                        float(before.std()), float(after.std()), edges.tolist(),
                        np.histogram(before, edges)[0].tolist(),
                        np.histogram(after, edges)[0].tolist())


# --------------------------------------------------------------------------
# output side

def group_metrics(predictions: Sequence[int], labels: Sequence[int],
                  groups: Sequence[str], feature: str = "",
                  categories: Sequence[str] | None = None) -> GroupMetrics:
    """Positivity rate and true positive rate per group, with max-min gaps.

    ``predictions`` are hard 0/1 decisions.  Categories listed in
    ``categories`` but absent from ``groups`` are excluded with a warning.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    grp = np.asarray(groups, dtype=object)
    if len(pred) == 0:
        raise ValueError("group_metrics needs at least one prediction")
    if not len(pred) == len(lab) == len(grp):
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(lab)} labels, "
                         f"{len(grp)} group entries")
    names = list(categories) if categories is not None else sorted(set(grp.tolist()))
    gm = GroupMetrics(feature)
    for c in names:
        mask = grp == c
        total = int(mask.sum())
        if total == 0:
            log.warning("%s: category %r has no members; excluded", feature, c)
            gm.excluded.append(c)
            continue
        actual = mask & (lab == 1)
        n_actual = int(actual.sum())
        gm.categories[c] = {
            "count": total,
            "positives_predicted": int(pred[mask].sum()),
            "actual_positives": n_actual,
            "positivity_rate": float(pred[mask].sum() / total),
            "true_positive_rate": float(pred[actual].sum() / n_actual) if n_actual else None,
        }
    prs = [v["positivity_rate"] for v in gm.categories.values()]
    tprs = [v["true_positive_rate"] for v in gm.categories.values()
            if v["true_positive_rate"] is not None]
    gm.statistical_parity_gap = float(max(prs) - min(prs))
    gm.equal_opportunity_gap = float(max(tprs) - min(tprs)) if tprs else None
    return gm


# --------------------------------------------------------------------------
# comparison

def compare_analyses(tests: Mapping[str, UniformityTest], metrics: Mapping[str, GroupMetrics],
                     gap_threshold: float = 0.1) -> dict:
    """Per-feature agreement between the canonical-set test and the output gaps.

    The output side counts as biased when either the parity gap or the
    opportunity gap exceeds ``gap_threshold``.
    """
    features, uncompared = {}, []
    for f in sorted(set(tests) | set(metrics)):
        if f not in tests or f not in metrics:
            uncompared.append({"feature": f,
                               "reason": "missing canonical-set test" if f not in tests
                               else "missing output metrics"})
            continue
        t, g = tests[f], metrics[f]
        gaps = [g.statistical_parity_gap]
        if g.equal_opportunity_gap is not None:
            gaps.append(g.equal_opportunity_gap)
        output_biased = max(gaps) > gap_threshold
        features[f] = {
            "canonical_flagged": bool(t.flagged),
            "output_gap_above_threshold": bool(output_biased),
            "agreement": bool(t.flagged) == bool(output_biased),
            "canonical_top_category": t.top_category,
            "output_top_category": g.top_category if g.categories else None,
            "p_value": t.p_value,
            "statistical_parity_gap": g.statistical_parity_gap,
            "equal_opportunity_gap": g.equal_opportunity_gap,
        }
    return {"gap_threshold": gap_threshold, "features": features, "uncompared": uncompared}
