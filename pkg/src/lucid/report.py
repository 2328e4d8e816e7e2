"""Run configuration, the train/audit/sweep pipeline, and the audit report."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema

from . import __version__
from .data_pipeline import (CATEGORICAL, NUMERIC, Dataset, DatasetConfig, FeatureSchema,
                            encode_many, fit_schema, load_dataset, split)
from .fairness import (HISTOGRAM_BINS, SIGNIFICANCE, compare_analyses, group_metrics,
                       numeric_shift, uniformity_tests)
from .inverse_design import (CanonicalSet, InverseDesignConfig, generate_canonical_set,
                             write_canonical_set)
from .nn_core import MlpModel
from .trainer import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

REPORT_VERSION = 1
OUTPUT_DIR_ENV = "LUCID_OUTPUT_DIR"
MODEL_FILE = "model.json"
SCHEMA_FILE = "schema.json"
TRAIN_REPORT_FILE = "train_report.json"


class ConfigError(ValueError):
    """Bad or inconsistent user configuration (CLI exit code 2)."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(message)


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class AnalysisConfig:
    significance: float = SIGNIFICANCE
    bins: int = HISTOGRAM_BINS
    gap_threshold: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.significance < 1.0:
            raise ValueError(f"significance must lie in (0, 1), got {self.significance}")
        if self.bins < 1:
            raise ValueError(f"bins must be positive, got {self.bins}")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig
    data_path: Path
    train: TrainConfig
    inverse_design: InverseDesignConfig
    analysis: AnalysisConfig = AnalysisConfig()
    test_fraction: float = 0.2
    split_seed: int = 0
    output_dir: Path = Path("runs")
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | str = ".") -> "RunConfig":
        base = Path(base_dir)
        try:
            ds = d["dataset"]
            ds_path = _resolve_dataset_config(ds, base)
            dataset = DatasetConfig.load(ds_path)
            data_path = base / d["data"]
            split_cfg = d.get("split", {})
            if "seed" not in split_cfg:
                raise ConfigError("split.seed is required")
            out = d.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV) or "runs"
            cfg = cls(
                dataset=dataset,
                data_path=data_path,
                train=TrainConfig.from_dict(d.get("train", {})),
                inverse_design=InverseDesignConfig.from_dict(d.get("inverse_design", {})),
                analysis=AnalysisConfig(**d.get("analysis", {})),
                test_fraction=float(split_cfg.get("test_fraction", 0.2)),
                split_seed=int(split_cfg["seed"]),
                output_dir=base / out,
                source=d,
            )
        except ConfigError:
            raise
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"run config not found: {path}", str(path))
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})", str(path)) from None
        return cls.from_dict(d, path.parent)

    def validate(self) -> None:
        if not self.data_path.is_file():
            raise ConfigError(f"dataset CSV not found: {self.data_path}", str(self.data_path))

    def with_overrides(self, train=None, inverse_design=None, **kw) -> "RunConfig":
        t = replace(self.train, **train) if train else self.train
        i = replace(self.inverse_design, **inverse_design) if inverse_design else self.inverse_design
        return replace(self, train=t, inverse_design=i, **kw)


def _resolve_dataset_config(ds: str, base: Path) -> Path:
    p = base / ds
    if p.is_file():
        return p
    bundled = resources.files("lucid") / "configs" / f"{ds}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"dataset config {ds!r} is neither a file nor a bundled config", str(p))


# --------------------------------------------------------------------------
# file helpers

def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# pipeline stages

@dataclass
class PreparedData:
    dataset: Dataset
    train: Dataset
    test: Dataset
    schema: FeatureSchema


def prepare_data(run: RunConfig, schema: FeatureSchema | None = None) -> PreparedData:
    """Load, clean and split the CSV; fit the schema unless one is given."""
    run.validate()
    data = load_dataset(run.data_path, run.dataset)
    tr, te = split(data, run.test_fraction, run.split_seed)
    if schema is None:
        # scaling ranges from the training split; vocabularies from all kept rows
        # so that rare categories in the test split stay encodable
        schema = fit_schema(tr.samples, run.dataset, categories_from=data.samples)
    return PreparedData(data, tr, te, schema)


def train_model(run: RunConfig, prep: PreparedData | None = None):
    prep = prep or prepare_data(run)
    Xtr = encode_many(prep.schema, prep.train.samples)
    Xte = encode_many(prep.schema, prep.test.samples)
    model, rep = train(Xtr, prep.train.labels, run.train, Xte, prep.test.labels)
    return model, rep, prep


def cmd_train(run: RunConfig) -> dict:
    """Train and write model, schema and train report into ``run.output_dir``."""
    model, rep, prep = train_model(run)
    out = run.output_dir
    summary = rep.to_dict()
    summary.update(dataset=run.dataset.name, rows=prep.dataset.counts,
                   model_fingerprint=model.fingerprint(), schema_digest=prep.schema.fingerprint(),
                   split={"test_fraction": run.test_fraction, "seed": run.split_seed})
    atomic_write(out / MODEL_FILE, model.to_json())
    atomic_write(out / SCHEMA_FILE, prep.schema.to_json())
    atomic_write(out / TRAIN_REPORT_FILE, json.dumps(summary, indent=2))
    log.info("wrote %s, %s, %s to %s", MODEL_FILE, SCHEMA_FILE, TRAIN_REPORT_FILE, out)
    return {"model": str(out / MODEL_FILE), "schema": str(out / SCHEMA_FILE),
            "train_report": str(out / TRAIN_REPORT_FILE)}


def load_artifacts(model_path, schema_path=None):
    """Model, schema and (if present) train report from a ``train`` output."""
    model_path = Path(model_path)
    if not model_path.is_file():
        raise ConfigError(f"model file not found: {model_path}", str(model_path))
    schema_path = Path(schema_path) if schema_path else model_path.parent / SCHEMA_FILE
    if not schema_path.is_file():
        raise ConfigError(f"schema file not found: {schema_path}", str(schema_path))
    model = MlpModel.from_json(model_path.read_text())
    schema = FeatureSchema.from_dict(json.loads(schema_path.read_text()))
    if model.input_dim != schema.encoded_dim:
        raise ConfigError(f"model input dimension {model.input_dim} does not match schema "
                          f"encoded_dim {schema.encoded_dim}", str(schema_path))
    train_report = None
    rp = model_path.parent / TRAIN_REPORT_FILE
    if rp.is_file():
        train_report = json.loads(rp.read_text())
        if train_report.get("model_fingerprint") not in (None, model.fingerprint()):
            raise ConfigError(f"{rp} belongs to a different model", str(rp))
        if train_report.get("schema_digest") not in (None, schema.fingerprint()):
            raise ConfigError(f"{rp} was produced with a different schema", str(rp))
    return model, schema, train_report


def build_report(run: RunConfig, model: MlpModel, prep: PreparedData, cs: CanonicalSet,
                 train_report: dict | None = None) -> dict:
    schema = prep.schema
    an = run.analysis
    protected = schema.protected
    cat_protected = [f for f in protected if schema.feature(f).kind == CATEGORICAL]

    tests = uniformity_tests(cs, schema, cat_protected, an.significance, "formatted")
    tests_initial = uniformity_tests(cs, schema, cat_protected, an.significance, "initial")
    numeric = {f.name: numeric_shift(cs, schema, f.name, an.bins)
               for f in schema.features if f.kind == NUMERIC}

    Xte = encode_many(schema, prep.test.samples)
    acc, pred = evaluate(model, Xte, prep.test.labels)
    metrics = {}
    for f in protected:
        if schema.feature(f).kind != CATEGORICAL:
            continue
        groups = [s[f] for s in prep.test.samples]
        metrics[f] = group_metrics(pred, prep.test.labels, groups, f, schema.feature(f).categories)
    comparison = compare_analyses(tests, metrics, an.gap_threshold)

    report = {
        "report_version": REPORT_VERSION,
        "tool_version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "dataset": {
            "name": run.dataset.name,
            "rows": prep.dataset.counts,
            "n_train": len(prep.train),
            "n_test": len(prep.test),
            "split": {"test_fraction": run.test_fraction, "seed": run.split_seed},
            "missing_value_policy": "rows with a missing value in a used column are dropped",
        },
        "schema_digest": schema.fingerprint(),
        "model": {
            "fingerprint": model.fingerprint(),
            "layer_dims": list(model.layer_dims),
            "train_report": train_report,
        },
        "inverse_design": {
            "config": cs.config.to_dict(),
            "backend": cs.backend,
            "model_unchanged": cs.model_fingerprint == model.fingerprint(),
            "stages": cs.summary(),
        },
        "canonical_set": {
            "significance": an.significance,
            "uniformity": {f: t.to_dict() for f, t in tests.items()},
            "uniformity_initial": {f: t.to_dict() for f, t in tests_initial.items()},
            "numeric": {f: s.to_dict() for f, s in numeric.items()},
        },
        "output_metrics": {
            "split": "test",
            "accuracy": acc,
            "features": {f: g.to_dict() for f, g in metrics.items()},
        },
        "comparison": comparison,
    }
    check_report(report, protected)
    return report


def check_report(report: dict, protected: Sequence[str]) -> None:
    """Schema validation plus protected-feature coverage."""
    jsonschema.validate(report, report_schema())
    canon = set(report["canonical_set"]["uniformity"]) | set(report["canonical_set"]["numeric"])
    outm = set(report["output_metrics"]["features"])
    unc = {u["feature"] for u in report["comparison"]["uncompared"]}
    for f in protected:
        if not ((f in canon and f in outm) or f in unc):
            raise AssertionError(f"protected feature {f!r} missing from the report")


def report_schema() -> dict:
    text = (resources.files("lucid") / "schemas" / "audit_report.schema.json").read_text()
    return json.loads(text)


def histogram_rows(report: dict):
    """Tidy rows ``(feature, stage, bin, lower, upper, count)``."""
    rows = []
    for key, stage in (("uniformity_initial", "initial"), ("uniformity", "formatted")):
        for f, t in report["canonical_set"].get(key, {}).items():
            for c, n in zip(t["categories"], t["counts"]):
                rows.append((f, stage, c, "", "", n))
    for f, s in report["canonical_set"]["numeric"].items():
        edges = s["bin_edges"]
        for stage, counts in (("initial", s["counts_before"]), ("optimized", s["counts_after"])):
            for b, n in enumerate(counts):
                rows.append((f, stage, b, repr(edges[b]), repr(edges[b + 1]), n))
    return rows


HISTOGRAM_HEADER = ("feature", "stage", "bin", "lower", "upper", "count")


def cmd_audit(run: RunConfig, model_path, schema_path=None) -> dict:
    model, schema, train_report = load_artifacts(model_path, schema_path)
    prep = prepare_data(run, schema)
    fp = model.fingerprint()
    cs = generate_canonical_set(model, schema, run.inverse_design)
    if model.fingerprint() != fp:
        raise RuntimeError("model changed during inverse design")
    report = build_report(run, model, prep, cs, train_report)
    out = run.output_dir
    atomic_write(out / "audit_report.json", json.dumps(report, indent=2))
    atomic_write(out / "histograms.csv", _csv_text(HISTOGRAM_HEADER, histogram_rows(report)))
    write_canonical_set(cs, schema, out)
    return report


SWEEP_HEADER = ("learning_rate",) + tuple(
    f"{stage}_{stat}" for stage in ("initial", "optimized", "formatted")
    for stat in ("mean", "min", "max"))


def cmd_sweep(run: RunConfig, model_path, learning_rates: Sequence[float],
              schema_path=None) -> list[tuple]:
    if not learning_rates:
        raise ConfigError("learning-rate list is empty")
    bad = [a for a in learning_rates if not a > 0]
    if bad:
        raise ConfigError(f"learning rates must be positive, got {bad}")
    try:
        configs = [replace(run.inverse_design, learning_rate=float(lr)) for lr in learning_rates]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    model, schema, _ = load_artifacts(model_path, schema_path)
    rows = []
    for lr, cfg in zip(learning_rates, configs):
        cs = generate_canonical_set(model, schema, cfg)
        s = cs.summary()
        rows.append((lr,) + tuple(s[stage][stat] for stage in ("initial", "optimized", "formatted")
                                  for stat in ("mean", "min", "max")))
        write_canonical_set(cs, schema, run.output_dir / "sweep", prefix=f"lr_{lr:g}")
    atomic_write(run.output_dir / "sweep.csv",
                 _csv_text(SWEEP_HEADER, [(repr(r[0]),) + tuple(repr(v) for v in r[1:])
                                          for r in rows]))
    return rows
