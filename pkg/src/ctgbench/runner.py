"""End-to-end execution of an experiment manifest, with run persistence.

A run directory is written so that every number in it can be re-derived:
predictions CSVs carry full-precision scores, metrics.json is recomputable
from them within 1e-12, and the manifest snapshot pins every default.
Wall-clock timings live in logs/, never in metrics.json, so repeated
executions of one manifest are byte-identical where it matters.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ablation as ablation_mod
from . import training
from .checkpoint import save_adapters, save_model
from .errors import CtgBenchError
from .generate import generate_cohort
from .manifest import ExperimentManifest
from .metrics import MetricsReport, auroc, confusion_at
from .models import attach_lora, build
from .models.base import labels_from_records
from .records import admit
from .remote import (
    HttpTransport,
    MockTransport,
    RetryPolicy,
    classify_cohort,
    evaluate_remote,
    load_template,
)
from .transforms import Preprocessor, stride_sample

BASELINE = "baseline"


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class RunRecord:
    run_dir: str
    manifest: dict
    metrics: dict = field(default_factory=dict)  # {model: {condition: report dict}}
    predictions: dict = field(default_factory=dict)  # {(model, condition): relpath}
    fit_summaries: dict = field(default_factory=dict)

    def report_for(self, model, condition=BASELINE):
        return self.metrics[model][condition]

    @classmethod
    def load(cls, run_dir):
        run_dir = Path(run_dir)
        manifest = json.loads((run_dir / "manifest.snapshot.json").read_text())
        doc = json.loads((run_dir / "metrics.json").read_text())
        metrics = doc["models"]
        predictions = {}
        for model, conditions in metrics.items():
            for condition in conditions:
                rel = f"predictions/{model}/{condition}.csv"
                if (run_dir / rel).exists():
                    predictions[(model, condition)] = rel
        return cls(run_dir=str(run_dir), manifest=manifest, metrics=metrics,
                   predictions=predictions, fit_summaries=doc.get("fit_summaries", {}))


def write_predictions(path, ids, scores, truths):
    lines = ["id,score,truth"]
    for i, s, t in zip(ids, scores, truths):
        lines.append(f"{i},{float(s):.17g},{int(t)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_predictions(path):
    lines = Path(path).read_text().strip().split("\n")
    ids, scores, truths = [], [], []
    for line in lines[1:]:
        i, s, t = line.split(",")
        ids.append(i)
        scores.append(float(s))
        truths.append(int(t))
    return ids, np.array(scores), np.array(truths, dtype=np.int64)


def _model_seed(spec):
    return spec.config.get("seed", spec.train.seed)


def _build_base(spec, prep):
    config = dict(spec.config)
    config.pop("seed", None)
    if spec.kind == "patch" and "max_patches" not in config:
        config["max_patches"] = max(60, prep.pad_len // config.get("patch_len", 60))
    return build(spec.kind, config, seed=_model_seed(spec))


def _build_from_spec(spec, prep):
    model = _build_base(spec, prep)
    if spec.lora is not None:
        attach_lora(model, r=spec.lora["r"], alpha=spec.lora["alpha"], seed=spec.lora["seed"])
    return model


def _prepare_data(manifest):
    cohort = generate_cohort(manifest.cohort.generator_params(), manifest.cohort.n,
                             manifest.seeds.resolve("data"))
    cohort = [r for r in cohort if admit(r)]
    prep = manifest.preprocessing
    padded = Preprocessor(target_hz=prep.target_hz, pad_len=prep.pad_len).transform(cohort)
    data_seed = manifest.seeds.resolve("data")
    test, pool = training.make_balanced_test(padded, manifest.cohort.n_per_class_test, data_seed)
    train, val = training.split(pool, manifest.cohort.val_fraction, data_seed)
    return prep, test, pool, train, val


def _inputs_for(spec, prep):
    if spec.kind == "tiny-lm":
        return lambda records: [stride_sample(r, prep.stride_window_s, prep.stride_gap_s) for r in records]
    return lambda records: records


def execute(manifest: ExperimentManifest, run_dir=None, quiet=True) -> RunRecord:
    run_dir = Path(run_dir) if run_dir else Path(manifest.output_dir) / manifest.name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "predictions").mkdir(exist_ok=True)
    (run_dir / "checkpoints").mkdir(exist_ok=True)
    (run_dir / "logs").mkdir(exist_ok=True)

    record = RunRecord(run_dir=str(run_dir), manifest=manifest.to_dict())
    (run_dir / "FAILED.json").unlink(missing_ok=True)
    (run_dir / "manifest.snapshot.json").write_text(canonical_json(record.manifest))
    timings = []
    stage = "setup"

    def log(msg):
        if not quiet:
            print(msg, flush=True)

    try:
        stage = "prepare-data"
        t0 = time.perf_counter()
        prep, test, pool, train, val = _prepare_data(manifest)
        timings.append((stage, time.perf_counter() - t0))
        y_test = labels_from_records(test)
        test_ids = [r.id for r in test]

        trained = {}
        for spec in manifest.models:
            stage = f"train:{spec.name}"
            log(f"[{stage}] fitting {spec.kind} on {len(train)} records")
            t0 = time.perf_counter()
            model = _build_from_spec(spec, prep)
            inputs_for = _inputs_for(spec, prep)
            log_path = run_dir / "logs" / f"{spec.name}.epochs.tsv"
            if spec.train.mode == "lora-finetune":
                fit_result = training.finetune_lora(model, inputs_for(train), inputs_for(val),
                                                    spec.train, log_path=log_path)
            else:
                fit_result = training.fit(model, inputs_for(train), inputs_for(val),
                                          spec.train, log_path=log_path)
            trained[spec.name] = (spec, model, inputs_for)
            timings.append((stage, time.perf_counter() - t0))

            stage = f"evaluate:{spec.name}"
            t0 = time.perf_counter()
            scores = model.decision_scores(inputs_for(test))
            report = MetricsReport.from_scores(y_test, scores)
            _store(record, run_dir, spec.name, BASELINE, test_ids, scores, y_test, report)
            record.fit_summaries[spec.name] = {
                "best_epoch": fit_result.best_epoch,
                "epochs_run": fit_result.epochs_run,
                "val_auroc_history": fit_result.val_auroc_history,
            }
            save_model(run_dir / "checkpoints" / f"{spec.name}.ckpt", model)
            if getattr(model, "adapters_", None):
                save_adapters(run_dir / "checkpoints" / f"{spec.name}.adapters.ckpt", model)
            timings.append((stage, time.perf_counter() - t0))
            log(f"[{stage}] auroc {report.auroc:.3f}")

        ablation_seed = manifest.seeds.resolve("ablation")
        for abl in manifest.ablations:
            for name in abl.models:
                spec, model, inputs_for = trained[name]
                stage = f"ablate:{abl.kind}:{name}"
                log(f"[{stage}] running")
                t0 = time.perf_counter()
                if abl.kind == "toco-removal":
                    report, scores = ablation_mod.run_toco_removal(model, test, inputs_for)
                elif abl.kind == "temporal":
                    report, scores = ablation_mod.run_temporal(
                        model, test, abl.mask_fraction, abl.chunk_s, ablation_seed, inputs_for)
                else:
                    factory = lambda spec=spec: _build_from_spec(spec, prep)
                    report, scores, fit_result, _ = ablation_mod.run_limited_data(
                        factory, pool, test, abl.limited_n, manifest.cohort.val_fraction,
                        spec.train, manifest.seeds.resolve("data"), ablation_seed, inputs_for)
                    record.fit_summaries[f"{name}:{abl.kind}"] = {
                        "best_epoch": fit_result.best_epoch,
                        "epochs_run": fit_result.epochs_run,
                    }
                _store(record, run_dir, name, abl.kind, test_ids, scores, y_test, report)
                timings.append((stage, time.perf_counter() - t0))

        if manifest.remote is not None:
            stage = "remote"
            t0 = time.perf_counter()
            r = manifest.remote
            transport = (MockTransport.from_script(r.script) if r.transport == "mock"
                         else HttpTransport(r.endpoint, r.model, r.api_key_env))
            template = load_template(r.template)
            policy = RetryPolicy(timeout_s=r.timeout_s, max_retries=r.max_retries, backoff=r.backoff)
            subset = test if r.n_records is None else test[: r.n_records]
            verdicts = classify_cohort(transport, subset, template, policy)
            report = evaluate_remote(subset, verdicts)
            scores = np.array([1.0 if v.label == "APO" else 0.0 for v in verdicts])
            _store(record, run_dir, r.name, BASELINE, [x.id for x in subset], scores,
                   labels_from_records(subset), report, hard_labels=True)
            timings.append((stage, time.perf_counter() - t0))

        stage = "persist"
        _write_outputs(record, run_dir, manifest, timings)
        return record
    except CtgBenchError as e:
        _write_outputs(record, run_dir, manifest, timings, failed_stage=stage, error=e)
        raise
    except Exception as e:
        _write_outputs(record, run_dir, manifest, timings, failed_stage=stage, error=e)
        raise


def _store(record, run_dir, model_name, condition, ids, scores, truths, report, hard_labels=False):
    rel = f"predictions/{model_name}/{condition}.csv"
    (run_dir / "predictions" / model_name).mkdir(parents=True, exist_ok=True)
    write_predictions(run_dir / rel, ids, scores, truths)
    entry = report.to_dict()
    entry["hard_labels"] = hard_labels
    record.metrics.setdefault(model_name, {})[condition] = entry
    record.predictions[(model_name, condition)] = rel


def _write_outputs(record, run_dir, manifest, timings, failed_stage=None, error=None):
    from .report import render_report

    metrics_doc = {"models": record.metrics, "fit_summaries": record.fit_summaries}
    (run_dir / "metrics.json").write_text(canonical_json(metrics_doc))
    if manifest.ablations:
        (run_dir / "ablations.json").write_text(
            canonical_json([{**a.__dict__, "models": list(a.models)} for a in manifest.ablations]))
    if record.metrics:
        (run_dir / "report.md").write_text(render_report([record], fmt="markdown"))
    lines = [f"{name}\t{seconds:.3f}" for name, seconds in timings]
    (run_dir / "logs" / "timing.txt").write_text("\n".join(lines) + "\n" if lines else "")
    if failed_stage is not None:
        (run_dir / "FAILED.json").write_text(canonical_json({"stage": failed_stage, "error": str(error)}))


def rerun_ablations(run_dir, manifest=None, quiet=True):
    """Replay the ablation suite against an already-trained run directory.

    Data regeneration is deterministic from the manifest, so the exact
    train/test split is recovered; trained weights come from the stored
    checkpoints rather than being re-fit.
    """
    from .checkpoint import load_adapters, load_model_params
    from .manifest import parse_manifest

    run_dir = Path(run_dir)
    if manifest is None:
        manifest = parse_manifest(json.loads((run_dir / "manifest.snapshot.json").read_text()))
    record = RunRecord.load(run_dir)
    (run_dir / "FAILED.json").unlink(missing_ok=True)
    prep, test, pool, train, val = _prepare_data(manifest)
    y_test = labels_from_records(test)
    test_ids = [r.id for r in test]

    trained = {}
    for spec in manifest.models:
        model = _build_base(spec, prep)
        load_model_params(run_dir / "checkpoints" / f"{spec.name}.ckpt", model)
        adapters_path = run_dir / "checkpoints" / f"{spec.name}.adapters.ckpt"
        if adapters_path.exists():
            load_adapters(adapters_path, model)
        trained[spec.name] = (spec, model, _inputs_for(spec, prep))

    ablation_seed = manifest.seeds.resolve("ablation")
    timings = []
    for abl in manifest.ablations:
        for name in abl.models:
            spec, model, inputs_for = trained[name]
            if not quiet:
                print(f"[ablate:{abl.kind}:{name}] running", flush=True)
            t0 = time.perf_counter()
            if abl.kind == "toco-removal":
                report, scores = ablation_mod.run_toco_removal(model, test, inputs_for)
            elif abl.kind == "temporal":
                report, scores = ablation_mod.run_temporal(
                    model, test, abl.mask_fraction, abl.chunk_s, ablation_seed, inputs_for)
            else:
                factory = lambda spec=spec: _build_from_spec(spec, prep)
                report, scores, fit_result, _ = ablation_mod.run_limited_data(
                    factory, pool, test, abl.limited_n, manifest.cohort.val_fraction,
                    spec.train, manifest.seeds.resolve("data"), ablation_seed, inputs_for)
                record.fit_summaries[f"{name}:{abl.kind}"] = {
                    "best_epoch": fit_result.best_epoch,
                    "epochs_run": fit_result.epochs_run,
                }
            _store(record, run_dir, name, abl.kind, test_ids, scores, y_test, report)
            timings.append((f"ablate:{abl.kind}:{name}", time.perf_counter() - t0))

    _write_outputs(record, run_dir, manifest, timings)
    return record


def check_run(run_dir, tol=1e-12):
    """Recompute every stored metric from its predictions file.

    Returns a list of discrepancy strings; empty means the run verifies.
    """
    record = RunRecord.load(run_dir)
    problems = []
    for (model, condition), rel in record.predictions.items():
        entry = record.metrics[model][condition]
        _, scores, truths = read_predictions(Path(run_dir) / rel)
        conf = confusion_at(truths, scores, entry["threshold"])
        for key in ("accuracy", "sensitivity", "specificity"):
            if abs(conf[key] - entry[key]) > tol:
                problems.append(f"{model}/{condition}: {key} stored {entry[key]} recomputed {conf[key]}")
        if entry.get("hard_labels"):
            if entry["auroc"] is not None:
                problems.append(f"{model}/{condition}: hard-label predictor must not carry AU-ROC")
        else:
            a = auroc(truths, scores)
            if abs(a - entry["auroc"]) > tol:
                problems.append(f"{model}/{condition}: auroc stored {entry['auroc']} recomputed {a}")
    return problems
