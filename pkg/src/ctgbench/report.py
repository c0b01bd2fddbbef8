"""Result tables for one or more runs.

Markdown and CSV renderings carry the same numbers at the same precision;
only the framing differs. A predictor evaluated from hard labels has no
ranking metric, shown as "--".
"""

from __future__ import annotations

from .errors import ParameterError

COLUMNS = ("AU-ROC", "Accuracy", "Sensitivity", "Specificity")
KEYS = ("auroc", "accuracy", "sensitivity", "specificity")
CONDITION_ORDER = ("baseline", "limited-data", "toco-removal", "temporal")


def _fmt(value):
    return "--" if value is None else f"{value:.3f}"


def _collect(runs):
    """Flatten run metrics into {condition: [(label, entry), ...]}.

    A model name that appears in more than one run is disambiguated with
    the run name so rows stay attributable.
    """
    seen_models = {}
    for run in runs:
        for model in run.metrics:
            seen_models[model] = seen_models.get(model, 0) + 1
    by_condition = {}
    for run in runs:
        run_name = run.manifest.get("name", "run") if isinstance(run.manifest, dict) else "run"
        for model, conditions in run.metrics.items():
            label = f"{model} ({run_name})" if seen_models[model] > 1 else model
            for condition, entry in conditions.items():
                by_condition.setdefault(condition, []).append((label, entry))
    ordered = {}
    for condition in CONDITION_ORDER:
        if condition in by_condition:
            ordered[condition] = by_condition.pop(condition)
    for condition in sorted(by_condition):
        ordered[condition] = by_condition[condition]
    return ordered


def render_report(runs, fmt="markdown"):
    if fmt not in ("markdown", "csv"):
        raise ParameterError(f"unknown report format {fmt!r}; expected 'markdown' or 'csv'")
    grouped = _collect(runs)
    if fmt == "csv":
        lines = ["condition,model," + ",".join(k for k in KEYS)]
        for condition, rows in grouped.items():
            for label, entry in rows:
                cells = [_fmt(entry.get(k)) for k in KEYS]
                lines.append(",".join([condition, label] + cells))
        return "\n".join(lines) + "\n"

    parts = []
    for condition, rows in grouped.items():
        parts.append(f"## {condition}")
        parts.append("")
        parts.append("| Model | " + " | ".join(COLUMNS) + " |")
        parts.append("|" + " --- |" * (len(COLUMNS) + 1))
        for label, entry in rows:
            cells = [_fmt(entry.get(k)) for k in KEYS]
            parts.append("| " + " | ".join([label] + cells) + " |")
        parts.append("")
    return "\n".join(parts)
