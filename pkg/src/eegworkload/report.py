"""Rendering of evaluation reports: text table, delimited metrics, figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport


def _fmt_pct(mean: float, sd: float) -> str:
    return f"{100 * mean:.0f} +/- {100 * sd:.0f}"


def render_table(reports: list[EvalReport]) -> str:
    """Plain-text performance table, one row per model."""
    header = (
        f"{'Model':<14}| {'Ranked Features':<44}| "
        f"{'Accuracy (Mean +/- SD, %)':<26}| F1-Score (Mean +/- SD, %)"
    )
    rule = "-" * len(header)
    lines = [header, rule]
    for rep in reports:
        feats = rep.provenance.get("final_selected_features", [])
        chunks = [", ".join(feats[i:i + 3]) for i in range(0, len(feats), 3)] or [""]
        lines.append(
            f"{rep.model_kind.capitalize():<14}| {chunks[0]:<44}| "
            f"{_fmt_pct(rep.mean_accuracy, rep.sd_accuracy):<26}| "
            f"{_fmt_pct(rep.mean_f1, rep.sd_f1)}"
        )
        for chunk in chunks[1:]:
            lines.append(f"{'':<14}| {chunk:<44}| {'':<26}|")
        lines.append(rule)
    lines.append(
        "Note: ranked features from the final full-train selection, most "
        "important first; per-fold frequencies are in the EVAL1 provenance."
    )
    return "\n".join(lines) + "\n"


def metrics_csv(reports: list[EvalReport]) -> str:
    """Per-fold metrics, one row per (model, fold), plus holdout rows."""
    lines = ["model,fold,accuracy,f1,selected_features"]
    for rep in reports:
        for f in rep.per_fold:
            feats = ";".join(f["selected_features"])
            lines.append(
                f"{rep.model_kind},{f['fold']},{f['accuracy']:.6f},{f['f1']:.6f},{feats}"
            )
        lines.append(
            f"{rep.model_kind},holdout,{rep.holdout['accuracy']:.6f},"
            f"{rep.holdout['f1']:.6f},"
        )
    return "\n".join(lines) + "\n"


def render_figures(reports: list[EvalReport], outdir: str | Path) -> list[Path]:
    """Per-fold metric bars and selection-frequency chart, written as PNGs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, axes = plt.subplots(
        1, len(reports), figsize=(6 * len(reports), 4), squeeze=False,
    )
    for ax, rep in zip(axes[0], reports):
        folds = [f["fold"] for f in rep.per_fold]
        accs = [f["accuracy"] for f in rep.per_fold]
        f1s = [f["f1"] for f in rep.per_fold]
        width = 0.38
        ax.bar([f - width / 2 for f in folds], accs, width, label="accuracy")
        ax.bar([f + width / 2 for f in folds], f1s, width, label="F1")
        ax.axhline(rep.mean_accuracy, color="k", lw=0.8, ls="--")
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("fold")
        ax.set_title(
            f"{rep.model_kind}: {_fmt_pct(rep.mean_accuracy, rep.sd_accuracy)}% acc"
        )
        ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = outdir / "fold_metrics.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(
        1, len(reports), figsize=(6 * len(reports), 4), squeeze=False,
    )
    for ax, rep in zip(axes[0], reports):
        freq = rep.provenance.get("selected_feature_frequency", {})
        names = list(freq)[:12]
        counts = [freq[n] for n in names]
        ax.barh(range(len(names)), counts)
        ax.set_yticks(range(len(names)))
        ax.set_yticklabels(names, fontsize=7)
        ax.invert_yaxis()
        ax.set_xlabel("folds selecting the feature")
        ax.set_title(f"{rep.model_kind}: selection frequency")
    fig.tight_layout()
    path = outdir / "selected_features.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
