"""Repeated-split evaluation protocol and report emission.

A run selects a random watch-list, keeps the generic set disjoint from it
(hard assertion), clusters the generic poses, builds both dictionaries,
and classifies genuine and impostor probe sets with each requested method.
Scores are pooled across watch-list identities (negative minimum residual
by default, optionally SCI-gated or macro-averaged per identity), and the
partial AUC at 20% FPR plus the area under the precision-recall curve are
aggregated as mean and standard deviation over runs.

Everything is a pure function of the master seed: per-run seeds come from
``SeedSequence(master, spawn_key=(run_index,))``, probe evaluation may fan
out over threads with results merged in probe order, and the default
report JSON excludes wall-clock timing so identical seeds produce
byte-identical files.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benchmark import BenchmarkBundle
from .classifier import (
    ProbeDecision,
    esrc_classify,
    nn_template_classify,
    spv_classify,
    src_classify,
)
from .dictionaries import (
    build_augmented_gallery,
    build_variational_dictionary,
    empty_variational,
)
from .exemplars import (
    eta_for_cluster_count,
    extract_clustering,
    pose_dissimilarities,
    select_exemplars,
)
from .matrixio import DataError, ModelConfig, SampleMatrix, SampleMeta
from .metrics import aupr, pauc20, pr_curve, roc_curve

METHODS = ("src", "esrc", "spv", "nn_template")
_ALIASES = {"nn": "nn_template", "tm": "nn_template"}


def normalize_method(name: str) -> str:
    canonical = _ALIASES.get(name.strip().lower(), name.strip().lower())
    if canonical not in METHODS:
        raise DataError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return canonical


@dataclass(frozen=True)
class ProbeRecord:
    """Per-probe outcome of one run, for every method evaluated."""

    run: int
    probe_column: int
    true_id: int
    genuine: bool
    pose: tuple[float, float, float]
    pose_gap: float
    decisions: dict


@dataclass(frozen=True)
class EvalReport:
    """Aggregated metrics of one method over the repeated runs."""

    method: str
    n_runs: int
    per_run_pauc20: tuple[float, ...]
    per_run_aupr: tuple[float, ...]
    roc: tuple[tuple[float, float], ...]
    pr: tuple[tuple[float, float], ...]
    runtime_per_probe: float

    @property
    def pauc20(self) -> float:
        return float(np.mean(self.per_run_pauc20))

    @property
    def aupr(self) -> float:
        return float(np.mean(self.per_run_aupr))

    @property
    def pauc20_std(self) -> float:
        return float(np.std(self.per_run_pauc20))

    @property
    def aupr_std(self) -> float:
        return float(np.std(self.per_run_aupr))

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "method": self.method,
            "n_runs": self.n_runs,
            "pauc20": self.pauc20,
            "pauc20_std": self.pauc20_std,
            "aupr": self.aupr,
            "aupr_std": self.aupr_std,
            "per_run_pauc20": list(self.per_run_pauc20),
            "per_run_aupr": list(self.per_run_aupr),
            "roc": [[f, t] for f, t in self.roc],
            "pr": [[r, p] for r, p in self.pr],
        }
        if include_timing:
            out["runtime_per_probe"] = self.runtime_per_probe
        return out


@dataclass(frozen=True)
class ExperimentResult:
    reports: dict
    details: tuple[ProbeRecord, ...]
    non_converged: int = 0


def _classify_probe(method, y, gallery, stills, stills_meta, variational, config):
    if method == "src":
        return src_classify(stills, stills_meta, y, config)
    if method == "esrc":
        return esrc_classify(stills, stills_meta, variational, y, config)
    if method == "spv":
        return spv_classify(gallery, variational, y, config)
    return nn_template_classify(stills, stills_meta, y)


def _probe_score(decision: ProbeDecision, score_mode: str) -> float:
    if score_mode == "sci_gated" and not decision.accepted:
        return float("-inf")
    return -decision.min_residual


def run_experiment(
    bundle: BenchmarkBundle,
    methods=METHODS,
    config: ModelConfig | None = None,
    n_runs: int = 5,
    n_views: int | None = None,
    score_mode: str = "residual",
    pooling: str = "pooled",
    n_jobs: int = 1,
) -> ExperimentResult:
    """Evaluate the requested methods over repeated random watch-list splits.

    ``n_views`` forces the pipeline's cluster count (default: the
    generator's pose mode count); 0 disables synthesis and the variational
    dictionary entirely. ``score_mode`` is "residual" or "sci_gated";
    ``pooling`` is "pooled" or "macro" (per-identity one-vs-rest average).
    """
    config = config or ModelConfig()
    methods = tuple(dict.fromkeys(normalize_method(m) for m in methods))
    if n_runs < 1:
        raise DataError("n_runs must be >= 1")
    if score_mode not in ("residual", "sci_gated"):
        raise DataError(f"unknown score mode {score_mode!r}")
    if pooling not in ("pooled", "macro"):
        raise DataError(f"unknown pooling {pooling!r}")
    spec = bundle.spec
    target_views = spec.q_true if n_views is None else int(n_views)
    if target_views < 0:
        raise DataError("n_views must be >= 0")

    per_method_pauc = {m: [] for m in methods}
    per_method_aupr = {m: [] for m in methods}
    per_method_time = {m: 0.0 for m in methods}
    first_curves = {}
    details = []
    non_converged = 0
    n_probes_total = 0

    # The generic set is fixed across runs, so the exemplar selection and
    # the variational dictionary are run-invariant; build them once. Plain
    # template matching and stills-only coding skip the build entirely.
    needs_clustering = target_views >= 1 and any(
        m in ("esrc", "spv") for m in methods
    )
    if needs_clustering:
        d = pose_dissimilarities(bundle.generic_meta)
        eta = eta_for_cluster_count(d, target_views, config.row_norm_q)
        z = select_exemplars(d, eta, config.row_norm_q)
        clustering = extract_clustering(z, d, bundle.generic_meta)
        try:
            variational = build_variational_dictionary(
                bundle.generic, bundle.generic_meta, clustering
            )
        except DataError:
            # Degenerate generic set without usable variation; proceed with
            # an empty auxiliary dictionary.
            warnings.warn(
                "generic set produced no variation atoms; using an empty "
                "variational dictionary",
                RuntimeWarning,
            )
            variational = empty_variational(bundle.stills.dim, clustering.q)
    else:
        clustering = None
        variational = empty_variational(bundle.stills.dim, 0)

    for run in range(n_runs):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed + config.seed, spawn_key=(run,)))
        ids = np.arange(spec.n_classes)
        watch = np.sort(rng.choice(ids, size=spec.n_watchlist, replace=False))
        rest = np.setdiff1d(ids, watch)
        n_imp = spec.n_impostor_ids
        impostors = (
            np.sort(rng.choice(rest, size=n_imp, replace=False))
            if n_imp
            else np.zeros(0, dtype=np.int64)
        )
        overlap = set(int(v) for v in bundle.generic_meta.labels) & set(int(v) for v in watch)
        if overlap:
            raise DataError(
                f"generic set shares identities with the watch-list: {sorted(overlap)}"
            )

        stills = SampleMatrix(bundle.stills.data[:, watch])
        stills_meta = SampleMeta(labels=watch, poses=bundle.stills_meta.poses[watch])
        gallery = build_augmented_gallery(
            stills, stills_meta, clustering, bundle.synthesizer
        )

        probe_ids = np.concatenate([watch, impostors])
        labels = bundle.probes_meta.labels
        columns = np.flatnonzero(np.isin(labels, probe_ids))
        if columns.size == 0:
            raise DataError("bundle provides no probes for the selected identities")
        watch_set = set(int(v) for v in watch)
        n_probes_total += columns.size

        def evaluate(col):
            y_raw = bundle.probes.column(col)
            norm = np.linalg.norm(y_raw)
            y = y_raw / norm if norm > 0 else y_raw
            pose = bundle.probes_meta.poses[col]
            gap = float(
                np.min(np.linalg.norm(gallery.atom_poses - pose[None, :], axis=1))
            )
            outcome = {}
            for m in methods:
                start = time.perf_counter()
                decision = _classify_probe(
                    m, y, gallery, stills, stills_meta, variational, config
                )
                elapsed = time.perf_counter() - start
                outcome[m] = (decision, elapsed)
            return col, pose, gap, outcome

        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                raw = list(pool.map(evaluate, columns))
        else:
            raw = [evaluate(col) for col in columns]
        raw.sort(key=lambda item: item[0])

        run_scores = {m: [] for m in methods}
        run_genuine = []
        for col, pose, gap, outcome in raw:
            true_id = int(labels[col])
            genuine = true_id in watch_set
            run_genuine.append(genuine)
            decisions = {}
            for m in methods:
                decision, elapsed = outcome[m]
                per_method_time[m] += elapsed
                if decision.code is not None and not decision.code.converged:
                    non_converged += 1
                run_scores[m].append(_probe_score(decision, score_mode))
                decisions[m] = decision
            details.append(
                ProbeRecord(
                    run=run,
                    probe_column=int(col),
                    true_id=true_id,
                    genuine=genuine,
                    pose=tuple(float(a) for a in pose),
                    pose_gap=gap,
                    decisions=decisions,
                )
            )

        genuine_flags = np.array(run_genuine, dtype=bool)
        for m in methods:
            scores = np.array(run_scores[m], dtype=np.float64)
            if pooling == "macro":
                run_records = [r for r in details if r.run == run]
                paucs, auprs = [], []
                for k in watch:
                    k = int(k)
                    k_scores = np.array(
                        [-r.decisions[m].residual_of(k) for r in run_records]
                    )
                    k_labels = np.array([r.true_id == k for r in run_records])
                    roc = roc_curve(k_scores, k_labels)
                    paucs.append(pauc20(roc))
                    auprs.append(aupr(pr_curve(k_scores, k_labels)))
                per_method_pauc[m].append(float(np.mean(paucs)))
                per_method_aupr[m].append(float(np.mean(auprs)))
                if run == 0:
                    first_curves[m] = (
                        roc_curve(scores, genuine_flags),
                        pr_curve(scores, genuine_flags),
                    )
            else:
                roc = roc_curve(scores, genuine_flags)
                pr = pr_curve(scores, genuine_flags)
                per_method_pauc[m].append(pauc20(roc))
                per_method_aupr[m].append(aupr(pr))
                if run == 0:
                    first_curves[m] = (roc, pr)

    reports = {}
    for m in methods:
        roc, pr = first_curves[m]
        reports[m] = EvalReport(
            method=m,
            n_runs=n_runs,
            per_run_pauc20=tuple(per_method_pauc[m]),
            per_run_aupr=tuple(per_method_aupr[m]),
            roc=tuple((float(f), float(t)) for f, t in roc),
            pr=tuple((float(r), float(p)) for r, p in pr),
            runtime_per_probe=per_method_time[m] / max(n_probes_total, 1),
        )
    return ExperimentResult(reports, tuple(details), non_converged)


def rank1_accuracy(details, method: str) -> float:
    """Fraction of genuine probes whose predicted class is the true identity."""
    rows = [r for r in details if r.genuine]
    if not rows:
        raise DataError("no genuine probes to score")
    hits = sum(1 for r in rows if r.decisions[method].predicted == r.true_id)
    return hits / len(rows)


def pose_robustness_summary(details, methods, n_bins: int = 3) -> dict:
    """Rank-1 accuracy of genuine probes binned by pose gap to the gallery.

    Bins are equal-count over the pooled pose gaps (nearest first). Returns
    {method: [accuracy per bin]}.
    """
    genuine = [r for r in details if r.genuine]
    if len(genuine) < n_bins:
        raise DataError("not enough genuine probes to bin")
    gaps = np.array([r.pose_gap for r in genuine])
    order = np.argsort(gaps, kind="stable")
    bins = np.array_split(order, n_bins)
    out = {}
    for m in methods:
        accs = []
        for idx in bins:
            rows = [genuine[i] for i in idx]
            hits = sum(1 for r in rows if r.decisions[m].predicted == r.true_id)
            accs.append(hits / len(rows))
        out[m] = accs
    return out


def _validate_reports(reports: dict) -> None:
    if not reports:
        raise DataError("no reports to emit")
    for report in reports.values():
        if report.n_runs < 1 or len(report.per_run_pauc20) == 0:
            raise DataError(f"report for {report.method!r} has an empty per-run list")
        if len(report.per_run_pauc20) != report.n_runs:
            raise DataError(
                f"report for {report.method!r} has {len(report.per_run_pauc20)} "
                f"per-run values for {report.n_runs} runs"
            )
        for value in (*report.per_run_pauc20, *report.per_run_aupr):
            if not 0.0 <= value <= 1.0:
                raise DataError("metric values must lie in [0, 1]")
        fprs = [f for f, _ in report.roc]
        if any(b < a - 1e-12 for a, b in zip(fprs, fprs[1:])):
            raise DataError("ROC points must be monotone in fpr")


def emit_report(reports, path, format: str = "json", include_timing: bool = False) -> None:
    """Write one report or a method-keyed mapping as JSON or plot-ready CSV.

    Timing is wall-clock metadata and varies between identical runs, so it
    is excluded unless ``include_timing`` is set; default output is a
    byte-deterministic function of the experiment seed.
    """
    if isinstance(reports, EvalReport):
        reports = {reports.method: reports}
    _validate_reports(reports)
    if format not in ("json", "csv"):
        raise DataError(f"unknown report format {format!r}")
    path = Path(path)
    if format == "json":
        payload = {
            "n_runs": next(iter(reports.values())).n_runs,
            "methods": {
                m: reports[m].to_dict(include_timing) for m in sorted(reports)
            },
        }
        path.write_text(json.dumps(payload, indent=1) + "\n")
        return
    lines = ["method,series,x,y"]
    for m in sorted(reports):
        report = reports[m]
        for f, t in report.roc:
            lines.append(f"{m},roc,{f!r},{t!r}")
        for r, p in report.pr:
            lines.append(f"{m},pr,{r!r},{p!r}")
        lines.append(f"{m},pauc20_mean,{report.pauc20!r},")
        lines.append(f"{m},pauc20_std,{report.pauc20_std!r},")
        lines.append(f"{m},aupr_mean,{report.aupr!r},")
        lines.append(f"{m},aupr_std,{report.aupr_std!r},")
        if include_timing:
            lines.append(f"{m},runtime_per_probe,{report.runtime_per_probe!r},")
    path.write_text("\n".join(lines) + "\n")


def load_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"report not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not a JSON report: {exc}") from exc
