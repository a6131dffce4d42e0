"""End-to-end noisy-label experiments: split, pollute, clean, train, evaluate, repeat.

Within a repeat the cleaned and baseline arms share the split, the label
permutation, the preprocessing and every seed; they differ only in whether
the proper training set goes through conformal cleaning.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import cpsc, icp
from .classifiers import fit_classifier
from .dataset import Dataset, LabelSpace, NoiseSpec, SplitSpec, apportion, load_csv, permute_labels, split
from .evaluation import MetricSet, evaluate, mean_ci, paired_ttest
from .preprocess import L1Config, PreprocessConfig, SmoteConfig, l1_select, smote_oversample, standardize_fit_apply

log = logging.getLogger(__name__)

OBJECTIVES = ("accuracy", "auroc_plus_auprc", "accuracy_plus_macro_f1")
ARMS = ("cleaned", "baseline")
EVAL_SPLITS = ("validation", "test")
METRICS = ("accuracy", "macro_f1", "auroc", "auprc")


class ConfigError(ValueError):
    pass


class ScenarioError(RuntimeError):
    def __init__(self, key, repeat, cause):
        super().__init__(f"scenario {key} repeat {repeat}: {cause}")
        self.key = key
        self.repeat = repeat
        self.cause = cause


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Isotropic Gaussian blobs.

    Class ``c`` is centred on ``separation / sqrt(2) * e_c`` so that every
    pair of class means is exactly ``separation`` apart.
    """

    n: int = 1000
    d: int = 20
    m: int = 2
    separation: float = 4.0
    sd: float = 1.0
    weights: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ConfigError("synthetic data needs at least two classes")
        if self.m > self.d:
            raise ConfigError("need d >= m to place class means on basis directions")
        if self.n < 2 * self.m:
            raise ConfigError(f"n must be at least 2*m = {2 * self.m}")
        if self.separation < 0 or self.sd <= 0:
            raise ConfigError("separation must be >= 0 and sd > 0")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != self.m or any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
                raise ConfigError("weights must be m positive numbers summing to 1")
            object.__setattr__(self, "weights", w)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    weights = spec.weights or (1.0 / spec.m,) * spec.m
    counts = apportion(spec.n, weights)
    if min(counts) < 2:
        raise ConfigError("every class needs at least two samples")
    labels = np.repeat(np.arange(spec.m), counts)[rng.permutation(spec.n)]
    means = np.zeros((spec.m, spec.d))
    means[np.arange(spec.m), np.arange(spec.m)] = spec.separation / math.sqrt(2.0)
    X = means[labels] + spec.sd * rng.standard_normal((spec.n, spec.d))
    space = LabelSpace(tuple(f"class{c}" for c in range(spec.m)))
    return Dataset(X, labels, space)


# -- configuration ----------------------------------------------------------


def _tuple(x):
    return tuple(x) if isinstance(x, (list, tuple)) else (x,)


@dataclass(frozen=True)
class ExperimentConfig:
    csv_path: str | None = None
    label_column: str = "label"
    synthetic: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    split: SplitSpec = field(default_factory=SplitSpec)
    noise_fractions: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(9))
    noise_mode: str = "shuffle"
    thresholds: tuple[float, ...] = (0.8, 0.5, 0.2)
    outlier_cutoff: float = 0.1
    deltas: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    temperatures: tuple[float, ...] = (1.0, 10.0, 100.0)
    variance_floor: float = 1e-8
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    classifiers: tuple[str, ...] = ("lda", "lr")
    objective: str = "accuracy"
    repeats: int = 30
    base_seed: int = 0

    def __post_init__(self):
        for name in ("noise_fractions", "thresholds", "deltas", "temperatures", "classifiers"):
            val = _tuple(getattr(self, name))
            object.__setattr__(self, name, val)
            if not val:
                raise ConfigError(f"{name} must not be empty")
        if self.csv_path is None and self.synthetic is None:
            raise ConfigError("config needs either csv_path or synthetic")
        unknown = set(self.classifiers) - {"lda", "lr"}
        if unknown:
            raise ConfigError(f"unknown classifiers {sorted(unknown)}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative")
        if self.noise_mode not in ("shuffle", "flip"):
            raise ConfigError(f"unknown noise mode {self.noise_mode!r}")
        try:
            for f in self.noise_fractions:
                NoiseSpec(f, self.noise_mode)
            for t in self.thresholds:
                icp.CleaningPolicy(t, self.outlier_cutoff)
            for d in self.deltas:
                for t in self.temperatures:
                    cpsc.CpscConfig(d, t, self.variance_floor)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def scenario_keys(self) -> list[tuple[float, float, str]]:
        return list(itertools.product(self.noise_fractions, self.thresholds, self.classifiers))

    def load_dataset(self) -> Dataset:
        if self.csv_path is not None:
            return load_csv(self.csv_path, self.label_column)
        return generate_synthetic(self.synthetic)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            if doc.get("synthetic") is not None:
                doc["synthetic"] = SyntheticSpec(**doc["synthetic"])
            elif "csv_path" in doc and "synthetic" not in doc:
                doc["synthetic"] = None
            if "split" in doc:
                doc["split"] = SplitSpec(**doc["split"])
            if "preprocess" in doc:
                pp = dict(doc["preprocess"])
                pp["smote"] = SmoteConfig(**pp.get("smote", {}))
                pp["l1_select"] = L1Config(**pp.get("l1_select", {}))
                doc["preprocess"] = PreprocessConfig(**pp)
            return cls(**doc)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)


# -- seeds ------------------------------------------------------------------

_STAGES = {"split": 0, "noise": 1, "smote_proper": 2, "smote_train": 3}


def derive_seed(base_seed: int, repeat: int, stage: str) -> int:
    """Seed for one pipeline stage of one repeat.

    ``SeedSequence`` hashes (base seed, repeat, stage) into an independent
    64-bit stream, so no two stages or repeats share a seed.
    """
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(repeat, _STAGES[stage]))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def objective_value(ms: MetricSet, objective: str) -> float:
    if objective == "accuracy":
        return ms.accuracy
    if objective == "accuracy_plus_macro_f1":
        return ms.accuracy + ms.macro_f1
    if ms.auroc is None:
        raise ValueError("auroc_plus_auprc needs a binary task with both classes in the validation set")
    return ms.auroc + ms.auprc


# -- per-repeat pipeline ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class StagedData:
    proper: Dataset
    calibration: Dataset
    validation: Dataset
    test: Dataset
    proper_truth: np.ndarray  # true labels of the original proper rows


class RepeatContext:
    """Everything one (noise fraction, repeat) pair shares across scenarios.

    Split, permutation and preprocessing are computed once; p-values are
    memoised per grid point so thresholds and classifiers reuse them.
    ``pvalue_hook`` is called on every p-value request, which lets tests
    verify that the baseline arm never consults them.
    """

    def __init__(self, cfg: ExperimentConfig, dataset: Dataset, noise_fraction: float, repeat: int):
        self.cfg = cfg
        self.noise_fraction = noise_fraction
        self.repeat = repeat
        self.pvalue_hook = None
        parts = split(dataset, replace(cfg.split, seed=derive_seed(cfg.base_seed, repeat, "split")))
        noise = NoiseSpec(noise_fraction, cfg.noise_mode, derive_seed(cfg.base_seed, repeat, "noise"))
        noisy, self.noise_mask = permute_labels(parts.proper, noise)
        self.true_proper_labels = parts.proper.labels
        proper, cal, val, test = noisy, parts.calibration, parts.validation, parts.test
        if cfg.preprocess.standardize:
            (proper, cal, val, test), _, _ = standardize_fit_apply(
                proper.concat(cal), [proper, cal, val, test]
            )
        self._parts = (proper, cal, val, test)
        self._staged = {}
        self._pvals = {}
        self._baseline = {}

    @property
    def c_grid(self) -> tuple:
        l1 = self.cfg.preprocess.l1_select
        return l1.grid if l1.enabled else (None,)

    def staged(self, c=None) -> StagedData:
        if c not in self._staged:
            proper, cal, val, test = self._parts
            if c is not None:
                # selection sees only the training data available before cleaning
                mask = l1_select(proper.concat(cal), c)
                proper, cal, val, test = (mask.apply(p) for p in (proper, cal, val, test))
            smote = self.cfg.preprocess.smote
            if smote.enabled:
                proper = smote_oversample(
                    proper, smote, derive_seed(self.cfg.base_seed, self.repeat, "smote_proper")
                )
            self._staged[c] = StagedData(proper, cal, val, test, self.true_proper_labels)
        return self._staged[c]

    def pvalues(self, c, delta, temperature) -> icp.PValueMatrix:
        if self.pvalue_hook is not None:
            self.pvalue_hook((c, delta, temperature))
        key = (c, delta, temperature)
        if key not in self._pvals:
            data = self.staged(c)
            model = cpsc.fit(data.proper, cpsc.CpscConfig(delta, temperature, self.cfg.variance_floor))
            cal = icp.calibrate(model, data.calibration)
            self._pvals[key] = icp.p_values(model, cal, data.proper)
        return self._pvals[key]

    def _train_and_score(self, train: Dataset, data: StagedData, classifier: str):
        smote = self.cfg.preprocess.smote
        if smote.enabled:
            seed = derive_seed(self.cfg.base_seed, self.repeat, "smote_train")
            train = smote_oversample(train, smote, seed, id_prefix="smote_train")
        model = fit_classifier(classifier, train)
        m = train.n_classes
        scores = {}
        for name, part in (("validation", data.validation), ("test", data.test)):
            scores[name] = evaluate(model.predict_proba(part.features), part.labels, m)
        return scores

    def cleaned_arm(self, c, delta, temperature, threshold, classifier):
        data = self.staged(c)
        pv = self.pvalues(c, delta, temperature)
        policy = icp.CleaningPolicy(threshold, self.cfg.outlier_cutoff)
        cleaned, report = icp.clean(data.proper, pv, policy)
        scores = self._train_and_score(cleaned.concat(data.calibration), data, classifier)
        return scores, report

    def baseline_arm(self, c, classifier):
        key = (c, classifier)
        if key not in self._baseline:
            data = self.staged(c)
            self._baseline[key] = self._train_and_score(data.proper.concat(data.calibration), data, classifier)
        return self._baseline[key]


@dataclass
class ScenarioRow:
    """Outcome of one scenario in one repeat."""

    noise_fraction: float
    threshold: float
    classifier: str
    repeat: int
    metrics: dict  # (arm, split) -> MetricSet
    chosen: dict
    baseline_chosen: dict
    corrections_total: int
    corrections_by_class: dict
    outliers: int
    wrong_before: int
    wrong_after: int

    @property
    def key(self):
        return (self.noise_fraction, self.threshold, self.classifier)


def _select(candidates, objective):
    best, best_val = None, -math.inf
    for params, scores, extra in candidates:
        val = objective_value(scores["validation"], objective)
        if val > best_val:
            best, best_val = (params, scores, extra), val
    return best


def run_scenario(
    cfg: ExperimentConfig,
    noise_fraction: float,
    threshold: float,
    classifier: str,
    repeat_index: int,
    dataset: Dataset | None = None,
    context: RepeatContext | None = None,
) -> ScenarioRow:
    key = (noise_fraction, threshold, classifier)
    try:
        if context is None:
            context = RepeatContext(cfg, dataset if dataset is not None else cfg.load_dataset(), noise_fraction, repeat_index)
        ctx = context
        cleaned = []
        for c in ctx.c_grid:
            for delta in cfg.deltas:
                for temp in cfg.temperatures:
                    scores, report = ctx.cleaned_arm(c, delta, temp, threshold, classifier)
                    cleaned.append(({"c": c, "delta": delta, "temperature": temp}, scores, report))
        params, scores, report = _select(cleaned, cfg.objective)
        base = [({"c": c}, ctx.baseline_arm(c, classifier), None) for c in ctx.c_grid]
        base_params, base_scores, _ = _select(base, cfg.objective)
        n_orig = ctx.true_proper_labels.size
        sub = icp.CleaningReport(
            report.sample_ids[:n_orig], report.original_labels[:n_orig], report.verdicts[:n_orig], report.classes
        )
        truth = icp.assess_correctness(sub, sub.original_labels, ctx.true_proper_labels)
    except Exception as exc:
        raise ScenarioError(key, repeat_index, exc) from exc
    metrics = {}
    for split_name in EVAL_SPLITS:
        metrics[("cleaned", split_name)] = scores[split_name]
        metrics[("baseline", split_name)] = base_scores[split_name]
    return ScenarioRow(
        noise_fraction, threshold, classifier, repeat_index, metrics, params, base_params,
        report.corrections_total, report.corrections_by_class, report.outliers,
        truth.wrong_before, truth.wrong_after,
    )


def _run_unit(args):
    cfg, dataset, noise_fraction, repeat = args
    rows, failures = [], []
    try:
        ctx = RepeatContext(cfg, dataset, noise_fraction, repeat)
    except Exception as exc:
        for thr, clf in itertools.product(cfg.thresholds, cfg.classifiers):
            failures.append(_failure((noise_fraction, thr, clf), repeat, exc))
        return rows, failures
    for thr, clf in itertools.product(cfg.thresholds, cfg.classifiers):
        try:
            rows.append(run_scenario(cfg, noise_fraction, thr, clf, repeat, context=ctx))
        except ScenarioError as exc:
            failures.append(_failure(exc.key, repeat, exc.cause))
    return rows, failures


def _failure(key, repeat, exc):
    log.warning("scenario %s repeat %d failed: %s", key, repeat, exc)
    return {
        "noise_fraction": key[0], "threshold": key[1], "classifier": key[2],
        "repeat": repeat, "error": f"{type(exc).__name__}: {exc}",
    }


@dataclass
class ScenarioResult:
    noise_fraction: float
    threshold: float
    classifier: str
    rows: list = field(default_factory=list)

    @property
    def key(self):
        return (self.noise_fraction, self.threshold, self.classifier)

    @property
    def n_pairs(self) -> int:
        return len(self.rows)

    def series(self, arm: str, split_name: str, metric: str):
        vals = [r.metrics[(arm, split_name)].get(metric) for r in self.rows]
        return None if any(v is None for v in vals) else np.array(vals, dtype=np.float64)

    def comparison(self, split_name: str, metric: str):
        a = self.series("cleaned", split_name, metric)
        b = self.series("baseline", split_name, metric)
        if a is None or b is None or a.size < 2:
            return None
        return paired_ttest(a, b)


@dataclass
class SuiteResult:
    config: ExperimentConfig
    scenarios: list
    failures: list

    def scenario(self, noise_fraction, threshold, classifier) -> ScenarioResult:
        for s in self.scenarios:
            if s.key == (noise_fraction, threshold, classifier):
                return s
        raise KeyError((noise_fraction, threshold, classifier))


def run_suite(cfg: ExperimentConfig, dataset: Dataset | None = None, workers: int = 1) -> SuiteResult:
    """Run every (noise, threshold, classifier) scenario for ``cfg.repeats`` paired repeats.

    Work is grouped by (noise fraction, repeat) so p-values are shared
    across thresholds and classifiers. Results are merged in canonical
    order, so the output does not depend on ``workers``.
    """
    dataset = dataset if dataset is not None else cfg.load_dataset()
    units = [(cfg, dataset, f, r) for f in cfg.noise_fractions for r in range(cfg.repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_unit, units))
    else:
        outputs = [_run_unit(u) for u in units]
    by_key = {k: ScenarioResult(*k) for k in cfg.scenario_keys}
    failures = []
    for rows, fails in outputs:
        for row in rows:
            by_key[row.key].rows.append(row)
        failures.extend(fails)
    for res in by_key.values():
        res.rows.sort(key=lambda r: r.repeat)
    order = {k: i for i, k in enumerate(cfg.scenario_keys)}
    failures.sort(key=lambda f: (order[(f["noise_fraction"], f["threshold"], f["classifier"])], f["repeat"]))
    return SuiteResult(cfg, [by_key[k] for k in cfg.scenario_keys], failures)


# -- emission ---------------------------------------------------------------


def _num(x):
    if x is None:
        return ""
    return repr(float(x))


def _clean_json(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _clean_json(obj.item())
    return obj


def summarize(result: SuiteResult) -> dict:
    scenarios = []
    for s in result.scenarios:
        entry = {
            "noise_fraction": s.noise_fraction,
            "threshold": s.threshold,
            "classifier": s.classifier,
            "n_pairs": s.n_pairs,
            "metrics": {},
        }
        for split_name in EVAL_SPLITS:
            block = {}
            for metric in METRICS:
                cmp = s.comparison(split_name, metric)
                if cmp is not None:
                    block[metric] = {
                        "mean_cleaned": cmp.mean_a,
                        "mean_baseline": cmp.mean_b,
                        "mean_diff": cmp.mean_diff,
                        "ci95_cleaned": list(cmp.ci95_a),
                        "ci95_baseline": list(cmp.ci95_b),
                        "t_stat": cmp.t_stat,
                        "p_value": cmp.p_value,
                        "stars": cmp.stars,
                        "degenerate": cmp.degenerate,
                    }
            entry["metrics"][split_name] = block
        if s.rows:
            entry["cleaning"] = {
                name: float(np.mean([getattr(r, name) for r in s.rows]))
                for name in ("corrections_total", "outliers", "wrong_before", "wrong_after")
            }
        scenarios.append(entry)
    return _clean_json({
        "config": result.config.to_dict(),
        "n_scenarios": len(result.scenarios),
        "scenarios": scenarios,
        "failures": result.failures,
    })


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_outputs(result: SuiteResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metric_rows, count_rows, param_rows = [], [], []
    classes = None
    for s in result.scenarios:
        for r in s.rows:
            k = [_num(r.noise_fraction), _num(r.threshold), r.classifier, r.repeat]
            for arm in ARMS:
                for split_name in EVAL_SPLITS:
                    ms = r.metrics[(arm, split_name)]
                    for metric in METRICS:
                        if ms.get(metric) is not None:
                            metric_rows.append(k + [arm, split_name, metric, _num(ms.get(metric))])
            classes = classes or list(r.corrections_by_class)
            count_rows.append(
                k + [r.corrections_total] + [r.corrections_by_class[c] for c in classes]
                + [r.outliers, r.wrong_before, r.wrong_after]
            )
            param_rows.append(k + [_num(r.chosen["delta"]), _num(r.chosen["temperature"]),
                                   _num(r.chosen["c"]), _num(r.baseline_chosen["c"])])
    key_cols = ["noise_fraction", "threshold", "classifier", "repeat"]
    _write_csv(out / "metrics.csv", key_cols + ["arm", "split", "metric", "value"], metric_rows)
    _write_csv(
        out / "cleaning_counts.csv",
        key_cols + ["corrections_total"] + [f"corrections_{c}" for c in (classes or [])]
        + ["outliers", "wrong_before", "wrong_after"],
        count_rows,
    )
    _write_csv(out / "hyperparameters.csv", key_cols + ["delta", "temperature", "c", "baseline_c"], param_rows)
    summary = summarize(result)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_plotdata(result, out / "plotdata")
    return out


def write_plotdata(result: SuiteResult, plot_dir) -> None:
    """Metric-vs-noise curves with 95% CIs and mean cleaning-count curves."""
    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    curves, counts = [], []
    for s in result.scenarios:
        if not s.rows:
            continue
        k = [s.classifier, _num(s.threshold), _num(s.noise_fraction)]
        for split_name in EVAL_SPLITS:
            for metric in METRICS:
                for arm in ARMS:
                    x = s.series(arm, split_name, metric)
                    if x is None:
                        continue
                    mean, lo, hi = mean_ci(x)
                    curves.append(k + [split_name, metric, arm, _num(mean), _num(lo), _num(hi)])
        by_class = {c: [r.corrections_by_class[c] for r in s.rows] for c in s.rows[0].corrections_by_class}
        row = k
        for name in ("corrections_total", "outliers", "wrong_before", "wrong_after"):
            mean, lo, hi = mean_ci([getattr(r, name) for r in s.rows])
            row = row + [_num(mean), _num(lo), _num(hi)]
        counts.append(row + [_num(np.mean(v)) for v in by_class.values()])
        count_cls = list(by_class)
    _write_csv(
        plot_dir / "metric_vs_noise.csv",
        ["classifier", "threshold", "noise_fraction", "split", "metric", "arm", "mean", "ci_low", "ci_high"],
        curves,
    )
    header = ["classifier", "threshold", "noise_fraction"]
    for name in ("corrections_total", "outliers", "wrong_before", "wrong_after"):
        header += [f"{name}_mean", f"{name}_ci_low", f"{name}_ci_high"]
    if counts:
        header += [f"corrections_{c}_mean" for c in count_cls]
    _write_csv(plot_dir / "cleaning_counts_vs_noise.csv", header, counts)


def format_report(summary: dict, split_name: str = "test") -> str:
    """Human-readable table: per scenario, baseline and cleaned means with CIs and stars."""
    lines = [
        f"{'noise':>5} {'thr':>4} {'clf':>4} {'metric':>9} {'n':>3}  "
        f"{'baseline mean [95% CI]':>26}  {'cleaned mean [95% CI]':>26}  {'diff':>8} {'p':>8} sig"
    ]
    for s in summary["scenarios"]:
        for metric, c in s["metrics"].get(split_name, {}).items():
            p = c["p_value"]
            lines.append(
                f"{s['noise_fraction']:>5.2f} {s['threshold']:>4.2f} {s['classifier']:>4} {metric:>9} "
                f"{s['n_pairs']:>3}  "
                f"{c['mean_baseline']:.4f} [{c['ci95_baseline'][0]:.4f}, {c['ci95_baseline'][1]:.4f}]  "
                f"{c['mean_cleaned']:.4f} [{c['ci95_cleaned'][0]:.4f}, {c['ci95_cleaned'][1]:.4f}]  "
                f"{c['mean_diff']:>+8.4f} {p:>8.2g} {c['stars']}"
            )
    if summary.get("failures"):
        lines.append(f"\n{len(summary['failures'])} failed scenario repeats")
    return "\n".join(lines) + "\n"
