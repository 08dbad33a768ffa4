"""Metrics and the experiment drivers (imbalance sweep, assignment analysis,
test-set bias, feature ablation).

Every experiment is a grid of independent cells (alpha x fold, or subset size
x fold x repetition).  Each cell draws its randomness from a stream derived
from the master seed and its coordinates, so cells can run in any order or in
parallel and still give bit-identical rows.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import __version__
from .config import RunConfig, rng_for
from .dataset import (
    OmicsDataset,
    alpha_ratio,
    gen_synthetic,
    load_csv,
    mrmr_rank,
    smote_replicate,
    stratified_kfold,
    variance_filter,
)
from .decoding import (
    AssignmentVector,
    LogisticModel,
    build_assignment,
    compute_firing_average,
    decode_class_average,
    decode_firing_average,
    decode_population_vector,
    decode_wta,
    logistic_predict,
    logistic_update,
)
from .errors import AllZeroResponse, EmptySet, InvalidConfig, UnknownFeatureGroup, ZeroVariance
from .gsn import FeatureLayout, GsnEncoder, assign_layout, fit_feature_stats, read_layout, som_inputs, train_som
from .wta_network import collect_responses, init_network, train_epochs

log = logging.getLogger(__name__)

ABSTAIN = -1
RESULT_COLUMNS = (
    "experiment", "decoder", "alpha", "fold", "seed", "f1", "accuracy",
    "assignment_alpha", "abstentions", "mode_collapse",
)
BIAS_COLUMNS = ("experiment", "decoder", "z_source", "subset_size", "fold", "repetition", "seed", "accuracy")
POOLED = -1


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(y_true, y_pred) -> ConfusionMatrix:
    """Class 1 is positive.  Abstentions (-1) count as the wrong answer."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    pos = y_true == 1
    tp = int(np.sum(pos & (y_pred == 1)))
    fn = int(np.sum(pos & (y_pred != 1)))
    tn = int(np.sum(~pos & (y_pred == 0)))
    fp = int(np.sum(~pos & (y_pred != 0)))
    return ConfusionMatrix(tp, fp, fn, tn)


def f1_score(cm: ConfusionMatrix) -> float:
    denom = 2 * cm.tp + cm.fp + cm.fn
    return 0.0 if denom == 0 else 2 * cm.tp / denom


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptySet("accuracy of an empty set")
    return (cm.tp + cm.tn) / cm.total


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two equal-length vectors of length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(dx @ dx)), math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        raise ZeroVariance("correlation undefined for a constant vector")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def filter(self, **kw) -> list[dict]:
        return [r for r in self.rows if all(r[k] == v for k, v in kw.items())]

    def write_csv(self, path, columns: Iterable[str] = RESULT_COLUMNS) -> None:
        write_rows(self.rows, path, columns)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 12))
    return str(v)


def write_rows(rows: list[dict], path, columns: Iterable[str]) -> None:
    columns = list(columns)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_manifest(cfg: RunConfig, path, extra: dict | None = None) -> None:
    """One JSON line per run: config hash, seed and library versions."""
    rec = {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "spikedx": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        **(extra or {}),
    }
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# data preparation
# ---------------------------------------------------------------------------


def prepare_dataset(cfg: RunConfig) -> tuple[OmicsDataset, list[int]]:
    """Load or synthesise, variance-filter, then keep the mRMR top-k columns.

    Returns the reduced dataset and the greedy ranking (indices into the
    filtered dataset).
    """
    if cfg.data:
        d = load_csv(cfg.data)
    else:
        d = gen_synthetic(
            cfg.n_majority, cfg.n_minority, cfg.n_features, cfg.separation,
            rng_for(cfg.seed, "synthetic"), cfg.n_informative,
        )
    d = variance_filter(d, cfg.variance_threshold)
    k = min(cfg.top_k, d.n_features)
    ranking = mrmr_rank(d, k, cfg.mi_bins)
    return d.select_features(ranking), ranking


# ---------------------------------------------------------------------------
# one cross-validation cell
# ---------------------------------------------------------------------------


@dataclass
class CellOutcome:
    alpha_key: str
    fold: int
    train_alpha: float
    y_true: np.ndarray
    predictions: dict  # decoder -> array, ABSTAIN marks abstentions
    assignment: AssignmentVector | None

    @property
    def assignment_alpha(self) -> float | None:
        return None if self.assignment is None else self.assignment.assignment_alpha()

    @property
    def mode_collapse(self) -> bool:
        return self.assignment is not None and self.assignment.mode_collapse


def _decode_all(decoders, counts, Z, F, logistic) -> dict:
    out = {}
    for name in decoders:
        preds = np.empty(len(counts), dtype=int)
        for i, r in enumerate(counts):
            try:
                if name == "wta":
                    preds[i] = decode_wta(r, Z)
                elif name == "population_vector":
                    preds[i] = decode_population_vector(r, Z)
                elif name == "class_average":
                    preds[i] = decode_class_average(r, Z)
                elif name == "firing_average":
                    preds[i] = decode_firing_average(r, Z, F)
                else:
                    preds[i] = logistic_predict(logistic, r)[1]
            except AllZeroResponse:
                preds[i] = ABSTAIN
        out[name] = preds
    return out


def _alpha_label(a) -> str:
    return "native" if a == "native" else repr(float(a))


def run_cell(
    cfg: RunConfig,
    d: OmicsDataset,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    target_alpha,
    fold: int,
    experiment: str,
    layout: FeatureLayout | None = None,
) -> CellOutcome:
    """Rebalance, encode, train, collect, decode one fold."""
    alpha_key = _alpha_label(target_alpha)
    rng = rng_for(cfg.seed, experiment, alpha_key, fold)
    train = d.subset(train_idx)
    test = d.subset(test_idx)
    if target_alpha != "native" and alpha_ratio(train).alpha < target_alpha:
        train = smote_replicate(train, float(target_alpha), rng)
    assert not test.synthetic.any(), "scored rows must come from the original dataset"

    enc = GsnEncoder(cfg.gsn_config()).fit(train.original(), rng, layout=layout)
    x_train = enc.transform(train)
    x_test = enc.transform(test)

    netcfg = cfg.network_config()
    net = init_network(netcfg, rng)
    scale = 1.0 / netcfg.presentation_ms * netcfg.dt_ms if cfg.logistic_standardize else 1.0
    logistic = LogisticModel.zeros(netcfg.output_neurons, cfg.logistic_eta, scale)
    if cfg.epochs > 0:
        train_epochs(
            net, x_train, cfg.epochs, rng,
            on_presentation=lambda i, res: logistic_update(logistic, res.output_counts, int(train.labels[i])),
        )
    elif not cfg.allow_untrained:
        raise InvalidConfig("epochs=0 requires allow_untrained")
    R_train = collect_responses(net, x_train, train.labels, rng, allow_untrained=cfg.allow_untrained)
    R_test = collect_responses(net, x_test, test.labels, rng, allow_untrained=cfg.allow_untrained)
    R_ref = R_train if cfg.z_source == "train" else R_test
    Z = build_assignment(R_ref, d.num_classes)
    F = compute_firing_average(R_ref)
    preds = _decode_all(cfg.decoders, R_test.counts, Z, F, logistic)
    return CellOutcome(alpha_key, fold, alpha_ratio(train).alpha, test.labels, preds, Z)


def _run_task(task):
    return run_cell(*task)


def _pmap(fn: Callable, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def _global_layout(cfg: RunConfig, d: OmicsDataset) -> FeatureLayout | None:
    if cfg.layout:
        return read_layout(cfg.layout, cfg.som_grid)
    if cfg.som_scope != "global":
        return None
    gc = cfg.gsn_config()
    x = som_inputs(d, fit_feature_stats(d))
    som = train_som(x, gc.som_grid, gc.som_epochs, gc.som_lr, rng_for(cfg.seed, "som-global"))
    return assign_layout(som, x, d.feature_names)


def _rows_for(experiment: str, cfg: RunConfig, outcomes: list[CellOutcome], alpha_keys: list[str]) -> list[dict]:
    rows = []
    for key in alpha_keys:
        cells = sorted((o for o in outcomes if o.alpha_key == key), key=lambda o: o.fold)
        for name in cfg.decoders:
            uses_z = name != "logistic"
            for o in cells:
                cm = confusion(o.y_true, o.predictions[name])
                rows.append({
                    "experiment": experiment, "decoder": name, "alpha": o.train_alpha, "fold": o.fold,
                    "seed": cfg.seed, "f1": f1_score(cm), "accuracy": accuracy(cm),
                    "assignment_alpha": o.assignment_alpha if uses_z else None,
                    "abstentions": int(np.sum(o.predictions[name] == ABSTAIN)),
                    "mode_collapse": int(o.mode_collapse) if uses_z else None,
                })
            cm = confusion(
                np.concatenate([o.y_true for o in cells]),
                np.concatenate([o.predictions[name] for o in cells]),
            )
            rows.append({
                "experiment": experiment, "decoder": name,
                "alpha": float(np.mean([o.train_alpha for o in cells])), "fold": POOLED,
                "seed": cfg.seed, "f1": f1_score(cm), "accuracy": accuracy(cm),
                "assignment_alpha": float(np.mean([o.assignment_alpha for o in cells])) if uses_z else None,
                "abstentions": int(sum(np.sum(o.predictions[name] == ABSTAIN) for o in cells)),
                # pooled rows count the collapsed folds
                "mode_collapse": int(sum(o.mode_collapse for o in cells)) if uses_z else None,
            })
    return rows


def _cv_cells(cfg: RunConfig, d: OmicsDataset, experiment: str, alphas: list) -> list[CellOutcome]:
    split = stratified_kfold(d, cfg.folds, rng_for(cfg.seed, "folds"))
    layout = _global_layout(cfg, d)
    tasks = [
        (cfg, d, split.train_indices(f), split.test_indices(f), a, f, experiment, layout)
        for a in alphas
        for f in range(cfg.folds)
    ]
    return _pmap(_run_task, tasks, cfg.jobs)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_imbalance_sweep(cfg: RunConfig, d: OmicsDataset | None = None, experiment: str = "sweep") -> ExperimentResult:
    """Cross-validated decoder scores for each training-set alpha on the grid.

    Fold-train sets are oversampled up to each target alpha (targets at or
    below a fold's own alpha leave it unchanged); fold-test sets are never
    touched.  Emits one row per alpha x fold x decoder plus one pooled row
    (fold = -1) per alpha x decoder.
    """
    cfg.validate()
    if not cfg.alpha_grid:
        raise InvalidConfig("alpha grid is empty")
    if d is None:
        d, _ = prepare_dataset(cfg)
    outcomes = _cv_cells(cfg, d, experiment, list(cfg.alpha_grid))
    keys = [_alpha_label(a) for a in cfg.alpha_grid]
    res = ExperimentResult(_rows_for(experiment, cfg, outcomes, keys))
    res.summary["outcomes"] = outcomes
    return res


def run_assignment_analysis(cfg: RunConfig, d: OmicsDataset | None = None) -> ExperimentResult:
    """Sweep, then correlate training-set alpha with assignment alpha over all fold cells."""
    if len(cfg.alpha_grid) < 2:
        raise ZeroVariance("assignment analysis needs at least two alpha grid points")
    res = run_imbalance_sweep(cfg, d, experiment="assign")
    outcomes = res.summary["outcomes"]
    x = [o.train_alpha for o in outcomes]
    y = [o.assignment_alpha for o in outcomes]
    res.summary["pearson"] = pearson(x, y)
    res.summary["collapsed_cells"] = int(sum(o.mode_collapse for o in outcomes))
    return res


@dataclass
class BiasResult:
    rows: list[dict]

    def mean_accuracy_by_size(self) -> dict[int, float]:
        sizes = sorted({r["subset_size"] for r in self.rows})
        return {s: float(np.mean([r["accuracy"] for r in self.rows if r["subset_size"] == s])) for s in sizes}

    def write_csv(self, path) -> None:
        write_rows(self.rows, path, BIAS_COLUMNS)


def _bias_cell(task) -> list[dict]:
    cfg, d, train_idx, test_idx, fold, rep, layout = task
    rng = rng_for(cfg.seed, "bias", fold, rep)
    train, test = d.subset(train_idx), d.subset(test_idx)
    enc = GsnEncoder(cfg.gsn_config()).fit(train, rng, layout=layout)
    x_test = enc.transform(test)
    net = init_network(cfg.network_config(), rng)
    R_train = None
    if cfg.bias_z_source == "train":
        R_train = collect_responses(net, enc.transform(train), train.labels, rng, allow_untrained=True)
    rows = []
    for size in cfg.bias_subset_sizes:
        if size > test.n_samples:
            log.warning("subset size %d exceeds fold %d test size %d; skipped", size, fold, test.n_samples)
            continue
        pick = np.sort(rng.choice(test.n_samples, size=size, replace=False))
        R = collect_responses(net, x_test[pick], test.labels[pick], rng, allow_untrained=True)
        ref = R if R_train is None else R_train
        Z = build_assignment(ref, d.num_classes)
        F = compute_firing_average(ref)
        preds = _decode_all([cfg.bias_decoder], R.counts, Z, F, None)[cfg.bias_decoder]
        rows.append({
            "experiment": "bias", "decoder": cfg.bias_decoder, "z_source": cfg.bias_z_source,
            "subset_size": int(size), "fold": fold, "repetition": rep, "seed": cfg.seed,
            "accuracy": accuracy(confusion(R.labels, preds)),
        })
    return rows


def run_bias_experiment(cfg: RunConfig, d: OmicsDataset | None = None) -> BiasResult:
    """Untrained network; Z built from (by default) the very test subset it scores."""
    cfg.validate()
    if cfg.bias_decoder not in ("wta", "population_vector", "class_average", "firing_average"):
        raise InvalidConfig("bias experiment needs a decoder that uses the assignment vector")
    if not cfg.bias_subset_sizes or min(cfg.bias_subset_sizes) < 1:
        raise InvalidConfig("subset sizes must be positive")
    if d is None:
        d, _ = prepare_dataset(cfg)
    split = stratified_kfold(d, cfg.folds, rng_for(cfg.seed, "folds"))
    layout = _global_layout(cfg, d)
    tasks = [
        (cfg, d, split.train_indices(f), split.test_indices(f), f, rep, layout)
        for f in range(cfg.folds)
        for rep in range(cfg.bias_repetitions)
    ]
    rows = [r for chunk in _pmap(_bias_cell, tasks, cfg.jobs) for r in chunk]
    rows.sort(key=lambda r: (r["subset_size"], r["fold"], r["repetition"]))
    return BiasResult(rows)


def default_feature_groups(d: OmicsDataset, cfg: RunConfig) -> dict[str, list[str]]:
    groups = {"all": list(d.feature_names)}
    if cfg.n_informative is not None and not cfg.data:
        informative = {f"f{j:02d}" for j in range(cfg.n_informative)}
        groups["informative"] = [n for n in d.feature_names if n in informative]
        groups["noise"] = [n for n in d.feature_names if n not in informative]
    return {k: v for k, v in groups.items() if v}


def fit_logistic(x: np.ndarray, y: np.ndarray, epochs: int, eta: float, rng: np.random.Generator) -> LogisticModel:
    """Online logistic regression run for several shuffled passes."""
    m = LogisticModel.zeros(x.shape[1], eta)
    for _ in range(epochs):
        for i in rng.permutation(len(y)):
            logistic_update(m, x[i], int(y[i]))
    return m


def run_logistic_ksweep(cfg: RunConfig, d: OmicsDataset, ranking: list[int]) -> list[dict]:
    """Cross-validated logistic F1 on the top-k ranked features, k = 1..k_max."""
    split = stratified_kfold(d, cfg.folds, rng_for(cfg.seed, "folds"))
    rows = []
    for k in range(1, min(cfg.ksweep_max, len(ranking)) + 1):
        cols = ranking[:k]
        y_all, p_all = [], []
        for f in range(cfg.folds):
            tr, te = split.train_indices(f), split.test_indices(f)
            x = d.features[:, cols]
            mu, sd = x[tr].mean(axis=0), x[tr].std(axis=0)
            sd[sd == 0] = 1.0
            z = (x - mu) / sd
            m = fit_logistic(z[tr], d.labels[tr], cfg.ksweep_epochs, cfg.logistic_eta, rng_for(cfg.seed, "ksweep", k, f))
            pred = np.array([logistic_predict(m, r)[1] for r in z[te]])
            cm = confusion(d.labels[te], pred)
            rows.append({
                "experiment": f"ksweep:k={k}", "decoder": "logistic", "alpha": alpha_ratio(d.subset(tr)).alpha,
                "fold": f, "seed": cfg.seed, "f1": f1_score(cm), "accuracy": accuracy(cm),
                "assignment_alpha": None, "abstentions": 0, "mode_collapse": None,
            })
            y_all.append(d.labels[te])
            p_all.append(pred)
        cm = confusion(np.concatenate(y_all), np.concatenate(p_all))
        rows.append({
            "experiment": f"ksweep:k={k}", "decoder": "logistic", "alpha": alpha_ratio(d).alpha,
            "fold": POOLED, "seed": cfg.seed, "f1": f1_score(cm), "accuracy": accuracy(cm),
            "assignment_alpha": None, "abstentions": 0, "mode_collapse": None,
        })
    return rows


def run_feature_ablation(
    cfg: RunConfig,
    full: OmicsDataset | None = None,
    ranking: list[int] | None = None,
    include_ksweep: bool = True,
) -> ExperimentResult:
    """Full pipeline per named feature group, plus the logistic top-k sweep.

    ``full`` is the variance-filtered dataset before top-k selection; groups
    name its columns and each group keeps its own mRMR top-k.  Without explicit groups on synthetic data the groups are
    all / informative / noise.
    """
    cfg.validate()
    if full is None:
        if cfg.data:
            full = load_csv(cfg.data)
        else:
            full = gen_synthetic(
                cfg.n_majority, cfg.n_minority, cfg.n_features, cfg.separation,
                rng_for(cfg.seed, "synthetic"), cfg.n_informative,
            )
        full = variance_filter(full, cfg.variance_threshold)
    groups = cfg.ablation_groups or default_feature_groups(full, cfg)
    res = ExperimentResult()
    for name, members in groups.items():
        unknown = [m for m in members if m not in full.feature_names]
        if unknown or not members:
            raise UnknownFeatureGroup(f"group {name!r} names unknown feature(s) {unknown}")
        sub = full.select_features([full.feature_names.index(m) for m in members])
        # same selection step as the main pipeline, restricted to the group
        sub = sub.select_features(mrmr_rank(sub, min(cfg.top_k, sub.n_features), cfg.mi_bins))
        gcfg = RunConfig.from_dict({**cfg.to_dict(), "alpha_grid": [cfg.ablation_alpha]})
        part = run_imbalance_sweep(gcfg, sub, experiment=f"ablate:{name}")
        res.rows.extend(part.rows)
    if include_ksweep:
        if ranking is None:
            ranking = mrmr_rank(full, min(cfg.ksweep_max, full.n_features), cfg.mi_bins)
        res.rows.extend(run_logistic_ksweep(cfg, full, ranking))
    return res
