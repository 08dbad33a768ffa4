"""``spikedx`` command-line entry point.

Every subcommand reads a JSON config (``--config``), applies flag overrides
(flags win; ``SPIKEDX_SEED`` is the seed fallback), and writes its outputs,
the resolved ``config.json`` and a ``manifest.json`` under ``--out-dir``.
A one-line record is also appended to ``runs.jsonl`` in the same directory.

Exit codes: 0 success, 2 schema/usage errors, 3 encoding errors, 4
experiment-level failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import SEED_ENV, RunConfig, load_config, rng_for
from .dataset import OmicsDataset, alpha_ratio, stratified_kfold, write_csv
from .decoding import (
    LogisticModel,
    build_assignment,
    compute_firing_average,
    logistic_update,
    write_assignment,
    write_responses,
)
from .errors import EncodingError, InvalidConfig, SchemaError, SpikedxError
from .evaluation import (
    ExperimentResult,
    _decode_all,
    _rows_for,
    CellOutcome,
    prepare_dataset,
    run_assignment_analysis,
    run_bias_experiment,
    run_feature_ablation,
    run_imbalance_sweep,
    write_manifest,
)
from .gsn import GsnEncoder, GsnImage, read_layout, write_layout, write_pbm
from .wta_network import collect_responses, init_network, load_network, save_network, train_epochs

log = logging.getLogger("spikedx")

EXIT_SCHEMA = 2
EXIT_ENCODE = 3
EXIT_EXPERIMENT = 4

KEY_HELP = {
    "data": "input CSV (sample_id, features..., label[, synthetic]); omit for synthetic data",
    "n_majority": "synthetic: majority-class samples",
    "n_minority": "synthetic: minority-class samples",
    "n_features": "synthetic: feature count",
    "n_informative": "synthetic: leading columns shifted by the separation (default all)",
    "separation": "synthetic: class mean shift on informative columns",
    "variance_threshold": "drop features whose sample variance is at or below this",
    "top_k": "features kept after mRMR ranking",
    "mi_bins": "equal-frequency bins for mutual information",
    "som_grid": "SOM grid as W,H",
    "som_epochs": "SOM training epochs",
    "som_lr": "SOM initial learning rate",
    "som_scope": "'fold' trains the SOM per fold-train split, 'global' once on all rows",
    "glyph_size_frac": "glyph size range as fractions of the shorter image side (lo,hi)",
    "layout": "layout CSV to reuse instead of training the SOM",
    "topology": "network preset: default | literal16 | reduced",
    "hidden_per_tile": "hidden WTA neurons per tile (preset default if unset)",
    "output_neurons": "output WTA neurons (preset default if unset)",
    "learning_rate": "STDP learning rate",
    "w_min": "lower weight bound",
    "w_max": "upper weight bound",
    "init_low": "lower bound of the uniform weight init (default w_min)",
    "init_high": "upper bound of the uniform weight init (default w_max)",
    "top_down_enabled": "enable output-to-hidden feedback weights",
    "top_down_gain": "scale of the feedback term",
    "stdp_window_ms": "presynaptic activity window for STDP and PSP traces",
    "rate_hz": "firing rate of white pixels",
    "presentation_ms": "presentation duration per stimulus",
    "dt_ms": "simulation step",
    "background_rate_hz": "firing rate of black pixels",
    "complement_channels": "add OFF channels that fire on black pixels",
    "psp_mode": "'trace' integrates recent presynaptic activity, 'spike' only current spikes",
    "epochs": "training epochs (0 needs allow_untrained)",
    "allow_untrained": "permit collecting responses from an untrained network",
    "folds": "cross-validation folds",
    "alpha_grid": "training-set alpha targets, comma separated ('native' keeps the fold as is)",
    "decoders": "decoders to score, comma separated",
    "logistic_eta": "online logistic learning rate",
    "logistic_standardize": "divide logistic inputs by the presentation length",
    "z_source": "'train' or 'test' responses build the assignment vector",
    "bias_subset_sizes": "test-subset sizes for the bias experiment, comma separated",
    "bias_repetitions": "random subsets drawn per size and fold",
    "bias_decoder": "decoder scored in the bias experiment",
    "bias_z_source": "'test' (default) builds Z from the scored subset itself; 'train' from training responses",
    "ablation_groups": "JSON object mapping group name to feature names",
    "ablation_alpha": "alpha target used for every ablation group",
    "ksweep_max": "largest k in the logistic top-k sweep",
    "ksweep_epochs": "passes of online logistic training per fold in the k-sweep",
    "jobs": "worker processes for experiment cells",
}

_DATA = ["data", "n_majority", "n_minority", "n_features", "n_informative", "separation"]
_PREP = _DATA + ["variance_threshold", "top_k", "mi_bins"]
_GSN = ["som_grid", "som_epochs", "som_lr", "glyph_size_frac", "layout"]
_NET = [
    "topology", "hidden_per_tile", "output_neurons", "learning_rate", "w_min", "w_max", "init_low",
    "init_high", "top_down_enabled", "top_down_gain", "stdp_window_ms", "rate_hz", "presentation_ms",
    "dt_ms", "background_rate_hz", "complement_channels", "psp_mode",
]
_EVAL = ["folds", "decoders", "logistic_eta", "logistic_standardize", "z_source", "som_scope", "jobs"]

COMMAND_KEYS = {
    "prepare": _PREP,
    "encode": _PREP + _GSN,
    "train": _PREP + _GSN + _NET + ["epochs", "allow_untrained", "folds", "logistic_eta", "logistic_standardize"],
    "eval": _PREP + _NET + ["decoders", "z_source", "folds"],
    "sweep": _PREP + _GSN + _NET + _EVAL + ["epochs", "allow_untrained", "alpha_grid"],
    "assign": _PREP + _GSN + _NET + _EVAL + ["epochs", "allow_untrained", "alpha_grid"],
    "bias": _PREP + _GSN + _NET + ["folds", "som_scope", "bias_subset_sizes", "bias_repetitions",
                                   "bias_decoder", "bias_z_source", "jobs"],
    "ablate": _DATA + ["variance_threshold", "mi_bins"] + _GSN + _NET + _EVAL
    + ["epochs", "allow_untrained", "ablation_groups", "ablation_alpha", "ksweep_max", "ksweep_epochs"],
}

COMMAND_HELP = {
    "prepare": "variance-filter and mRMR-rank a dataset; write the top-k CSV and ranking",
    "encode": "train the SOM layout (or reuse one) and render one PBM per sample",
    "train": "train the spiking network on one fold's training split",
    "eval": "score every decoder on the held-out fold of a trained model",
    "sweep": "cross-validated decoder scores over the alpha grid",
    "assign": "sweep plus the correlation of training alpha with assignment alpha",
    "bias": "test-set bias of an untrained network over test-subset sizes",
    "ablate": "full pipeline per feature group plus the logistic top-k sweep",
}


def _field_types() -> dict:
    return {f.name: f for f in fields(RunConfig)}


def _parse_list(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(json.loads(tok))
        except json.JSONDecodeError:
            out.append(tok)
    return out


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _converter(key: str):
    default = getattr(RunConfig(), key)
    if key == "ablation_groups":
        return json.loads
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, (list, tuple)):
        return _parse_list
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if key in ("n_informative", "hidden_per_tile", "output_neurons"):
        return int
    if key in ("init_low", "init_high"):
        return float
    if key == "ablation_alpha":
        return _parse_scalar
    return str


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikedx",
        description="Spiking winner-take-all classification of omics data rendered as glyph images.",
    )
    parser.add_argument("--version", action="version", version=f"spikedx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(
            name,
            help=COMMAND_HELP[name],
            description=COMMAND_HELP[name] + ".",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="config keys read by this command (JSON names; flags use dashes):\n"
            + "\n".join(f"  {k:22s} {KEY_HELP[k]}" for k in dict.fromkeys(keys))
            + f"\n\nThe master seed comes from --seed, then the config file, then ${SEED_ENV}.",
        )
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--out-dir", type=Path, default=Path("."), help="output directory (created if needed)")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        if "data" in keys:
            p.add_argument("--synthetic", action="store_true",
                           help="use the synthetic generator even if the config file names a CSV")
        for key in dict.fromkeys(keys):
            conv = _converter(key)
            extra = {"nargs": "?", "const": True} if conv is _parse_bool else {}
            flags = ["--" + key.replace("_", "-")]
            if key in ("bias_subset_sizes", "bias_repetitions"):
                flags.append("--" + key[len("bias_"):].replace("_", "-"))
            p.add_argument(
                *flags,
                dest=key,
                type=conv,
                default=argparse.SUPPRESS,
                help=KEY_HELP[key],
                **extra,
            )
        if name == "eval":
            p.add_argument("--model-dir", type=Path, required=True, help="output directory of a train run")
        if name == "train":
            p.add_argument("--fold", type=int, default=0, help="held-out fold index")
    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    names = _field_types()
    out = {k: v for k, v in vars(ns).items() if k in names}
    if getattr(ns, "synthetic", False):
        if out.get("data"):
            raise InvalidConfig("--synthetic and --data are mutually exclusive")
        out["data"] = None
    return out


def _finish(cfg: RunConfig, out: Path, command: str, outputs: list[str], extra: dict | None = None) -> None:
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest = {
        "command": command,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "spikedx": __version__,
        "numpy": np.__version__,
        "outputs": sorted(outputs),
        **(extra or {}),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(cfg, out / "runs.jsonl", {"command": command})


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_prepare(cfg: RunConfig, out: Path, ns) -> list[str]:
    d, ranking = prepare_dataset(cfg)
    write_csv(d, out / "dataset.csv")
    with (out / "ranking.csv").open("w", encoding="utf-8") as fh:
        fh.write("rank,feature_name\n")
        for r, name in enumerate(d.feature_names, start=1):
            fh.write(f"{r},{name}\n")
    log.info("kept %d features: %s", d.n_features, ", ".join(d.feature_names))
    return ["dataset.csv", "ranking.csv"]


def cmd_encode(cfg: RunConfig, out: Path, ns) -> list[str]:
    d, _ = prepare_dataset(cfg)
    layout = read_layout(cfg.layout, cfg.som_grid) if cfg.layout else None
    enc = GsnEncoder(cfg.gsn_config()).fit(d, rng_for(cfg.seed, "encode"), layout=layout)
    images = enc.transform(d)
    img_dir = out / "images"
    img_dir.mkdir(exist_ok=True)
    w, h = cfg.gsn_config().image_dims
    for sid, px in zip(d.sample_ids, images):
        write_pbm(GsnImage(w, h, px), img_dir / f"{sid}.pbm")
    write_layout(enc.layout, out / "layout.csv")
    with (out / "labels.csv").open("w", encoding="utf-8") as fh:
        fh.write("sample_id,label\n")
        fh.writelines(f"{s},{int(y)}\n" for s, y in zip(d.sample_ids, d.labels))
    return ["images/", "layout.csv", "labels.csv"]


def _split(cfg: RunConfig, d: OmicsDataset, fold: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 <= fold < cfg.folds:
        raise InvalidConfig(f"fold must lie in 0..{cfg.folds - 1}")
    split = stratified_kfold(d, cfg.folds, rng_for(cfg.seed, "folds"))
    return split.train_indices(fold), split.test_indices(fold)


def cmd_train(cfg: RunConfig, out: Path, ns) -> list[str]:
    d, _ = prepare_dataset(cfg)
    tr, te = _split(cfg, d, ns.fold)
    train = d.subset(tr)
    rng = rng_for(cfg.seed, "train", ns.fold)
    layout = read_layout(cfg.layout, cfg.som_grid) if cfg.layout else None
    enc = GsnEncoder(cfg.gsn_config()).fit(train, rng, layout=layout)
    x_train = enc.transform(train)
    netcfg = cfg.network_config()
    net = init_network(netcfg, rng)
    scale = netcfg.dt_ms / netcfg.presentation_ms if cfg.logistic_standardize else 1.0
    logistic = LogisticModel.zeros(netcfg.output_neurons, cfg.logistic_eta, scale)
    if cfg.epochs > 0:
        train_epochs(
            net, x_train, cfg.epochs, rng,
            on_presentation=lambda i, res: logistic_update(logistic, res.output_counts, int(train.labels[i])),
        )
    save_network(net, out / "network.txt")
    write_layout(enc.layout, out / "layout.csv")
    (out / "logistic.json").write_text(
        json.dumps({"w": logistic.w.tolist(), "b": logistic.b, "eta": logistic.eta,
                    "updates_seen": logistic.updates_seen, "input_scale": logistic.input_scale}) + "\n",
        encoding="utf-8",
    )
    (out / "split.json").write_text(
        json.dumps({"fold": ns.fold, "train": [d.sample_ids[i] for i in tr], "test": [d.sample_ids[i] for i in te]})
        + "\n",
        encoding="utf-8",
    )
    return ["network.txt", "layout.csv", "logistic.json", "split.json"]


def cmd_eval(cfg: RunConfig, out: Path, ns) -> list[str]:
    mdir = ns.model_dir
    net = load_network(mdir / "network.txt")
    split = json.loads((mdir / "split.json").read_text(encoding="utf-8"))
    lw = json.loads((mdir / "logistic.json").read_text(encoding="utf-8"))
    logistic = LogisticModel(np.array(lw["w"]), lw["b"], lw["eta"], lw["updates_seen"], lw["input_scale"])
    d, _ = prepare_dataset(cfg)
    pos = {s: i for i, s in enumerate(d.sample_ids)}
    try:
        tr = np.array([pos[s] for s in split["train"]], dtype=int)
        te = np.array([pos[s] for s in split["test"]], dtype=int)
    except KeyError as exc:
        raise InvalidConfig(f"model was trained on sample {exc} that this dataset lacks") from None
    train, test = d.subset(tr), d.subset(te)
    gcfg = cfg.gsn_config()
    enc = GsnEncoder(gcfg).fit(train, rng_for(cfg.seed, "eval-encode"), layout=read_layout(mdir / "layout.csv"))
    rng = rng_for(cfg.seed, "eval", split["fold"])
    allow = cfg.allow_untrained
    R_train = collect_responses(net, enc.transform(train), train.labels, rng, allow_untrained=allow)
    R_test = collect_responses(net, enc.transform(test), test.labels, rng, allow_untrained=allow)
    R_ref = R_train if cfg.z_source == "train" else R_test
    Z = build_assignment(R_ref, d.num_classes)
    F = compute_firing_average(R_ref)
    preds = _decode_all(cfg.decoders, R_test.counts, Z, F, logistic)
    outcome = CellOutcome("native", int(split["fold"]), alpha_ratio(train).alpha, test.labels, preds, Z)
    res = ExperimentResult(_rows_for("eval", cfg, [outcome], ["native"]))
    res.write_csv(out / "results.csv")
    write_assignment(Z, F, out / "assignment.csv")
    write_responses(R_test, out / "responses_test.csv")
    return ["results.csv", "assignment.csv", "responses_test.csv"]


def cmd_sweep(cfg: RunConfig, out: Path, ns) -> list[str]:
    res = run_imbalance_sweep(cfg)
    res.write_csv(out / "results.csv")
    return ["results.csv"]


def cmd_assign(cfg: RunConfig, out: Path, ns) -> list[str]:
    res = run_assignment_analysis(cfg)
    res.write_csv(out / "results.csv")
    summary = {"pearson": res.summary["pearson"], "collapsed_cells": res.summary["collapsed_cells"]}
    (out / "assignment_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")
    print(f"pearson(training alpha, assignment alpha) = {summary['pearson']:.4f}")
    return ["results.csv", "assignment_summary.json"]


def cmd_bias(cfg: RunConfig, out: Path, ns) -> list[str]:
    res = run_bias_experiment(cfg)
    res.write_csv(out / "bias.csv")
    for size, acc in res.mean_accuracy_by_size().items():
        print(f"subset size {size:4d}: mean accuracy {acc:.4f}")
    return ["bias.csv"]


def cmd_ablate(cfg: RunConfig, out: Path, ns) -> list[str]:
    res = run_feature_ablation(cfg)
    res.write_csv(out / "results.csv")
    return ["results.csv"]


COMMANDS = {
    "prepare": cmd_prepare,
    "encode": cmd_encode,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "assign": cmd_assign,
    "bias": cmd_bias,
    "ablate": cmd_ablate,
}


def _exit_code(command: str, exc: SpikedxError) -> int:
    if isinstance(exc, SchemaError):
        return EXIT_SCHEMA
    if isinstance(exc, EncodingError) or (command == "encode" and isinstance(exc, InvalidConfig)):
        return EXIT_ENCODE
    return EXIT_EXPERIMENT


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(ns.config, _overrides(ns))
        cfg.validate()
    except (InvalidConfig, TypeError, ValueError, OSError) as exc:
        print(f"spikedx {ns.command}: config error: {exc}", file=sys.stderr)
        return EXIT_ENCODE if ns.command == "encode" and isinstance(exc, InvalidConfig) else EXIT_SCHEMA
    if ns.command == "train" and cfg.epochs < 1 and not cfg.allow_untrained:
        print(
            "spikedx train: refusing epochs=0; train for at least one epoch before collecting "
            "responses, or pass --allow-untrained to override",
            file=sys.stderr,
        )
        return EXIT_SCHEMA
    out: Path = ns.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[ns.command](cfg, out, ns)
    except SpikedxError as exc:
        print(f"spikedx {ns.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(ns.command, exc)
    except FileNotFoundError as exc:
        print(f"spikedx {ns.command}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    _finish(cfg, out, ns.command, outputs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
