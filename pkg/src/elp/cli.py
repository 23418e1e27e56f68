"""Command-line surface: ingest, stats, train, evaluate, ablate, analyze,
rerank, synth.

Runs are driven by a YAML config (strictly validated: unknown keys are
rejected with their full path) plus a few overriding flags. Every run
writes a JSON manifest next to its reports with the exact config
snapshot, corpus hash and code version, so any report can be reproduced
by pointing --config at the manifest.

Exit codes: 0 success, 2 input error, 3 empty corpus, 4 invalid config,
5 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import yaml

from . import __version__, corpus as corpus_mod, experiments, neural, predictors
from .errors import (
    ConfigError,
    ElpError,
    EmptyCorpus,
    MissingColumn,
    OutputExists,
    UnsupportedCacheFormat,
)
from .experiments import ExperimentSpec, NeuralProfile
from .featurize import InputSetting, VocabOptions
from .neural import EmbeddingSpec, EncoderSpec, TrainConfig
from .synthetic import KeywordSignal, SyntheticSpec, generate_synthetic

log = logging.getLogger("elp")

MANIFEST_FORMAT_VERSION = 1
CACHE_DIR_ENV = "ELP_CACHE_DIR"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EMPTY = 3
EXIT_CONFIG = 4
EXIT_RUNTIME = 5

# Allowed config keys. A dict value recurses; "any" accepts an arbitrary
# mapping; a tuple of types is a leaf check.
_SCHEMA = {
    "corpus": {
        "click_log": (str,),
        "serp_dump": (str,),
        "cache": (str,),
        "case_fold_join": (bool,),
    },
    "dataset": (str,),
    "setting": (str,),
    "max_results": (int,),
    "test_fraction": (float, int),
    "label_scale": (float, int),
    "seeds": {"split": (int,), "train": (int,), "shuffle": (int,)},
    "vocab": {
        "lowercase": (bool,),
        "min_df": (int,),
        "max_features": (int, type(None)),
    },
    "model": {"name": (str,), "params": "any", "grid": "any"},
    "use_grid_search": (bool,),
    "cv_folds": (int,),
    "roster": (list,),
    "settings": (list,),
    "ablation_model": (str,),
    "significance_loss": (str,),
    "alpha_main": (float, int),
    "alpha_ablation": (float, int),
    "train": {
        "epochs": (int,),
        "learning_rate": (float, int),
        "batch_size": (int,),
        "warmup_fraction": (float, int),
    },
    "encoder": {
        "kind": (str,),
        "name": (str,),
        "hidden": (int,),
        "layers": (int,),
        "heads": (int,),
        "ff_dim": (int,),
        "dropout": (float, int),
        "max_len": (int,),
        "seed": (int,),
    },
    "embedding": {"kind": (str,), "dim": (int,), "path": (str,), "seed": (int,)},
    "bilstm": {"layers": (int,), "hidden_size": (int,)},
    "synth": {
        "n_records": (int,),
        "noise_sigma": (float, int),
        "seed": (int,),
        "keywords": (list,),
        "component": (str,),
        "weight": (float, int),
        "base": (float, int),
        "per_result": (bool,),
        "presence_prob": (float, int),
        "filler_vocab_size": (int,),
        "n_results": (int,),
        "title_len": (int,),
        "snippet_len": (int,),
        "panes_per_query": (int,),
    },
    "rerank": {"model": (str,), "ndcg_ks": (list,)},
    "analyze": {"axis": (str,)},
    "sweep": {"counts": (list,), "retrain": (bool,), "settings": (list,)},
    "out": (str,),
}


def _validate(config: dict, schema: dict, path: str = "") -> None:
    for key, value in config.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise ConfigError(f"unknown config key: {where}")
        rule = schema[key]
        if rule == "any":
            if value is not None and not isinstance(value, dict):
                raise ConfigError(f"config key {where} must be a mapping")
        elif isinstance(rule, dict):
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where} must be a mapping")
            _validate(value, rule, where)
        else:
            if value is None:
                continue
            if isinstance(value, bool) and bool not in rule:
                raise ConfigError(f"config key {where}: unexpected boolean")
            if not isinstance(value, rule):
                names = "/".join(t.__name__ for t in rule)
                raise ConfigError(
                    f"config key {where}: expected {names}, got {type(value).__name__}"
                )


def load_config(path: str | Path | None) -> dict:
    """Read a YAML config, or the config snapshot out of a JSON manifest."""
    if path is None:
        return {}
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    if "config" in data and "command" in data:  # a run manifest
        data = data["config"] or {}
    _validate(data, _SCHEMA)
    return data


def _get(config: dict, *keys, default=None):
    node = config
    for key in keys:
        if not isinstance(node, dict) or key not in node or node[key] is None:
            return default
        node = node[key]
    return node


def _apply_overrides(config: dict, args: argparse.Namespace) -> dict:
    config = json.loads(json.dumps(config))  # deep copy, JSON-safe
    if getattr(args, "seed", None) is not None:
        config.setdefault("seeds", {})
        config["seeds"].update(
            {"split": args.seed, "train": args.seed, "shuffle": args.seed}
        )
    for flag, key in (("dataset", "dataset"), ("setting", "setting"), ("out", "out")):
        value = getattr(args, flag, None)
        if value is not None:
            config[key] = value
    if getattr(args, "max_results", None) is not None:
        config["max_results"] = args.max_results
    _validate(config, _SCHEMA)
    return config


def build_experiment_spec(config: dict) -> ExperimentSpec:
    """Translate a validated config mapping into an ExperimentSpec."""
    try:
        settings = tuple(
            InputSetting.parse(s) for s in _get(config, "settings", default=[])
        ) or experiments.SETTING_ORDER
        setting = InputSetting.parse(_get(config, "setting", default="query+pane+snippets"))
        vocab = VocabOptions(
            lowercase=_get(config, "vocab", "lowercase", default=True),
            min_df=_get(config, "vocab", "min_df", default=1),
            max_features=_get(config, "vocab", "max_features"),
        )
        train_cfg = TrainConfig(
            epochs=_get(config, "train", "epochs", default=4),
            learning_rate=float(_get(config, "train", "learning_rate", default=5e-5)),
            batch_size=_get(config, "train", "batch_size", default=32),
            warmup_fraction=float(_get(config, "train", "warmup_fraction", default=0.1)),
            seed=_get(config, "seeds", "train", default=0),
        )
        encoder = EncoderSpec(
            kind=_get(config, "encoder", "kind", default="tiny-random"),
            name=_get(config, "encoder", "name", default="albert-base-v2"),
            hidden=_get(config, "encoder", "hidden", default=64),
            layers=_get(config, "encoder", "layers", default=2),
            heads=_get(config, "encoder", "heads", default=4),
            ff_dim=_get(config, "encoder", "ff_dim", default=128),
            dropout=float(_get(config, "encoder", "dropout", default=0.1)),
            max_len=_get(config, "encoder", "max_len", default=512),
            seed=_get(config, "encoder", "seed", default=0),
        )
        embedding = EmbeddingSpec(
            kind=_get(config, "embedding", "kind", default="tiny-random"),
            dim=_get(config, "embedding", "dim", default=50),
            path=_get(config, "embedding", "path"),
            seed=_get(config, "embedding", "seed", default=0),
        )
        profile = NeuralProfile(
            encoder=encoder,
            embedding=embedding,
            bilstm_layers=_get(config, "bilstm", "layers", default=2),
            bilstm_hidden=_get(config, "bilstm", "hidden_size", default=64),
            train=train_cfg,
        )
        model_name = _get(config, "model", "name")
        model_params = {}
        if model_name is not None:
            model_params[model_name] = _get(config, "model", "params", default={})
        grids = None
        grid = _get(config, "model", "grid")
        if grid is not None and model_name is not None:
            grids = {model_name: grid}
        roster = tuple(_get(config, "roster", default=[])) or (
            experiments.CENTRAL_MODELS + experiments.CLASSICAL_MODELS
        )
        return ExperimentSpec(
            dataset=_get(config, "dataset", default="full"),
            roster=roster,
            settings=settings,
            setting=setting,
            max_results=_get(config, "max_results", default=10),
            test_fraction=float(_get(config, "test_fraction", default=0.2)),
            split_seed=_get(config, "seeds", "split", default=7),
            train_seed=_get(config, "seeds", "train", default=0),
            shuffle_seed=_get(config, "seeds", "shuffle", default=13),
            vocab=vocab,
            model_params=model_params,
            grids=grids,
            use_grid_search=_get(config, "use_grid_search", default=False),
            cv_folds=_get(config, "cv_folds", default=5),
            label_scale=float(_get(config, "label_scale", default=1.0)),
            significance_loss=_get(config, "significance_loss", default="squared"),
            alpha_main=float(_get(config, "alpha_main", default=0.01)),
            alpha_ablation=float(_get(config, "alpha_ablation", default=0.05)),
            ablation_model=_get(config, "ablation_model", default="linear_regression"),
            rerank_model=_get(config, "rerank", "model", default="oracle"),
            ndcg_ks=tuple(_get(config, "rerank", "ndcg_ks", default=[1, 2, 3, 5])),
            neural=profile,
            out_dir=_get(config, "out"),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc))


def build_synthetic_spec(config: dict) -> SyntheticSpec:
    synth = dict(_get(config, "synth", default={}))
    try:
        signal_kwargs = {}
        for key, target in (
            ("keywords", "keywords"),
            ("component", "component"),
            ("weight", "weight"),
            ("base", "base"),
            ("per_result", "per_result"),
        ):
            if key in synth:
                value = synth.pop(key)
                signal_kwargs[target] = tuple(value) if key == "keywords" else value
        signal = KeywordSignal(**signal_kwargs)
        return SyntheticSpec(signal=signal, **synth)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"synth section: {exc}")


def _resolve_cache(path: str) -> Path:
    cache_dir = os.environ.get(CACHE_DIR_ENV)
    p = Path(path)
    if cache_dir and not p.is_absolute():
        return Path(cache_dir) / p
    return p


def _load_input_corpus(config: dict) -> corpus_mod.Corpus:
    cache = _get(config, "corpus", "cache")
    if cache is not None:
        return corpus_mod.load_corpus(_resolve_cache(cache))
    click_log = _get(config, "corpus", "click_log")
    if click_log is None:
        raise ConfigError("config needs corpus.cache or corpus.click_log")
    parsed = corpus_mod.parse_click_log(click_log)
    serp_dump = _get(config, "corpus", "serp_dump")
    if serp_dump is not None:
        dump = corpus_mod.parse_serp_dump(serp_dump)
        parsed = corpus_mod.join(
            parsed, dump, case_fold=_get(config, "corpus", "case_fold_join", default=False)
        )
    return parsed


def _out_dir(args, config: dict, command: str) -> Path:
    out = getattr(args, "out", None) or _get(config, "out") or f"elp_{command}"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _guard_outputs(out: Path, names: list[str], overwrite: bool) -> None:
    for name in names:
        target = out / name
        if target.exists() and not overwrite:
            raise OutputExists(f"{target} exists; pass --overwrite to replace it")


def _write_manifest(
    out: Path,
    command: str,
    config: dict,
    corpus_hash: str | None,
    artifacts: list[str],
    started: float,
) -> None:
    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "command": command,
        "config": config,
        "corpus_hash": corpus_hash,
        "code_version": __version__,
        "wall_clock_s": round(time.perf_counter() - started, 3),
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _stats_table(stats: corpus_mod.CorpusStats) -> experiments.ReportTable:
    rows = [
        (name, st.mean, st.std, st.median, st.min, st.max) for name, st in stats.rows()
    ]
    return experiments.ReportTable(
        name="corpus_stats",
        metadata={},
        columns=("field", "mean", "std", "median", "min", "max"),
        rows=rows,
    )


def _log_run(command: str, config: dict, corpus_hash: str | None) -> None:
    seeds = _get(config, "seeds", default={})
    log.info("%s: seeds=%s corpus_hash=%s", command, seeds or "defaults", corpus_hash)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(args, config: dict) -> int:
    started = time.perf_counter()
    click_log = args.click_log or _get(config, "corpus", "click_log")
    if click_log is None:
        raise ConfigError("ingest needs --click-log or corpus.click_log")
    out = _out_dir(args, config, "ingest")
    _guard_outputs(out, ["corpus.json", "stats.tsv"], args.overwrite)
    parsed = corpus_mod.parse_click_log(click_log)
    serp_dump = args.serp_dump or _get(config, "corpus", "serp_dump")
    if serp_dump is not None:
        dump = corpus_mod.parse_serp_dump(serp_dump)
        parsed = corpus_mod.join(
            parsed, dump, case_fold=_get(config, "corpus", "case_fold_join", default=False)
        )
    else:
        log.warning("ingest: no SERP dump given; records carry no SERPs")
    _log_run("ingest", config, parsed.content_hash())
    corpus_mod.save_corpus(parsed, out / "corpus.json")
    table = _stats_table(corpus_mod.compute_stats(parsed))
    table.metadata["corpus_hash"] = parsed.content_hash()
    table.write(out / "stats.tsv")
    _write_manifest(out, "ingest", config, parsed.content_hash(),
                    ["corpus.json", "stats.tsv"], started)
    log.info("ingest: %d records -> %s", len(parsed), out)
    prov = parsed.provenance.get("click_log", {})
    log.info(
        "ingest: rejected %d malformed rows, %d invalid-label rows",
        prov.get("malformed_rows", 0), prov.get("invalid_labels", 0),
    )
    return EXIT_OK


def cmd_stats(args, config: dict) -> int:
    started = time.perf_counter()
    data = _load_input_corpus(config)
    out = _out_dir(args, config, "stats")
    _guard_outputs(out, ["stats.tsv"], args.overwrite)
    _log_run("stats", config, data.content_hash())
    table = _stats_table(corpus_mod.compute_stats(data))
    table.metadata["corpus_hash"] = data.content_hash()
    table.write(out / "stats.tsv")
    sys.stdout.write(table.to_text())
    _write_manifest(out, "stats", config, data.content_hash(), ["stats.tsv"], started)
    return EXIT_OK


def cmd_synth(args, config: dict) -> int:
    started = time.perf_counter()
    spec = build_synthetic_spec(config)
    out = _out_dir(args, config, "synth")
    _guard_outputs(out, ["corpus.json"], args.overwrite)
    data = generate_synthetic(spec)
    _log_run("synth", config, data.content_hash())
    corpus_mod.save_corpus(data, out / "corpus.json")
    _write_manifest(out, "synth", config, data.content_hash(), ["corpus.json"], started)
    log.info("synth: %d records -> %s", len(data), out)
    return EXIT_OK


def cmd_train(args, config: dict) -> int:
    started = time.perf_counter()
    data = _load_input_corpus(config)
    spec = build_experiment_spec(config)
    name = _get(config, "model", "name", default="linear_regression")
    out = _out_dir(args, config, "train")
    _log_run("train", config, data.content_hash())
    selected = experiments._select_dataset(data, spec)
    eligible, _ = experiments._eligible_for(selected, [spec.setting])
    train_corpus, _test = corpus_mod.holdout_split(
        eligible, spec.test_fraction, spec.split_seed
    )
    artifacts: list[str] = []
    if name in experiments.NEURAL_MODELS:
        _guard_outputs(out, ["checkpoint.pt", "train_report.tsv"], args.overwrite)
        profile = spec.neural
        if name == "encoder":
            model = neural.build_encoder_regressor(
                spec.setting, encoder=profile.encoder, corpus=train_corpus,
                max_results=spec.max_results,
            )
        else:
            model = neural.build_bilstm(
                spec.setting, embedding=profile.embedding, corpus=train_corpus,
                layers=profile.bilstm_layers, hidden_size=profile.bilstm_hidden,
                max_results=spec.max_results,
            )
        cfg = replace(profile.train, seed=spec.train_seed)
        report = neural.train(
            model, train_corpus, cfg, label_scale=spec.label_scale,
            checkpoint_path=out / "checkpoint.pt",
        )
        (out / "train_report.tsv").write_text(
            "\n".join(report.lines()) + "\n", encoding="utf-8"
        )
        artifacts = ["checkpoint.pt", "train_report.tsv"]
    else:
        _guard_outputs(out, ["model.pkl"], args.overwrite)
        texts = experiments._texts(train_corpus, spec.setting, spec.max_results)
        y = train_corpus.engagements() * spec.label_scale
        params = spec.model_params.get(name, {})
        base = {
            "lowercase": spec.vocab.lowercase,
            "min_df": spec.vocab.min_df,
            "max_features": spec.vocab.max_features,
        }
        if name in experiments.CENTRAL_MODELS:
            model = predictors.make_predictor(name)
        else:
            model = predictors.make_predictor(name, **{**base, **params})
        grid = spec.grids.get(name) if spec.grids else None
        if spec.use_grid_search and (grid or predictors.DEFAULT_GRIDS.get(name)):
            grid = grid or predictors.DEFAULT_GRIDS[name]

            def factory(**candidate):
                return predictors.make_predictor(name, **{**base, **params, **candidate})

            model, search = predictors.grid_search_cv(
                factory, grid, texts, y, folds=spec.cv_folds, seed=spec.train_seed
            )
            log.info("train: grid search best=%s", search.best_params)
        else:
            model.fit(texts, y, seed=spec.train_seed)
        predictors.save_model(model, out / "model.pkl")
        artifacts = ["model.pkl"]
    _write_manifest(out, "train", config, data.content_hash(), artifacts, started)
    log.info("train: %s -> %s", name, out)
    return EXIT_OK


def cmd_evaluate(args, config: dict) -> int:
    started = time.perf_counter()
    data = _load_input_corpus(config)
    spec = build_experiment_spec(config)
    out = _out_dir(args, config, "evaluate")
    _guard_outputs(out, ["main_comparison.tsv"], args.overwrite)
    _log_run("evaluate", config, data.content_hash())
    result = experiments.run_main_comparison(data, spec)
    result.to_table().write(out / "main_comparison.tsv")
    _write_manifest(out, "evaluate", config, data.content_hash(),
                    ["main_comparison.tsv"], started)
    return EXIT_OK


def cmd_ablate(args, config: dict) -> int:
    started = time.perf_counter()
    data = _load_input_corpus(config)
    spec = build_experiment_spec(config)
    out = _out_dir(args, config, "ablate")
    _guard_outputs(out, ["ablation.tsv"], args.overwrite)
    _log_run("ablate", config, data.content_hash())
    result = experiments.run_ablation(data, spec)
    result.to_table().write(out / "ablation.tsv")
    _write_manifest(out, "ablate", config, data.content_hash(), ["ablation.tsv"], started)
    return EXIT_OK


def cmd_analyze(args, config: dict) -> int:
    started = time.perf_counter()
    data = _load_input_corpus(config)
    spec = build_experiment_spec(config)
    axis = args.axis or _get(config, "analyze", "axis", default="impression")
    out = _out_dir(args, config, "analyze")
    _log_run("analyze", config, data.content_hash())
    artifacts: list[str] = []
    if axis == "result_count":
        _guard_outputs(out, ["result_count_sweep.tsv"], args.overwrite)
        counts = _get(config, "sweep", "counts", default=list(range(1, 11)))
        retrain = _get(config, "sweep", "retrain", default=True)
        sweep_settings = tuple(
            InputSetting.parse(s)
            for s in _get(
                config, "sweep", "settings",
                default=["query+pane+titles", "query+pane+snippets"],
            )
        )
        result = experiments.sweep_result_count(
            data, spec, counts=tuple(counts), settings=sweep_settings, retrain=retrain
        )
        result.to_table().write(out / "result_count_sweep.tsv")
        artifacts = ["result_count_sweep.tsv"]
    elif axis in ("coverage", "diversity"):
        names = [f"analysis_{axis}.tsv", f"analysis_{axis}_comparisons.tsv"]
        _guard_outputs(out, names, args.overwrite)
        selected = experiments._select_dataset(data, spec)
        report = experiments.analyze_by_bucket(None, selected.records, axis)
        report.to_table().write(out / names[0])
        report.comparisons_table().write(out / names[1])
        artifacts = names
    elif axis in ("impression", "query_length"):
        name = f"analysis_{axis}.tsv"
        _guard_outputs(out, [name], args.overwrite)
        selected = experiments._select_dataset(data, spec)
        eligible, _ = experiments._eligible_for(selected, [spec.setting])
        train_corpus, test_corpus = corpus_mod.holdout_split(
            eligible, spec.test_fraction, spec.split_seed
        )
        model_name = _get(config, "model", "name", default=spec.ablation_model)
        row = experiments._run_single(
            model_name, train_corpus, test_corpus, spec.setting, spec.max_results, spec
        )
        report = experiments.analyze_by_bucket(
            row.predictions, test_corpus.records, axis, label_scale=spec.label_scale
        )
        report.to_table().write(out / name)
        artifacts = [name]
    else:
        raise ConfigError(f"unknown analysis axis {axis!r}")
    _write_manifest(out, "analyze", config, data.content_hash(), artifacts, started)
    return EXIT_OK


def cmd_rerank(args, config: dict) -> int:
    started = time.perf_counter()
    data = _load_input_corpus(config)
    spec = build_experiment_spec(config)
    out = _out_dir(args, config, "rerank")
    _guard_outputs(out, ["pane_reranking.tsv"], args.overwrite)
    _log_run("rerank", config, data.content_hash())
    result = experiments.run_pane_reranking(data, spec)
    result.to_table().write(out / "pane_reranking.tsv")
    _write_manifest(out, "rerank", config, data.content_hash(),
                    ["pane_reranking.tsv"], started)
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "analyze": cmd_analyze,
    "rerank": cmd_rerank,
    "synth": cmd_synth,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML run config (or a manifest.json to replay)")
    parser.add_argument("--seed", type=int, help="override split/train/shuffle seeds")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--overwrite", action="store_true",
                        help="replace existing output artifacts")
    parser.add_argument("--dataset", choices=["full", "el-only"])
    parser.add_argument("--setting", help="input setting, e.g. query+pane+titles")
    parser.add_argument("--max-results", type=int, dest="max_results")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elp", description="Engagement-level prediction experiment harness"
    )
    parser.add_argument("--version", action="version", version=f"elp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        _add_common(cmd)
        if name == "ingest":
            cmd.add_argument("--click-log", dest="click_log")
            cmd.add_argument("--serp-dump", dest="serp_dump")
        if name == "analyze":
            cmd.add_argument(
                "--axis",
                choices=["impression", "query_length", "coverage", "diversity", "result_count"],
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        config = _apply_overrides(config, args)
        return _COMMANDS[args.command](args, config)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except EmptyCorpus as exc:
        log.error("empty corpus: %s", exc)
        return EXIT_EMPTY
    except (OSError, MissingColumn, UnsupportedCacheFormat, OutputExists) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except ElpError as exc:
        log.error("runtime failure: %s", exc)
        return EXIT_RUNTIME
    except Exception:
        log.exception("unexpected failure")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
