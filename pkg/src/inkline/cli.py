"""Command-line orchestration: forge | pretrain | train | eval | serve | export.

Every command resolves its configuration (defaults, then an optional JSON
config file, then explicit flags), prints the resolved configuration as one
JSON line before running, and accepts the same JSON back via ``--config``.
``INKLINE_SEED`` provides the seed when neither flag nor config file sets
one.
"""

from __future__ import annotations

import argparse
import collections
import json
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import forge as fg
from . import nn, training
from .config import preset_config
from .errors import ConfigurationError, InklineError
from .strokes import read_jsonl

FORGE_DEFAULTS = {
    "symbols": 40,
    "sentences": 5000,
    "seed": 0,
    "out": None,
    "dev": None,
    "test": None,
    "jitter": 0.012,
    "dropout_radius": 0.15,
}

PRETRAIN_DEFAULTS = {
    "data": None,
    "out": None,
    "preset": "desk",
    "epochs": 8,
    "batch": 16,
    "lr": 1e-3,
    "seed": 0,
    "log_every": 25,
}

TRAIN_DEFAULTS = {
    "model": "dstfn",
    "data": None,
    "out": None,
    "pretrained": None,
    "preset": "desk",
    "steps1": 400,
    "steps2": 400,
    "batch": 16,
    "lr": 1e-3,
    "seed": 0,
    "style_refresh": 1000,
    "log_every": 25,
    "freeze_lm": False,
}

EVAL_DEFAULTS = {
    "ckpt": None,          # list of checkpoint paths
    "data": None,
    "scenario": "all",
    "repeats": 5,
    "seed": 0,
    "out": None,
    "limit": None,
    "min_strokes_length": None,
}

SERVE_DEFAULTS = {
    "ckpt": None,
    "addr": "127.0.0.1:8077",
    "data": None,
}

EXPORT_DEFAULTS = {
    "ckpt": None,
    "data": None,
    "out": None,
}

SCENARIO_NAMES = {s.value: s for s in ev.Scenario}
VALID_SCENARIOS = sorted(SCENARIO_NAMES) + ["all", "minstrokes"]


def _resolve(defaults: dict, args: argparse.Namespace) -> dict:
    resolved = dict(defaults)
    provided = {k: v for k, v in vars(args).items()
                if k not in ("command", "config") and v is not None}
    config_path = getattr(args, "config", None)
    if config_path:
        file_cfg = json.loads(Path(config_path).read_text())
        file_cfg.pop("command", None)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(file_cfg)
    resolved.update(provided)
    if resolved.get("seed") == defaults.get("seed") and "seed" not in provided \
            and (not config_path or "seed" not in json.loads(Path(config_path).read_text())):
        env_seed = os.environ.get("INKLINE_SEED")
        if env_seed is not None:
            resolved["seed"] = int(env_seed)
    return resolved


def _print_config(command: str, cfg: dict) -> None:
    print(json.dumps({"command": command, **cfg}, sort_keys=True))


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg.get(key) in (None, []):
            raise ConfigurationError(f"--{key.replace('_', '-')} is required")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_forge(cfg: dict) -> int:
    _require(cfg, "out")
    sizes = fg.default_sizes(int(cfg["sentences"]))
    if cfg["dev"] is not None:
        sizes["dev"] = int(cfg["dev"])
    if cfg["test"] is not None:
        sizes["test"] = int(cfg["test"])
    alphabet = fg.make_alphabet(int(cfg["symbols"]), seed=int(cfg["seed"]),
                                jitter_sigma=float(cfg["jitter"]),
                                dropout_radius=float(cfg["dropout_radius"]))
    corpus = fg.make_corpus(int(cfg["symbols"]), seed=int(cfg["seed"]) + 1)
    splits, stats = fg.make_splits(corpus, alphabet, sizes, seed=int(cfg["seed"]) + 2)
    fg.write_forge_output(cfg["out"], splits, stats, alphabet, corpus)
    print(f"forged {stats.sizes} into {cfg['out']}")
    return 0


def _load_data(data_dir: str):
    data = Path(data_dir)
    alphabet = fg.load_alphabet(data / "alphabet.json")
    train = read_jsonl(data / "train.jsonl")
    return alphabet, train


def cmd_pretrain(cfg: dict) -> int:
    _require(cfg, "data", "out")
    alphabet, train = _load_data(cfg["data"])
    model_cfg = preset_config(cfg["preset"], alphabet.vocab)
    model = training.build_model("dstfn", model_cfg, seed=int(cfg["seed"]))
    rows, perplexity = training.pretrain_lm(
        model, [list(s.targets) for s in train], epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch"]), lr=float(cfg["lr"]), seed=int(cfg["seed"]),
        log_every=int(cfg["log_every"]))
    out = Path(cfg["out"])
    arrays = {k: v for k, v in model.store.as_arrays().items() if k.startswith("lm.")}
    nn.save_checkpoint(out, arrays)
    out.with_suffix(out.suffix + ".meta.json").write_text(json.dumps(
        {"kind": "pretrain", "preset": cfg["preset"], "vocab": alphabet.vocab,
         "perplexity": round(perplexity, 4)}, sort_keys=True, indent=1))
    training.write_log_csv(out.with_suffix(out.suffix + ".curve.csv"), rows)
    print(f"pretrained {int(cfg['epochs'])} epochs, final perplexity {perplexity:.2f}")
    return 0


def cmd_train(cfg: dict) -> int:
    _require(cfg, "data", "out", "model")
    if cfg["model"] not in training.MODEL_KINDS:
        raise ConfigurationError(
            f"unknown model {cfg['model']!r}; choose from {training.MODEL_KINDS}")
    alphabet, train = _load_data(cfg["data"])
    model_cfg = preset_config(cfg["preset"], alphabet.vocab)
    model = training.build_model(cfg["model"], model_cfg, seed=int(cfg["seed"]))
    if cfg["model"] in ("dstfn", "vcn-decoder"):
        if not cfg["pretrained"]:
            raise ConfigurationError(
                f"--pretrained checkpoint is required for {cfg['model']}")
        arrays = nn.load_checkpoint(cfg["pretrained"])
        if cfg["model"] == "dstfn":
            model.store.load_arrays(arrays)
            model.invalidate_caches()
        else:
            model.load_pretrained_stack(arrays)
    settings = training.TrainSettings(
        steps_period1=int(cfg["steps1"]), steps_period2=int(cfg["steps2"]),
        batch_size=int(cfg["batch"]), lr=float(cfg["lr"]), seed=int(cfg["seed"]),
        style_refresh=int(cfg["style_refresh"]), log_every=int(cfg["log_every"]),
        freeze_lm=bool(cfg["freeze_lm"]))
    out = Path(cfg["out"])

    def on_period_end(period: int) -> None:
        if period == 1:
            training.save_model(out.with_suffix(out.suffix + ".period1"), model,
                                cfg["model"], meta={"period": 1})

    t0 = time.time()
    rows = training.train_curriculum(model, train, alphabet, settings,
                                     on_period_end=on_period_end)
    training.save_model(out, model, cfg["model"], meta={"period": 2})
    training.write_log_csv(out.with_suffix(out.suffix + ".log.csv"), rows)
    print(f"trained {cfg['model']} for {settings.steps_period1 + settings.steps_period2} "
          f"steps in {time.time() - t0:.1f}s; final loss {rows[-1].loss:.4f}")
    return 0


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "ckpt", "data", "out")
    if cfg["scenario"] not in VALID_SCENARIOS:
        raise ConfigurationError(
            f"unknown scenario {cfg['scenario']!r}; valid: {VALID_SCENARIOS}")
    data = Path(cfg["data"])
    alphabet = fg.load_alphabet(data / "alphabet.json")
    testset = read_jsonl(data / "test.jsonl")
    if cfg["limit"]:
        testset = testset[: int(cfg["limit"])]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ckpts = cfg["ckpt"] if isinstance(cfg["ckpt"], list) else [cfg["ckpt"]]
    models = []
    for path in ckpts:
        model, meta = training.load_model(path)
        name = f"{meta['kind']}" if len(ckpts) == 1 else f"{meta['kind']}:{Path(path).stem}"
        models.append((name, model, meta))

    if cfg["scenario"] == "minstrokes":
        _eval_min_strokes(cfg, models, testset, out)
        return 0

    scenarios = (list(ev.Scenario) if cfg["scenario"] == "all"
                 else [SCENARIO_NAMES[cfg["scenario"]]])
    for scenario in scenarios:
        report = None
        for name, model, _ in models:
            rng = np.random.default_rng(int(cfg["seed"]))
            part = ev.run_scenario(model, testset, scenario, rng,
                                   repeats=int(cfg["repeats"]), alphabet=alphabet,
                                   model_name=name)
            report = part if report is None else report.merged(part)
        ev.write_report_csv(out / f"report_{scenario.value}.csv", report)
        ev.write_report_json(out / f"report_{scenario.value}.json", report)
        ev.write_pk_chart_svg(out / f"report_{scenario.value}.svg",
                              f"precision under {scenario.value}",
                              {e.model: e.mean for e in report.entries})
        for e in report.entries:
            print(f"{scenario.value} {e.model} " +
                  " ".join(f"P@{k + 1}={v:.4f}" for k, v in enumerate(e.mean)))
    return 0


def _eval_min_strokes(cfg: dict, models, testset, out: Path) -> None:
    from .decoder import DstfnModel

    lengths = collections.Counter(len(s) for s in testset)
    want = cfg["min_strokes_length"] or lengths.most_common(1)[0][0]
    subset = [s for s in testset if len(s) == int(want)]
    if not subset:
        raise ConfigurationError(f"no test sentences of length {want}")
    for name, model, _ in models:
        if not isinstance(model, DstfnModel):
            print(f"minstrokes skipped for {name} (needs the fused decoder)")
            continue
        res = ev.min_strokes_analysis(model, subset)
        np.savetxt(out / f"min_strokes_{name}.csv",
                   res.per_sentence, fmt="%d", delimiter=",")
        ev.write_min_strokes_svg(out / f"min_strokes_{name}.svg",
                                 res.mean_per_position)
        print(f"minstrokes {name}: mean over positions "
              f"{res.mean_per_position.mean():.2f}, sentences {len(subset)}")


def cmd_serve(cfg: dict) -> int:
    _require(cfg, "ckpt")
    import uvicorn

    from .service import build_engine, create_app

    host, _, port = cfg["addr"].rpartition(":")
    engine = build_engine(cfg["ckpt"], alphabet_dir=cfg.get("data"))
    app = create_app(engine)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


def cmd_export(cfg: dict) -> int:
    _require(cfg, "ckpt", "out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(cfg["ckpt"])
    meta_path = ckpt.with_suffix(ckpt.suffix + ".meta.json")
    shutil.copyfile(ckpt, out / "model.inkl")
    meta = json.loads(meta_path.read_text())
    model, _ = training.load_model(ckpt)
    meta["parameters"] = model.store.num_scalars()
    (out / "model.inkl.meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    if cfg["data"]:
        for name in ("alphabet.json", "corpus.json", "stats.json"):
            src = Path(cfg["data"]) / name
            if src.exists():
                shutil.copyfile(src, out / name)
    print(f"exported {meta['kind']} ({meta['parameters']} parameters) to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inkline",
        description="sentence-level online handwriting recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forge", help="generate a synthetic stroke corpus")
    _add_common(p)
    p.add_argument("--symbols", type=int)
    p.add_argument("--sentences", type=int)
    p.add_argument("--out")
    p.add_argument("--dev", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--dropout-radius", dest="dropout_radius", type=float)

    p = sub.add_parser("pretrain", help="next-word pretraining of the token stack")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--log-every", dest="log_every", type=int)

    p = sub.add_parser("train", help="curriculum training of a recognizer")
    _add_common(p)
    p.add_argument("--model", choices=training.MODEL_KINDS)
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--pretrained")
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--steps1", type=int)
    p.add_argument("--steps2", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--style-refresh", dest="style_refresh", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--freeze-lm", dest="freeze_lm", action="store_const", const=True)

    p = sub.add_parser("eval", help="run evaluation scenarios")
    _add_common(p)
    p.add_argument("--ckpt", action="append")
    p.add_argument("--data")
    p.add_argument("--scenario", choices=VALID_SCENARIOS)
    p.add_argument("--repeats", type=int)
    p.add_argument("--out")
    p.add_argument("--limit", type=int)
    p.add_argument("--min-strokes-length", dest="min_strokes_length", type=int)

    p = sub.add_parser("serve", help="run the incremental recognition service")
    _add_common(p)
    p.add_argument("--ckpt")
    p.add_argument("--addr")
    p.add_argument("--data")

    p = sub.add_parser("export", help="bundle a checkpoint for serving")
    _add_common(p)
    p.add_argument("--ckpt")
    p.add_argument("--data")
    p.add_argument("--out")

    return parser


DEFAULTS = {
    "forge": FORGE_DEFAULTS,
    "pretrain": PRETRAIN_DEFAULTS,
    "train": TRAIN_DEFAULTS,
    "eval": EVAL_DEFAULTS,
    "serve": SERVE_DEFAULTS,
    "export": EXPORT_DEFAULTS,
}

HANDLERS = {
    "forge": cmd_forge,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "serve": cmd_serve,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(DEFAULTS[args.command], args)
        _print_config(args.command, cfg)
        return HANDLERS[args.command](cfg)
    except InklineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
