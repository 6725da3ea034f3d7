"""Command-line entry point: ``ctaf-goalcast <command> [options]``.

Exit codes
----------
==  =====================  ==================================================
0   ok
1   internal error         unexpected exception
2   usage                  unknown flag, bad option value
3   input_missing          a named input file or directory does not exist
4   input_invalid          unreadable or malformed input file
5   schema_mismatch        file schema / checkpoint config or label mismatch
6   training_diverged      loss became non-finite or exploded
7   external_service       transcription / labelling service failure
==  =====================  ==================================================

Errors are printed to stderr as a single line::

    error code=<n> kind=<kind> message="<text>"

Config files use the ``key=value`` dialect (``#`` comments, optional
``schema=1`` line). Precedence is command-line flag, then config file, then
built-in default; the resolved values go into ``manifest.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import subprocess
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .dataio import (
    DataFormatError,
    DatasetSplit,
    load_calls,
    load_split,
    load_tracks,
    save_split,
    write_calls,
    write_labeled_calls,
    write_tracks,
)
from .evaluator import (
    fde_best_of_n,
    lofo_study,
    permutation_importance,
    split_report_by_intent,
    sweep,
    write_curve_csv,
    write_curve_svg,
)
from .geometry import DEFAULT_AIRPORT, AirportConfig, AirportConfigError, format_airport, intent_label_set, load_airport
from .goalnet import CheckpointError, GoalNet, ModelConfig, load_params
from .radio import (
    ExternalServiceError,
    build_dynamic_context,
    label_calls,
    load_directory,
    score_labeling,
    states_at,
    word_error_rate,
    write_directory,
    edit_counts,
    normalize_transcript,
)
from .sim import BenchmarkConfig, SimConfig, ambiguity_benchmark, generate_dataset
from .trainer import TrainConfig, TrainingDiverged, train

log = logging.getLogger("ctaf_goalcast")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INPUT_MISSING = 3
EXIT_INPUT_INVALID = 4
EXIT_SCHEMA = 5
EXIT_DIVERGED = 6
EXIT_EXTERNAL = 7
EXIT_KINDS = {
    EXIT_INTERNAL: "internal",
    EXIT_USAGE: "usage",
    EXIT_INPUT_MISSING: "input_missing",
    EXIT_INPUT_INVALID: "input_invalid",
    EXIT_SCHEMA: "schema_mismatch",
    EXIT_DIVERGED: "training_diverged",
    EXIT_EXTERNAL: "external_service",
}
CONFIG_SCHEMA = "1"


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one-line usage errors instead of argparse's banner
        raise CLIError(EXIT_USAGE, message)


# ------------------------------------------------------------------ helpers


def read_kv(path: str | Path) -> dict[str, str]:
    """Parse a ``key=value`` config file."""
    p = _need(path)
    values = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(EXIT_INPUT_INVALID, f"{p}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    schema = values.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise CLIError(EXIT_SCHEMA, f"{p}: config schema {schema} != {CONFIG_SCHEMA}")
    return values


def _coerce(text: str, default: Any) -> Any:
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [t for t in text.replace("|", ",").split(",") if t.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(t.strip()) for t in items)
    return text


def build_config(cls, file_values: dict[str, str], overrides: dict[str, Any], base=None):
    """Dataclass from defaults, then file values, then non-None overrides."""
    obj = base if base is not None else cls()
    known = {f.name for f in dataclasses.fields(cls)}
    changes = {}
    for k, v in file_values.items():
        if k not in known:
            continue
        try:
            changes[k] = _coerce(v, getattr(obj, k))
        except ValueError as exc:
            raise CLIError(EXIT_INPUT_INVALID, f"config key {k}: {exc}") from exc
    changes.update({k: v for k, v in overrides.items() if v is not None and k in known})
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise CLIError(EXIT_INPUT_INVALID, str(exc)) from exc


def _need(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise CLIError(EXIT_INPUT_MISSING, f"{p}: no such file or directory")
    return p


def _scene_file(data: str | Path) -> Path:
    p = _need(data)
    if p.is_dir():
        p = _need(p / "scenes.jsonl")
    return p


def _airport_for(data: str | Path | None, airport: str | None) -> AirportConfig:
    if airport:
        return load_airport(_need(airport))
    if data is not None:
        d = Path(data)
        cand = (d if d.is_dir() else d.parent) / "airport.cfg"
        if cand.exists():
            return load_airport(cand)
    return DEFAULT_AIRPORT


def _git_version() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, AirportConfig):
        return format_airport(obj)
    return obj if isinstance(obj, (str, int, float, bool)) or obj is None else str(obj)


def write_manifest(out_dir: Path, command: str, argv: Sequence[str], config: dict, inputs: dict, outputs: list,
                   seeds: dict, started: float, jobs: int, name: str = "manifest.json") -> Path:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": _jsonable(config),
        "inputs": _jsonable(inputs),
        "outputs": sorted(str(o) for o in outputs),
        "seeds": seeds,
        "jobs": jobs,
        "version": {"package": __version__, "git": _git_version(), "python": platform.python_version(),
                    "numpy": np.__version__},
        "wall_time_s": round(time.time() - started, 3),
    }
    path = out_dir / name
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def _out_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ----------------------------------------------------------------- commands


def _sim_configs(args) -> tuple[SimConfig, dict, BenchmarkConfig | None]:
    values = read_kv(args.config) if args.config else {}
    airport = load_airport(_need(values["airport"])) if "airport" in values else (
        load_airport(_need(args.airport)) if args.airport else DEFAULT_AIRPORT)
    sim = build_config(SimConfig, values, {"seed": args.seed}, SimConfig(airport=airport))
    opts = {
        "n_flights": int(values.get("n_flights", 40)) if args.n_flights is None else args.n_flights,
        "benchmark": _coerce(values.get("benchmark", "false"), False) or args.benchmark,
        "obs_horizon": float(values.get("obs_horizon", 11.0)) if args.obs_horizon is None else args.obs_horizon,
        "pred_horizon": float(values.get("pred_horizon", 120.0)) if args.pred_horizon is None else args.pred_horizon,
        "stride": float(values.get("stride", 10.0)),
        "no_call_fraction": float(values.get("no_call_fraction", 0.0)) if args.no_call_fraction is None else args.no_call_fraction,
        "mix": values.get("mix", ""),
    }
    bench = None
    if opts["benchmark"]:
        bench = BenchmarkConfig(n_flights=opts["n_flights"], obs_horizon=opts["obs_horizon"],
                                pred_horizon=opts["pred_horizon"], no_call_fraction=opts["no_call_fraction"], sim=sim)
    return sim, opts, bench


def _parse_mix(text: str) -> dict[str, float] | None:
    if not text:
        return None
    mix = {}
    for item in text.split("|"):
        k, _, v = item.partition(":")
        mix[k.strip()] = float(v)
    return mix


def cmd_simulate(args) -> dict:
    sim, opts, bench = _sim_configs(args)
    out = _out_dir(args.out)
    if bench is not None:
        ds = ambiguity_benchmark(bench)
    else:
        ds = generate_dataset(opts["n_flights"], _parse_mix(opts["mix"]), sim, opts["obs_horizon"], opts["pred_horizon"],
                              opts["stride"])
    write_tracks(out / "tracks.csv", [ds.tracks[k] for k in sorted(ds.tracks)])
    write_calls(out / "calls.jsonl", ds.calls)
    write_labeled_calls(out / "labeled_calls.csv", ds.labeled_calls())
    write_directory(out / "directory.txt", ds.directory)
    (out / "airport.cfg").write_text(format_airport(sim.airport))
    save_split(out / "scenes.jsonl", ds.split)
    print(f"simulated {len(ds.tracks)} flights, {len(ds.calls)} calls, "
          f"scenes train/val/test = {len(ds.split.train)}/{len(ds.split.val)}/{len(ds.split.test)}")
    outputs = [out / n for n in ("tracks.csv", "calls.jsonl", "labeled_calls.csv", "directory.txt", "airport.cfg", "scenes.jsonl")]
    return {"out": out, "config": {"sim": sim, "options": opts, "benchmark": bench}, "outputs": outputs,
            "seeds": {"sim": sim.seed}, "inputs": {"config": args.config}}


def cmd_parse(args) -> dict:
    calls = load_calls(_need(args.calls))
    directory = load_directory(_need(args.directory))
    tracks = load_tracks(_need(args.tracks))
    airport = _airport_for(args.tracks, args.airport)
    labels, notes = label_calls(calls, tracks, directory, airport)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_labeled_calls(out, labels, notes)
    metrics = {}
    truth = [(c.speaker_truth, c.intent_truth) for c in calls]
    if calls and all(s is not None and i is not None for s, i in truth):
        metrics = score_labeling([(l.speaker, l.intent) for l in labels], truth)
        print(" ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    print(f"labelled {len(labels)} calls -> {out}")
    return {"out": out.parent, "manifest_name": out.name + ".manifest.json", "config": {"airport": airport, "metrics": metrics},
            "outputs": [out], "seeds": {}, "inputs": {"calls": args.calls, "directory": args.directory, "tracks": args.tracks}}


def cmd_wer(args) -> dict:
    ref = _need(args.ref).read_text(encoding="utf-8").splitlines()
    hyp = _need(args.hyp).read_text(encoding="utf-8").splitlines()
    if len(ref) != len(hyp):
        raise CLIError(EXIT_INPUT_INVALID, f"reference has {len(ref)} lines, hypothesis {len(hyp)}")
    errors = words = 0
    for r, h in zip(ref, hyp):
        rt, ht = normalize_transcript(r).tokens, normalize_transcript(h).tokens
        errors += sum(edit_counts(rt, ht))
        words += len(rt)
    if words == 0:
        raise CLIError(EXIT_INPUT_INVALID, "undefined WER: empty reference")
    wer = errors / words
    print(repr(wer) if wer else "0.0")
    if args.out is None:
        return {}
    out = _out_dir(args.out)
    (out / "wer.json").write_text(json.dumps({"wer": wer, "errors": errors, "reference_words": words}) + "\n")
    return {"out": out, "config": {}, "outputs": [out / "wer.json"], "seeds": {}, "inputs": {"ref": args.ref, "hyp": args.hyp}}


def _model_config(args) -> ModelConfig:
    values = read_kv(args.model_config) if getattr(args, "model_config", None) else {}
    over = {"init_seed": args.seed}
    if getattr(args, "no_intent", False):
        over["use_intent"] = False
    return build_config(ModelConfig, values, over)


def _train_config(args) -> TrainConfig:
    values = read_kv(args.train_config) if getattr(args, "train_config", None) else {}
    return build_config(TrainConfig, values, {"seed": args.seed, "epochs": getattr(args, "epochs", None),
                                              "lr0": getattr(args, "lr", None)})


def cmd_train(args) -> dict:
    split = load_split(_scene_file(args.data))
    airport = _airport_for(args.data, args.airport)
    mcfg, tcfg = _model_config(args), _train_config(args)
    out = _out_dir(args.out)
    model, hist = train(split, GoalNet(mcfg, intent_label_set(airport)), tcfg, out)
    print(f"trained {len(hist)} epochs, final loss {hist.loss[-1]:.5f}, lr {hist.lr[-1]:.3g} -> {out / 'model.ckpt'}")
    return {"out": out, "config": {"model": mcfg, "train": tcfg}, "outputs": [out / "model.ckpt", out / "history.csv"],
            "seeds": {"train": tcfg.seed, "init": mcfg.init_seed}, "inputs": {"data": args.data}}


def _load_model(path: str) -> GoalNet:
    return load_params(_need(path))


def _split_part(split: DatasetSplit, name: str):
    scenes = getattr(split, name)
    if not scenes:
        raise CLIError(EXIT_INPUT_INVALID, f"{name} split is empty")
    return scenes


def cmd_eval(args) -> dict:
    model = _load_model(args.model)
    split = load_split(_scene_file(args.data))
    scenes = _split_part(split, args.split)
    report = fde_best_of_n(model, scenes, args.n, args.seed, args.mode, args.horizontal)
    out = _out_dir(args.out)
    report.write(out / "report.json")
    part = split_report_by_intent(report)
    (out / "intent_split.json").write_text(json.dumps(_jsonable({"unknown": part.matched, "labelled": part.rest}), indent=1) + "\n")
    print(f"mean FDE {report.mean:.4f} km (std {report.std:.4f}, IQR {report.q25:.4f}-{report.q75:.4f}) over {len(scenes)} scenes")
    return {"out": out, "config": {"N": args.n, "mode": args.mode, "horizontal": args.horizontal, "split": args.split},
            "outputs": [out / "report.json", out / "report.scenes.csv", out / "intent_split.json"],
            "seeds": {"eval": args.seed}, "inputs": {"model": args.model, "data": args.data}}


def cmd_ablate(args) -> dict:
    split = load_split(_scene_file(args.data))
    out = _out_dir(args.out)
    if args.mode == "pfi":
        if not args.model:
            raise CLIError(EXIT_USAGE, "pfi needs --model")
        model = _load_model(args.model)
        rep = permutation_importance(model, _split_part(split, "test"), args.n, args.seed, args.reps)
        config = {"N": args.n, "reps": args.reps}
    else:
        airport = _airport_for(args.data, args.airport)
        mcfg, tcfg = _model_config(args), _train_config(args)
        res = lofo_study(split, mcfg, tcfg, intent_label_set(airport), args.n, args.seed, out)
        rep = res.report
        config = {"model": mcfg, "train": tcfg, "N": args.n}
    rep.write(out / "ablation.json")
    print(f"{rep.method}: baseline {rep.baseline:.4f} perturbed {rep.perturbed:.4f} delta {rep.delta:+.4f} "
          f"CI [{rep.ci_low:.4f}, {rep.ci_high:.4f}]")
    return {"out": out, "config": config, "outputs": [out / "ablation.json"], "seeds": {"ablate": args.seed},
            "inputs": {"data": args.data, "model": args.model}}


def _parse_values(variable: str, text: str) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if variable == "call_age_bucket":
        out = []
        for t in items:
            lo, _, hi = t.partition("-")
            out.append((float(lo), float(hi)))
        return out
    return [float(t) for t in items]


def cmd_sweep(args) -> dict:
    try:
        values = _parse_values(args.variable, args.values)
    except ValueError as exc:
        raise CLIError(EXIT_USAGE, f"bad --values: {exc}") from exc
    out = _out_dir(args.out)
    mcfg, tcfg = _model_config(args), _train_config(args)
    curves = {}
    if args.variable == "call_age_bucket":
        if not (args.model and args.data):
            raise CLIError(EXIT_USAGE, "call_age_bucket sweep needs --model and --data")
        model = _load_model(args.model)
        split = load_split(_scene_file(args.data))
        curves["model"] = sweep(args.variable, values, lambda _v: split, model, args.n, args.seed)
    else:
        sim, opts, _ = _sim_configs(args)
        labels = intent_label_set(sim.airport)

        def builder(v):
            h = {"obs_horizon": opts["obs_horizon"], "pred_horizon": opts["pred_horizon"], args.variable: v}
            bc = BenchmarkConfig(n_flights=opts["n_flights"], no_call_fraction=opts["no_call_fraction"], sim=sim, **h)
            return ambiguity_benchmark(bc).split

        variants = {"with_intent": True, "without_intent": False} if args.twin else {"model": mcfg.use_intent}
        for name, flag in variants.items():
            cfg = dataclasses.replace(mcfg, use_intent=flag)
            curves[name] = sweep(args.variable, values, builder,
                                 lambda split, cfg=cfg: train(split, GoalNet(cfg, labels), tcfg)[0], args.n, args.seed)
    outputs = []
    for name, curve in curves.items():
        path = out / f"curve_{args.variable}_{name}.csv"
        write_curve_csv(path, curve)
        outputs.append(path)
        print(name, " ".join(f"{v}:{'absent' if m is None else f'{m:.4f}'}" for v, m in zip(values, curve.means())))
    if args.format == "svg":
        path = out / f"curve_{args.variable}.svg"
        write_curve_svg(path, curves, title=f"mean best-of-{args.n} FDE vs {args.variable}")
        outputs.append(path)
    return {"out": out, "config": {"variable": args.variable, "values": values, "model": mcfg, "train": tcfg,
                                   "N": args.n, "format": args.format},
            "outputs": outputs, "seeds": {"sweep": args.seed}, "inputs": {"data": args.data, "model": args.model}}


def cmd_context(args) -> dict:
    directory = load_directory(_need(args.directory))
    tracks = load_tracks(_need(args.tracks))
    ctx = build_dynamic_context(directory, states_at(tracks, args.time))
    print(ctx.text)
    if args.out is None:
        return {}
    out = _out_dir(args.out)
    (out / "context.txt").write_text(ctx.text + "\n")
    return {"out": out, "config": {"time": args.time}, "outputs": [out / "context.txt"], "seeds": {},
            "inputs": {"directory": args.directory, "tracks": args.tracks}}


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctaf-goalcast", description="Radio-call-conditioned goal prediction toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1, help="worker cap (commands currently run single-threaded)")

    def sim_opts(sp):
        sp.add_argument("--config", help="simulation config file (key=value)")
        sp.add_argument("--airport", help="airport config file")
        sp.add_argument("--n-flights", type=int)
        sp.add_argument("--benchmark", action="store_true", help="generate the branching ambiguity benchmark")
        sp.add_argument("--obs-horizon", type=float)
        sp.add_argument("--pred-horizon", type=float)
        sp.add_argument("--no-call-fraction", type=float)

    def model_opts(sp):
        sp.add_argument("--model-config")
        sp.add_argument("--train-config")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--no-intent", action="store_true", help="train the trajectory-only variant")

    s = sub.add_parser("simulate", help="generate synthetic tracks, calls and scenes")
    sim_opts(s)
    s.add_argument("--out", required=True)
    common(s)

    s = sub.add_parser("parse", help="label radio calls with the rule-based parser")
    s.add_argument("--calls", required=True)
    s.add_argument("--directory", required=True)
    s.add_argument("--tracks", required=True)
    s.add_argument("--airport")
    s.add_argument("--out", required=True, help="labelled-call CSV to write")
    common(s, seed=False)

    s = sub.add_parser("wer", help="corpus word error rate of line-aligned transcripts")
    s.add_argument("ref")
    s.add_argument("hyp")
    s.add_argument("--out")
    common(s, seed=False)

    s = sub.add_parser("train", help="train a goal predictor")
    s.add_argument("--data", required=True)
    s.add_argument("--airport")
    model_opts(s)
    s.add_argument("--out", required=True)
    common(s)

    s = sub.add_parser("eval", help="best-of-N FDE report")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--split", choices=("train", "val", "test"), default="test")
    s.add_argument("--mode", choices=("sample", "means"), default="sample")
    s.add_argument("--horizontal", action="store_true", help="2-D FDE")
    s.add_argument("--out", required=True)
    common(s)

    s = sub.add_parser("ablate", help="permutation importance or leave-one-feature-out")
    s.add_argument("mode", choices=("pfi", "lofo"))
    s.add_argument("--data", required=True)
    s.add_argument("--model")
    s.add_argument("--airport")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--reps", type=int, default=10)
    model_opts(s)
    s.add_argument("--out", required=True)
    common(s)

    s = sub.add_parser("sweep", help="FDE versus horizon or call age")
    s.add_argument("variable", choices=("obs_horizon", "pred_horizon", "call_age_bucket"))
    s.add_argument("--values", required=True, help="comma list; call-age buckets as lo-hi")
    s.add_argument("--model")
    s.add_argument("--data")
    s.add_argument("--twin", action="store_true", help="sweep with-intent and trajectory-only models")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--format", choices=("csv", "svg"), default="csv")
    sim_opts(s)
    model_opts(s)
    s.add_argument("--out", required=True)
    common(s)

    s = sub.add_parser("context", help="render the dynamic context at a time")
    s.add_argument("--directory", required=True)
    s.add_argument("--tracks", required=True)
    s.add_argument("--time", type=float, required=True)
    s.add_argument("--out")
    common(s, seed=False)
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "parse": cmd_parse,
    "wer": cmd_wer,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "context": cmd_context,
}


def _fail(code: int, message: str) -> int:
    text = " ".join(str(message).split()).replace('"', "'")
    print(f'error code={code} kind={EXIT_KINDS[code]} message="{text}"', file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.time()
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if args.jobs < 1:
            raise CLIError(EXIT_USAGE, "--jobs must be >= 1")
        result = COMMANDS[args.command](args)
        if result:
            write_manifest(result["out"], args.command, argv, result["config"], result["inputs"], result["outputs"],
                           result["seeds"], started, args.jobs, result.get("manifest_name", "manifest.json"))
        return EXIT_OK
    except CLIError as exc:
        return _fail(exc.code, str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_INPUT_MISSING, str(exc))
    except (CheckpointError,) as exc:
        code = EXIT_SCHEMA if "mismatch" in str(exc) or "schema" in str(exc) else EXIT_INPUT_INVALID
        return _fail(code, str(exc))
    except (DataFormatError, AirportConfigError) as exc:
        return _fail(EXIT_SCHEMA if "schema" in str(exc) else EXIT_INPUT_INVALID, str(exc))
    except TrainingDiverged as exc:
        return _fail(EXIT_DIVERGED, f"{exc} (last checkpoint: {exc.last_checkpoint})")
    except ExternalServiceError as exc:
        return _fail(EXIT_EXTERNAL, str(exc))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(EXIT_INPUT_INVALID, str(exc))
    except Exception as exc:  # noqa: BLE001
        return _fail(EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
