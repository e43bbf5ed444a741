"""Command-line surface: ingest, generate, train, run, replay, report, sweep, serve.

Errors print a machine-readable JSON diagnostic to stderr. Exit codes:
0 success, 2 usage (argparse), 3 invalid input or configuration, 4 runtime
failure, 5 replay mismatch.
"""

from __future__ import annotations

import argparse
import json
import resource
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

from . import benchmark as bench
from .assess import TextClassifier, TrainConfig
from .engine import Engine, EngineConfig, PolicyBundle
from .metrics import render_table, report_from_run_dir
from .netsim import Topology
from .ppo import PPOConfig, load_checkpoint, save_checkpoint, train as ppo_train
from .predict import ForecastConfig, SeverityForecaster
from .scenario import (ColumnMapping, FEMA_MAPPING, NOAA_MAPPING,
                       GeneratorConfig, generate_pack, generate_tweets,
                       ingest_events, load_pack, save_pack)


class CommandError(RuntimeError):
    def __init__(self, code: str, message: str, exit_code: int = 3):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def _fail(code: str, message: str, exit_code: int = 3) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return exit_code


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CommandError("bad_config", f"{path}: {exc}")


def _dataclass_from(cls, data: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise CommandError("bad_config", f"{name}: unknown keys {sorted(unknown)}")
    if "failures" in data:
        data = dict(data)
        data["failures"] = tuple(tuple(f) for f in data["failures"])
    return cls(**data)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    if args.mapping == "fema":
        mapping = FEMA_MAPPING
    elif args.mapping == "noaa":
        mapping = NOAA_MAPPING
    else:
        mapping = ColumnMapping.from_dict(_load_json(args.mapping))
    with open(args.csv, "rb") as fh:
        result = ingest_events(fh, mapping)
    with open(args.out, "w", encoding="utf-8") as fh:
        for ev in result.events:
            fh.write(json.dumps({
                "event_id": ev.event_id, "onset_time": ev.onset_time,
                "end_time": ev.end_time, "category": ev.category.value,
                "severity": ev.severity, "lat": ev.lat, "lon": ev.lon,
                "region_code": ev.region_code}, sort_keys=True) + "\n")
    print(json.dumps({"ingested": len(result.events),
                      "rejected": [asdict(r) for r in result.rejected]},
                     sort_keys=True))
    return 0


def cmd_generate(args) -> int:
    cfg = GeneratorConfig()
    if args.config:
        cfg = _dataclass_from(GeneratorConfig, _load_json(args.config),
                              "generator config")
    pack = generate_pack(cfg, args.seed)
    save_pack(pack, args.out)
    print(json.dumps({"pack_id": pack.pack_id, "events": len(pack.events),
                      "readings": len(pack.sensor_streams), "out": str(args.out)}))
    return 0


def cmd_train(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.agent == "assess":
        tweets = generate_tweets(args.samples, seed=args.seed)
        cfg = TrainConfig(learning_rate=args.learning_rate or 0.05,
                          epochs=args.epochs or 10)
        clf = TextClassifier(config=cfg, seed=args.seed).fit(tweets)
        clf.save(out)
        print(json.dumps({"agent": "assess", "val_accuracy": clf.val_accuracy_,
                          "test_accuracy": clf.test_accuracy_, "out": str(out)}))
    elif args.agent == "predict":
        xs, ys = bench._forecast_training_set(args.seed, n=args.samples)
        cfg = ForecastConfig(max_epochs=args.epochs or 60)
        fc = SeverityForecaster(config=cfg, seed=args.seed).fit(xs, ys)
        fc.save(out)
        print(json.dumps({"agent": "predict", "val_nll": fc.val_nll_,
                          "out": str(out)}))
    else:  # ppo
        cfg = PPOConfig(learning_rate=args.learning_rate or 3e-3,
                        rollout_episodes=16,
                        max_episodes=args.episodes,
                        early_stop_patience=3000)
        result = ppo_train(lambda rng: bench.ScenarioAllocEnv(rng), cfg,
                           seed=args.seed)
        save_checkpoint(result, out)
        curve_path = out.with_suffix(".curve.csv")
        result.write_curve_csv(curve_path)
        print(json.dumps({"agent": "ppo", "episodes": result.episodes_run,
                          "stopped_early": result.stopped_early,
                          "out": str(out), "curve": str(curve_path)}))
    return 0


def _build_bundle(args) -> PolicyBundle:
    bundle = PolicyBundle()
    if args.assess_model:
        bundle.classifier = TextClassifier.load(args.assess_model)
    if args.predict_model:
        bundle.forecaster = SeverityForecaster.load(args.predict_model)
    if args.ppo_model:
        bundle.allocator = load_checkpoint(args.ppo_model)
    return bundle


def _engine_from_args(args, pack, mode: str, out_dir) -> Engine:
    config = EngineConfig()
    if args.config:
        config = _dataclass_from(EngineConfig, _load_json(args.config),
                                 "engine config")
    topology = None
    if getattr(args, "topology", None):
        topology = Topology.from_dict(_load_json(args.topology))
    bundle = _build_bundle(args)
    if args.policy == "agentic" and bundle.classifier is None:
        raise CommandError("bad_config",
                           "agentic policy requires --assess-model")
    return Engine(pack, config, mode=mode, policy=args.policy, bundle=bundle,
                  topology=topology, seed=args.seed, out_dir=out_dir)


def _sample_host_stats(report: dict, wall_s: float) -> None:
    usage = resource.getrusage(resource.RUSAGE_SELF)
    cpu_s = usage.ru_utime + usage.ru_stime
    report["cpu_utilization_pct"] = {
        "value": min(100.0, 100.0 * cpu_s / max(wall_s, 1e-9)),
        "note": "host process sampler; not comparable to published numbers"}
    report["memory_usage_gb"] = {
        "value": usage.ru_maxrss / 1024 / 1024,
        "note": "host process peak RSS; not comparable to published numbers"}


def cmd_run(args) -> int:
    pack = load_pack(args.pack)
    out_dir = Path(args.out)
    t0 = time.monotonic()
    eng = _engine_from_args(args, pack, args.mode, out_dir)
    record = eng.run()
    if args.sample_host_stats:
        _sample_host_stats(record.report, time.monotonic() - t0)
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(record.report, fh, sort_keys=True, indent=2)
    save_pack(pack, out_dir / "pack.jsonl")
    _write_run_config(out_dir, args)
    print(json.dumps({"out": str(out_dir), "incidents": len(eng.incidents),
                      "decisions": len(eng.decisions)}))
    return 0


def _write_run_config(out_dir: Path, args) -> None:
    echo = {
        "seed": args.seed, "mode": args.mode, "policy": args.policy,
        "config": args.config and str(args.config),
        "assess_model": args.assess_model and str(args.assess_model),
        "predict_model": args.predict_model and str(args.predict_model),
        "ppo_model": args.ppo_model and str(args.ppo_model),
    }
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(echo, fh, sort_keys=True, indent=2)


def cmd_replay(args) -> int:
    src = Path(args.run)
    pack = load_pack(src / "pack.jsonl")
    echo = _load_json(src / "run_config.json")
    ns = argparse.Namespace(
        seed=echo["seed"], policy=echo["policy"], config=echo["config"],
        assess_model=echo["assess_model"], predict_model=echo["predict_model"],
        ppo_model=echo["ppo_model"], topology=None)
    out_dir = Path(args.out)
    eng = _engine_from_args(ns, pack, echo["mode"], out_dir)
    transcript_path = src / "transcript.jsonl"
    if transcript_path.exists():
        entries = [json.loads(l) for l in transcript_path.read_text().splitlines()]
        eng.attach_transcript(entries)
    eng.run()
    save_pack(pack, out_dir / "pack.jsonl")
    mismatched = [
        name for name in ("report.json", "events.jsonl", "kgraph.jsonl")
        if (src / name).read_bytes() != (out_dir / name).read_bytes()]
    print(json.dumps({"out": str(out_dir), "identical": not mismatched,
                      "mismatched": mismatched}))
    return 0 if not mismatched else 5


def cmd_report(args) -> int:
    reports = {"run": report_from_run_dir(args.run)}
    if args.compare:
        reports = {"baseline": report_from_run_dir(args.compare),
                   "agentic": report_from_run_dir(args.run)}
        base_rt = reports["baseline"]["response_time_min"]["value"]
        agen_rt = reports["agentic"]["response_time_min"]["value"]
        if base_rt and agen_rt:
            reports["agentic"]["response_time_efficiency"] = {
                "value": base_rt / agen_rt}
    if args.format == "json":
        print(json.dumps(reports, sort_keys=True, indent=2))
    else:
        print(render_table(reports))
    return 0


def cmd_sweep(args) -> int:
    bundle = _build_bundle(args) if args.assess_model else None
    result = bench.run_sweep(bundle, max_n=args.max_n,
                             latency_threshold_s=args.threshold, seed=args.seed)
    out = json.dumps(result, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(out + "\n")
    print(out)
    return 0


def cmd_serve(args) -> int:
    from dataclasses import replace as dc_replace

    from .api import ApiServer
    pack = load_pack(args.pack)
    out_dir = Path(args.out) if args.out else None
    eng = _engine_from_args(args, pack, "interactive", out_dir)
    speedup = args.speedup if args.speedup is not None else \
        (eng.config.speedup or 1.0)
    eng.config = dc_replace(eng.config, speedup=speedup)
    server = ApiServer(eng, host=args.host, port=args.port)
    server.start()
    print(json.dumps({"serving": True, "port": server.port}), flush=True)
    try:
        eng.run()
    finally:
        server.mark_done()
    time.sleep(args.linger)
    server.stop()
    print(json.dumps({"serving": False, "out": out_dir and str(out_dir)}))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--policy", choices=["baseline", "agentic"], default="baseline")
    p.add_argument("--assess-model")
    p.add_argument("--predict-model")
    p.add_argument("--ppo-model")
    p.add_argument("--config", help="engine config JSON")
    p.add_argument("--topology", help="topology JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crisissim",
        description="Desk-scale multi-agent emergency-response simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize a disaster-event CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--mapping", required=True,
                   help="'fema', 'noaa', or a mapping JSON path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("generate", help="generate a synthetic scenario pack")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="generator config JSON")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train an agent checkpoint")
    p.add_argument("agent", choices=["assess", "predict", "ppo"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=1500)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="execute a scenario pack")
    p.add_argument("--pack", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=["batch", "interactive"], default="batch")
    p.add_argument("--sample-host-stats", action="store_true")
    _add_model_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="re-execute a recorded run and compare")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="render a run report")
    p.add_argument("--run", required=True)
    p.add_argument("--compare", help="baseline run directory")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="concurrency ladder")
    p.add_argument("--max-n", type=int, default=12)
    p.add_argument("--threshold", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=500)
    p.add_argument("--out")
    p.add_argument("--assess-model")
    p.add_argument("--predict-model")
    p.add_argument("--ppo-model")
    p.set_defaults(func=cmd_sweep, policy="baseline", config=None)

    p = sub.add_parser("serve", help="interactive run with the operator API")
    p.add_argument("--pack", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--speedup", type=float, default=None,
                   help="sim ms per wall ms (engine config field)")
    p.add_argument("--linger", type=float, default=3.0,
                   help="seconds to keep serving after scenario end")
    _add_model_args(p)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        return _fail(exc.code, str(exc), exc.exit_code)
    except (FileNotFoundError, ValueError) as exc:
        return _fail("invalid_input", str(exc), 3)
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        return _fail("runtime_error", f"{type(exc).__name__}: {exc}", 4)


if __name__ == "__main__":
    sys.exit(main())
