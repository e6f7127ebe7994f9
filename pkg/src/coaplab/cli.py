"""Command line entry point: ``coaplab <subcommand>``.

Subcommands mirror the pipeline stages (generate, label, features, select,
train, eval) plus ``pipeline`` for the whole chain and ``report`` to print a
finished run.  Flags override config-file values, which override defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import capture, features, ga, pipeline, traffic, windows
from .classifiers import FeatureDataset
from .classifiers.metrics import write_confusion_csv

log = logging.getLogger("coaplab")

EXIT_FAILURE = 1
EXIT_DISAGREEMENT = 3


class Manifest:
    """Records what a command read, wrote, and how long each stage took."""

    def __init__(self, out_dir: Path, command: str, config: dict, seeds: dict):
        self.out_dir = out_dir
        snapshot = json.dumps(config, sort_keys=True)
        self.doc = {
            "run_id": hashlib.sha256(f"{command}:{snapshot}".encode()).hexdigest()[:16],
            "command": command,
            "config": config,
            "seeds": seeds,
            "inputs": {},
            "outputs": {},
            "timings_s": {},
        }
        self._t = None

    def input(self, path) -> None:
        self.doc["inputs"][str(path)] = pipeline.sha256_file(path)

    def output(self, path) -> None:
        rel = os.path.relpath(path, self.out_dir)
        self.doc["outputs"][rel] = pipeline.sha256_file(path)

    def stage(self, name: str):
        manifest = self

        class _Timer:
            def __enter__(self):
                log.info("stage %s", name)
                self.t0 = time.perf_counter()

            def __exit__(self, exc_type, exc, tb):
                manifest.doc["timings_s"][name] = round(time.perf_counter() - self.t0, 4)
                if exc is not None and not isinstance(exc, pipeline.PipelineError):
                    raise pipeline.PipelineError(name, str(exc)) from exc

        return _Timer()

    def write(self) -> Path:
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(self.doc, indent=2, sort_keys=True) + "\n")
        return path


# -- config handling ---------------------------------------------------------

def run_config(args) -> pipeline.RunConfig:
    cfg = pipeline.load_run_config(args.config) if getattr(args, "config", None) else pipeline.RunConfig()
    models = tuple(m.strip() for m in args.models.split(",")) if getattr(args, "models", None) else None
    seed = getattr(args, "seed", None)
    cfg = pipeline.with_overrides(
        cfg,
        seed=seed,
        rng_seed=seed,
        duration=getattr(args, "duration", None),
        attack_interval=getattr(args, "attack_interval", None),
        threshold=getattr(args, "threshold", None),
        test_fraction=getattr(args, "test_fraction", None),
        models=models,
        use_ga=True if getattr(args, "ga", False) else None,
    )
    return cfg


def out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise pipeline.PipelineError("setup", f"output directory {path} is not writable")
    return path


def malicious_ips(args, events) -> frozenset[str]:
    if getattr(args, "config", None):
        return run_config(args).scenario.malicious_ips
    ips = {e.attacker_ip for e in events}
    return frozenset(ips) or traffic.ScenarioConfig().malicious_ips


# -- stages ------------------------------------------------------------------

def do_generate(cfg: pipeline.RunConfig, out: Path, man: Manifest) -> tuple[Path, Path]:
    with man.stage("generate"):
        if cfg.scenario.duration <= 0:
            raise pipeline.PipelineError("generate", "scenario duration must be positive")
        packets, events = traffic.run_scenario(cfg.scenario)
        pcap, alog = out / "capture.pcap", out / "attacks.json"
        capture.write_pcap(packets, pcap)
        capture.write_attack_log(events, alog)
        man.output(pcap)
        man.output(alog)
    stats = capture.dataset_stats(packets, cfg.scenario.malicious_ips)
    log.info("generated %d packets, %d attack events (%.2f%% attack traffic)",
             stats.total, len(events), stats.attack_percent)
    return pcap, alog


def do_label(pcap, alog, ips, out_path: Path, man: Manifest, threshold, width, crosscheck: bool):
    with man.stage("label"):
        records = capture.read_pcap(pcap)
        events = capture.read_attack_log(alog)
        labeled = windows.label_dataset(records, ips, width, threshold)
        summary = windows.write_windows_ndjson(labeled, out_path)
        man.output(out_path)
    disagreements = windows.crosscheck_labels(labeled, events)
    summary["disagreements"] = len(disagreements)
    print(json.dumps(summary))
    if crosscheck and disagreements:
        for d in disagreements:
            log.error("window %d: count rule says %s, attack log says %s",
                      d.window_index, d.count_label.name, d.log_label.name)
        return labeled, False
    return labeled, True


def do_select(labeled, cfg: pipeline.RunConfig, out: Path, man: Manifest) -> np.ndarray:
    with man.stage("select"):
        seed = pipeline.stage_seed(cfg.seed, "ga")
        X, y = pipeline.packet_table(labeled, cfg.ga_max_rows, seed)
        gcfg = ga.GaConfig(**{**asdict(cfg.ga), "rng_seed": seed})
        result = ga.run_ga(X, y, gcfg)
        report = ga.ga_report(result, gcfg, features.DEFAULT_SCHEMA.names)
        path = out / "ga_report.json"
        ga.write_ga_report(report, path)
        man.output(path)
    return result.best_mask


def do_features(labeled, mask, cfg: pipeline.RunConfig, out: Path, man: Manifest) -> pipeline.PreparedData:
    with man.stage("features"):
        data = pipeline.prepare_dataset(labeled, mask, cfg.test_fraction,
                                        pipeline.stage_seed(cfg.seed, "split"))
        fdir = out / "features"
        fdir.mkdir(exist_ok=True)
        side = {"vocabulary": data.featurizer.vocab.to_json(),
                "columns": data.featurizer.selected.names}
        for part, ds, idx in (("train", data.train, data.train_idx), ("test", data.test, data.test_idx)):
            meta = dict(side, window_index=[data.window_index[i] for i in idx])
            sidecar = features.write_tensor(fdir / f"{part}.bin", ds.sequences, ds.y, meta)
            man.output(fdir / f"{part}.bin")
            man.output(sidecar)
    return data


def do_train(train: FeatureDataset, cfg: pipeline.RunConfig, out: Path, man: Manifest) -> dict:
    models = {}
    mdir = out / "models"
    mdir.mkdir(exist_ok=True)
    for name in cfg.models:
        with man.stage(f"train:{name}"):
            seed = pipeline.stage_seed(cfg.seed, name)
            model = pipeline.fit_model(name, train, seed, cfg.hyper)
            path = mdir / f"{name}.json"
            pipeline.save_model(name, model, seed, path, asdict(cfg.hyper))
            man.output(path)
            models[name] = (model, seed)
    return models


def do_eval(models: dict, test: FeatureDataset, cfg: pipeline.RunConfig, out: Path, man: Manifest,
            extra: dict | None = None) -> dict:
    with man.stage("eval"):
        entries = [pipeline.evaluate_model(name, model, test, seed) for name, (model, seed) in models.items()]
        report = {"seed": cfg.seed, "test_size": len(test), "models": entries}
        report.update(extra or {})
        path = out / "report.json"
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        csv_path = out / "confusion.csv"
        write_confusion_csv(entries, csv_path)
        man.output(path)
        man.output(csv_path)
    for e in entries:
        log.info("%-6s accuracy %.2f%%", e["model"], e["accuracy"])
    return report


def load_split(fdir: Path, part: str) -> FeatureDataset:
    tensor, labels, _ = features.read_tensor(fdir / f"{part}.bin")
    return FeatureDataset(tensor, labels)


def labeled_from_files(pcap, windows_path, width) -> list:
    records = capture.read_pcap(pcap)
    return windows.relabel_from_rows(records, windows.read_windows_ndjson(windows_path), width)


# -- commands ----------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = run_config(args)
    out = out_dir(args)
    man = Manifest(out, "generate", cfg.to_dict(), {"scenario": cfg.scenario.rng_seed})
    do_generate(cfg, out, man)
    man.write()
    return 0


def cmd_label(args) -> int:
    events = capture.read_attack_log(args.attacks)
    ips = malicious_ips(args, events)
    threshold = args.threshold if args.threshold is not None else windows.DEFAULT_THRESHOLD
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    man = Manifest(out_path.parent, "label", {"threshold": threshold, "malicious_ips": sorted(ips)}, {})
    man.input(args.pcap)
    man.input(args.attacks)
    _, ok = do_label(args.pcap, args.attacks, ips, out_path, man, threshold, windows.WINDOW_US,
                     not args.no_crosscheck)
    man.write()
    return 0 if ok else EXIT_DISAGREEMENT


def cmd_features(args) -> int:
    cfg = run_config(args)
    out = out_dir(args)
    man = Manifest(out, "features", cfg.to_dict(), {"split": pipeline.stage_seed(cfg.seed, "split")})
    man.input(args.pcap)
    man.input(args.windows)
    labeled = labeled_from_files(args.pcap, args.windows, cfg.window_us)
    mask = None
    if args.mask:
        chosen = json.loads(Path(args.mask).read_text())["selected_columns"]
        mask = features.DEFAULT_SCHEMA.mask_for(chosen)
    do_features(labeled, mask, cfg, out, man)
    man.write()
    return 0


def cmd_select(args) -> int:
    cfg = run_config(args)
    out = out_dir(args)
    man = Manifest(out, "select", cfg.to_dict(), {"ga": pipeline.stage_seed(cfg.seed, "ga")})
    man.input(args.pcap)
    man.input(args.windows)
    labeled = labeled_from_files(args.pcap, args.windows, cfg.window_us)
    do_select(labeled, cfg, out, man)
    man.write()
    return 0


def cmd_train(args) -> int:
    cfg = run_config(args)
    out = out_dir(args)
    fdir = Path(args.features)
    man = Manifest(out, "train", cfg.to_dict(), {m: pipeline.stage_seed(cfg.seed, m) for m in cfg.models})
    man.input(fdir / "train.bin")
    do_train(load_split(fdir, "train"), cfg, out, man)
    man.write()
    return 0


def cmd_eval(args) -> int:
    cfg = run_config(args)
    out = out_dir(args)
    fdir = Path(args.features)
    man = Manifest(out, "eval", cfg.to_dict(), {})
    man.input(fdir / "test.bin")
    models = {}
    for name in cfg.models:
        path = Path(args.models_dir) / f"{name}.json"
        if not path.exists():
            continue
        man.input(path)
        _, model, doc = pipeline.load_model(path)
        models[name] = (model, doc["seed"])
    if not models:
        raise pipeline.PipelineError("eval", f"no saved models found in {args.models_dir}")
    do_eval(models, load_split(fdir, "test"), cfg, out, man)
    man.write()
    return 0


def cmd_pipeline(args) -> int:
    cfg = run_config(args)
    out = out_dir(args)
    seeds = {"root": cfg.seed, "scenario": cfg.scenario.rng_seed,
             "split": pipeline.stage_seed(cfg.seed, "split")}
    seeds.update({m: pipeline.stage_seed(cfg.seed, m) for m in cfg.models})
    if cfg.use_ga:
        seeds["ga"] = pipeline.stage_seed(cfg.seed, "ga")
    man = Manifest(out, "pipeline", cfg.to_dict(), seeds)
    try:
        pcap, alog = do_generate(cfg, out, man)
        ips = cfg.scenario.malicious_ips
        labeled, ok = do_label(pcap, alog, ips, out / "windows.ndjson", man, cfg.threshold,
                               cfg.window_us, not args.no_crosscheck)
        if not ok:
            raise pipeline.PipelineError("label", "window labels disagree with the attack log")
        mask = do_select(labeled, cfg, out, man) if cfg.use_ga else None
        data = do_features(labeled, mask, cfg, out, man)
        models = do_train(data.train, cfg, out, man)
        summary = windows.summarize(labeled)
        do_eval(models, data.test, cfg, out, man, {
            "windows": summary, "train_size": len(data.train),
            "features": data.featurizer.selected.names,
        })
    finally:
        man.write()
    return 0


def cmd_report(args) -> int:
    report = json.loads((Path(args.run) / "report.json").read_text())
    print(f"{'model':<8}{'accuracy':>10}{'tp':>6}{'fp':>6}{'fn':>6}{'tn':>6}")
    for e in report["models"]:
        cm = e["confusion_matrix"]
        print(f"{e['model']:<8}{e['accuracy']:>9.2f}%{cm['tp']:>6}{cm['fp']:>6}{cm['fn']:>6}{cm['tn']:>6}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coaplab", description="CoAP DoS dataset synthesis and detection")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", help="scenario or run configuration (JSON)")
        sp.add_argument("--out", required=True, help=out_help)
        sp.add_argument("--seed", type=int, help="root seed (overrides the config)")

    def run_flags(sp):
        sp.add_argument("--test-fraction", type=float)
        sp.add_argument("--models", help="comma-separated subset of " + ",".join(pipeline.MODEL_NAMES))

    sp = sub.add_parser("generate", help="run the traffic scenario and write pcap + attack log")
    common(sp)
    sp.add_argument("--duration", type=float)
    sp.add_argument("--attack-interval", type=float)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("label", help="split a capture into windows and label them")
    sp.add_argument("--pcap", required=True)
    sp.add_argument("--attacks", required=True)
    sp.add_argument("--out", required=True, help="NDJSON output path")
    sp.add_argument("--config", help="scenario config naming the attacker endpoints")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--no-crosscheck", action="store_true")
    sp.set_defaults(func=cmd_label)

    sp = sub.add_parser("features", help="build padded, normalized train/test tensors")
    common(sp)
    run_flags(sp)
    sp.add_argument("--pcap", required=True)
    sp.add_argument("--windows", required=True)
    sp.add_argument("--mask", help="GA report whose selected columns replace the default mask")
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("select", help="genetic-algorithm feature selection")
    common(sp)
    sp.add_argument("--pcap", required=True)
    sp.add_argument("--windows", required=True)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("train", help="fit classifiers on features/train.bin")
    common(sp)
    run_flags(sp)
    sp.add_argument("--features", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate saved models on features/test.bin")
    common(sp)
    run_flags(sp)
    sp.add_argument("--features", required=True)
    sp.add_argument("--models-dir", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("pipeline", help="generate, label, select, train and evaluate")
    common(sp)
    run_flags(sp)
    sp.add_argument("--duration", type=float)
    sp.add_argument("--attack-interval", type=float)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--ga", action="store_true", help="select features with the genetic algorithm")
    sp.add_argument("--no-crosscheck", action="store_true")
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("report", help="print the accuracy table of a finished run")
    sp.add_argument("--run", required=True, help="run directory containing report.json")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("COAPLAB_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except pipeline.PipelineError as exc:
        print(f"coaplab: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, OSError) as exc:
        print(f"coaplab: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
