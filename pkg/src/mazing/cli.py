"""Command-line orchestration: simulate, trace, pipeline, correlate, train, report.

Every stage writes under one output root and records sha256 digests of its files in
``manifest.json``; downstream stages refuse to run if an upstream stage is missing or altered.

Exit codes: 0 success, 2 configuration error, 3 data validation error, 4 missing or stale stage.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import Config, load_config
from .learn.svm import Kernel, SvmHyperparams
from .learn.validation import EvalReport, cross_validate, grid_search, model_comparison
from .pipeline import FeatureSet, Processing, WindowedDataset, dataset_pairs, process_session
from .sim import ConfigError, read_telemetry, run_study, session_name, session_seed, write_session
from .stats import correlation_report, report_csv, report_table
from .traces import (
    DEFAULT_ANNOTATOR,
    FACIAL_FEATURES,
    IDENTITY_ANNOTATOR,
    IngestError,
    export_channel,
    export_trace,
    ingest_channel,
    ingest_trace,
    synthesize_noise_channels,
    synthesize_trace,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_STAGE = 0, 2, 3, 4
OUT_ENV = "MAZING_OUT"
STAGES = ("simulate", "trace", "pipeline", "correlate", "train", "report")
_TRACE_STREAM = 0x7472  # seed tag separating trace randomness from the session's own streams


class StageError(RuntimeError):
    pass


class DataError(ValueError):
    pass


# -- manifest ------------------------------------------------------------------------


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.path = self.root / "manifest.json"
        if self.path.exists():
            self.data = json.loads(self.path.read_text(encoding="utf-8"))
        else:
            self.data = {"output_dir": ".", "stages": {}}

    def stage(self, name: str) -> dict:
        st = self.data["stages"].get(name)
        if st is None:
            raise StageError(f"stage '{name}' has not been run in {self.root}")
        for rel, digest in st["files"].items():
            p = self.root / rel
            if not p.exists() or sha256_file(p) != digest:
                raise StageError(f"output {rel} of stage '{name}' is missing or modified; re-run '{name}'")
        return st

    def record(self, name: str, files, params: dict) -> None:
        files = sorted(Path(f).relative_to(self.root).as_posix() for f in files)
        entry = {"params": params, "files": {f: sha256_file(self.root / f) for f in files}}
        h = hashlib.sha256()
        for f in files:
            h.update(f"{f}\0{entry['files'][f]}\n".encode())
        entry["digest"] = h.hexdigest()
        self.data["stages"][name] = entry
        # downstream results no longer describe these inputs
        for later in STAGES[STAGES.index(name) + 1:]:
            self.data["stages"].pop(later, None)
        self.save()

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        ordered = {"output_dir": ".", "config": self.data.get("config"), "config_sha256": self.data.get("config_sha256"),
                   "base_seed": self.data.get("base_seed"),
                   "stages": {s: self.data["stages"][s] for s in STAGES if s in self.data["stages"]}}
        self.path.write_text(json.dumps(ordered, indent=2, sort_keys=False) + "\n", encoding="utf-8")


# -- helpers ---------------------------------------------------------------------------


def _out_root(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "mazing-out")


def _config(args) -> Config:
    cfg = load_config(args.config)
    study = cfg.study
    if getattr(args, "seed", None) is not None:
        study = dataclasses.replace(study, base_seed=args.seed)
    if getattr(args, "participants", None) is not None:
        study = dataclasses.replace(study, participants=args.participants)
    if getattr(args, "sessions", None) is not None:
        study = dataclasses.replace(study, sessions_per=args.sessions)
    pipe = cfg.pipeline
    try:
        if getattr(args, "w", None) is not None:
            pipe = dataclasses.replace(pipe, w=args.w)
        if getattr(args, "l", None) is not None:
            pipe = dataclasses.replace(pipe, l=args.l)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    learn = cfg.learn
    if getattr(args, "max_pairs", None) is not None:
        learn = dataclasses.replace(learn, max_pairs=args.max_pairs)
    study.validate()
    return dataclasses.replace(cfg, study=study, pipeline=pipe, learn=learn)


def _config_meta(args, manifest: Manifest) -> None:
    manifest.data["config"] = Path(args.config).name if args.config else None
    manifest.data["config_sha256"] = sha256_file(Path(args.config)) if args.config else None


def _sessions(st: dict) -> list[tuple[int, int]]:
    return [tuple(x) for x in st["params"]["sessions"]]


# -- stages ----------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _config(args)
    root = _out_root(args)
    tdir, edir = root / "telemetry", root / "events"
    tdir.mkdir(parents=True, exist_ok=True)
    edir.mkdir(parents=True, exist_ok=True)
    bundle = run_study(cfg.study)
    files = []
    for res in bundle.sessions:
        files.extend(write_session(res, tdir, edir))
    man = Manifest(root)
    _config_meta(args, man)
    man.data["base_seed"] = cfg.study.base_seed
    sessions = [[r.config.participant, r.config.session] for r in bundle.sessions]
    man.record("simulate", files, {"participants": cfg.study.participants, "sessions_per": cfg.study.sessions_per,
                                   "duration": cfg.study.duration, "tick_rate": cfg.study.tick_rate,
                                   "sessions": sessions, "bundle_digest": bundle.digest()})
    print(f"simulated {len(bundle)} sessions -> {tdir}")
    return EXIT_OK


def _annotator(args, cfg: Config):
    if args.annotator == "identity":
        return IDENTITY_ANNOTATOR
    if args.annotator == "default":
        return DEFAULT_ANNOTATOR
    return cfg.annotator


def cmd_trace(args) -> int:
    cfg = _config(args)
    root = _out_root(args)
    man = Manifest(root)
    sim = man.stage("simulate")
    base_seed = man.data.get("base_seed", 0)
    sessions = _sessions(sim)
    trdir, chdir = root / "traces", root / "channels"
    trdir.mkdir(parents=True, exist_ok=True)
    files = []
    channels_kind = args.channels or cfg.channels.kind
    annotator = _annotator(args, cfg)
    for p, s in sessions:
        name = session_name(p, s)
        tel = read_telemetry(root / "telemetry" / f"{name}.csv")
        rng = np.random.default_rng([session_seed(base_seed, p, s), _TRACE_STREAM])
        if args.ingest_traces:
            src = Path(args.ingest_traces) / f"{name}.csv"
            if not src.exists():
                raise DataError(f"no trace file {src} for session {name}")
            trace = ingest_trace(src)
            trace = dataclasses.replace(trace, participant=p, session=s)
        else:
            trace = synthesize_trace(tel, annotator, rng)
        out = trdir / f"{name}.csv"
        export_trace(trace, out)
        files.append(out)
        chans = []
        if args.ingest_channels:
            src = Path(args.ingest_channels) / name
            if not src.is_dir():
                raise DataError(f"no channel directory {src} for session {name}")
            chans = [ingest_channel(f) for f in sorted(src.glob("*.csv"))]
        elif channels_kind == "noise23":
            duration = float(sim["params"]["duration"])
            chans = synthesize_noise_channels(FACIAL_FEATURES, duration, rng, cfg.channels.gap_rate)
        if chans:
            sdir = chdir / name
            sdir.mkdir(parents=True, exist_ok=True)
            for ch in chans:
                f = sdir / f"{ch.name}.csv"
                export_channel(ch, f)
                files.append(f)
    man.record("trace", files, {"annotator": dataclasses.asdict(annotator) if not args.ingest_traces else "ingested",
                                "channels": "ingested" if args.ingest_channels else channels_kind,
                                "gap_rate": cfg.channels.gap_rate, "sessions": [list(x) for x in sessions]})
    print(f"wrote {len(sessions)} traces" + (f" with {len(chans)} channels each" if chans else ""))
    return EXIT_OK


def _load_dataset(root: Path, man: Manifest) -> tuple[WindowedDataset, dict]:
    st = man.stage("pipeline")
    ds = WindowedDataset.read_csv(root / "pipeline" / "dataset.csv")
    return ds, st


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    root = _out_root(args)
    man = Manifest(root)
    sim = man.stage("simulate")
    tr = man.stage("trace")
    sessions = _sessions(sim)
    if [tuple(x) for x in tr["params"]["sessions"]] != sessions:
        raise StageError("trace sessions do not match telemetry sessions; re-run 'trace'")
    per_session = []
    for p, s in sessions:
        name = session_name(p, s)
        tel = read_telemetry(root / "telemetry" / f"{name}.csv")
        trace = ingest_trace(root / "traces" / f"{name}.csv")
        trace = dataclasses.replace(trace, participant=p, session=s)
        cdir = root / "channels" / name
        chans = [ingest_channel(f) for f in sorted(cdir.glob("*.csv"))] if cdir.is_dir() else []
        per_session.append(process_session(tel, trace, chans, cfg.pipeline))
    ds = WindowedDataset.from_sessions(per_session)
    pdir = root / "pipeline"
    pdir.mkdir(parents=True, exist_ok=True)
    ds.to_csv(pdir / "dataset.csv")
    files = [pdir / "dataset.csv"]
    has_facial = all(f"mu_{n}" in ds.frame.columns for n in FACIAL_FEATURES)
    fs = FeatureSet.ALL if has_facial else FeatureSet.GAME
    counts = {}
    for proc in (Processing.MM, Processing.RR):
        pairs = dataset_pairs(ds, fs, proc, cfg.pipeline.tie_epsilon, cfg.learn.scope)
        f = pdir / f"pairs_{proc.value}.jsonl"
        pairs.to_jsonl(f)
        files.append(f)
        counts[proc.value] = len(pairs)
    per = sorted({len(s.rows) for s in per_session})
    man.record("pipeline", files, {"w": cfg.pipeline.w, "l": cfg.pipeline.l, "tie_epsilon": cfg.pipeline.tie_epsilon,
                                   "rows": len(ds), "dropped": ds.dropped, "pairs": counts,
                                   "feature_set": fs.value})
    print(f"rows: {len(ds)} ({'/'.join(map(str, per))} per session), dropped: {ds.dropped['missing']} missing")
    for k, v in counts.items():
        print(f"pairs[{k}]: {v}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    _config(args)
    root = _out_root(args)
    man = Manifest(root)
    ds, _ = _load_dataset(root, man)
    feats = ds.features
    results = correlation_report(ds.frame, feats)
    cdir = root / "correlate"
    cdir.mkdir(parents=True, exist_ok=True)
    (cdir / "correlations.csv").write_text(report_csv(results), encoding="utf-8")
    (cdir / "correlations.txt").write_text(report_table(results), encoding="utf-8")
    _record_keep(man, "correlate", [cdir / "correlations.csv", cdir / "correlations.txt"], {"rows": len(results)})
    print(f"{len(results)} correlation rows -> {cdir / 'correlations.txt'}")
    return EXIT_OK


def _record_keep(man: Manifest, name: str, files, params) -> None:
    """Record a leaf stage without invalidating sibling leaf stages."""
    keep = {k: v for k, v in man.data["stages"].items() if k in ("correlate", "train") and k != name}
    man.record(name, files, params)
    man.data["stages"].update(keep)
    man.save()


def _cells(args):
    fsets = [FeatureSet(args.features)] if args.features else list(FeatureSet)
    procs = [Processing(args.processing)] if args.processing else list(Processing)
    return [(f, p) for f in fsets for p in procs]


def cmd_train(args) -> int:
    cfg = _config(args)
    root = _out_root(args)
    man = Manifest(root)
    ds, _ = _load_dataset(root, man)
    lc = cfg.learn
    cv = {"max_pairs": lc.max_pairs, "tie_epsilon": lc.tie_epsilon, "scope": lc.scope,
          "seed": man.data.get("base_seed", 0) or 0}
    tdir = root / "train"
    tdir.mkdir(parents=True, exist_ok=True)
    files = []
    summaries = []
    for fs, proc in _cells(args):
        if fs is not FeatureSet.GAME and not all(f"mu_{n}" in ds.frame.columns for n in FACIAL_FEATURES):
            raise DataError(f"dataset has no facial channels for feature set '{fs.value}'")
        reports = []
        if args.grid == "none":
            reports.append(cross_validate(ds, fs, proc, SvmHyperparams(C=lc.C), **cv))
        else:
            reports.append(grid_search(ds, fs, proc, Kernel.LINEAR, **cv).best)
            if args.grid == "full":
                reports.append(grid_search(ds, fs, proc, Kernel.RBF, **cv).best)
        for rep in reports:
            tag = f"{fs.value}_{proc.value}_{rep.hp.kernel.value}"
            f = tdir / f"{tag}.csv"
            f.write_text(rep.folds_csv(), encoding="utf-8")
            files.append(f)
            summary = rep.summary()
            summary["accuracies"] = rep.accuracies.tolist()
            summaries.append(summary)
            print(f"{tag}: mean {rep.mean:.3f} +/- {rep.ci95:.3f} (max {rep.max:.3f}, C={rep.hp.C:g}"
                  + (f", gamma={rep.hp.gamma:g}" if rep.hp.kernel is Kernel.RBF else "") + ")")
    sf = tdir / "summary.jsonl"
    sf.write_text("".join(json.dumps(s, sort_keys=True) + "\n" for s in summaries), encoding="utf-8")
    files.append(sf)
    _record_keep(man, "train", files, {"grid": args.grid, "C": lc.C, "max_pairs_per_session": lc.max_pairs,
                                       "cells": len(summaries)})
    return EXIT_OK


def _report_from_summary(s: dict) -> EvalReport:
    hp = SvmHyperparams(C=s["C"], kernel=Kernel(s["kernel"]), gamma=s["gamma"] or 1.0)
    acc = np.array(s["accuracies"])
    return EvalReport(FeatureSet(s["feature_set"]), Processing(s["processing"]), hp, acc,
                      max_pairs=s["max_pairs_per_session"])


def cmd_report(args) -> int:
    root = _out_root(args)
    man = Manifest(root)
    have = [s for s in ("correlate", "train") if s in man.data["stages"]]
    if not have:
        raise StageError("nothing to report: run 'correlate' and/or 'train' first")
    lines = ["Study report", "============", ""]
    sim = man.stage("simulate")["params"]
    pipe = man.stage("pipeline")["params"]
    lines.append(f"sessions: {len(sim['sessions'])} ({sim['participants']} participants x {sim['sessions_per']})")
    lines.append(f"windows: w={pipe['w']:g} s, lag={pipe['l']:g} s, rows={pipe['rows']}, "
                 f"dropped={pipe['dropped']['missing']}")
    lines.append("pairs: " + ", ".join(f"{k}={v}" for k, v in pipe["pairs"].items()))
    lines.append("")
    if "correlate" in have:
        man.stage("correlate")
        lines.append("Kendall tau against the annotation (* p<0.05, ** p<0.01, Bonferroni over features)")
        lines.append((root / "correlate" / "correlations.txt").read_text(encoding="utf-8"))
    if "train" in have:
        man.stage("train")
        summaries = [json.loads(x) for x in (root / "train" / "summary.jsonl").read_text(encoding="utf-8").splitlines()]
        reports = [_report_from_summary(s) for s in summaries]
        lines.append("Cross-participant accuracy (mean +/- 95% CI half-width, max), baseline 0.5")
        header = f"{'features':<8} {'processing':<10} {'kernel':<7} {'C':>7} {'gamma':>7} {'mean':>7} {'ci95':>7} {'max':>7}"
        lines.append(header)
        lines.append("-" * len(header))
        for s in summaries:
            g = "" if s["gamma"] is None else f"{s['gamma']:g}"
            lines.append(f"{s['feature_set']:<8} {s['processing']:<10} {s['kernel']:<7} {s['C']:>7g} {g:>7} "
                         f"{s['mean']:>7.3f} {s['ci95']:>7.3f} {s['max']:>7.3f}")
        if any(s["max_pairs_per_session"] for s in summaries):
            lines.append(f"training pairs subsampled to {summaries[0]['max_pairs_per_session']} per session")
        lines.append("")
        if len(reports) >= 2:
            cells = model_comparison(reports)
            lines.append(f"Pairwise model comparison (t-test / Mann-Whitney), threshold {cells[0].threshold:.5f}")
            for c in cells:
                flag = ("T" if c.significant_t else "-") + ("U" if c.significant_u else "-")
                lines.append(f"  {flag}  {c.a}  vs  {c.b}  p_t={c.p_t:.4g}  p_u={c.p_u:.4g}")
            lines.append("")
    rdir = root / "report"
    rdir.mkdir(parents=True, exist_ok=True)
    out = rdir / "report.txt"
    out.write_text("\n".join(lines).rstrip("\n") + "\n", encoding="utf-8")
    man.record("report", [out], {"sections": have})
    print(out.read_text(encoding="utf-8"), end="")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output root (default: ${OUT_ENV} or ./mazing-out)")
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="base seed")

    parser = argparse.ArgumentParser(prog="mazing", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the study and write telemetry")
    p.add_argument("--participants", type=int)
    p.add_argument("--sessions", type=int, help="sessions per participant")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trace", parents=[common], help="synthesize or ingest annotation traces and channels")
    p.add_argument("--annotator", choices=("config", "default", "identity"), default="config")
    p.add_argument("--channels", choices=("noise23", "none"))
    p.add_argument("--ingest-traces", metavar="DIR", help="directory of <session>.csv trace files")
    p.add_argument("--ingest-channels", metavar="DIR", help="directory of <session>/<channel>.csv files")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("pipeline", parents=[common], help="window, align and build preference pairs")
    p.add_argument("--w", type=float, help="window length in seconds")
    p.add_argument("--l", type=float, help="annotation lag in seconds")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("correlate", parents=[common], help="Kendall tau table")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("train", parents=[common], help="cross-participant preference learning")
    p.add_argument("--features", choices=[f.value for f in FeatureSet])
    p.add_argument("--processing", choices=[x.value for x in Processing])
    p.add_argument("--grid", choices=("none", "linear", "full"), default="none")
    p.add_argument("--max-pairs", type=int, help="cap on training comparisons per session")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", parents=[common], help="consolidated study report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
