"""Command-line entry point: simulate, fit, diagnose, ppc, report and cv.

Exit codes: 0 on success, 1 for usage or validation errors, 2 for runtime
failures. Every output carries the tool version, the effective configuration,
the seed and the dataset fingerprint.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .crossval import cv_elpd, compare_elpd, make_folds
from .dataio import (
    DataValidationError,
    MODEL_KINDS,
    dataset_paths,
    load_prefix,
    load_truth,
    save_dataset,
    save_truth,
)
from .diagnostics import diagnose, trace_export
from .modelcheck import DEFAULT_M, degree_report, ppc, subpop_recovery
from .models import RescaleSpec, make_model
from .sampler import Posterior, SamplerConfig, run_chains
from .simgen import SimulationError, load_sim_config, simulate

log = logging.getLogger("ardkit")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Flat settings shared by every subcommand; any key can come from a file or a flag."""

    model: str = "od"
    chains: int = 4
    iterations: int = 2000
    warmup: int = 2000
    thin: int = 1
    seed: int = 0
    threads: int = 1
    adapt_window: int = 20
    block_updates: bool = True
    rescale: bool = True
    rescale_idx: list | None = None
    n_fixed: int = 4
    anchor_dirs: list | None = None
    max_degree: int | None = None
    init_jitter: float = 1.0
    folds: int = 10
    m_set: list = field(default_factory=lambda: list(DEFAULT_M))
    ppc_draws: int | None = 400

    @classmethod
    def keys(cls):
        return {f.name for f in fields(cls)}

    @classmethod
    def from_sources(cls, file_doc: dict, overrides: dict) -> "RunConfig":
        merged = {}
        for source in (file_doc, overrides):
            unknown = set(source) - cls.keys()
            if unknown:
                raise DataValidationError(f"unknown configuration keys: {sorted(unknown)}")
            merged.update({k: v for k, v in source.items() if v is not None})
        cfg = cls(**merged)
        if cfg.model not in MODEL_KINDS:
            raise DataValidationError(f"unknown model {cfg.model!r}")
        return cfg

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(
            chains=self.chains,
            iterations=self.iterations,
            warmup=self.warmup,
            thin=self.thin,
            seed=self.seed,
            block_updates=self.block_updates,
            adapt_window=self.adapt_window,
            threads=self.threads,
        )


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_config_file(path) -> dict:
    """A JSON object or ``key = value`` lines (values parsed as JSON when possible)."""
    if path is None:
        return {}
    text = Path(path).read_text()
    stripped = text.strip()
    if stripped.startswith("{"):
        return json.loads(stripped)
    doc = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataValidationError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        doc[key] = _coerce(value)
    return doc


def provenance(cfg, seed, fingerprint=None, **extra) -> dict:
    doc = {
        "tool": "ardkit",
        "tool_version": __version__,
        "seed": seed,
        "config": cfg if isinstance(cfg, dict) else asdict(cfg),
        "dataset_fingerprint": fingerprint,
    }
    doc.update(extra)
    return doc


def _write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_csv(path, rows, header, prov):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    _write_json(str(path) + ".provenance.json", prov)


# ---------------------------------------------------------------------------
# subcommands


def _model_options(cfg: RunConfig):
    opts = {"n_fixed": cfg.n_fixed, "init_jitter": cfg.init_jitter}
    if cfg.anchor_dirs is not None:
        opts["anchor_dirs"] = cfg.anchor_dirs
    if cfg.max_degree is not None:
        opts["max_degree"] = cfg.max_degree
    return opts


def _rescale_spec(cfg: RunConfig, data):
    if not cfg.rescale:
        return None
    return RescaleSpec.from_data(data, cfg.rescale_idx)


def cmd_simulate(args, file_doc):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    for key, value in (args.set or []):
        overrides[key] = _coerce(value)
    config = load_sim_config(args.model, args.config, **overrides)
    data, truth = simulate(args.model, config)
    save_dataset(data, args.out)
    prov = provenance(asdict(config), config.seed, data.fingerprint, generator=args.model)
    save_truth(truth, args.out, extra={"provenance": prov})
    _write_json(str(args.out) + ".config.json", prov)
    print(f"wrote {dataset_paths(args.out)[0]} ({data.n} x {data.K}), fingerprint {data.fingerprint}")
    return 0


def cmd_fit(args, cfg: RunConfig):
    data = load_prefix(args.data)
    opts = _model_options(cfg)
    model = make_model(cfg.model, data, **opts)
    spec = _rescale_spec(cfg, data)
    post = run_chains(model, data, spec, cfg.sampler(), model_options=opts)
    prov = provenance(cfg, cfg.seed, data.fingerprint, data_prefix=str(args.data))
    post.save(args.out, extra_manifest={"provenance": prov})
    _write_json(Path(args.out) / "summary.json", {"provenance": prov, "summary": post.summary()})
    for msg in post.warnings:
        log.warning(msg)
    print(f"wrote posterior {args.out}: {post.n_chains} chains x {post.n_iter} draws")
    return 0


def _load_posterior_manifest(path):
    return json.loads((Path(path) / "manifest.json").read_text())


def cmd_diagnose(args, cfg: RunConfig):
    post = Posterior.load(args.posterior)
    manifest = _load_posterior_manifest(args.posterior)
    report = diagnose(post)
    prov = provenance(manifest.get("config", {}), manifest.get("config", {}).get("seed"), post.fingerprint)
    doc = {"provenance": prov, **report.to_dict()}
    out = Path(args.out) if args.out else Path(args.posterior) / "diagnostics.json"
    _write_json(out, doc)
    if args.trace:
        labels = [s for s in args.trace.split(",") if s]
        trace_path = Path(args.trace_out) if args.trace_out else Path(args.posterior) / "trace.csv"
        trace_export(post, labels, trace_path)
        _write_json(str(trace_path) + ".provenance.json", prov)
    print(f"wrote {out}; {len(report.flagged_11)} parameters with R-hat >= 1.1")
    return 0


def _model_for(post: Posterior, data):
    return make_model(post.model_kind, data, **post.model_options)


def cmd_ppc(args, cfg: RunConfig):
    post = Posterior.load(args.posterior)
    data = load_prefix(args.data)
    model = _model_for(post, data)
    m_set = [int(v) for v in args.m.split(",")] if args.m else cfg.m_set
    rep = ppc(post, model, data, m_set, seed=cfg.seed, max_draws=cfg.ppc_draws)
    prov = provenance(cfg, cfg.seed, data.fingerprint, posterior=str(args.posterior))
    out = Path(args.out) if args.out else Path(args.posterior) / "ppc.json"
    _write_json(out, {"provenance": prov, **rep.to_dict(data.names)})
    _write_csv(
        out.with_suffix(".csv"),
        list(rep.rows(data.names)),
        ["subpop", "m", "observed", "lower", "upper", "contained"],
        prov,
    )
    print(f"wrote {out}; {rep.n_contained}/{rep.contained.size} cells contained")
    return 0


def cmd_report(args, cfg: RunConfig):
    post = Posterior.load(args.posterior)
    data = load_prefix(args.data)
    model = _model_for(post, data)
    truth_path = args.truth or (dataset_paths(args.data)[2] if dataset_paths(args.data)[2].exists() else None)
    truth = load_truth(truth_path) if truth_path else None
    rec = subpop_recovery(post, model, data, truth)
    deg = degree_report(post, model, truth)
    prov = provenance(cfg, cfg.seed, data.fingerprint, posterior=str(args.posterior), truth=str(truth_path))
    out = Path(args.out) if args.out else Path(args.posterior) / "report.json"
    _write_json(out, {"provenance": prov, **rec.to_dict(), "degree": deg})
    rows = rec.to_dict()["subpops"]
    for r in rows:
        r["q50_lo"], r["q50_hi"] = r.pop("q50")
        r["q90_lo"], r["q90_hi"] = r.pop("q90")
    header = ["subpop", "known", "median", "q50_lo", "q50_hi", "q90_lo", "q90_hi"]
    if truth is not None:
        header += ["truth", "in_50", "in_90"]
    _write_csv(out.with_suffix(".subpops.csv"), rows, header, prov)
    deg_rows = [{"ego": i, "posterior_mean_degree": v} for i, v in enumerate(deg["posterior_mean_degree"])]
    if truth is not None:
        for r, t in zip(deg_rows, truth.degrees):
            r["true_degree"] = int(t)
    _write_csv(out.with_suffix(".degrees.csv"), deg_rows, list(deg_rows[0]), prov)
    print(f"wrote {out}")
    return 0


def cmd_cv(args, cfg: RunConfig):
    data = load_prefix(args.data)
    kinds = [s for s in (args.models or "er,vd,od,latent").split(",") if s]
    if "barrier" in kinds:
        raise DataValidationError("cross-validation is not available for the barrier model")
    plan = make_folds(data.n, data.K, cfg.folds, cfg.seed)
    spec = _rescale_spec(cfg, data)
    pointwise, notes = {}, {}
    for kind in kinds:
        model = make_model(kind, data, **_model_options(cfg))
        res = cv_elpd(model, data, plan, spec, cfg.sampler())
        pointwise[kind] = res.pointwise
        notes[kind] = res.fold_warnings
    rep = compare_elpd(pointwise)
    prov = provenance(cfg, cfg.seed, data.fingerprint, folds=cfg.folds)
    doc = {"provenance": prov, **rep.to_dict(), "fold_warnings": notes}
    _write_json(args.out, doc)
    np.savez_compressed(Path(args.out).with_suffix(".pointwise.npz"), **pointwise)
    for row in doc["rows"]:
        print(f"{row['model']:>8}  diff {row['diff']:12.2f}  se {row['se']:10.2f}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="JSON or key=value file with run settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument(
        "--set",
        nargs=2,
        action="append",
        metavar=("KEY", "VALUE"),
        help="override any configuration key",
    )


def build_parser():
    parser = _Parser(prog="ardkit", description="Bayesian ARD models: simulate, fit and check.")
    parser.add_argument("--version", action="version", version=f"ardkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--model", required=True, choices=["latent", "barrier"])
    p.add_argument("--out", required=True, help="output prefix")
    _common(p)

    p = sub.add_parser("fit", help="run the sampler")
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--data", required=True, help="dataset prefix")
    p.add_argument("--out", required=True, help="posterior directory")
    for name, typ in (("chains", int), ("iterations", int), ("warmup", int), ("thin", int)):
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--no-rescale", dest="rescale", action="store_const", const=False)
    _common(p)

    p = sub.add_parser("diagnose", help="R-hat / ESS report for a posterior")
    p.add_argument("--posterior", required=True)
    p.add_argument("--trace", help="comma-separated parameter labels to export")
    p.add_argument("--trace-out")
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("ppc", help="posterior predictive checks")
    p.add_argument("--posterior", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--m", help="comma-separated count values, default 0,1,3,5,10")
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("report", help="subpopulation and degree recovery")
    p.add_argument("--posterior", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--truth")
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("cv", help="entry-wise cross-validation")
    p.add_argument("--models", default="er,vd,od,latent")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int)
    p.add_argument("--out", required=True)
    for name, typ in (("chains", int), ("iterations", int), ("warmup", int)):
        p.add_argument(f"--{name}", type=typ)
    _common(p)
    return parser


_FLAG_KEYS = ("model", "chains", "iterations", "warmup", "thin", "seed", "threads", "folds", "rescale")

COMMANDS = {
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "ppc": cmd_ppc,
    "report": cmd_report,
    "cv": cmd_cv,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args, None)
        file_doc = read_config_file(args.config)
        overrides = {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k, None) is not None}
        for key, value in args.set or []:
            overrides[key] = _coerce(value)
        cfg = RunConfig.from_sources(file_doc, overrides)
        return COMMANDS[args.command](args, cfg)
    except (DataValidationError, SimulationError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"ardkit {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        log.debug("traceback", exc_info=True)
        print(f"ardkit {args.command}: runtime failure: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
