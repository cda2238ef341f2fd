"""Command-line experiment harness.

``whalefs run`` runs feature selection on a KDD-format training file,
evaluates the chosen subset on a test file (or a stratified holdout) and
writes the report files. ``whalefs subsample`` cuts a stratified desk-scale
sample from a large KDD file; ``whalefs synth`` writes a synthetic dataset
with known informative features.
"""

from __future__ import annotations

import argparse
import csv
import gzip
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import fit_knn
from .dataset import (
    EncodedDataset,
    FeatureSchema,
    KDDParseError,
    Label,
    checksum,
    encode,
    generate_synthetic,
    parse_kdd,
    parse_line,
    stratified_indices,
    stratified_sample_indices,
    write_kdd,
)
from .fitness import EvalProtocol, FitnessEvaluator
from .masking import FeatureMask
from .metrics import confusion, metric_report
from .optimizer import OptimizerConfig, run, variant

log = logging.getLogger("whalefs")

BASELINES = ("all_features", "woa_only", "ga_only")
_BASELINE_ALIASES = {"full": "all_features", "all-features": "all_features",
                     "woa": "woa_only", "woa-only": "woa_only",
                     "ga": "ga_only", "ga-only": "ga_only"}


class ExperimentError(RuntimeError):
    """Raised for bad inputs or violated run invariants; exit code 2 or 3."""

    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


@dataclass
class ExperimentConfig:
    train: str | None = None
    test: str | None = None
    out: str = "results"
    schema: str = "kdd"
    pop: int = 100
    iters: int = 100
    k: int = 5
    alpha: float = 0.99
    crossover: float = 0.8
    mutation: float | None = None
    ga_fraction: float = 0.5
    binarize: str = "threshold"
    seed: int = 0
    holdout: float = 0.3
    test_fraction: float = 0.3
    elitism: int = 1
    jobs: int = 1
    baselines: tuple[str, ...] = BASELINES

    def optimizer_config(self) -> OptimizerConfig:
        protocol = EvalProtocol(holdout_fraction=self.holdout, eval_seed=self.seed,
                                k=self.k, alpha=self.alpha)
        return OptimizerConfig(
            population=self.pop, iterations=self.iters, crossover_rate=self.crossover,
            mutation_rate=self.mutation, ga_fraction=self.ga_fraction,
            elitism=self.elitism, seed=self.seed, binarize_mode=self.binarize,
            protocol=protocol, n_jobs=self.jobs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["baselines"] = list(self.baselines)
        return out


def parse_baselines(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t.strip() for t in str(text).split(",") if t.strip()]
    chosen = []
    for item in items:
        item = item.lower()
        if item == "all":
            chosen.extend(BASELINES)
        elif item == "none":
            continue
        else:
            name = _BASELINE_ALIASES.get(item, item)
            if name not in BASELINES:
                raise ExperimentError(f"unknown baseline {item!r}")
            chosen.append(name)
    return tuple(b for b in BASELINES if b in chosen)


_CONFIG_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_KEY_ALIASES = {"population": "pop", "iterations": "iters", "baseline": "baselines",
                "crossover_rate": "crossover", "mutation_rate": "mutation", "n_jobs": "jobs"}


def _coerce(key: str, value):
    if key == "baselines":
        return parse_baselines(value)
    if value is None or (isinstance(value, str) and value.lower() in ("", "none", "null")):
        return None
    kind = _CONFIG_TYPES[key]
    if "int" in kind and "float" not in kind:
        return int(value)
    if "float" in kind:
        return float(value)
    return str(value)


def read_config_file(path) -> dict:
    """Key-value config (``key = value`` per line, ``#`` comments) or a run manifest."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        raw = json.loads(text).get("config", {})
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":" if ":" in line else None
            if sep is None:
                raise ExperimentError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split(sep, 1))
            raw[key] = value
    out = {}
    for key, value in raw.items():
        key = key.replace("-", "_")
        key = _KEY_ALIASES.get(key, key)
        if key not in _CONFIG_TYPES:
            raise ExperimentError(f"{path}: unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


# -- the experiment ----------------------------------------------------------

def _load(path, schema: FeatureSchema):
    try:
        return parse_kdd(path, schema)
    except OSError as exc:
        raise ExperimentError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (KDDParseError, UnicodeDecodeError) as exc:
        raise ExperimentError(f"{path}: {exc}") from exc


def _schema(name: str) -> FeatureSchema | None:
    if name == "kdd":
        return FeatureSchema.kdd()
    if name == "numeric":
        return None
    raise ExperimentError(f"unknown schema {name!r}")


def _numeric_schema_for(path) -> FeatureSchema:
    opener = gzip.open if Path(path).suffix == ".gz" else open
    try:
        with opener(path, "rt", encoding="utf-8") as fh:
            first = next((line for line in fh if line.strip()), None)
    except OSError as exc:
        raise ExperimentError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if first is None:
        raise ExperimentError(f"{path}: no data rows")
    return FeatureSchema.numeric(len(first.split(",")) - 1)


def prepare_data(cfg: ExperimentConfig) -> tuple[EncodedDataset, EncodedDataset, dict]:
    """Load, split and encode; scaling bounds come from the training part only."""
    if not cfg.train:
        raise ExperimentError("no training data given (--train)")
    schema = _schema(cfg.schema) or _numeric_schema_for(cfg.train)
    records = _load(cfg.train, schema)
    if not records:
        raise ExperimentError(f"{cfg.train}: no data rows")
    inputs = {"train": {"path": os.path.basename(cfg.train), "sha256": checksum(cfg.train),
                        "rows": len(records)}}
    if cfg.test:
        test_records = _load(cfg.test, schema)
        if not test_records:
            raise ExperimentError(f"{cfg.test}: no data rows")
        inputs["test"] = {"path": os.path.basename(cfg.test), "sha256": checksum(cfg.test),
                          "rows": len(test_records)}
        train_idx = np.arange(len(records))
        test_idx = np.arange(len(test_records))
        train_records = records
    else:
        labels = np.array([r.binary_label for r in records])
        try:
            train_idx, test_idx = stratified_indices(labels, 1.0 - cfg.test_fraction, cfg.seed)
        except ValueError as exc:
            raise ExperimentError(f"cannot carve a test holdout: {exc}") from exc
        train_records = [records[i] for i in train_idx]
        test_records = [records[i] for i in test_idx]
    train = encode(train_records, schema)
    test = encode(test_records, train.schema, train.bounds)
    train = replace(train, row_ids=train_idx)
    test = replace(test, row_ids=test_idx)
    return train, test, inputs


def _final_report(train, test, mask: FeatureMask, k: int):
    model = fit_knn(train, mask, k)
    pred = model.predict(test.X[:, mask.bits])
    return metric_report(confusion(pred, test.y, Label.ATTACK))


def selected_features_text(mask: FeatureMask, schema: FeatureSchema) -> str:
    lines = [f"mask {mask.to_string()}",
             f"selected {mask.selected_count()} of {len(mask)}"]
    lines += [f"{j + 1} {schema.names[j]}" for j in mask.selected_indices()]
    return "\n".join(lines) + "\n"


def _baseline_row(name, report, feature_count) -> list:
    return [name, repr(report.accuracy), repr(report.sensitivity), repr(report.precision),
            repr(report.f_measure), feature_count]


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run the full pipeline and write the report files into ``cfg.out``.

    Returns the manifest dict. Raises :class:`ExperimentError` on bad input
    or a violated invariant.
    """
    train, test, inputs = prepare_data(cfg)
    opt = cfg.optimizer_config()
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExperimentError(f"cannot create output directory {out}: {exc}") from exc

    evaluator = FitnessEvaluator(train, opt.protocol)
    fit_ids = set(evaluator.fit_part.row_ids.tolist())
    holdout_ids = set(evaluator.eval_part.row_ids.tolist())
    if not cfg.test and holdout_ids & set(test.row_ids.tolist()):
        raise ExperimentError("fitness holdout overlaps the test holdout", code=3)

    log.info("searching: %d train rows, %d features, pop %d, %d iterations",
             len(train), train.n_features, opt.population, opt.iterations)
    best, conv = run(train, opt, evaluator)
    if not conv.is_monotone():
        raise ExperimentError("best-so-far fitness increased during the run", code=3)
    if len(conv) != opt.iterations + 1:
        raise ExperimentError("convergence log has the wrong length", code=3)
    conv.write_csv(out / "convergence.csv")
    (out / "selected_features.txt").write_text(
        selected_features_text(best.mask, train.schema), encoding="utf-8")
    report = _final_report(train, test, best.mask, cfg.k)
    (out / "metrics.json").write_text(report.to_json(), encoding="utf-8")

    rows = [_baseline_row("woa_ga", report, best.mask.selected_count())]
    variants = {}
    for name in cfg.baselines:
        if name == "all_features":
            mask = FeatureMask.ones(train.n_features)
        else:
            log.info("baseline %s", name)
            v_best, v_log = run(train, variant(opt, name), evaluator)
            if not v_log.is_monotone():
                raise ExperimentError(f"{name}: best-so-far fitness increased", code=3)
            mask = v_best.mask
            variants[name] = {"mask": mask.to_string(), "best_fitness": v_best.score}
        rows.append(_baseline_row(name, _final_report(train, test, mask, cfg.k),
                                  mask.selected_count()))
    with open(out / "baselines.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "accuracy", "sensitivity", "precision", "f_measure",
                         "feature_count"])
        writer.writerows(rows)

    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "optimizer": opt.to_dict(),
        "inputs": inputs,
        "split": {
            "train_rows": len(train),
            "test_rows": len(test),
            "fitness_fit_rows": len(fit_ids),
            "fitness_holdout_rows": len(holdout_ids),
        },
        "result": {
            "mask": best.mask.to_string(),
            "best_fitness": best.score,
            "f1": best.fitness.f1,
            "f2": best.fitness.f2,
            "distinct_masks_evaluated": evaluator.n_evaluations,
            "baselines": variants,
        },
    }
    (out / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


# -- subsample / synth -------------------------------------------------------

def _read_lines(path) -> list[str]:
    with open(path, "rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    opener = gzip.open if gz else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return [line.rstrip("\r\n") for line in fh if line.strip()]


def _write_lines(path, lines):
    data = ("\n".join(lines) + "\n").encode("utf-8")
    if str(path).endswith(".gz"):
        with open(path, "wb") as raw, gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(data)
    else:
        Path(path).write_bytes(data)


def subsample(data_path, n: int, seed: int, out_path, schema: FeatureSchema | None = None):
    """Write a stratified ``n``-row sample of a KDD file, lines kept verbatim."""
    schema = schema or FeatureSchema.kdd()
    try:
        lines = _read_lines(data_path)
    except OSError as exc:
        raise ExperimentError(f"cannot read {data_path}: {exc.strerror or exc}") from exc
    try:
        labels = np.array([parse_line(line, schema, i).binary_label
                           for i, line in enumerate(lines, start=1)])
    except KDDParseError as exc:
        raise ExperimentError(f"{data_path}: {exc}") from exc
    try:
        idx = stratified_sample_indices(labels, n, seed)
    except ValueError as exc:
        raise ExperimentError(str(exc)) from exc
    _write_lines(out_path, [lines[i] for i in idx])
    return idx


# -- argument handling -------------------------------------------------------

def _add_run_args(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="key = value config file or a run_manifest.json")
    p.add_argument("--train", default=S, help="training data (KDD format, optionally gzip)")
    p.add_argument("--test", default=S, help="test data; default is a stratified holdout of --train")
    p.add_argument("--out", default=S, help="output directory (default: results)")
    p.add_argument("--schema", default=S, choices=("kdd", "numeric"),
                   help="column layout: kdd (41 fields, 3 categorical) or all-numeric")
    p.add_argument("--pop", type=int, default=S, help="population size (default 100)")
    p.add_argument("--iters", type=int, default=S, help="iterations (default 100)")
    p.add_argument("--k", type=int, default=S, help="KNN neighbours (default 5)")
    p.add_argument("--alpha", type=float, default=S, help="error weight in the fitness (default 0.99)")
    p.add_argument("--crossover", type=float, default=S, help="crossover probability (default 0.8)")
    p.add_argument("--mutation", type=float, default=S, help="per-coordinate mutation probability (default 1/d)")
    p.add_argument("--ga-fraction", dest="ga_fraction", type=float, default=S,
                   help="share of non-elite whales passed through the GA each iteration (default 0.5)")
    p.add_argument("--binarize", default=S, choices=("threshold", "sigmoid"))
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--holdout", type=float, default=S, help="inner fitness holdout share (default 0.3)")
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=S,
                   help="test holdout share when --test is absent (default 0.3)")
    p.add_argument("--jobs", type=int, default=S, help="threads for fitness evaluation (default 1)")
    p.add_argument("--baseline", dest="baselines", default=S,
                   help="comma list of all, none, full, woa, ga (default all)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whalefs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("run", help="feature selection experiment"))

    ps = sub.add_parser("subsample", help="stratified sample of a KDD file")
    ps.add_argument("--data", required=True)
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True)

    pg = sub.add_parser("synth", help="synthetic dataset with known informative features")
    pg.add_argument("--n", type=int, default=400)
    pg.add_argument("--d", type=int, default=41)
    pg.add_argument("--informative", default="0,1,2,3,4", help="comma list of 0-based indices")
    pg.add_argument("--noise-sd", dest="noise_sd", type=float, default=0.05)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", required=True)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for f in fields(ExperimentConfig):
        if f.name in vars(args):
            values[f.name] = _coerce(f.name, getattr(args, f.name))
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ExperimentError(str(exc)) from exc


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("--") and argv[0] not in ("--help", "--verbose"):
        argv.insert(0, "run")
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        if args.command == "run":
            cfg = config_from_args(args)
            manifest = run_experiment(cfg)
            print(f"selected {manifest['result']['mask'].count('1')} features; "
                  f"reports in {cfg.out}")
        elif args.command == "subsample":
            idx = subsample(args.data, args.n, args.seed, args.out)
            print(f"wrote {len(idx)} rows to {args.out}")
        elif args.command == "synth":
            informative = [int(t) for t in args.informative.split(",") if t.strip()]
            data = generate_synthetic(args.n, args.d, informative, args.noise_sd, args.seed)
            write_kdd(data.to_records(), args.out)
            print(f"wrote {len(data)} rows to {args.out} (use --schema numeric)")
    except ExperimentError as exc:
        print(f"whalefs: error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"whalefs: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
