"""Command-line front end.

Exit codes: 0 success, 1 environment or I/O failure, 2 usage error (bad options, data or synthetic dataset description).
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import SPLITS, filter_attribute_values, load_dataset, save_dataset
from .exceptions import (
    ConsistencyError,
    DataError,
    DegenerateSplit,
    FormatError,
    InsufficientData,
    InvalidInput,
    InvalidSpec,
    InvalidTag,
    MorphoscopeError,
    NotPositiveDefinite,
    TooLarge,
    UnknownAttribute,
)
from .metrics import prefix_curve
from .plot import scatter_svg
from .probe import fit_probe, gaussian_param_count, load_model, param_count, save_model
from .selection import (
    DEFAULT_MAX_K,
    SelectionTrace,
    TraceStep,
    exhaustive_select,
    greedy_select,
    read_trace_tsv,
)
from .synth import SynthSpec, generate, separated_spec

logger = logging.getLogger("morphoscope")

EXIT_OK, EXIT_ENV, EXIT_USER = 0, 1, 2

DEFAULTS = {
    "dataset": None,
    "labels": None,
    "attribute": None,
    "out": ".",
    "workers": 1,
    "k0": 0.01,
    "nu0_offset": 2.0,
    "prior_scope": "value",
    "max_dims": DEFAULT_MAX_K,
    "criterion": "loglik",
    "split": None,
    "min_types": 100,
}

USER_ERRORS = (UnknownAttribute, InsufficientData, InvalidInput, InvalidSpec, InvalidTag,
               DegenerateSplit, TooLarge, NotPositiveDefinite)
ENV_ERRORS = (OSError, FormatError, ConsistencyError, DataError)


class UsageError(MorphoscopeError):
    pass


def _shared(parser):
    g = parser.add_argument_group("shared options")
    g.add_argument("--config", help="JSON file with option defaults")
    g.add_argument("--dataset", help="embedding matrix file")
    g.add_argument("--labels", help="labels TSV file")
    g.add_argument("--attribute", help="attribute to probe, e.g. Tense")
    g.add_argument("--out", help="output directory (or file for scatter)")
    g.add_argument("--workers", type=int, help="threads for candidate scoring")
    g.add_argument("--k0", type=float, help="prior pseudo-count on the mean (default 0.01)")
    g.add_argument("--nu0-offset", type=float, help="prior degrees of freedom are d + offset (default 2)")
    g.add_argument("--prior-scope", choices=("value", "pooled"))
    g.add_argument("--max-dims", type=int, help="greedy budget (default 50)")
    g.add_argument("--criterion", choices=("loglik", "accuracy"))
    g.add_argument("--split", choices=SPLITS)
    g.add_argument("--min-types", type=int, help="minimum word types per value and split (default 100)")


def build_parser():
    parser = argparse.ArgumentParser(prog="morphoscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"morphoscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the probe on the training split")
    _shared(p)

    p = sub.add_parser("select", help="select dimensions on the validation split")
    _shared(p)
    p.add_argument("--model", help="model JSON (default <out>/model.json)")
    p.add_argument("--strategy", choices=("greedy", "exhaustive"), default="greedy")
    p.add_argument("--k", type=int, help="subset size for --strategy exhaustive")

    p = sub.add_parser("eval", help="per-prefix metrics on a split")
    _shared(p)
    p.add_argument("--model", help="model JSON (default <out>/model.json)")
    p.add_argument("--trace", help="trace TSV (default <out>/trace.tsv)")

    p = sub.add_parser("report", help="fit, select, evaluate and plot in one run")
    _shared(p)

    p = sub.add_parser("scatter", help="SVG scatter of two dimensions with probe contours")
    _shared(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dims", help="two comma-separated dimension indices")
    p.add_argument("--trace", help="take the first two selected dims from this trace")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _shared(p)
    p.add_argument("--spec", help="synthetic dataset spec (JSON)")
    p.add_argument("--preset", choices=("separated", "nosignal"))
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, nargs=3, default=(1000, 500, 500), metavar=("TRAIN", "VAL", "TEST"))
    return parser


def resolve(args):
    """Merge options: command-line flags over config file over defaults."""
    config = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            try:
                config = json.load(fh)
            except json.JSONDecodeError as err:
                raise UsageError(f"config file {args.config}: {err}") from None
        config = {k.replace("-", "_"): v for k, v in config.items()}
    cfg = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else config.get(key, default)
    if cfg["workers"] < 1:
        raise UsageError("--workers must be at least 1")
    if cfg["max_dims"] < 1:
        raise UsageError("--max-dims must be at least 1")
    if not cfg["k0"] > 0:
        raise UsageError("--k0 must be positive")
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _provenance(cfg, **inputs):
    hashes = {name: _sha256(p) for name, p in inputs.items() if p}
    stable = {k: v for k, v in cfg.items() if k not in ("workers", "out")}
    return {"tool": f"morphoscope {__version__}", "config": stable, "inputs": hashes}


def _out_dir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(cfg):
    _require(cfg, "dataset", "labels", "attribute")
    dataset = load_dataset(cfg["dataset"], cfg["labels"])
    filtered = filter_attribute_values(dataset, cfg["attribute"], cfg["min_types"])
    if filtered.excluded:
        kept = [v for v in filtered.type_counts if v not in filtered.dropped]
        raise InsufficientData(
            f"attribute {cfg['attribute']!r} excluded: {len(kept)} value(s) have at least "
            f"{cfg['min_types']} word types in every split"
        )
    return dataset, filtered


def _split_for_model(dataset, model, attribute, split):
    """Rows of ``split`` whose value is known to the model."""
    known = set(model.schema.values)
    rows = [t.row_index for t in dataset.tokens
            if t.split == split and t.tag.get(attribute) in known]
    X = dataset.embeddings[rows].astype(np.float64)
    y = np.array([dataset.tokens[r].tag[attribute] for r in rows], dtype=str)
    return X, y


def _check_dims(model, dataset):
    if model.dim != dataset.d:
        raise UsageError(f"model has d={model.dim} but dataset has d={dataset.d}")


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands ----------------------------------------------------------------


def cmd_fit(args, cfg):
    dataset, filtered = _load(cfg)
    X, y = filtered.split(dataset, "train")
    prov = _provenance(cfg, matrix=cfg["dataset"], labels=cfg["labels"])
    prov["dataset_id"] = dataset.dataset_id
    model = fit_probe(X, y, filtered.schema, k0=cfg["k0"], nu0_offset=cfg["nu0_offset"],
                      prior_scope=cfg["prior_scope"], provenance=prov)
    out = _out_dir(cfg)
    path = out / "model.json"
    save_model(model, path)
    counts = model.provenance["train_counts"]
    print(f"attribute\t{model.schema.attribute}")
    for v in model.schema.values:
        print(f"value\t{v}\t{counts[v]}\tprior={model.class_prior[v]:.6f}")
    print(f"param_count\tper_value_gaussian={gaussian_param_count(model.dim)}\t"
          f"total={param_count(model.dim, len(model.schema))}")
    print(f"model\t{path}")
    return model


def _trace_from_subset(model, dims, X, y, criterion):
    curve = prefix_curve(model, list(dims), X, y)
    steps = [
        TraceStep(d, ll if criterion == "loglik" else acc, ll, acc, mi)
        for d, ll, acc, mi in zip(dims, curve.loglik_nats, curve.accuracy, curve.mi_bits)
    ]
    return SelectionTrace(criterion, len(dims), model.schema.attribute, curve.entropy_bits, steps)


def cmd_select(args, cfg, model=None):
    out = _out_dir(cfg)
    model_path = getattr(args, "model", None) or out / "model.json"
    if model is None:
        model = load_model(model_path)
    if not cfg["attribute"]:
        cfg["attribute"] = model.schema.attribute
    _require(cfg, "dataset", "labels")
    dataset = load_dataset(cfg["dataset"], cfg["labels"])
    _check_dims(model, dataset)
    split = cfg["split"] or "validation"
    X, y = _split_for_model(dataset, model, cfg["attribute"], split)
    if len(y) == 0:
        raise UsageError(f"no {split} rows carry attribute {cfg['attribute']!r}")
    strategy = getattr(args, "strategy", "greedy")
    if strategy == "exhaustive":
        if not getattr(args, "k", None):
            raise UsageError("--strategy exhaustive needs --k")
        best, value = exhaustive_select(model, X, y, args.k, cfg["criterion"])
        trace = _trace_from_subset(model, best, X, y, cfg["criterion"])
        extra = {"strategy": "exhaustive", "k": args.k, "best_value": value}
    else:
        max_k = min(cfg["max_dims"], model.dim)
        if cfg["max_dims"] > model.dim:
            logger.warning("--max-dims %d exceeds d=%d; clamping", cfg["max_dims"], model.dim)
        trace = greedy_select(model, X, y, max_k, cfg["criterion"], cfg["workers"])
        extra = {"strategy": "greedy"}
    trace.dataset_id = dataset.dataset_id
    trace.provenance = _provenance(cfg, matrix=cfg["dataset"], labels=cfg["labels"], model=model_path
                                   if Path(model_path).exists() else None)
    trace.provenance.update(extra, split=split)
    trace.save(out / "trace.tsv", out / "trace.json")
    print(f"trace\t{out / 'trace.tsv'}\t{len(trace.steps)} steps\tdims={','.join(map(str, trace.dims))}")
    return trace


EVAL_HEADER = ("prefix", "dim", "accuracy", "lba", "loglik_nats", "mi_bits", "lbmi", "lbnmi")


def cmd_eval(args, cfg, model=None, dims=None):
    out = _out_dir(cfg)
    model_path = getattr(args, "model", None) or out / "model.json"
    trace_path = getattr(args, "trace", None) or out / "trace.tsv"
    if model is None:
        model = load_model(model_path)
    if dims is None:
        dims, _ = read_trace_tsv(trace_path)
    if not dims:
        raise UsageError(f"trace {trace_path} selects no dimensions")
    if any(not 0 <= d < model.dim for d in dims) or len(set(dims)) != len(dims):
        raise UsageError("trace dimensions are invalid for this model")
    attribute = cfg["attribute"] or model.schema.attribute
    _require(cfg, "dataset", "labels")
    dataset = load_dataset(cfg["dataset"], cfg["labels"])
    _check_dims(model, dataset)
    split = cfg["split"] or "test"
    X, y = _split_for_model(dataset, model, attribute, split)
    if len(y) == 0:
        raise UsageError(f"no {split} rows carry attribute {attribute!r}")
    curve = prefix_curve(model, list(dims), X, y)
    lines = ["\t".join(EVAL_HEADER)]
    for d, row in zip(dims, curve.rows()):
        vals = [row["accuracy"], row["lba"], row["loglik_nats"], row["mi_bits"], row["lbmi"], row["lbnmi"]]
        lines.append("\t".join([str(row["prefix"]), str(d)] + [format(v, ".17g") for v in vals]))
    tsv = out / f"eval_{split}.tsv"
    with open(tsv, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    summary = {
        "split": split,
        "attribute": attribute,
        "n_rows": int(len(y)),
        "dims": [int(d) for d in dims],
        "entropy_bits": curve.entropy_bits,
        "majority_baseline": curve.majority_baseline,
        "final": {"accuracy": curve.accuracy[-1], "lba": curve.lba[-1], "mi_bits": curve.mi_bits[-1],
                  "lbmi": curve.lbmi_bits[-1], "lbnmi": curve.lbnmi[-1]},
        "provenance": _provenance(cfg, matrix=cfg["dataset"], labels=cfg["labels"]),
    }
    _write_json(out / f"eval_{split}.json", summary)
    print(f"eval\t{split}\tH={curve.entropy_bits:.4f} bits\tmajority={curve.majority_baseline:.4f}\t"
          f"LBA={curve.lba[-1]:.4f}\tLBNMI={curve.lbnmi[-1]:.4f}")
    return summary


def _parse_dims(text):
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"--dims expects two integers like 3,7, got {text!r}") from None
    if len(parts) != 2:
        raise UsageError("--dims expects exactly two indices")
    return parts


def cmd_scatter(args, cfg, model=None, out_path=None):
    if model is None:
        model = load_model(args.model)
    if getattr(args, "dims", None):
        dims = _parse_dims(args.dims)
    elif getattr(args, "trace", None):
        dims = read_trace_tsv(args.trace)[0][:2]
        if len(dims) < 2:
            raise UsageError("trace has fewer than two dimensions")
    else:
        raise UsageError("scatter needs --dims or --trace")
    if dims[0] == dims[1]:
        raise UsageError("--dims must name two different dimensions")
    if any(not 0 <= d < model.dim for d in dims):
        raise UsageError(f"--dims out of range for d={model.dim}")
    attribute = cfg["attribute"] or model.schema.attribute
    _require(cfg, "dataset", "labels")
    dataset = load_dataset(cfg["dataset"], cfg["labels"])
    _check_dims(model, dataset)
    split = cfg["split"] or "test"
    X, y = _split_for_model(dataset, model, attribute, split)
    title = f"{attribute}: dims {dims[0]} and {dims[1]} ({split})"
    svg = scatter_svg(model, X, y, dims, title=title)
    prov = json.dumps(_provenance(cfg, matrix=cfg["dataset"], labels=cfg["labels"]), sort_keys=True)
    svg = svg.replace("<rect ", f"<metadata>{prov.replace('&', '&amp;').replace('<', '&lt;')}</metadata>\n<rect ", 1)
    if out_path is None:
        out_path = Path(cfg["out"]) if cfg["out"] != "." else Path("scatter.svg")
        if out_path.suffix != ".svg":
            out_path.mkdir(parents=True, exist_ok=True)
            out_path = out_path / "scatter.svg"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    print(f"scatter\t{out_path}")
    return out_path


def cmd_report(args, cfg):
    model = cmd_fit(args, cfg)
    trace = cmd_select(args, cfg, model=model)
    summary = cmd_eval(args, cfg, model=model, dims=trace.dims)
    out = Path(cfg["out"])
    if len(trace.dims) >= 2:
        args.dims = f"{trace.dims[0]},{trace.dims[1]}"
        cmd_scatter(args, cfg, model=model, out_path=out / "scatter.svg")
    report = {
        "attribute": model.schema.attribute,
        "values": list(model.schema.values),
        "param_count": param_count(model.dim, len(model.schema)),
        "selected_dims": trace.dims,
        "validation": {"lba": trace.lba[-1], "lbnmi": trace.lbnmi[-1]},
        "test": summary["final"],
        "test_entropy_bits": summary["entropy_bits"],
        "test_majority_baseline": summary["majority_baseline"],
    }
    _write_json(out / "report.json", report)
    print(f"report\t{out / 'report.json'}")
    return report


def cmd_synth(args, cfg):
    if args.spec:
        spec = SynthSpec.from_json(args.spec)
    elif args.preset == "separated":
        spec = separated_spec(args.d, informative_dims=(0, 1) if args.d > 1 else (0,),
                              n_per_split=args.n, seed=args.seed,
                              attribute=cfg["attribute"] or "Label")
    elif args.preset == "nosignal":
        spec = separated_spec(args.d, informative_dims=(), separation=0.0, weights=(0.65, 0.35),
                              n_per_split=args.n, seed=args.seed,
                              attribute=cfg["attribute"] or "Label")
    else:
        raise UsageError("synth needs --spec or --preset")
    out = _out_dir(cfg)
    dataset = generate(spec)
    save_dataset(dataset, out / "embeddings.iprb", out / "labels.tsv")
    _write_json(out / "provenance.json", {"tool": f"morphoscope {__version__}", **dataset.provenance})
    print(f"synth\t{out / 'embeddings.iprb'}\t{out / 'labels.tsv'}\tN={dataset.n}\td={dataset.d}")
    return dataset


COMMANDS = {
    "fit": cmd_fit,
    "select": cmd_select,
    "eval": cmd_eval,
    "report": cmd_report,
    "scatter": cmd_scatter,
    "synth": cmd_synth,
}


def _configure_logging():
    level = os.environ.get("MORPHOSCOPE_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        COMMANDS[args.command](args, cfg)
    except (UsageError, *USER_ERRORS) as err:
        print(f"morphoscope {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USER
    except ENV_ERRORS as err:
        print(f"morphoscope {args.command}: error: {err}", file=sys.stderr)
        return EXIT_ENV
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
