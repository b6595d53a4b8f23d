"""Command-line entry point: ``prodrop <command> [paths] [key=value ...]``.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical
failure (divergence or a failed gradient check).
"""

import argparse
import dataclasses
import logging
import sys

from .config import TrainConfig, apply_overrides, format_config, read_config_file
from .corpus import SyntheticSpec, generate_synthetic, load_corpus, save_corpus
from .errors import ConfigError, NumericalError, ValidationError
from .gradcheck import DEFAULT_EPS, DEFAULT_TOL, gradcheck_model
from .metrics import evaluate_snippets, format_report
from .model import JointModel
from .trainer import Checkpoint, interaction_sweep, train, write_log, write_sweep

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

# reduced dimensions for the finite-difference suite
GRADCHECK_DEFAULTS = {"d_emb": "8", "d_hidden": "8", "d_arc": "6", "d_rel": "6",
                      "dropout": "0"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pairs(items):
    pairs = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"expected key=value, got {item!r}")
        pairs[key] = value
    return pairs


def resolve(base, args, defaults=None):
    """Apply defaults < config file < command-line pairs to dataclass ``base``."""
    pairs = dict(defaults or {})
    if getattr(args, "config", None):
        pairs.update(read_config_file(args.config))
    pairs.update(_pairs(args.overrides))
    return apply_overrides(base, pairs)


def _print_config(config):
    print("# resolved config")
    print(format_config(config))


def _train_config(args, defaults=None):
    config = resolve(TrainConfig(), args, defaults).validate()
    _print_config(config)
    return config


def _load(path, config):
    return load_corpus(path, exclude_dep_labels=config.exclude_dep_labels)


def cmd_generate_data(args):
    spec = resolve(SyntheticSpec(), args)
    spec.validate()
    _print_config(spec)
    corpus = generate_synthetic(spec)
    save_corpus(corpus.snippets, args.out)
    print(f"wrote {len(corpus)} snippets to {args.out}")


def cmd_train(args):
    config = _train_config(args)
    corpus = _load(args.corpus, config)
    resume = Checkpoint.load(args.resume) if args.resume else None
    result = train(corpus, config, resume=resume)
    result.best.save(args.out)
    if args.last:
        result.last.save(args.last)
    if args.log:
        write_log(result.log, args.log)
    print(f"best epoch {result.best.epoch}")
    if result.best.metrics:
        print(format_report(result.best.metrics))


def _predict_all(checkpoint_path, snippets):
    model = Checkpoint.load(checkpoint_path).build_model()
    return [model.predict_snippet(s) for s in snippets]


def cmd_evaluate(args):
    if bool(args.checkpoint) == bool(args.predictions):
        raise UsageError("evaluate needs exactly one of --checkpoint or --predictions")
    config = _train_config(args)
    gold = _load(args.corpus, config)
    if args.checkpoint:
        predicted = _predict_all(args.checkpoint, gold.snippets)
    else:
        predicted = _load(args.predictions, config).snippets
    print(format_report(evaluate_snippets(predicted, gold.snippets)))


def cmd_predict(args):
    config = _train_config(args)
    corpus = _load(args.corpus, config)
    predicted = _predict_all(args.checkpoint, corpus.snippets)
    save_corpus(predicted, args.out)
    print(f"wrote {len(predicted)} predictions to {args.out}")


def cmd_sweep(args):
    config = _train_config(args)
    corpus = _load(args.corpus, config)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    rows = interaction_sweep(corpus, config, ratios)
    write_sweep(rows, args.out)
    for row in rows:
        print(" ".join(f"{k}={v:.6g}" for k, v in row.items()))


def cmd_gradcheck(args):
    config = _train_config(args, GRADCHECK_DEFAULTS)
    if args.corpus:
        snippets = _load(args.corpus, config).snippets[:args.snippets]
        corpus = dataclasses.replace(_load(args.corpus, config), snippets=tuple(snippets))
    else:
        corpus = generate_synthetic(SyntheticSpec(n_snippets=args.snippets, seed=config.seed))
    model = JointModel.from_corpus(corpus, config)
    report = gradcheck_model(model, [model.prepare(s) for s in corpus.snippets],
                             args.eps, args.tol)
    print("\n".join(report.lines()))
    print(f"max_rel_err={report.max_error:.3e}")
    if not report.passed:
        raise NumericalError(f"gradient check exceeded tolerance {args.tol:g}")


def build_parser():
    parser = _Parser(prog="prodrop", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log each epoch")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text, corpus=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        if corpus:
            p.add_argument("--corpus", required=True, help="corpus file (JSON lines)")
        p.add_argument("--config", help="file of 'key = value' lines")
        p.add_argument("overrides", nargs="*", metavar="key=value")
        return p

    p = command("generate-data", cmd_generate_data, "write a synthetic corpus", corpus=False)
    p.add_argument("--out", required=True)
    p = command("train", cmd_train, "train and save the best checkpoint")
    p.add_argument("--out", required=True, help="best checkpoint path")
    p.add_argument("--last", help="also save the final-epoch checkpoint here")
    p.add_argument("--log", help="per-epoch CSV log")
    p.add_argument("--resume", help="checkpoint to continue from")
    p = command("evaluate", cmd_evaluate, "score predictions against a gold corpus")
    p.add_argument("--checkpoint")
    p.add_argument("--predictions", help="corpus-format predictions")
    p = command("predict", cmd_predict, "fill in labels, heads and relations")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p = command("sweep", cmd_sweep, "train across alpha:beta ratios")
    p.add_argument("--out", required=True, help="CSV table")
    p.add_argument("--ratios", default="0.25,0.5,0.75,1.0,1.25")
    p = command("gradcheck", cmd_gradcheck, "finite-difference gradient check", corpus=False)
    p.add_argument("--corpus", help="take snippets from here instead of generating them")
    p.add_argument("--snippets", type=int, default=2)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    return parser


def run(argv=None):
    """Execute one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(message)s")
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, OSError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main():
    sys.exit(run())
