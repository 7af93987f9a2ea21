"""Command line front end.

Every command reads and writes files only, so identical inputs and flags give
byte-identical outputs. Exit codes: 0 success, 1 usage (bad flags, missing
files), 2 malformed or invalid data, 3 shape mismatch, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .cca import (
    CcaConfig,
    cca_fit,
    load_cca,
    make_scorer,
    project,
    save_cca,
    tune_reg,
    validation_recall_scorer,
)
from .errors import DataValidationError, FvmFormatError, NumericalError, ShapeMismatchError
from .fisher import EncodeConfig, encode_sets, mean_pool
from .fixture import FixtureConfig, make_fixture, write_fixture
from .matrix_io import load_ids, load_manifest, load_matrix, load_set_index, save_matrix
from .mixtures import FAMILIES, FitConfig, fit_em, load_model, save_model
from .parallel import resolve_threads
from .report import (
    format_metrics_table,
    metrics_tsv_rows,
    render_loglik_trace,
    render_rank_histogram,
    render_recall_bars,
    save_metrics_tsv,
)
from .retrieval import evaluate_annotation, evaluate_search, metrics_from_ranks, sentence_similarity_ranks
from .whitening import apply_transform, ica_fit, load_transform, pca_fit, save_transform


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; this toolkit reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# commands


def _cmd_gen_fixture(args):
    config = FixtureConfig(
        seed=args.seed,
        n_images=args.images,
        sentences_per_image=args.sentences_per_image,
        latent_dim=args.latent_dim,
        image_dim=args.image_dim,
        word_dim=args.word_dim,
        min_words=args.min_words,
        max_words=args.max_words,
        image_noise=args.image_noise,
        sentence_jitter=args.sentence_jitter,
        word_noise=args.word_noise,
    )
    paths = write_fixture(make_fixture(config), args.out)
    print(f"wrote {len(paths)} files to {args.out}")


def _cmd_whiten_fit(args):
    X = load_matrix(args.input)
    dim = args.dim if args.dim is not None else X.shape[1]
    if args.kind == "pca":
        transform = pca_fit(X, dim)
    else:
        transform = ica_fit(X, dim, seed=args.seed, max_iter=args.max_iters, tol=args.tol)
    save_transform(transform, args.out)
    note = "" if transform.converged else " (not converged)"
    print(f"{args.kind}: {transform.in_dim} -> {transform.out_dim} dims{note}")


def _cmd_whiten_apply(args):
    transform = load_transform(args.transform)
    save_matrix(apply_transform(transform, load_matrix(args.input)), args.out)


def _cmd_fit(args):
    X = load_matrix(args.input)
    config = FitConfig(
        K=args.k,
        max_iters=args.max_iters,
        rel_tol=args.rel_tol,
        seed=args.seed,
        scale_floor=args.scale_floor,
        restarts=args.restarts,
    )
    model, fit = fit_em(X, config, args.family, threads=resolve_threads(args.threads))
    save_model(model, args.out)
    if args.trace_fig:
        render_loglik_trace(fit.log_likelihood_trace, args.trace_fig)
    state = "converged" if fit.converged else "stopped at max_iters"
    print(
        f"{args.family} K={args.k}: log-likelihood {fit.log_likelihood_trace[-1]:.6f} "
        f"after {fit.iterations_run} iterations ({state})"
    )


def _load_model_for(family, path):
    if path is None:
        raise UsageError(f"--family {family} needs --model")
    model = load_model(path)
    if model.family != family:
        raise DataValidationError(f"{path} holds a {model.family} model, expected {family}")
    return model


def _cmd_encode(args):
    X = load_matrix(args.input)
    index = load_set_index(args.sets)
    threads = resolve_threads(args.threads)
    config = EncodeConfig(alpha=args.alpha, apply_fim=not args.no_fim, apply_l2=not args.no_l2)
    if args.family == "mean":
        rows = np.vstack([mean_pool(block) for _, block in index.extract(X)])
    elif args.family == "gmm+hglmm":
        first = encode_sets(X, index, _load_model_for("gmm", args.model), config, threads)
        second = encode_sets(X, index, _load_model_for("hglmm", args.model2), config, threads)
        rows = np.hstack([first, second])
    else:
        rows = encode_sets(X, index, _load_model_for(args.family, args.model), config, threads)
    save_matrix(rows, args.out)
    print(f"encoded {rows.shape[0]} sets to {rows.shape[1]} dims")


def _parse_reg(raw):
    if raw == "auto":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"--reg must be a number or 'auto', got {raw!r}") from None
    return value


def _cmd_cca_fit(args):
    X = load_matrix(args.x)
    Y = load_matrix(args.y)
    reg = _parse_reg(args.reg)
    if reg is not None:
        model = cca_fit(X, Y, CcaConfig(reg=reg, reg_y=args.reg_y, r=args.dim))
        chosen = reg
    else:
        needed = (args.val_images, args.val_image_ids, args.val_sentences, args.val_sentence_ids, args.manifest)
        if any(v is None for v in needed):
            raise UsageError(
                "--reg auto needs --val-images, --val-image-ids, --val-sentences, "
                "--val-sentence-ids and --manifest"
            )
        score_fn = validation_recall_scorer(
            load_matrix(args.val_images),
            load_ids(args.val_image_ids),
            load_matrix(args.val_sentences),
            load_ids(args.val_sentence_ids),
            load_manifest(args.manifest),
            task=args.tune_task,
            weight_exp=args.weight_exp,
        )
        model, chosen, table = tune_reg(X, Y, score_fn, config=CcaConfig(r=args.dim))
        for reg_value, score in table:
            print(f"reg {reg_value:.6g}: validation recall@1 {score:.4f}")
    save_cca(model, args.out)
    print(f"cca: r={model.r}, reg={chosen:.6g}, top correlation {model.correlations[0]:.6f}")


def _cmd_cca_project(args):
    model = load_cca(args.model)
    save_matrix(project(model, args.side, load_matrix(args.input)), args.out)


def _figure_path(out_path, suffix):
    stem, _ = os.path.splitext(out_path)
    return f"{stem}_{suffix}"


def _cmd_eval(args):
    images = load_matrix(args.images)
    image_ids = load_ids(args.image_ids)
    sentences = load_matrix(args.sentences)
    sentence_ids = load_ids(args.sentence_ids)
    manifest = load_manifest(args.manifest)

    if args.cca_model:
        model = load_cca(args.cca_model)
        images = project(model, "x", images)
        sentences = project(model, "y", sentences)
        scorer = make_scorer(model.correlations, args.weight_exp)
    else:
        if images.shape[1] != sentences.shape[1]:
            raise ShapeMismatchError(
                "image and sentence vectors must share a dimension when no CCA model is given"
            )
        if args.weight_exp != 0.0:
            raise UsageError("--weight-exp needs --cca-model")
        scorer = make_scorer()

    wanted = ("annotation", "search", "sentence") if args.task == "all" else (args.task,)
    annotation = search = None
    sentence_ranks = sentence_mean = None
    if "annotation" in wanted:
        annotation = evaluate_annotation(images, image_ids, sentences, sentence_ids, manifest, scorer)
    if "search" in wanted:
        search = evaluate_search(sentences, sentence_ids, images, image_ids, manifest, scorer)
    if "sentence" in wanted:
        sentence_ranks = sentence_similarity_ranks(sentences, sentence_ids, manifest, scorer)
        sentence_mean = float(sentence_ranks.mean())

    save_metrics_tsv(metrics_tsv_rows(annotation, search, sentence_mean), args.out)
    table = format_metrics_table(args.label, annotation, search, sentence_mean)
    with open(_figure_path(args.out, "table.txt"), "w", encoding="ascii", newline="\n") as fh:
        fh.write(table)
    print(table, end="")

    if not args.no_figures:
        bars = {name: m for name, m in (("annotation", annotation), ("search", search)) if m}
        if bars:
            render_recall_bars(bars, _figure_path(args.out, "recall.png"))
        hists = {name: m.ranks for name, m in (("annotation", annotation), ("search", search)) if m}
        if sentence_ranks is not None:
            hists["sentence"] = sentence_ranks
        render_rank_histogram(hists, _figure_path(args.out, "ranks.png"))


# ---------------------------------------------------------------------------
# parser


def _add_threads(p):
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: HGLMM_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hglmm",
        description=__doc__.splitlines()[0],
        epilog="--config FILE (before or after the command) reads key<TAB>value "
        "defaults; keys are long option names, command-line flags override them.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-fixture", help="write a synthetic paired benchmark corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images", type=int, default=100)
    p.add_argument("--sentences-per-image", type=int, default=5)
    p.add_argument("--latent-dim", type=int, default=8)
    p.add_argument("--image-dim", type=int, default=24)
    p.add_argument("--word-dim", type=int, default=8)
    p.add_argument("--min-words", type=int, default=6)
    p.add_argument("--max-words", type=int, default=14)
    p.add_argument("--image-noise", type=float, default=0.1)
    p.add_argument("--sentence-jitter", type=float, default=0.15)
    p.add_argument("--word-noise", type=float, default=0.3)
    p.set_defaults(func=_cmd_gen_fixture)

    whiten = sub.add_parser("whiten", help="fit or apply a decorrelating transform")
    wsub = whiten.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    p = wsub.add_parser("fit", help="fit a PCA or ICA transform")
    p.add_argument("--kind", choices=("pca", "ica"), required=True)
    p.add_argument("--in", dest="input", required=True, help="input matrix")
    p.add_argument("--out", required=True, help="output transform file")
    p.add_argument("--dim", type=int, default=None, help="output dimension (default: input width)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=_cmd_whiten_fit)
    p = wsub.add_parser("apply", help="apply a fitted transform")
    p.add_argument("--transform", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_whiten_apply)

    p = sub.add_parser("fit", help="fit a mixture model by EM")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--k", type=int, default=30, help="number of components")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale-floor", type=float, default=1e-6)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--trace-fig", default=None, help="render the log-likelihood trace to this file")
    _add_threads(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("encode", help="encode descriptor sets")
    p.add_argument("--family", choices=FAMILIES + ("gmm+hglmm", "mean"), required=True)
    p.add_argument("--in", dest="input", required=True, help="stacked descriptor matrix")
    p.add_argument("--sets", required=True, help="set index TSV")
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="fitted mixture model")
    p.add_argument("--model2", default=None, help="second model for gmm+hglmm fusion")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--no-fim", action="store_true", help="skip Fisher information normalization")
    p.add_argument("--no-l2", action="store_true", help="skip L2 normalization")
    _add_threads(p)
    p.set_defaults(func=_cmd_encode)

    cca = sub.add_parser("cca", help="fit or apply a cross-modal projection")
    csub = cca.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    p = csub.add_parser("fit", help="fit regularized linear CCA on paired rows")
    p.add_argument("--x", required=True, help="image-side matrix, one row per pair")
    p.add_argument("--y", required=True, help="sentence-side matrix, one row per pair")
    p.add_argument("--out", required=True)
    p.add_argument("--reg", default="0.0", help="ridge value, or 'auto' to tune on validation data")
    p.add_argument("--reg-y", type=float, default=None, help="override the Y-side ridge")
    p.add_argument("--dim", type=int, default=None, help="projection rank")
    p.add_argument("--val-images", default=None)
    p.add_argument("--val-image-ids", default=None)
    p.add_argument("--val-sentences", default=None)
    p.add_argument("--val-sentence-ids", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--tune-task", choices=("annotation", "search"), default="annotation")
    p.add_argument("--weight-exp", type=float, default=0.0)
    p.set_defaults(func=_cmd_cca_fit)
    p = csub.add_parser("project", help="project vectors into the shared space")
    p.add_argument("--model", required=True)
    p.add_argument("--side", choices=("x", "y"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cca_project)

    p = sub.add_parser("eval", help="run retrieval tasks and write metrics, table and figures")
    p.add_argument("--task", choices=("annotation", "search", "sentence", "all"), default="all")
    p.add_argument("--images", required=True, help="image vectors")
    p.add_argument("--image-ids", required=True)
    p.add_argument("--sentences", required=True, help="sentence vectors")
    p.add_argument("--sentence-ids", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="metrics TSV; table and figures go alongside")
    p.add_argument("--cca-model", default=None, help="project both sides before scoring")
    p.add_argument("--weight-exp", type=float, default=0.0)
    p.add_argument("--label", default="run", help="row label in the summary table")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_eval)

    return parser


# ---------------------------------------------------------------------------
# config file


def _take_config(argv):
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            raise UsageError("--config needs a file path")
        path = argv[i + 1]
        del argv[i : i + 2]
        return path
    for arg in argv:
        if arg.startswith("--config="):
            argv.remove(arg)
            return arg.split("=", 1)[1]
    return None


def _walk_parsers(parser):
    stack = [parser]
    while stack:
        p = stack.pop()
        yield p
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())


def _walk_actions(parser):
    for p in _walk_parsers(parser):
        for action in p._actions:
            if action.option_strings and action.dest != argparse.SUPPRESS:
                yield action


def _parse_config_bool(key, raw):
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise UsageError(f"config key {key!r} needs a boolean, got {raw!r}")


def config_defaults(parser, path):
    """Read a TSV of key/value defaults; keys are long flag names with
    dashes or underscores. Flags given on the command line still win."""
    registry = {}
    for action in _walk_actions(parser):
        registry.setdefault(action.dest, action)
        for opt in action.option_strings:
            if opt.startswith("--"):
                registry.setdefault(opt[2:].replace("-", "_"), action)
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise UsageError(f"{path}:{line_no}: expected key<TAB>value")
                key, raw = parts
                dest = key.strip().replace("-", "_")
                action = registry.get(dest)
                if action is None:
                    raise UsageError(f"{path}:{line_no}: unknown config key {key!r}")
                if action.nargs == 0 and isinstance(action.const, bool):
                    value = _parse_config_bool(key, raw)
                elif action.type is not None:
                    try:
                        value = action.type(raw)
                    except ValueError:
                        raise UsageError(f"{path}:{line_no}: bad value {raw!r} for {key!r}") from None
                else:
                    value = raw
                if action.choices is not None and value not in action.choices:
                    raise UsageError(f"{path}:{line_no}: {value!r} not one of {action.choices}")
                values[action.dest] = value
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    return values


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        config_path = _take_config(argv)
        if config_path is not None:
            # install as parser defaults on every level so subcommand
            # parsing picks them up; explicit flags still win
            values = config_defaults(parser, config_path)
            for p in _walk_parsers(parser):
                p.set_defaults(**values)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FvmFormatError, DataValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ShapeMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
