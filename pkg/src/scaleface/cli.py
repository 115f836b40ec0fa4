"""``scaleface`` command line.

Every command writes its outputs plus ``manifest.json`` into ``--out-dir``.
Passing that manifest back through ``--config`` reruns the command with the
same resolved configuration; explicit flags still override it.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .embeddings import (
    SyntheticSpec, generate_synthetic, make_pairs, normalize, read_embeddings,
    read_pairs, write_embeddings, write_pairs,
)
from .errors import FormatError, ScaleFaceError, ShapeError
from .evaluation import (
    DEFAULT_GRID, UncertaintyScores, oracle_uncertainty, pair_uncertainty, random_confidence,
    reject_verification, scale_uncertainty, tar_at_far, write_curve, write_summary,
)
from .gaussian_oracle import GaussianModelSpec, analytic_error_prob, simulate_error_prob
from .scale_head import ScaleHeadConfig, TrainConfig, load_head, predict_scales, save_head, train_head
from .similarity import calibrate_mu, cosine_pairs, modified_similarity, read_scores, write_scores

EXIT_FORMAT, EXIT_NUMERIC, EXIT_USAGE = 3, 4, 5  # argparse itself exits with 2
_EXIT = {"format": EXIT_FORMAT, "numeric": EXIT_NUMERIC, "usage": EXIT_USAGE}
_NOT_CONFIG = {"config", "func", "command"}


class RunContext:
    """Collects inputs/outputs of one command and writes its manifest."""

    def __init__(self, args):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs, self.outputs = [], []

    def input(self, path):
        if path is None:
            raise ShapeError("missing required input path")
        path = Path(path)
        if not path.is_file():
            raise ShapeError(f"input file not found: {path}")
        self.inputs.append(str(path))
        return path

    def output(self, name):
        path = self.out_dir / name
        self.outputs.append(str(path))
        return path

    def manifest(self) -> dict:
        config = {k: v for k, v in sorted(vars(self.args).items()) if k not in _NOT_CONFIG}
        return {
            "command": self.args.command,
            "config": config,
            "seed": self.args.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": __version__,
        }

    def write_manifest(self):
        with open(self.out_dir / "manifest.json", "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_column_file(path, header, ncols):
    rows = []
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != header:
        raise FormatError(f"{path}: expected header {header!r}")
    for lineno, line in enumerate(lines[1:], 2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise FormatError(f"{path}:{lineno}: expected {ncols} fields")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: malformed number") from None
    arr = np.array(rows, dtype=np.float64).reshape(-1, ncols)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite value")
    return arr


def read_scales(path):
    """``index,scale`` file as written by predict-scale; rows must be in index order."""
    arr = _read_column_file(path, "index,scale", 2)
    if not np.array_equal(arr[:, 0], np.arange(arr.shape[0])):
        raise FormatError(f"{path}: indices must run 0..n-1 in order")
    return arr[:, 1]


def _parse_grid(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ShapeError(f"cannot parse grid {text!r}") from None


# --- commands --------------------------------------------------------------

def cmd_synth(args, ctx):
    spec = SyntheticSpec(args.d, args.classes, args.per_class, args.smin, args.smax, args.sigma,
                         args.seed)
    emb, scales, _ = generate_synthetic(spec)
    write_embeddings(ctx.output("embeddings.emb"), emb)
    with open(ctx.output("truth.csv"), "w") as fh:
        fh.write("index,true_scale,label\n")
        for i, (s, y) in enumerate(zip(scales.tolist(), emb.labels.tolist())):
            fh.write(f"{i},{s!r},{y}\n")
    print(f"wrote {emb.n} embeddings (d={emb.d}, classes={emb.num_classes})")


def cmd_train_head(args, ctx):
    emb = read_embeddings(ctx.input(args.embeddings))
    cfg = ScaleHeadConfig.from_name(args.activation, n_hidden=args.depth, width=args.width)
    train_cfg = TrainConfig(args.epochs, args.batch_size, args.lr, args.seed, args.freeze_centroids)
    report = train_head(normalize(emb), emb.labels, cfg, args.margin, train_cfg)
    save_head(ctx.output("head.sfh"), report.head)
    with open(ctx.output("losses.csv"), "w") as fh:
        fh.write("epoch,loss\n")
        for k, loss in enumerate(report.losses, 1):
            fh.write(f"{k},{loss!r}\n")
    if report.losses:
        print(f"loss {report.losses[0]:.6f} -> {report.losses[-1]:.6f} over {len(report.losses)} epochs")


def cmd_predict_scale(args, ctx):
    emb = read_embeddings(ctx.input(args.embeddings))
    head = load_head(ctx.input(args.head))
    scales, _ = predict_scales(head, normalize(emb))
    with open(ctx.output("scales.csv"), "w") as fh:
        fh.write("index,scale\n")
        for i, s in enumerate(scales.tolist()):
            fh.write(f"{i},{s!r}\n")
    print(f"predicted {scales.size} scales, median {np.median(scales):.4f}")


def _cosines_from_inputs(args, ctx):
    if args.scores is not None:
        pairs, scores = read_scores(ctx.input(args.scores))
        return pairs, scores
    emb = read_embeddings(ctx.input(args.embeddings))
    pairs = read_pairs(ctx.input(args.pairs))
    return pairs, cosine_pairs(normalize(emb), pairs).scores


def cmd_calibrate_mu(args, ctx):
    pairs, scores = _cosines_from_inputs(args, ctx)
    mu = float(calibrate_mu(scores, pairs.label))
    _write_json(ctx.output("mu.json"), {"mu": mu})
    print(f"mu={mu!r}")


def cmd_verify(args, ctx):
    emb = read_embeddings(ctx.input(args.embeddings))
    unit = normalize(emb)
    if args.pairs is not None:
        pairs = read_pairs(ctx.input(args.pairs))
    else:
        pairs = make_pairs(emb.labels, args.n_pos, args.n_neg, args.seed)
        write_pairs(ctx.output("pairs.csv"), pairs)
    if args.mode == "cosine":
        scores = cosine_pairs(unit, pairs)
    else:
        head = load_head(ctx.input(args.head))
        s, _ = predict_scales(head, unit)
        mu = args.mu if args.mode == "mu_scaled" else 0.0
        scores = modified_similarity(unit, pairs, s[pairs.a], s[pairs.b], mu)
    write_scores(ctx.output("scores.csv"), pairs, scores)
    if args.far is not None:
        tar, tau = tar_at_far(scores, pairs.label, args.far)
        _write_json(ctx.output("verify.json"), {"far": args.far, "tar": tar, "tau": tau,
                                                "mode": args.mode})
        print(f"TAR@FAR={args.far}: {tar:.6f} (tau={tau!r})")


def cmd_reject_curve(args, ctx):
    pairs, scores = read_scores(ctx.input(args.scores))
    if args.uncertainties is not None:
        u = _read_column_file(ctx.input(args.uncertainties), "uncertainty", 1)[:, 0]
        if u.shape != scores.shape:
            raise ShapeError("need one uncertainty per scored pair")
        unc = UncertaintyScores(u, "scale")
    elif args.scales is not None:
        s = read_scales(ctx.input(args.scales))
        unc = UncertaintyScores(pair_uncertainty(scale_uncertainty(s), pairs), "scale")
    elif args.method == "oracle":
        unc = UncertaintyScores(oracle_uncertainty(scores, pairs.label, args.far), "oracle")
    else:
        unc = UncertaintyScores(random_confidence(len(pairs), args.seed), "random")
    curve = reject_verification(scores, pairs.label, unc, args.far, _parse_grid(args.grid),
                                args.normalization)
    write_curve(ctx.output("curve.csv"), curve)
    write_summary(ctx.output("summary.json"), curve)
    print(f"AUC ({args.normalization}) = {curve.auc_normalized!r}")


def cmd_simulate_gaussian(args, ctx):
    spec = GaussianModelSpec(d=args.d, s=args.s, sigma=args.sigma, a=args.a, seed=args.w_seed)
    est, se = simulate_error_prob(spec, args.n_samples, args.seed, threads=args.threads)
    analytic = analytic_error_prob(args.s, args.sigma, args.a)
    within = abs(est - analytic) <= 3 * se
    _write_json(ctx.output("gaussian.json"), {
        "estimate": est, "standard_error": se, "analytic": analytic, "within_3se": bool(within),
    })
    print(f"simulated {est:.6f} +/- {se:.2e}, closed form {analytic:.6f}")


def cmd_gradcheck(args, ctx):
    from .experiments import gradcheck_suite

    results = gradcheck_suite(args.configs, args.seed, args.tolerance, args.step)
    ok = all(r.passed for _, r in results)
    with open(ctx.output("gradcheck.txt"), "w") as fh:
        for label, r in results:
            fh.write(f"{'ok  ' if r.passed else 'FAIL'} {r.worst:.3e} {label}\n")
    print("PASS" if ok else "FAIL")
    return 0 if ok else EXIT_NUMERIC


def cmd_experiment(args, ctx):
    from .experiments import SCENARIOS

    report = SCENARIOS[args.scenario](args.seed)
    # wall-clock time goes to stdout only, so output files stay reproducible
    _write_json(ctx.output("report.json"), {k: v for k, v in report.to_dict().items()
                                            if k != "seconds"})
    sys.stdout.write(report.to_text())


# --- parser ----------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--config", help="key=value file or a manifest.json; flags override it")

    parser = argparse.ArgumentParser(prog="scaleface", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "draw a synthetic heteroscedastic embedding set")
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--smin", type=float, default=1.0)
    p.add_argument("--smax", type=float, default=10.0)

    p = add("train-head", cmd_train_head, "train a scale head on frozen embeddings")
    p.add_argument("--embeddings")
    p.add_argument("--activation", default="sigm_64")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--freeze-centroids", action="store_true")

    p = add("predict-scale", cmd_predict_scale, "predict per-embedding scales")
    p.add_argument("--embeddings")
    p.add_argument("--head")

    p = add("calibrate-mu", cmd_calibrate_mu, "midpoint of mean positive/negative cosine")
    p.add_argument("--scores")
    p.add_argument("--embeddings")
    p.add_argument("--pairs")

    p = add("verify", cmd_verify, "score verification pairs")
    p.add_argument("--embeddings")
    p.add_argument("--pairs")
    p.add_argument("--n-pos", type=int, default=5000)
    p.add_argument("--n-neg", type=int, default=5000)
    p.add_argument("--mode", choices=("cosine", "scaled", "mu_scaled"), default="cosine")
    p.add_argument("--head")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--far", type=float)

    p = add("reject-curve", cmd_reject_curve, "TAR@FAR as uncertain pairs are rejected")
    p.add_argument("--scores")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--uncertainties", help="per-pair file with header 'uncertainty'")
    src.add_argument("--scales", help="per-image 'index,scale' file")
    src.add_argument("--method", choices=("random", "oracle"), default="random")
    p.add_argument("--far", type=float, default=0.01)
    p.add_argument("--grid", default=",".join(repr(r) for r in DEFAULT_GRID))
    p.add_argument("--normalization", choices=("unit", "none"), default="unit")

    p = add("simulate-gaussian", cmd_simulate_gaussian, "Monte-Carlo vs closed-form error probability")
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--s", type=float, default=10.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--a", type=float, default=0.9)
    p.add_argument("--n-samples", type=int, default=1_000_000)
    p.add_argument("--w-seed", type=int, default=0)

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of losses and heads")
    p.add_argument("--configs", type=int, default=24)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-4)

    p = add("experiment", cmd_experiment, "run a synthetic scenario")
    p.add_argument("--scenario", choices=("heteroscedastic", "mu", "crossview"),
                   default="heteroscedastic")
    return parser, sub


def load_config(path) -> dict:
    """Read ``key=value`` lines or the ``config`` block of a manifest."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from None
        return dict(data.get("config", data))
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _apply_config(parser, sub, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = load_config(args.config)
    subparser = sub.choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    unknown = sorted(set(cfg) - set(known) - _NOT_CONFIG)
    if unknown:
        subparser.error(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, value in cfg.items():
        if key in _NOT_CONFIG:
            continue
        if isinstance(value, str) and known[key].nargs == 0:
            value = value.lower() in ("1", "true", "yes")
        defaults[key] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, sub = build_parser()
    try:
        args = _apply_config(parser, sub, argv)
        ctx = RunContext(args)
        code = args.func(args, ctx) or 0
        ctx.write_manifest()
    except ScaleFaceError as exc:
        print(f"error ({exc.category}): {exc}", file=sys.stderr)
        return _EXIT.get(exc.category, 1)
    except OSError as exc:
        print(f"error (usage): {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
