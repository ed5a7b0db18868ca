"""Command-line interface.

Subcommands:
    segment      optimize on one image, write the label map (and optionally
                 the reconstruction and a loss-history CSV)
    eval         score a label map against ground truth, print "asa,br"
    sweep-lambda run the lambda sweep over a directory of images
    benchmark    compare ours / ours without reconstruction / slic
    slic         run only the SLIC baseline on one image
"""

from __future__ import annotations

import argparse
import csv
import sys

from .segmenter import RunConfig


def _add_run_config_args(parser: argparse.ArgumentParser, defaults: RunConfig):
    parser.add_argument("--n", type=int, default=defaults.n_superpixels,
                        help="upper bound on the number of superpixels")
    parser.add_argument("--lambda", dest="lambda_", type=float, default=defaults.lambda_,
                        help="weight of the uniform-size entropy term")
    parser.add_argument("--alpha", type=float, default=defaults.alpha,
                        help="weight of the edge-aware smoothness term")
    parser.add_argument("--beta", type=float, default=defaults.beta,
                        help="weight of the reconstruction term (0 disables it)")
    parser.add_argument("--sigma", type=float, default=defaults.sigma,
                        help="edge sensitivity of the smoothness weights")
    parser.add_argument("--iters", type=int, default=defaults.iterations,
                        help="number of optimization iterations")
    parser.add_argument("--lr", type=float, default=defaults.learning_rate,
                        help="Adam learning rate")
    parser.add_argument("--seed", type=int, default=defaults.seed,
                        help="random initialization seed")
    parser.add_argument("--width-mult", type=float, default=defaults.width_mult,
                        help="hidden channel width multiplier (1 = full model)")
    parser.add_argument("--log-every", type=int, default=defaults.log_every,
                        help="iterations between loss-history entries")


def _run_config_from_args(args) -> RunConfig:
    return RunConfig(
        n_superpixels=args.n,
        lambda_=args.lambda_,
        alpha=args.alpha,
        beta=args.beta,
        sigma=args.sigma,
        iterations=args.iters,
        learning_rate=args.lr,
        seed=args.seed,
        width_mult=args.width_mult,
        log_every=args.log_every,
    )


def _cmd_segment(args) -> int:
    from .image_io import load_image, normalize_inputs, save_image, save_labelmap
    from .segmenter import segment

    cfg = _run_config_from_args(args)
    image = load_image(args.image)
    norm = normalize_inputs(image)
    result = segment(norm.i_norm, norm.x_norm, cfg)
    save_labelmap(args.out, result.labels)
    if args.recon_out:
        save_image(args.recon_out, norm.denormalize_image(result.recon))
    if args.loss_csv:
        with open(args.loss_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "clustering", "smoothness", "recons", "total"])
            for it, bd in zip(result.history_iterations, result.loss_history):
                writer.writerow(
                    [it, f"{bd.clustering:.6g}", f"{bd.smoothness:.6g}",
                     f"{bd.recons:.6g}", f"{bd.total:.6g}"]
                )
    print(
        f"{args.image}: {result.n_superpixels_used} superpixels "
        f"({result.n_connected_components} components) in {result.elapsed:.1f}s "
        f"-> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    from .image_io import load_labelmap
    from .metrics import evaluate

    labels = load_labelmap(args.labels)
    gts = [load_labelmap(p) for p in args.gt]
    report = evaluate(labels, gts, epsilon=args.epsilon)
    print(f"{report.asa:.6g},{report.br:.6g}")
    return 0


def _cmd_sweep_lambda(args) -> int:
    from .experiments import run_lambda_sweep

    cfg = _run_config_from_args(args)
    lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()]
    if not lambdas:
        raise ValueError("--lambdas needs at least one value")
    records = run_lambda_sweep(args.images, lambdas, cfg, out_csv=args.out, n_jobs=args.jobs)
    print(f"{len(records)} records -> {args.out}")
    return 0


def _cmd_benchmark(args) -> int:
    from .experiments import run_benchmark

    cfg = _run_config_from_args(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    counts = [int(x) for x in args.counts.split(",") if x.strip()]
    records = run_benchmark(
        args.images, args.gt, methods, counts, cfg,
        epsilon=args.epsilon, out_csv=args.out, n_jobs=args.jobs,
    )
    print(f"{len(records)} records -> {args.out}")
    return 0


def _cmd_slic(args) -> int:
    from .image_io import load_image, save_labelmap
    from .slic import slic

    image = load_image(args.image)
    labels = slic(
        image,
        n_segments=args.n_segments,
        compactness=args.compactness,
        max_iters=args.max_iters,
        enforce_connectivity=not args.no_connectivity,
    )
    save_labelmap(args.out, labels)
    import numpy as np

    print(f"{args.image}: {np.unique(labels).size} superpixels -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unsupix",
        description="Unsupervised superpixels by optimizing a random CNN on one image",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = RunConfig()

    p = sub.add_parser("segment", help="segment one image")
    p.add_argument("--image", required=True, help="input image (8-bit RGB PNG or PPM)")
    p.add_argument("--out", required=True, help="output label map (.png 16-bit or .csv)")
    p.add_argument("--recon-out", default=None, help="optional reconstruction PNG")
    p.add_argument("--loss-csv", default=None, help="optional loss-history CSV")
    _add_run_config_args(p, defaults)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("eval", help="score a label map against ground truth")
    p.add_argument("--labels", required=True, help="label map to score")
    p.add_argument("--gt", required=True, nargs="+", help="ground-truth label map(s)")
    p.add_argument("--epsilon", type=int, default=1, help="boundary tolerance radius")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-lambda", help="superpixel counts across lambda values")
    p.add_argument("--images", required=True, help="directory of input images")
    p.add_argument("--lambdas", required=True, help="comma-separated lambda values")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    _add_run_config_args(p, defaults)
    p.set_defaults(func=_cmd_sweep_lambda)

    p = sub.add_parser("benchmark", help="ASA/BR comparison against the SLIC baseline")
    p.add_argument("--images", required=True, help="directory of input images")
    p.add_argument("--gt", required=True, help="directory of ground-truth label maps")
    p.add_argument("--methods", default="ours,ours_no_recons,slic",
                   help="comma-separated subset of ours,ours_no_recons,slic")
    p.add_argument("--counts", default="50", help="comma-separated superpixel counts")
    p.add_argument("--epsilon", type=int, default=1, help="boundary tolerance radius")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    _add_run_config_args(p, defaults)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("slic", help="run the SLIC baseline on one image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-segments", type=int, default=100)
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--no-connectivity", action="store_true",
                   help="skip merging undersized components")
    p.set_defaults(func=_cmd_slic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
