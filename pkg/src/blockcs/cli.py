"""Command-line driver: train, simulate, reconstruct, report, verify.

Exit codes: 0 success, 2 usage, 3 I/O, 4 dimension or parameter, 5 numerical
failure, 6 file format, 7 verification mismatch.
"""

import argparse
import sys

from .errors import (
    DimensionMismatchError,
    FormatError,
    InvalidParameterError,
    NumericalError,
    VerificationError,
)
from .experiment import (
    build_config,
    parse_int_list,
    run_lambda_sweep,
    run_reconstruct,
    run_report,
    run_simulate,
    run_train,
    run_verify,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIMENSION = 4
EXIT_NUMERICAL = 5
EXIT_FORMAT = 6
EXIT_VERIFY = 7


def _split_paths(text):
    return [p.strip() for p in text.split(",") if p.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _add_config_arg(parser):
    parser.add_argument("-c", "--config", metavar="FILE", help="key = value config file")


def _single_lam(values):
    if values and len(values) == 1:
        return values[0]
    return None


def _common_overrides(args):
    mapping = {
        "train_images": getattr(args, "train_images", None),
        "test_images": getattr(args, "test_images", None),
        "block_side": getattr(args, "block_side", None),
        "overlap": getattr(args, "overlap", None),
        "measurements": getattr(args, "measurements", None),
        "trials": getattr(args, "trials", None),
        "base_seed": getattr(args, "base_seed", None),
        "matrix_kind": getattr(args, "matrix", None),
        "sigma": getattr(args, "sigma", None),
        "method": getattr(args, "method", None),
        "model_path": getattr(args, "model", None),
        "output_dir": getattr(args, "out", None),
        "components": getattr(args, "components", None),
        "max_iters": getattr(args, "max_iters", None),
        "tol": getattr(args, "tol", None),
        "eps_reg": getattr(args, "eps_reg", None),
        "init": getattr(args, "init", None),
        "train_stride": getattr(args, "train_stride", None),
        "max_patches": getattr(args, "max_patches", None),
        "dictionary": getattr(args, "dictionary", None),
        "lam": _single_lam(getattr(args, "lam", None)),
        "ista_max_iters": getattr(args, "ista_max_iters", None),
        "ista_tol": getattr(args, "ista_tol", None),
        "workers": getattr(args, "workers", None),
        "clamped_psnr": True if getattr(args, "clamped_psnr", False) else None,
    }
    return {k: v for k, v in mapping.items() if v is not None}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blockcs",
        description="Block-wise compressive imaging: simulate, reconstruct, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the patch prior on a corpus")
    _add_config_arg(p_train)
    p_train.add_argument("--train-images", type=_split_paths, metavar="PATHS")
    p_train.add_argument("--test-images", type=_split_paths, metavar="PATHS")
    p_train.add_argument("--model", metavar="FILE", help="model output path")
    p_train.add_argument("--out", metavar="DIR")
    p_train.add_argument("--block-side", type=int)
    p_train.add_argument("--components", type=int)
    p_train.add_argument("--max-iters", type=int)
    p_train.add_argument("--tol", type=float)
    p_train.add_argument("--eps-reg", type=float)
    p_train.add_argument("--init", choices=["kmeans", "random-responsibility"])
    p_train.add_argument("--base-seed", type=int)
    p_train.add_argument("--max-patches", type=int)
    p_train.add_argument("--train-stride", type=int)

    p_sim = sub.add_parser("simulate", help="sense test images into measurement files")
    _add_config_arg(p_sim)
    p_sim.add_argument("--test-images", type=_split_paths, metavar="PATHS")
    p_sim.add_argument("--block-side", type=int)
    p_sim.add_argument("--overlap", type=int)
    p_sim.add_argument("--measurements", type=parse_int_list, metavar="LIST",
                       help="e.g. '1..10' or '2,4,8'")
    p_sim.add_argument("--trials", type=int)
    p_sim.add_argument("--base-seed", type=int)
    p_sim.add_argument("--matrix", choices=["random-binary", "permuted-hadamard"])
    p_sim.add_argument("--sigma", type=float)
    p_sim.add_argument("--out", metavar="DIR")

    p_rec = sub.add_parser("reconstruct", help="invert measurement files and score PSNR")
    _add_config_arg(p_rec)
    p_rec.add_argument("--method", choices=["gmm", "ista"])
    p_rec.add_argument("--model", metavar="FILE")
    p_rec.add_argument("--out", metavar="DIR", help="directory holding measurement files")
    p_rec.add_argument("--csv", metavar="FILE", help="results CSV (appended)")
    p_rec.add_argument("--workers", type=int)
    p_rec.add_argument("--clamped-psnr", action="store_true",
                       help="score PSNR on [0,1]-clamped reconstructions")
    p_rec.add_argument("--dictionary", choices=["identity", "dct2d"])
    p_rec.add_argument("--lam", type=_float_list, metavar="LIST",
                       help="l1 weight; a comma list sweeps the ista baseline")
    p_rec.add_argument("--ista-max-iters", type=int)
    p_rec.add_argument("--ista-tol", type=float)

    p_rep = sub.add_parser("report", help="summarize a results CSV per M")
    p_rep.add_argument("csv", metavar="RESULTS.csv")
    p_rep.add_argument("--plot-data", metavar="FILE", help="plot-data output path")

    p_ver = sub.add_parser("verify", help="re-derive artifacts and byte-compare")
    p_ver.add_argument("paths", nargs="+", metavar="FILE")

    return parser


def _cmd_train(args):
    cfg = build_config(args.config, _common_overrides(args))
    model_path, report_path = run_train(cfg)
    print(f"model written to {model_path}")
    print(f"training report written to {report_path}")
    return EXIT_OK


def _cmd_simulate(args):
    cfg = build_config(args.config, _common_overrides(args))
    written = run_simulate(cfg)
    print(f"wrote {len(written)} measurement files to {cfg.resolved_output_dir()}")
    return EXIT_OK


def _cmd_reconstruct(args):
    cfg = build_config(args.config, _common_overrides(args))
    lams = getattr(args, "lam", None)
    if lams and len(lams) > 1:
        for lam, csv_path, rows in run_lambda_sweep(cfg, lams, csv_path=args.csv):
            print(f"lam={lam:g}: appended {len(rows)} rows to {csv_path}")
        return EXIT_OK
    csv_path, rows = run_reconstruct(cfg, csv_path=args.csv)
    print(f"appended {len(rows)} rows to {csv_path}")
    return EXIT_OK


def _cmd_report(args):
    summary, plot_path = run_report(args.csv, args.plot_data)
    print(f"{'m':>4}  {'mean_psnr_db':>14}  {'std_psnr_db':>12}  {'rows':>5}")
    for m, mean, std, count in summary:
        print(f"{m:>4}  {mean:>14.4f}  {std:>12.4f}  {count:>5}")
    print(f"plot data written to {plot_path}")
    return EXIT_OK


def _cmd_verify(args):
    results = run_verify(args.paths)
    failures = 0
    for path, error in results:
        if error is None:
            print(f"ok       {path}")
        else:
            failures += 1
            print(f"MISMATCH {path}: {error}")
    if failures:
        print(f"{failures} of {len(results)} artifacts failed verification")
        return EXIT_VERIFY
    print(f"all {len(results)} artifacts verified")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "report": _cmd_report,
    "verify": _cmd_verify,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DimensionMismatchError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VerificationError as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
