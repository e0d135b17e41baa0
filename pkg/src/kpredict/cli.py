"""Command line interface: ``kpredict <subcommand> [flags]``.

Results go to stdout as ``key=value`` lines; logs and the resolved numeric
flags go to stderr. Exit codes: 0 success, 1 usage or validation error,
2 numerical failure or non-convergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cgrid import CgridFormatError, read_cgrid, write_cgrid
from .grid import check_same_shape, ifft2_centered, metric_report
from .noise import NoiseSpec, corner_patches, estimate_noise_background, inject_prediction_noise
from .phantom import bar_phantom, make_kspace_stack, shepp_logan
from .recon import ReconError, ReconProblem, SolverConfig, admm_solve
from .recon.weights import WlsWeights
from .sampling import (
    DensityMap,
    bernoulli_pattern,
    estimate_density,
    poisson_disc_pattern,
    variable_density_map,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("kpredict")


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(**values) -> None:
    for key, value in values.items():
        print(f"{key}={value}")


def _echo_numeric(args) -> None:
    items = sorted(
        (k, v) for k, v in vars(args).items()
        if isinstance(v, (int, float)) and not isinstance(v, bool) and k != "func"
    )
    if items:
        print("resolved " + " ".join(f"{k}={v!r}" for k, v in items), file=sys.stderr)


def _real_map(path, name: str) -> np.ndarray:
    grid = read_cgrid(path)
    if np.any(grid.imag != 0):
        raise UsageError(f"{name} file {path} must be real-valued")
    return grid.real


# --- subcommands -----------------------------------------------------------


def cmd_phantom(args) -> int:
    img = bar_phantom(args.size) if args.bars == "default" else shepp_logan(args.size)
    img = args.scale * img
    if args.out:
        write_cgrid(args.out, img)
        _emit(out=args.out, width=args.size, height=args.size)
    if args.stack_dir:
        if args.stack < 1:
            raise UsageError("--stack must be >= 1 with --stack-dir")
        stack = make_kspace_stack(img, args.stack, args.sigma, args.seed)
        out = Path(args.stack_dir)
        files = []
        for i, entry in enumerate(stack.entries):
            name = f"entry_{i:04d}.cgrid"
            write_cgrid(out / name, entry)
            files.append(name)
        manifest = {
            "count": stack.count,
            "noise_sigma": stack.noise_sigma,
            "seed": stack.seed,
            "width": args.size,
            "height": args.size,
            "domain": "kspace",
            "files": files,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        _emit(stack_dir=out, count=stack.count)
    if not args.out and not args.stack_dir:
        raise UsageError("nothing to write: give --out and/or --stack-dir")
    return EXIT_OK


def cmd_sample(args) -> int:
    density = variable_density_map(
        args.size, args.size, args.accel, args.exponent, args.calib, args.rho_min
    )
    if args.mode == "bernoulli":
        pattern = bernoulli_pattern(density, args.seed)
    else:
        dims = "1d" if args.mode == "poisson1d" else "2d"
        pattern = poisson_disc_pattern(density, dims, args.calib, args.seed)
    write_cgrid(args.out, pattern.astype(float))
    if args.density_out:
        write_cgrid(args.density_out, density.rho)
    rate = float(np.mean(pattern))
    _emit(out=args.out, samples=int(pattern.sum()), rate=rate, acceleration=1.0 / rate)
    return EXIT_OK


def cmd_predict_noise(args) -> int:
    ref = read_cgrid(args.ref)
    if args.density:
        density = DensityMap(_real_map(args.density, "density"))
    else:
        density = estimate_density(_real_map(args.pattern, "pattern"), args.window)
    check_same_shape(ref, density.rho, names=("ref", "density"))
    noise = NoiseSpec.from_reference(args.sigma_ref, args.n_ref, args.tau_acq)
    pred = inject_prediction_noise(ref, density, noise, args.seed)
    write_cgrid(args.out, pred)
    _emit(out=args.out, sigma_ref_sq=noise.sigma_ref_sq, mean_density=float(density.rho.mean()))
    return EXIT_OK


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        max_iters=args.max_iters,
        admm_penalty=args.penalty,
        abs_tol=args.abs_tol,
        rel_tol=args.rel_tol,
        cycle_spin_shifts=args.shifts,
        wavelet_levels=args.wavelet_levels,
        tv_inner_iters=args.tv_inner_iters,
        balance_ratio=args.balance_ratio,
    )


def _write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "objective", "primal_residual", "dual_residual"])
        for row in trace.rows():
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def cmd_recon(args) -> int:
    y = read_cgrid(args.y)
    w = _real_map(args.weights, "weights")
    check_same_shape(y, w, names=("y", "weights"))
    prob = ReconProblem(y, WlsWeights(w, "custom"), args.reg, args.lam)
    try:
        img, trace = admm_solve(prob, _solver_config(args))
    except ReconError as exc:
        if args.trace and exc.trace is not None:
            _write_trace(args.trace, exc.trace)
        raise NumericError(str(exc)) from None
    write_cgrid(args.out, img)
    if args.trace:
        _write_trace(args.trace, trace)
    _emit(
        out=args.out,
        iterations=trace.iterations,
        objective=repr(trace.objective[-1]),
        converged=str(trace.converged).lower(),
    )
    if not trace.converged:
        raise NumericError(f"no convergence within {args.max_iters} iterations")
    return EXIT_OK


def cmd_experiment(args) -> int:
    from .experiments import (
        ExperimentConfig,
        cell_means,
        emit_report,
        run_noise_rate_grid,
        run_prediction_experiment,
        run_stack_experiment,
    )

    try:
        cfg = ExperimentConfig.from_json(args.config)
    except (json.JSONDecodeError, TypeError) as exc:
        raise UsageError(f"invalid config {args.config}: {exc}") from None
    if args.seed is not None:
        cfg.master_seed = args.seed
    out = args.out or cfg.output_dir
    if not out:
        raise UsageError("no output directory: give --out or output_dir in the config")
    runner = {
        "stack": run_stack_experiment,
        "grid": run_noise_rate_grid,
        "predict": run_prediction_experiment,
    }[args.kind]
    records = runner(cfg)
    paths = emit_report(records, out)
    (Path(out) / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    failed = sum(r.failed for r in records)
    _emit(records=len(records), failed=failed, csv=paths["records"], summary=paths["summary"])
    for (sigma, accel, mode), value in sorted(cell_means(records).items(), key=str):
        log.info("mean mse sigma=%g R=%g %s: %s", sigma, accel, mode, value)
    return EXIT_OK


def cmd_metrics(args) -> int:
    a, b = read_cgrid(args.a), read_cgrid(args.b)
    check_same_shape(a, b, names=("a", "b"))
    report = metric_report(a, b)
    _emit(mse=repr(report.mse), snr_db=repr(report.snr_db))
    return EXIT_OK


def _parse_rect(text: str):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"patch must be row0,col0,rows,cols; got {text!r}") from None
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"patch must have 4 integers; got {text!r}")
    return vals


def cmd_estimate_noise(args) -> int:
    img = read_cgrid(args.image)
    if args.kspace:
        img = ifft2_centered(img)
    if args.patch:
        rects = args.patch[0] if len(args.patch) == 1 else args.patch
        value = estimate_noise_background(img, rects, args.patches)
    else:
        value = estimate_noise_background(img, corner_patches(img.shape, args.corner_size))
    _emit(sigma_sq=repr(value), sigma=repr(float(np.sqrt(value))))
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def _add_solver_flags(p) -> None:
    d = SolverConfig()
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--penalty", type=float, default=d.admm_penalty, help="initial ADMM penalty mu")
    p.add_argument("--abs-tol", type=float, default=d.abs_tol)
    p.add_argument("--rel-tol", type=float, default=d.rel_tol)
    p.add_argument("--tv-inner-iters", type=int, default=d.tv_inner_iters)
    p.add_argument("--wavelet-levels", type=int, default=d.wavelet_levels)
    p.add_argument("--shifts", type=int, default=d.cycle_spin_shifts, help="cycle-spin shifts per axis")
    p.add_argument("--balance-ratio", type=float, default=d.balance_ratio,
                   help="residual balancing ratio, 0 keeps mu fixed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kpredict", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap; all computation runs in one thread")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("phantom", help="write a phantom image and optionally a noisy k-space stack")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--bars", choices=["default", "none"], default="default")
    p.add_argument("--scale", type=float, default=1.0, help="intensity multiplier")
    p.add_argument("--out", help="image cgrid path")
    p.add_argument("--stack", type=int, default=0, help="number of stack entries")
    p.add_argument("--sigma", type=float, default=1.0, help="per-component noise std of each entry")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stack-dir", help="directory for the stack cgrids and manifest.json")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sample", help="draw a sampling pattern from a variable-density map")
    p.add_argument("--mode", choices=["bernoulli", "poisson1d", "poisson2d"], required=True)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--accel", type=float, required=True)
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--calib", type=int, default=0)
    p.add_argument("--rho-min", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--density-out", help="also write the density map")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("predict-noise", help="add prediction noise to reference k-space")
    p.add_argument("--ref", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--density", help="density map cgrid, values in (0, 1]")
    src.add_argument("--pattern", help="binary pattern cgrid; density is estimated from it")
    p.add_argument("--window", type=int, default=11, help="density estimation window")
    p.add_argument("--sigma-ref", type=float, required=True, help="reference component variance")
    p.add_argument("--n-ref", type=int, default=1)
    p.add_argument("--tau-acq", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_noise)

    p = sub.add_parser("recon", help="regularized weighted least squares reconstruction")
    p.add_argument("--y", required=True, help="k-space data cgrid")
    p.add_argument("--weights", required=True, help="real weight map cgrid")
    p.add_argument("--reg", choices=["tv", "wavelet", "none"], default="tv")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="CSV of the per-iteration objective and residuals")
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("experiment", help="run a seeded experiment harness")
    p.add_argument("kind", choices=["stack", "grid", "predict"])
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("metrics", help="MSE and SNR of --a against --b")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("estimate-noise", help="noise variance from signal-free patches")
    p.add_argument("--image", required=True)
    p.add_argument("--kspace", action="store_true", help="input is k-space; inverse transform first")
    p.add_argument("--patch", type=_parse_rect, action="append",
                   help="row0,col0,rows,cols; repeat for several patches")
    p.add_argument("--patches", type=int, default=1, help="tile a single --patch this many times")
    p.add_argument("--corner-size", type=int, default=11, help="corner patch size when no --patch")
    p.set_defaults(func=cmd_estimate_noise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    _echo_numeric(args)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"kpredict: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CgridFormatError) as exc:
        print(f"kpredict: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError) as exc:
        print(f"kpredict: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"kpredict: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
