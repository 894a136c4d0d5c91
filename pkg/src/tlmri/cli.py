"""Command-line interface: ``tlmri {phantom,mask,simulate,reconstruct,eval}``.

Exit status is 0 on success, 2 for invalid input or usage, 1 for any
other failure.
"""
import argparse
import dataclasses
import json
import math
import sys
import time

from . import io, kspace
from .errors import ValidationError
from .metrics import psnr
from .phantom import KINDS, generate_phantom
from .recon import BCDSolver


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="tlmri", description="Transform-learning MRI reconstruction toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    ph = sub.add_parser("phantom", help="write a synthetic complex image")
    ph.add_argument("--kind", choices=KINDS, default="shepp_logan")
    ph.add_argument("--size", type=int, required=True)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--no-phase", action="store_true", help="smooth_blobs without a phase ramp")
    ph.add_argument("--out", required=True)
    ph.add_argument("--pgm", help="also write an 8-bit magnitude preview")

    mk = sub.add_parser("mask", help="write a k-space sampling mask (PGM)")
    mk.add_argument("--pattern", choices=("cartesian", "radial", "random2d"), required=True)
    mk.add_argument("--size", type=int, help="square grid side")
    mk.add_argument("--height", type=int)
    mk.add_argument("--width", type=int)
    mk.add_argument("--accel", type=_positive_float, help="undersampling factor")
    mk.add_argument("--spokes", type=int, help="radial spoke count (overrides --accel)")
    mk.add_argument("--density-power", type=float, default=2.0)
    mk.add_argument("--center-lines", type=int, default=8)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--out", required=True)

    sm = sub.add_parser("simulate", help="undersample an image and add noise")
    sm.add_argument("--image", required=True)
    sm.add_argument("--mask", required=True)
    sm.add_argument("--sigma", type=float, default=0.0, help="complex noise standard deviation")
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--out", required=True)

    rc = sub.add_parser("reconstruct", help="run a reconstruction from a config file")
    rc.add_argument("--config", required=True)
    rc.add_argument("--measurements", required=True)
    rc.add_argument("--mask", required=True)
    rc.add_argument("--out", required=True)
    rc.add_argument("--trace", required=True, help="objective trace CSV")
    rc.add_argument("--ref", help="ground truth, for PSNR columns and the report")
    rc.add_argument("--report", help="write a JSON run report")
    rc.add_argument("--transforms", help="also save the learned transforms")
    rc.add_argument("--pgm", help="also write an 8-bit magnitude preview")

    ev = sub.add_parser("eval", help="PSNR of a test image against a reference")
    ev.add_argument("--ref", required=True)
    ev.add_argument("--test", required=True)
    return p


def _cmd_phantom(args):
    img = generate_phantom(args.kind, args.size, seed=args.seed, phase=not args.no_phase)
    io.save_image(args.out, img)
    if args.pgm:
        io.save_magnitude_pgm(args.pgm, img)


def _grid_shape(args):
    h = args.height if args.height is not None else args.size
    w = args.width if args.width is not None else args.size
    if h is None or w is None:
        raise ValidationError("give --size or both --height and --width")
    if h < 1 or w < 1:
        raise ValidationError("grid dimensions must be positive")
    return h, w


def _cmd_mask(args):
    h, w = _grid_shape(args)
    if args.pattern == "radial":
        if args.spokes is not None:
            spokes = args.spokes
        elif args.accel is not None:
            spokes = kspace.spokes_for_acceleration(h, w, args.accel)
        else:
            raise ValidationError("radial masks need --spokes or --accel")
        mask = kspace.make_pseudo_radial_mask(h, w, spokes, seed=args.seed)
    else:
        if args.accel is None:
            raise ValidationError(f"{args.pattern} masks need --accel")
        if args.pattern == "cartesian":
            mask = kspace.make_cartesian_mask(
                h, w, args.accel, seed=args.seed, center_lines=args.center_lines,
                density_power=args.density_power,
            )
        else:
            mask = kspace.make_random2d_mask(h, w, args.accel, density_power=args.density_power, seed=args.seed)
    io.save_mask(args.out, mask)


def _cmd_simulate(args):
    img = io.load_image(args.image)
    mask = io.load_mask(args.mask)
    data = kspace.simulate_measurements(img, mask, noise_sigma=args.sigma, seed=args.seed)
    io.save_kspace(args.out, data)


def _cmd_reconstruct(args):
    config = io.load_config(args.config)
    mask = io.load_mask(args.mask)
    data = io.load_kspace(args.measurements, mask)
    ref = io.load_image(args.ref) if args.ref else None
    if ref is not None and ref.shape != mask.shape:
        raise ValidationError(f"reference {ref.shape} and mask {mask.shape} differ in shape")
    start = time.perf_counter()
    solver = BCDSolver(data.y, mask, config, reference=ref)
    x, trace = solver.run()
    wall = time.perf_counter() - start
    io.save_image(args.out, x)
    io.write_trace(args.trace, trace)
    if args.transforms:
        mode = {"baseline_p1": "fixed", "stl": "well_conditioned"}.get(config.scheme, "unitary")
        io.save_transforms(args.transforms, solver.state.transforms, mode)
    if args.pgm:
        io.save_magnitude_pgm(args.pgm, x)
    if args.report:
        zf = kspace.zero_fill_recon(data.y, mask)
        report = io.RunReport(
            scheme=config.scheme,
            config=dataclasses.asdict(solver.config),
            psnr=psnr(ref, x) if ref is not None else math.nan,
            psnr_zero_fill=psnr(ref, zf) if ref is not None else math.nan,
            wall_time=wall,
            trace_path=args.trace,
        )
        with open(args.report, "w") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def _cmd_eval(args):
    value = psnr(io.load_image(args.ref), io.load_image(args.test))
    print(f"PSNR_dB={'inf' if math.isinf(value) else f'{value:.6f}'}")


_COMMANDS = {
    "phantom": _cmd_phantom,
    "mask": _cmd_mask,
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "eval": _cmd_eval,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"tlmri {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"tlmri {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
