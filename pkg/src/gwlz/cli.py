"""``gwlz`` command line.

Exit codes: 0 success, 2 usage, 3 data/format error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from . import base_codec, container, enhancer, metrics, pipeline
from .enhancer import ClampMode
from .errors import ConfigError, GwlzError
from .metrics import fmt_value
from .micro_nn import TrainConfig
from .volume_io import KINDS, SyntheticSpec, gen_synthetic, load_raw, parse_dims, save_raw

log = logging.getLogger("gwlz")

EXIT_USAGE, EXIT_DATA, EXIT_IO = 2, 3, 4


def _dims(text):
    try:
        return parse_dims(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_training(p):
    g = p.add_argument_group("training")
    g.add_argument("--groups", type=int, default=20)
    g.add_argument("--epochs", type=int, default=300)
    g.add_argument("--batch", type=int, default=10)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--lr-gamma", type=float, default=0.5)
    g.add_argument("--lr-step", type=int, default=30)
    g.add_argument("--strategy", choices=["quantile", "equal-width"], default="quantile")
    g.add_argument("--axis", type=int, choices=[0, 1, 2], default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--channels", type=int, default=9)
    g.add_argument("--threads", type=int, default=1,
                   help="groups trained concurrently; output does not depend on it")


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch, lr0=args.lr,
                       lr_gamma=args.lr_gamma, lr_step_epochs=args.lr_step, seed=args.seed)


def _print(*lines):
    for line in lines:
        print(line)


def _write_loss_csv(path, histories):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch"] + [f"group{g}" for g in range(len(histories))])
        n = max((len(h) for h in histories), default=0)
        for e in range(n):
            w.writerow([e] + [repr(float(h[e])) if e < len(h) else "" for h in histories])


def cmd_compress(args):
    vol = load_raw(args.input, args.dims)
    res = pipeline.compress_volume(
        vol, args.reb, args.groups, args.strategy, _train_config(args), args.axis,
        args.channels, args.threads, use_enhancer=not args.no_enhance, clamp=args.clamp,
    )
    data = res.archive.to_bytes()
    with open(args.out, "wb") as fh:
        fh.write(data)
    if args.loss_csv and res.bundle is not None:
        _write_loss_csv(args.loss_csv, res.bundle.histories)
    log.info("wrote %s (%d bytes)", args.out, len(data))
    _print(*res.report.lines())


def cmd_decompress(args):
    archive = container.read_archive(args.input)
    out, note = pipeline.decompress_archive(archive, not args.no_enhance, args.clamp)
    save_raw(out, args.out)
    _print(f"note={note}")


def cmd_enhance(args):
    a = load_raw(args.original, args.dims)
    b = load_raw(args.decompressed, args.dims)
    if not args.e_abs > 0:
        raise ConfigError("--e-abs must be > 0")
    max_res = float(np.max(np.abs(a.astype(np.float64) - b.astype(np.float64))))
    if max_res > args.e_abs:
        print(f"warning: max |original - decompressed| = {max_res!r} exceeds --e-abs {args.e_abs!r}",
              file=sys.stderr)
    bundle = enhancer.fit(a, b, args.groups, args.strategy, _train_config(args), args.axis,
                          args.channels, args.threads)
    container.write_sidecar(args.out, bundle, a.shape, args.axis, args.e_abs)
    if args.loss_csv:
        _write_loss_csv(args.loss_csv, bundle.histories)
    _print(f"groups={bundle.n_groups}", f"models={bundle.n_models}",
           f"weight_bytes={container.weight_bytes(bundle)}", f"max_residual={max_res!r}")


def cmd_apply(args):
    side = container.read_sidecar(args.sidecar)
    if args.dims is not None:
        side.check_dims(args.dims)
    dec = load_raw(args.decompressed, side.dims)
    side.check_dims(dec.shape)
    mode = ClampMode(args.clamp, side.e_abs) if args.clamp == "bound2e" else ClampMode()
    out = enhancer.enhance(dec, side.bundle, mode, side.axis)
    save_raw(out, args.out)
    _print(f"note=enhanced output (clamp={args.clamp})")


def cmd_stats(args):
    a = load_raw(args.original, args.dims)
    c = load_raw(args.candidate, args.dims)
    err = float(np.max(np.abs(a.astype(np.float64) - c.astype(np.float64))))
    _print(f"mse={fmt_value(metrics.mse(a, c))}", f"psnr_db={fmt_value(metrics.psnr(a, c))}",
           f"max_abs_err={fmt_value(err)}")


def _inspect_bundle(bundle):
    lines = [f"n_groups={bundle.n_groups}", f"n_models={bundle.n_models}",
             f"strategy={bundle.spec.strategy}", f"channels={bundle.channels}",
             f"weight_bytes={container.weight_bytes(bundle)}"]
    st = bundle.stats
    for g in range(bundle.n_groups):
        lines.append(
            f"group={g} count={int(st.count[g])} in_min={fmt_value(st.in_min[g])} "
            f"in_max={fmt_value(st.in_max[g])} res_scale={fmt_value(st.res_scale[g])} "
            f"model={int(bundle.models[g] is not None)} final_loss={fmt_value(bundle.final_loss[g])}"
        )
    return lines


def cmd_inspect(args):
    with open(args.file, "rb") as fh:
        data = fh.read()
    if data[:4] == container.SIDECAR_MAGIC:
        side = container.Sidecar.from_bytes(data)
        lines = ["kind=gwe", f"version={side.version}", "dims={}x{}x{}".format(*side.dims),
                 f"axis={side.axis}", f"e_abs={fmt_value(side.e_abs)}",
                 f"enhancer_bytes={len(side.bundle_bytes)}"]
        _print(*lines, *_inspect_bundle(side.bundle))
        return
    ar = container.GwlzArchive.from_bytes(data)
    p = ar.payload
    lines = ["kind=gwlz", f"version={ar.version}", f"flags={ar.flags}",
             "dims={}x{}x{}".format(*p.dims), f"reb={fmt_value(p.config.reb)}",
             f"e_abs={fmt_value(p.config.abs_bound)}", f"axis={ar.axis}",
             f"payload_bytes={len(ar.payload_bytes)}",
             f"enhancer_bytes={len(ar.enhancer_bytes) if ar.enhancer_bytes else 0}",
             f"overhead_ratio={fmt_value(container.overhead_ratio(ar))}",
             f"cr={fmt_value(base_codec.ratio(p.dims, ar.payload_bytes))}",
             f"psnr_base={fmt_value(ar.psnr_base)}", f"psnr_enhanced={fmt_value(ar.psnr_enhanced)}",
             f"outliers={len(p.outlier_index)}"]
    if ar.has_enhancer:
        lines += _inspect_bundle(ar.bundle)
    _print(*lines)


def cmd_gen(args):
    vol = gen_synthetic(SyntheticSpec(args.kind, args.dims, args.seed, args.amplitude))
    n = save_raw(vol, args.out)
    _print(f"bytes={n}")


BENCH_COLUMNS = ["reb", "groups", "psnr_base", "psnr_enh", "improvement_pct", "cr", "overhead"]


def cmd_bench(args):
    vol = load_raw(args.input, args.dims)
    cfg = _train_config(args)
    rows = []
    for reb in args.rebs:
        codec_cfg = base_codec.CodecConfig.for_volume(vol, reb)
        payload, dec = base_codec.compress(vol, codec_cfg)
        base = metrics.psnr(vol, dec)
        for groups in args.groups_list:
            bundle = enhancer.fit(vol, dec, groups, args.strategy, cfg, args.axis,
                                  args.channels, args.threads)
            stored = container.decode_bundle(container.encode_bundle(bundle))
            enh = metrics.psnr(vol, enhancer.enhance(dec, stored, axis=args.axis))
            archive = container.GwlzArchive.build(payload, stored, (base, enh), args.axis)
            imp = metrics.improvement_pct(base, enh) if math.isfinite(base) and base > 0 else math.nan
            rows.append([reb, groups, base, enh, imp, base_codec.ratio(vol, payload),
                         container.overhead_ratio(archive)])
            if args.loss_dir:
                os.makedirs(args.loss_dir, exist_ok=True)
                _write_loss_csv(os.path.join(args.loss_dir, f"loss_reb{reb:g}_g{groups}.csv"),
                                bundle.histories)
            log.info("reb=%g groups=%d psnr %.4f -> %.4f", reb, groups, base, enh)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for row in rows:
            w.writerow([row[0], row[1]] + [fmt_value(v) for v in row[2:]])
    _print(f"rows={len(rows)}", f"out={args.out}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gwlz", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a raw FP32 volume into a .gwlz archive")
    p.add_argument("--input", required=True)
    p.add_argument("--dims", required=True, type=_dims)
    p.add_argument("--reb", required=True, type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--no-enhance", action="store_true")
    p.add_argument("--clamp", choices=["none", "bound2e"], default="none",
                   help="clamp mode recommended to decompressors")
    p.add_argument("--loss-csv")
    _add_training(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="reconstruct a volume from a .gwlz archive")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-enhance", action="store_true")
    p.add_argument("--clamp", choices=["none", "bound2e"], default=None)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("enhance", help="train a .gwe sidecar for an external compressor's output")
    p.add_argument("--original", required=True)
    p.add_argument("--decompressed", required=True)
    p.add_argument("--dims", required=True, type=_dims)
    p.add_argument("--e-abs", required=True, type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-csv")
    _add_training(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("apply", help="apply a .gwe sidecar to decompressed data")
    p.add_argument("--decompressed", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dims", type=_dims)
    p.add_argument("--clamp", choices=["none", "bound2e"], default="none")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("stats", help="distortion metrics between two raw volumes")
    p.add_argument("--original", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--dims", required=True, type=_dims)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("inspect", help="describe a .gwlz archive or .gwe sidecar")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gen", help="write a synthetic test volume")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--dims", required=True, type=_dims)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="sweep error bounds and group counts, write CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--dims", required=True, type=_dims)
    p.add_argument("--rebs", required=True, type=_float_list)
    p.add_argument("--groups-list", required=True, type=_int_list)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-dir", help="directory for per-run loss-curve CSVs")
    _add_training(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"gwlz {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GwlzError as exc:
        print(f"gwlz {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"gwlz {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
