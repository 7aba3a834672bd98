"""Single end-to-end run on the skewed synthetic field.

    python3 scripts/desk_experiment.py --dims 64x64x64 --reb 1e-2 --groups 4 --epochs 100
"""
import argparse
import csv
import time

from gwlz import pipeline
from gwlz.cli import _dims
from gwlz.micro_nn import TrainConfig
from gwlz.volume_io import SyntheticSpec, gen_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", default="skewed-exponential")
    ap.add_argument("--dims", type=_dims, default=(64, 64, 64))
    ap.add_argument("--field-seed", type=int, default=7)
    ap.add_argument("--reb", type=float, default=1e-2)
    ap.add_argument("--groups", type=int, default=4)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--channels", type=int, default=9)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--loss-csv", help="per-epoch loss of every group")
    args = ap.parse_args()

    vol = gen_synthetic(SyntheticSpec(args.kind, args.dims, seed=args.field_seed))
    cfg = TrainConfig(epochs=args.epochs, lr0=args.lr, seed=args.seed)
    start = time.perf_counter()
    res = pipeline.compress_volume(vol, args.reb, args.groups, cfg=cfg, channels=args.channels,
                                   threads=args.threads)
    elapsed = time.perf_counter() - start
    for line in res.report.lines():
        print(line)
    ar = res.archive
    print(f"psnr_base={ar.psnr_base:.4f}")
    print(f"psnr_enhanced={ar.psnr_enhanced:.4f}")
    print(f"gain_db={ar.psnr_enhanced - ar.psnr_base:.4f}")
    print(f"final_loss={' '.join(f'{v:.5f}' for v in res.bundle.final_loss)}")
    print(f"seconds={elapsed:.1f}")
    if args.loss_csv:
        hist = res.bundle.histories
        with open(args.loss_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch"] + [f"group{g}" for g in range(len(hist))])
            for e in range(max(len(h) for h in hist)):
                w.writerow([e] + [f"{h[e]:.6g}" if e < len(h) else "" for h in hist])


if __name__ == "__main__":
    main()
