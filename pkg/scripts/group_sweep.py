"""Group-count sweep: fixed per-model size versus an equal total parameter budget.

For each group count n the sweep trains n 9-channel models and, for n=1, a
single wider model with the closest parameter count to the largest group count's
total.  Prints one CSV row per run.

    python3 scripts/group_sweep.py --groups 1,2,4 --epochs 100
"""
import argparse
import sys
import time

import numpy as np

from gwlz import base_codec, enhancer, metrics, micro_nn
from gwlz.cli import _dims, _int_list
from gwlz.micro_nn import TrainConfig
from gwlz.volume_io import SyntheticSpec, gen_synthetic


def equal_budget_channels(n_models, channels=micro_nn.DEFAULT_CHANNELS):
    budget = n_models * micro_nn.param_count(channels)
    return min(range(1, 8 * n_models * channels),
               key=lambda c: abs(micro_nn.param_count(c) - budget))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=_dims, default=(64, 64, 64))
    ap.add_argument("--field-seed", type=int, default=7)
    ap.add_argument("--reb", type=float, default=1e-2)
    ap.add_argument("--groups", type=_int_list, default=[1, 2, 4])
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--strategy", default="quantile")
    args = ap.parse_args()

    vol = gen_synthetic(SyntheticSpec("skewed-exponential", args.dims, seed=args.field_seed))
    payload, dec = base_codec.compress(vol, base_codec.CodecConfig.for_volume(vol, args.reb))
    base = metrics.psnr(vol, dec)
    cfg = TrainConfig(epochs=args.epochs, lr0=args.lr, seed=args.seed)
    wide = equal_budget_channels(max(args.groups))
    runs = [(n, micro_nn.DEFAULT_CHANNELS) for n in args.groups] + [(1, wide)]

    print("groups,channels,params,psnr_base,psnr_enh,mean_final_loss,seconds")
    for n, c in runs:
        start = time.perf_counter()
        b = enhancer.fit(vol, dec, n, args.strategy, cfg, channels=c)
        enh = metrics.psnr(vol, enhancer.enhance(dec, b))
        print(f"{n},{c},{n * micro_nn.param_count(c)},{base:.4f},{enh:.4f},"
              f"{np.nanmean(b.final_loss):.5f},{time.perf_counter() - start:.0f}")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
