"""Compression ratio and enhancer overhead across error bounds for a fixed bundle size.

    python3 scripts/overhead_sweep.py --groups 20 --rebs 1e-2,1e-3,1e-4
"""
import argparse

from gwlz import base_codec, container, micro_nn
from gwlz.cli import _dims, _float_list
from gwlz.enhancer import EnhancerBundle
from gwlz.grouping import build_spec, compute_stats
from gwlz.volume_io import SyntheticSpec, gen_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", default="skewed-exponential")
    ap.add_argument("--dims", type=_dims, default=(64, 64, 64))
    ap.add_argument("--field-seed", type=int, default=7)
    ap.add_argument("--groups", type=int, default=20)
    ap.add_argument("--rebs", type=_float_list, default=[1e-2, 1e-3, 1e-4])
    args = ap.parse_args()

    vol = gen_synthetic(SyntheticSpec(args.kind, args.dims, seed=args.field_seed))
    print("reb,payload_bytes,enhancer_bytes,weight_bytes,cr,overhead")
    for reb in args.rebs:
        payload, dec = base_codec.compress(vol, base_codec.CodecConfig.for_volume(vol, reb))
        spec = build_spec(dec, args.groups)
        bundle = EnhancerBundle(spec, compute_stats(vol, dec, spec),
                                [micro_nn.init_model(g) for g in range(args.groups)])
        ar = container.GwlzArchive.build(payload, bundle, (0.0, 0.0))
        print(f"{reb:g},{len(ar.payload_bytes)},{len(ar.enhancer_bytes)},"
              f"{container.weight_bytes(bundle)},{base_codec.ratio(vol, payload):.3f},"
              f"{container.overhead_ratio(ar):.5f}")


if __name__ == "__main__":
    main()
