import struct
import zlib

import numpy as np
import pytest

from gwlz import container, micro_nn as nn
from gwlz.base_codec import CodecConfig, compress, decompress
from gwlz.container import (GwlzArchive, Sidecar, decode_bundle, encode_bundle, overhead_ratio,
                            read_archive, read_sidecar, weight_bytes, write_archive,
                            write_sidecar)
from gwlz.enhancer import EnhancerBundle, enhance
from gwlz.errors import CorruptionError, DimensionError, FormatError, UnsupportedVersionError
from gwlz.grouping import build_spec, compute_stats
from gwlz.volume_io import SyntheticSpec, gen_synthetic


def make_bundle(x, dec, n_groups, with_models=True, channels=9):
    spec = build_spec(dec, n_groups)
    stats = compute_stats(x, dec, spec)
    rng = np.random.default_rng(n_groups)
    models = []
    for g in range(n_groups):
        if not with_models or (g % 3 == 2):
            models.append(None if not with_models or n_groups < 20 else nn.init_model(g, channels))
            continue
        w = nn.init_model(g, channels)
        w.conv2_w[...] = rng.standard_normal(w.conv2_w.shape).astype(np.float32) * 0.1
        models.append(w)
    loss = rng.random(n_groups).astype(np.float32)
    return EnhancerBundle(spec, stats, models, channels=channels, final_loss=loss)


@pytest.fixture(scope="module")
def sample():
    x = gen_synthetic(SyntheticSpec("gaussian-mixture", (12, 10, 8), seed=2))
    payload, dec = compress(x, CodecConfig.for_volume(x, 1e-3))
    return x, payload, dec


def bundles_equal(a, b):
    return encode_bundle(a) == encode_bundle(b)


def test_bundle_roundtrip(sample):
    x, _, dec = sample
    for n in (1, 5, 20):
        b = make_bundle(x, dec, n)
        back = decode_bundle(encode_bundle(b))
        assert bundles_equal(b, back)
        assert back.spec == b.spec
        for w1, w2 in zip(b.models, back.models):
            assert (w1 is None) == (w2 is None)
            if w1 is not None:
                assert w1.equals(w2)


def test_twenty_model_weight_bytes(sample):
    x, _, dec = sample
    b = make_bundle(x, dec, 20)
    assert b.n_models == 20
    assert weight_bytes(b) == 20 * 832 == 16_640
    blob = encode_bundle(b)
    fixed = 4 + 1 + 19 * 8 + 20 * struct.calcsize("<fffQBf") + 3
    assert len(blob) == fixed + 16_640


def test_archive_roundtrip(tmp_path, sample):
    x, payload, dec = sample
    b = make_bundle(x, dec, 4)
    path = tmp_path / "a.gwlz"
    n = write_archive(path, payload, b, (40.5, 41.25), axis=1, clamp_recommended=True)
    assert n == path.stat().st_size
    ar = read_archive(path)
    assert ar.payload_bytes == payload.to_bytes()
    assert bundles_equal(ar.bundle, b)
    assert (ar.psnr_base, ar.psnr_enhanced, ar.axis) == (40.5, 41.25, 1)
    assert ar.has_enhancer and ar.clamp_recommended
    assert ar.to_bytes() == path.read_bytes()


def test_archive_without_enhancer(tmp_path, sample):
    _, payload, dec = sample
    path = tmp_path / "plain.gwlz"
    write_archive(path, payload, None, (float("inf"), float("inf")))
    ar = read_archive(path)
    assert ar.flags & 1 == 0 and ar.bundle is None
    assert overhead_ratio(ar) == 0.0
    assert decompress(ar.payload).tobytes() == dec.tobytes()


def test_archive_layout_by_hand(sample):
    x, payload, dec = sample
    b = make_bundle(x, dec, 3)
    data = GwlzArchive.build(payload, b, (1.0, 2.0)).to_bytes()
    magic, version, flags = struct.unpack_from("<4sHH", data)
    assert (magic, version, flags) == (b"GWLZ", 1, 1)
    head = struct.calcsize("<4sHH3IddB")
    (plen,) = struct.unpack_from("<Q", data, head)
    (elen,) = struct.unpack_from("<Q", data, head + 8 + plen)
    ar = GwlzArchive.from_bytes(data)
    assert overhead_ratio(ar) == elen / plen
    assert struct.unpack_from("<dd", data, head + 16 + plen + elen) == (1.0, 2.0)
    assert len(data) == head + 16 + plen + elen + 16 + 4


def test_overhead_division_example():
    ar = GwlzArchive(b"p" * 1_000_000, b"e" * 16_640, 0.0, 0.0, flags=1)
    assert overhead_ratio(ar) == pytest.approx(0.01664)


def test_flipped_bytes_detected(sample):
    x, payload, dec = sample
    data = GwlzArchive.build(payload, make_bundle(x, dec, 3), (1.0, 2.0)).to_bytes()
    for pos in range(len(data)):
        bad = bytearray(data)
        bad[pos] ^= 0x01
        with pytest.raises(CorruptionError):
            GwlzArchive.from_bytes(bytes(bad))


def test_unsupported_version(sample):
    _, payload, _ = sample
    data = bytearray(GwlzArchive.build(payload, None, (1.0, 1.0)).to_bytes()[:-4])
    struct.pack_into("<H", data, 4, 999)
    data += struct.pack("<I", zlib.crc32(data))
    with pytest.raises(UnsupportedVersionError):
        GwlzArchive.from_bytes(bytes(data))


def test_truncated_archive(sample):
    _, payload, _ = sample
    data = GwlzArchive.build(payload, None, (1.0, 1.0)).to_bytes()
    with pytest.raises(FormatError):
        GwlzArchive.from_bytes(data[:20])


def test_sidecar_roundtrip(tmp_path, sample):
    x, _, dec = sample
    b = make_bundle(x, dec, 5)
    path = tmp_path / "s.gwe"
    n = write_sidecar(path, b, dec.shape, 2, 0.125)
    assert n == path.stat().st_size
    side = read_sidecar(path)
    assert (side.dims, side.axis, side.e_abs) == (dec.shape, 2, 0.125)
    assert bundles_equal(side.bundle, b)
    assert side.to_bytes() == path.read_bytes()
    with pytest.raises(DimensionError):
        side.check_dims((12, 10, 9))
    data = path.read_bytes()
    for pos in range(0, len(data), 5):
        bad = bytearray(data)
        bad[pos] ^= 0x80
        with pytest.raises(CorruptionError):
            Sidecar.from_bytes(bytes(bad))


def test_zero_model_sidecar_is_identity(sample):
    x, _, dec = sample
    b = make_bundle(x, dec, 4, with_models=False)
    side = Sidecar.from_bytes(Sidecar(dec.shape, 0, 1.0, encode_bundle(b)).to_bytes())
    assert enhance(dec, side.bundle).tobytes() == dec.tobytes()


def test_overhead_shrinks_with_reb():
    x = gen_synthetic(SyntheticSpec("cosine-field", (24, 24, 24), seed=1))
    ratios = []
    for reb in (1e-2, 1e-3, 1e-4):
        payload, dec = compress(x, CodecConfig.for_volume(x, reb))
        b = make_bundle(x, dec, 4)
        ratios.append(overhead_ratio(GwlzArchive.build(payload, b, (0.0, 0.0))))
    assert ratios[0] > ratios[1] > ratios[2] > 0
