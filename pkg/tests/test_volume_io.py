import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gwlz.errors import ConfigError, DataError, FormatError
from gwlz.volume_io import (SyntheticSpec, as_volume, gen_synthetic, get_slice, load_raw,
                            parse_dims, save_raw, vrange)


def _skewness(x):
    x = np.asarray(x, np.float64).ravel()
    d = x - x.mean()
    return float(np.mean(d**3) / np.mean(d**2) ** 1.5)


def test_load_raw_decodes_little_endian(tmp_path):
    path = tmp_path / "v.f32"
    path.write_bytes(bytes([0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40]))
    vol = load_raw(path, (1, 1, 2), "little")
    assert vol.dtype == np.float32
    assert vol.ravel().tolist() == [1.0, 2.0]


def test_load_raw_zero_file(tmp_path):
    path = tmp_path / "z.f32"
    path.write_bytes(bytes(32))
    vol = load_raw(path, (2, 2, 2))
    assert vol.shape == (2, 2, 2)
    assert not vol.any()


def test_load_raw_size_mismatch(tmp_path):
    path = tmp_path / "bad.f32"
    path.write_bytes(bytes(7))
    with pytest.raises(FormatError, match="8 bytes"):
        load_raw(path, (1, 1, 2))


def test_load_raw_rejects_nan_with_index(tmp_path):
    path = tmp_path / "nan.f32"
    path.write_bytes(struct.pack("<3f", 1.0, float("nan"), 2.0))
    with pytest.raises(DataError, match="index 1"):
        load_raw(path, (1, 1, 3))


def test_save_raw_roundtrip_and_count(tmp_path):
    vol = as_volume(np.array([1.0, 2.0]), (1, 1, 2))
    path = tmp_path / "v.f32"
    assert save_raw(vol, path) == 8
    assert np.array_equal(load_raw(path, (1, 1, 2)), vol)
    assert save_raw(as_volume(np.zeros((2, 2, 2))), tmp_path / "z.f32") == 32


def test_mismatched_byte_order_swaps_bytes(tmp_path):
    path = tmp_path / "one.f32"
    save_raw(as_volume(np.ones((1, 1, 1))), path, "little")
    swapped = load_raw(path, (1, 1, 1), "big")
    # 0x0000803F as binary32: subnormal 0x803F * 2**-149
    assert float(swapped[0, 0, 0]) == pytest.approx(0x803F * 2.0**-149, rel=1e-7)
    assert float(swapped[0, 0, 0]) == pytest.approx(4.6006e-41, rel=1e-4)


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=3, max_dims=3, max_side=5),
                  elements=st.floats(width=32, allow_nan=False, allow_infinity=False)),
       st.sampled_from(["little", "big"]))
def test_raw_roundtrip_bit_exact(tmp_path_factory, arr, order):
    path = tmp_path_factory.mktemp("rt") / "v.f32"
    save_raw(arr, path, order)
    back = load_raw(path, arr.shape, order)
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_vrange_examples():
    # Temperature field of the Nyx sample: min 2281, max 4783k -> range ~4780k
    assert vrange(np.array([2281.0, 8453.0, 4_783_000.0])) == pytest.approx(4_780_719.0)
    assert vrange(np.full((3, 3, 3), 7.0, np.float32)) == 0.0
    assert vrange(np.array([-1.0, 0.0, 3.0])) == 4.0


def test_gen_constant():
    vol = gen_synthetic(SyntheticSpec("constant", (4, 4, 4), amplitude=5.0))
    assert np.all(vol == 5.0)


@pytest.mark.parametrize("kind", ["constant", "cosine-field", "gaussian-mixture", "skewed-exponential"])
def test_gen_deterministic(kind):
    spec = SyntheticSpec(kind, (8, 9, 10), seed=42, amplitude=2.0)
    a, b = gen_synthetic(spec), gen_synthetic(spec)
    assert a.shape == (8, 9, 10)
    assert a.tobytes() == b.tobytes()
    assert np.all(np.isfinite(a))


def test_skewed_exponential_is_long_tailed():
    vol = gen_synthetic(SyntheticSpec("skewed-exponential", (32, 32, 32), seed=7))
    assert vol.min() > 0
    assert _skewness(vol) > 1.0


def test_synthetic_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec("nope", (2, 2, 2))
    with pytest.raises(ConfigError):
        SyntheticSpec("constant", (2, 0, 2))
    with pytest.raises(ConfigError):
        SyntheticSpec("constant", (2, 2, 2), amplitude=0.0)


def test_get_slice_examples():
    vol = as_volume(np.arange(8, dtype=np.float32), (2, 2, 2))
    assert get_slice(vol, 0, 1).tolist() == [[4.0, 5.0], [6.0, 7.0]]
    const = as_volume(np.full((3, 2, 2), 1.5))
    for i in range(3):
        assert np.all(get_slice(const, 0, i) == 1.5)
    with pytest.raises(IndexError):
        get_slice(vol, 2, 2)


@given(st.tuples(*[st.integers(1, 5)] * 3), st.integers(0, 2))
def test_slices_tile_volume_once(dims, axis):
    vol = as_volume(np.arange(np.prod(dims), dtype=np.float32), dims)
    seen = np.concatenate([get_slice(vol, axis, i).ravel() for i in range(dims[axis])])
    assert sorted(seen.tolist()) == list(range(int(np.prod(dims))))


def test_parse_dims():
    assert parse_dims("64x32x16") == (64, 32, 16)
    for bad in ("64x32", "axbxc", "0x1x1"):
        with pytest.raises(ConfigError):
            parse_dims(bad)
