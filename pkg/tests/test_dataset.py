import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavesel.chanmodels import derive_seed
from wavesel.dataset import (
    HEADER,
    MAGIC,
    Sample,
    decode_split,
    encode_image,
    encode_split,
    generate_dataset,
    generate_split,
    label_sample,
    load_dataset,
    observe_interval,
    qam_pixel,
    read_manifest,
    save_dataset,
    scenario_from_manifest,
    snr_pixel,
)
from wavesel.errors import ChecksumError, DatasetFormatError, TruncatedFileError, VersionMismatchError


@pytest.fixture
def small_split(tiny_scenario):
    return generate_split(tiny_scenario, 6, 3, master_seed=11)


class TestImage:
    def test_encoding(self):
        H = np.array([[2, -1j, 0.5], [1, 0, 4j]])
        img = encode_image(H, 5.0, 64)
        assert img.dtype == np.float32 and img.shape == (3, 3)
        np.testing.assert_allclose(img[:2], np.abs(H) / 4, rtol=1e-7)
        assert img[2, 0] == pytest.approx(0.5)
        assert img[2, 1] == pytest.approx(0.6)
        assert img[2, 2] == 0

    def test_zero_channel(self):
        img = encode_image(np.zeros((2, 4)), -20, 4)
        assert np.all(img[:2] == 0)

    def test_meta_pixels_clipped(self):
        assert snr_pixel(-40) == 0 and snr_pixel(60) == 1
        assert qam_pixel(4) == pytest.approx(0.2) and qam_pixel(1024) == pytest.approx(1.0)


class TestLabel:
    def test_rule(self):
        assert label_sample(0.1, 0.2) == 0
        assert label_sample(0.3, 0.2) == 1
        assert label_sample(0.2, 0.2) == 1

    @pytest.mark.parametrize("bad", [(float("nan"), 0.1), (-0.1, 0.1)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            label_sample(*bad)


class TestGeneration:
    def test_sample_contents(self, tiny_scenario):
        s, pair = observe_interval(tiny_scenario, derive_seed(3, 0))
        assert s.image.shape == (5, 16)
        assert s.snr_db in tiny_scenario.snr_set_db and s.qam in tiny_scenario.qam_set
        assert s.mse_otfs == np.float32(pair.otfs) and s.mse_ofdm == np.float32(pair.ofdm)
        assert s.label == label_sample(s.mse_otfs, s.mse_ofdm)
        assert s.model_name in ("EPA", "EVA", "ETU")

    def test_deterministic(self, tiny_scenario):
        assert generate_dataset(tiny_scenario, 4, 5) == generate_dataset(tiny_scenario, 4, 5)

    def test_index_offsets(self, tiny_scenario):
        full = generate_dataset(tiny_scenario, 5, 8)
        assert generate_dataset(tiny_scenario, 2, 8, start_index=3) == full[3:]

    def test_split_disjoint(self, small_split):
        train, test, manifest = small_split
        assert not {s.seed for s in train} & {s.seed for s in test}
        assert manifest.train_index_range == (0, 6) and manifest.test_index_range == (6, 9)
        assert [s.seed for s in test] == [derive_seed(11, i) for i in range(6, 9)]

    def test_bad_count(self, tiny_scenario):
        with pytest.raises(ValueError):
            generate_dataset(tiny_scenario, 0, 1)


class TestBinaryFormat:
    def test_round_trip(self, small_split):
        train, _, _ = small_split
        buf = encode_split(train, 4, 16)
        assert buf[:4] == MAGIC
        assert decode_split(buf) == train
        assert encode_split(decode_split(buf), 4, 16) == buf

    def test_empty(self):
        assert decode_split(encode_split([], 4, 16)) == []

    def test_corrupted_byte(self, small_split):
        buf = bytearray(encode_split(small_split[0], 4, 16))
        buf[HEADER.size + 10] ^= 0x01
        with pytest.raises(ChecksumError):
            decode_split(bytes(buf))

    def test_version_mismatch(self, small_split):
        buf = bytearray(encode_split(small_split[0], 4, 16))
        buf[4] = 2
        with pytest.raises(VersionMismatchError):
            decode_split(bytes(buf))

    def test_truncated(self, small_split):
        buf = encode_split(small_split[0], 4, 16)
        for cut in (3, HEADER.size + 7, len(buf) - 1):
            with pytest.raises(TruncatedFileError):
                decode_split(buf[:cut])

    def test_trailing_bytes_and_magic(self, small_split):
        buf = encode_split(small_split[0], 4, 16)
        with pytest.raises(DatasetFormatError):
            decode_split(buf + b"\0")
        with pytest.raises(DatasetFormatError):
            decode_split(b"XXXX" + buf[4:])

    def test_shape_mismatch(self, small_split):
        with pytest.raises(ValueError):
            encode_split(small_split[0], 5, 16)


@settings(max_examples=30, deadline=None)
@given(
    records=st.lists(
        st.tuples(
            st.sampled_from([-20.0, 0.0, 30.0]), st.sampled_from([4, 1024]), st.integers(0, 1),
            st.floats(0, 1, width=32), st.floats(0, 1, width=32), st.sampled_from(["EPA", "EVA", "ETU"]),
            st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1),
        ),
        max_size=5,
    )
)
def test_round_trip_property(records):
    samples = []
    for snr, qam, label, a, b, name, seed, img_seed in records:
        img = np.random.default_rng(img_seed).random((3, 4)).astype(np.float32)
        samples.append(Sample(img, snr, qam, label, a, b, name, seed))
    assert decode_split(encode_split(samples, 2, 4)) == samples


class TestDirectory:
    def test_save_load(self, tmp_path, small_split):
        train, test, manifest = small_split
        save_dataset(tmp_path / "d", train, test, manifest)
        m2, tr2, te2 = load_dataset(tmp_path / "d")
        assert tr2 == train and te2 == test
        assert m2.to_dict() == manifest.to_dict()
        assert sorted(p.name for p in (tmp_path / "d").iterdir()) == ["manifest.json", "test.bin", "train.bin"]

    def test_manifest_only(self, tmp_path, small_split):
        train, test, manifest = small_split
        save_dataset(tmp_path, train, test, manifest)
        (tmp_path / "train.bin").unlink()
        m = read_manifest(tmp_path)
        assert m.master_seed == 11 and m.train_count == 6
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path)

    def test_manifest_version(self, tmp_path, small_split):
        save_dataset(tmp_path, *small_split)
        d = json.loads((tmp_path / "manifest.json").read_text())
        d["format_version"] = 99
        (tmp_path / "manifest.json").write_text(json.dumps(d))
        with pytest.raises(VersionMismatchError):
            read_manifest(tmp_path)

    def test_regenerate_from_manifest(self, tmp_path, small_split, tiny_scenario):
        train, test, manifest = small_split
        save_dataset(tmp_path, train, test, manifest)
        sc = scenario_from_manifest(read_manifest(tmp_path))
        assert sc == tiny_scenario
        assert generate_dataset(sc, 3, 11, start_index=6) == test
