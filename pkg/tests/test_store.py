"""Feature container and CSV round-trip tests."""

import struct

import numpy as np
import pytest

from conftest import random_box, random_dataset
from featedit.errors import (
    ClassIdError,
    FormatError,
    GeometryError,
    ParseError,
    ShapeError,
    TruncationError,
)
from featedit.store import (
    Dataset,
    DetectionRecord,
    FeatureMap,
    GroundTruthBox,
    LabeledSample,
    read_dataset,
    read_detections,
    read_ground_truth,
    write_dataset,
    write_detections,
    write_ground_truth,
)


class TestFeatureMap:
    def test_rejects_non_finite(self):
        values = np.zeros((2, 3, 3))
        values[1, 2, 2] = np.nan
        with pytest.raises(ValueError):
            FeatureMap(values)

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            FeatureMap(np.zeros((2, 3, 4)))

    def test_flat_is_channel_major(self):
        values = np.arange(2 * 2 * 2, dtype=np.float32).reshape(2, 2, 2)
        assert FeatureMap(values).flat().tolist() == list(range(8))


class TestSampleValidation:
    def test_degenerate_box_rejected(self):
        fm = FeatureMap(np.zeros((1, 2, 2)))
        with pytest.raises(GeometryError):
            LabeledSample(feature=fm, class_id=0, box=(5, 0, 5, 10), image_id=0)

    def test_class_id_must_fit_declared_count(self):
        fm = FeatureMap(np.zeros((1, 2, 2)))
        sample = LabeledSample(feature=fm, class_id=3, box=(0, 0, 1, 1), image_id=0)
        with pytest.raises(ClassIdError):
            Dataset(samples=[sample], num_classes=3)

    def test_mixed_geometry_rejected(self):
        a = LabeledSample(FeatureMap(np.zeros((1, 2, 2))), 0, (0, 0, 1, 1), 0)
        b = LabeledSample(FeatureMap(np.zeros((2, 2, 2))), 0, (0, 0, 1, 1), 1)
        with pytest.raises(ShapeError):
            Dataset(samples=[a, b], num_classes=1)


class TestBinaryContainer:
    def test_empty_dataset_is_24_byte_header(self, tmp_path):
        # magic(5) + pad(1) + version(2) + 4 u32 fields = 24 bytes.
        path = tmp_path / "empty.feat"
        write_dataset(Dataset(samples=[], num_classes=7), path)
        assert path.stat().st_size == 24
        back = read_dataset(path)
        assert len(back) == 0
        assert back.num_classes == 7

    def test_single_value_payload_is_le_float(self, tmp_path):
        path = tmp_path / "one.feat"
        sample = LabeledSample(
            FeatureMap(np.full((1, 1, 1), 3.5)), 0, (0, 0, 1, 1), image_id=0
        )
        write_dataset(Dataset(samples=[sample], num_classes=1), path)
        blob = path.read_bytes()
        assert struct.pack("<f", 3.5) in blob
        # Value sits at the very end: header 24 + fixed 9 + box 16.
        assert blob[-4:] == struct.pack("<f", 3.5)

    def test_hand_assembled_two_sample_file(self, tmp_path):
        # Built byte by byte from the documented layout: C=4, S=2.
        c, s = 4, 2
        values0 = [float(i) for i in range(16)]
        values1 = [0.5 * i - 4.0 for i in range(16)]
        blob = b"FEAT1" + b"\x00" + struct.pack("<H", 1)
        blob += struct.pack("<4I", 2, 3, c, s)
        blob += struct.pack("<IIB", 11, 2, 1)
        blob += struct.pack("<4f", 1.0, 2.0, 9.0, 10.0)
        blob += struct.pack("<16f", *values0)
        blob += struct.pack("<IIB", 12, 0, 0)
        blob += struct.pack("<4f", 0.0, 0.0, 4.0, 4.0)
        blob += struct.pack("<16f", *values1)
        path = tmp_path / "hand.feat"
        path.write_bytes(blob)

        d = read_dataset(path)
        assert len(d) == 2
        assert d.num_classes == 3
        assert (d.channels, d.spatial) == (c, s)
        first, second = d.samples
        assert (first.image_id, first.class_id, first.difficult) == (11, 2, True)
        assert first.box == (1.0, 2.0, 9.0, 10.0)
        assert first.feature.flat().tolist() == values0
        assert (second.image_id, second.class_id, second.difficult) == (12, 0, False)
        assert second.feature.flat().tolist() == values1
        # Channel-major order: channel 1 of sample 0 holds values 4..7.
        assert first.feature.values[1].reshape(-1).tolist() == [4.0, 5.0, 6.0, 7.0]

    def test_round_trip_equality_and_byte_identity(self, tmp_path):
        rng = np.random.default_rng(123)
        d = random_dataset(rng, n=17, num_classes=4, channels=3, spatial=5)
        p1 = tmp_path / "a.feat"
        p2 = tmp_path / "b.feat"
        write_dataset(d, p1)
        back = read_dataset(p1)
        assert back == d
        write_dataset(back, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.feat"
        path.write_bytes(b"NOPE!" + bytes(19))
        with pytest.raises(FormatError):
            read_dataset(path)

    def test_truncated_payload(self, tmp_path):
        rng = np.random.default_rng(5)
        d = random_dataset(rng, n=2, num_classes=1, channels=2, spatial=2)
        path = tmp_path / "trunc.feat"
        write_dataset(d, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(TruncationError):
            read_dataset(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        d = Dataset(samples=[], num_classes=1)
        path = tmp_path / "trail.feat"
        write_dataset(d, path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(FormatError):
            read_dataset(path)

    def test_non_finite_value_names_sample(self, tmp_path):
        rng = np.random.default_rng(9)
        d = random_dataset(rng, n=3, num_classes=1, channels=1, spatial=2)
        path = tmp_path / "nan.feat"
        write_dataset(d, path)
        blob = bytearray(path.read_bytes())
        # Poison the last value of sample index 2.
        blob[-4:] = struct.pack("<f", np.nan)
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="sample 2"):
            read_dataset(path)


class TestDetectionsCsv:
    def test_empty_file_is_empty_list(self, tmp_path):
        path = tmp_path / "dets.csv"
        path.write_text("")
        assert read_detections(path) == []

    def test_single_row(self, tmp_path):
        path = tmp_path / "dets.csv"
        path.write_text("image_id,class_id,score,x1,y1,x2,y2\n7,2,0.5,0,0,10,10\n")
        records = read_detections(path)
        assert records == [
            DetectionRecord(image_id=7, class_id=2, score=0.5, box=(0.0, 0.0, 10.0, 10.0))
        ]

    def test_round_trip_100_random(self, tmp_path):
        rng = np.random.default_rng(77)
        records = [
            DetectionRecord(
                image_id=int(rng.integers(50)),
                class_id=int(rng.integers(5)),
                score=float(rng.normal()),
                box=random_box(rng, f32=False),
            )
            for _ in range(100)
        ]
        path = tmp_path / "dets.csv"
        write_detections(records, path)
        assert read_detections(path) == records

    def test_malformed_row_carries_line_number(self, tmp_path):
        path = tmp_path / "dets.csv"
        path.write_text("image_id,class_id,score,x1,y1,x2,y2\n1,0,0.5,0,0,5,5\n1,zzz,0.5,0,0,5,5\n")
        with pytest.raises(ParseError) as err:
            read_detections(path)
        assert err.value.line == 3

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "dets.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ParseError) as err:
            read_detections(path)
        assert err.value.line == 1


class TestGroundTruthCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(31)
        records = [
            GroundTruthBox(
                image_id=int(rng.integers(20)),
                class_id=int(rng.integers(4)),
                box=random_box(rng, f32=False),
                difficult=bool(rng.random() < 0.3),
            )
            for _ in range(60)
        ]
        path = tmp_path / "gt.csv"
        write_ground_truth(records, path)
        assert read_ground_truth(path) == records

    def test_bad_difficult_flag(self, tmp_path):
        path = tmp_path / "gt.csv"
        path.write_text("image_id,class_id,x1,y1,x2,y2,difficult\n0,0,0,0,1,1,2\n")
        with pytest.raises(ParseError):
            read_ground_truth(path)
