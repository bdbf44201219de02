import numpy as np
import pytest

from attnagent.data import DatasetInfo, WindowDataset, read_split


def test_dataset_info_matches_manifest(dataset_dir):
    info = DatasetInfo.load(dataset_dir)
    assert info.T == 50 and info.width == 40
    assert info.record_bytes == 50 * 40 * 4 + 1


def test_read_split_shapes_and_labels(dataset_dir):
    info = DatasetInfo.load(dataset_dir)
    for split, count in (("train", info.train_count), ("test", info.test_count)):
        windows, labels = read_split(dataset_dir, split)
        assert windows.shape == (count, 50, 40)
        assert windows.dtype == np.float32
        assert set(np.unique(labels)).issubset({-1, 0, 1})


def test_window_dataset_torch_view(dataset_dir):
    ds = WindowDataset(dataset_dir, "test")
    x, y = ds[0]
    assert x.shape == (50, 40)
    assert int(y) in (0, 1, 2)
    counts = ds.class_counts()
    assert int(counts.sum()) == len(ds)


def test_truncated_file_rejected(tmp_path, dataset_dir):
    import shutil

    shutil.copy(dataset_dir / "manifest.json", tmp_path / "manifest.json")
    data = (dataset_dir / "test.bin").read_bytes()
    (tmp_path / "test.bin").write_bytes(data[:-5])
    with pytest.raises(ValueError):
        read_split(tmp_path, "test")
