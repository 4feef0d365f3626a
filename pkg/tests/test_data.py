import numpy as np
import pytest

from hbfp.io import dump_hbt
from hbfp.training import DatasetSpec, make_dataset


@pytest.mark.parametrize("spec", [
    DatasetSpec(),
    DatasetSpec(kind="gaussians", classes=5, dim=3, n_train=103, n_val=51),
    DatasetSpec(kind="digits", classes=10, n_train=200, n_val=100),
])
def test_shapes_balance_and_determinism(spec):
    xt, yt, xv, yv = make_dataset(spec, seed=3)
    assert xt.dtype == np.float32 and yt.dtype == np.int64
    assert len(xt) == spec.n_train and len(xv) == spec.n_val
    for y, n in ((yt, spec.n_train), (yv, spec.n_val)):
        counts = np.bincount(y)
        k = len(counts)
        assert counts.min() >= n // k and counts.max() <= n // k + 1
    again = make_dataset(spec, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip((xt, yt, xv, yv), again))
    other = make_dataset(spec, seed=4)
    assert not np.array_equal(xt, other[0])


def test_dataset_from_hbt_files(tmp_path):
    x = np.arange(40, dtype=np.float32).reshape(20, 2)
    y = (np.arange(20) % 2).astype(np.float32)
    dump_hbt(tmp_path / "x.hbt", x)
    dump_hbt(tmp_path / "y.hbt", y)
    spec = DatasetSpec(kind="hbt", x_path=str(tmp_path / "x.hbt"), y_path=str(tmp_path / "y.hbt"))
    xt, yt, xv, yv = make_dataset(spec, seed=0)
    assert len(xv) == 5 and len(xt) == 15
    merged = np.concatenate([xt, xv])
    assert sorted(map(tuple, merged)) == sorted(map(tuple, x))

    dump_hbt(tmp_path / "bad.hbt", np.full(20, 0.5, np.float32))
    with pytest.raises(ValueError, match="integers"):
        make_dataset(DatasetSpec(kind="hbt", x_path=str(tmp_path / "x.hbt"),
                                 y_path=str(tmp_path / "bad.hbt")), 0)


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown dataset"):
        make_dataset(DatasetSpec(kind="mnist"), 0)
