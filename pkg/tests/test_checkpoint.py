import numpy as np
import pytest

from flowcast import checkpoint as ckpt


def sample_params():
    rng = np.random.default_rng(0)
    return {
        "stage1.block1.embed.weight": rng.normal(size=(8, 1, 1, 3)).astype(np.float32),
        "es.attn.weight": np.asarray(1.0, dtype=np.float32),   # 0-d scalar parameter
        "head.out.bias": rng.normal(size=12).astype(np.float32),
    }


def test_round_trip(tmp_path):
    params = sample_params()
    path = str(tmp_path / "model.ckpt")
    ckpt.save(path, params, {"run": {"train": {"seed": 3}}}, epoch=7, val_mae=1.25)
    loaded, header = ckpt.load(path)
    assert set(loaded) == set(params)
    for name in params:
        assert loaded[name].shape == params[name].shape
        assert np.array_equal(loaded[name], params[name])
    assert header["epoch"] == 7
    assert header["val_mae"] == 1.25
    assert header["config"]["run"]["train"]["seed"] == 3


def test_corrupt_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"WRONGMAG" + b"\x00" * 64)
    with pytest.raises(ckpt.CheckpointError, match="magic"):
        ckpt.load(str(path))


def test_truncated_blob_rejected(tmp_path):
    path = str(tmp_path / "model.ckpt")
    ckpt.save(path, sample_params(), {}, epoch=0, val_mae=0.0)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-5])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load(path)


def test_missing_file_rejected():
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load("/nonexistent/model.ckpt")
