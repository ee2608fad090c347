import json

import numpy as np
import pytest

from flowcast.config import ModelConfig
from flowcast.data import prepare
from flowcast.synthetic import sinusoid_dataset

TINY_CHANNELS = (8, 8, 8, 8)


@pytest.fixture(scope="session")
def tiny_prep():
    ds = sinusoid_dataset(nodes=6, steps=120, seed=1)
    return prepare(ds)


@pytest.fixture()
def tiny_model_cfg():
    return ModelConfig(channels=TINY_CHANNELS, head_hidden=8)


@pytest.fixture(scope="session")
def cli_workspace(tmp_path_factory):
    """A directory with a small csv dataset, a config and a finished training run."""
    from flowcast.cli import main

    root = tmp_path_factory.mktemp("cli")
    ds = sinusoid_dataset(nodes=6, steps=120, seed=1)
    np.savetxt(root / "tiny.csv", ds.values, delimiter=",", fmt="%.4f")
    cfg = {
        "data": {"path": str(root / "tiny.csv"), "format": "csv"},
        "model": {"channels": list(TINY_CHANNELS), "head_hidden": 8},
        "train": {"epochs": 2, "batch_size": 16, "seed": 3},
        "output": {"dir": str(root / "out")},
    }
    (root / "cfg.json").write_text(json.dumps(cfg))
    rc = main(["train", "--config", str(root / "cfg.json")])
    assert rc == 0
    return root
