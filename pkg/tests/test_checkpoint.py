import numpy as np

from causerl.checkpoint import assign_params, load_params, save_params
from causerl.encoders import MLPHead
from causerl.selfrl import OnlineNetwork, SelfRLConfig
from causerl.tensor import Tensor


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    named = {
        "w": Tensor(rng.normal(size=(7, 3)) * 1e-7, requires_grad=True),
        "b": Tensor(rng.normal(size=5) * 1e9, requires_grad=True),
        "scalar": Tensor(np.array(np.pi), requires_grad=True),
    }
    path = tmp_path / "params.json"
    save_params(path, named)
    doc = load_params(path)
    for name, p in named.items():
        assert np.array_equal(doc["params"][name], p.data)
        assert doc["params"][name].dtype == np.float64


def test_assign_into_fresh_model(tmp_path):
    config = SelfRLConfig(d_emb=4, hidden=3, proj_dim=4)
    original = OnlineNetwork(config, np.random.default_rng(1))
    path = tmp_path / "net.json"
    save_params(path, original.named_parameters(), extra={"hidden": 3})

    fresh = OnlineNetwork(config, np.random.default_rng(99))
    doc = load_params(path)
    assert doc["hidden"] == 3
    assign_params(fresh.named_parameters(), doc["params"])
    for a, b in zip(fresh.parameters(), original.parameters()):
        assert np.array_equal(a.data, b.data)


def test_assign_rejects_shape_mismatch(tmp_path):
    import pytest

    from causerl.errors import ShapeMismatchError

    head = MLPHead(3, 2, 2, np.random.default_rng(2))
    path = tmp_path / "head.json"
    save_params(path, head.named_parameters("head"))
    other = MLPHead(4, 2, 2, np.random.default_rng(3))
    with pytest.raises(ShapeMismatchError):
        assign_params(other.named_parameters("head"),
                      load_params(path)["params"])
