import pytest
import torch

from otsvad.model import FrontendVariant, OtsVadModel
from otsvad.nn import CheckpointError, ShapeError, load_checkpoint
from otsvad.testing import tiny_model_config


@pytest.mark.parametrize("multichannel", [False, True])
def test_forward_shapes(multichannel):
    model = OtsVadModel(tiny_model_config(multichannel=multichannel)).eval()
    channels = 2 if multichannel else 1
    embeddings = model.embed(torch.randn(1, channels, 80, 40))
    assert embeddings.shape == (1, channels, 5, 8)
    banks = torch.randn(1, channels, 2, 8)
    assert model.detect(banks, embeddings).shape == (1, 5, 2)


def test_mono_model_rejects_channels():
    model = OtsVadModel(tiny_model_config())
    with pytest.raises(ShapeError, match="multichannel"):
        model.detect(torch.zeros(1, 2, 2, 8), torch.zeros(1, 2, 5, 8))


@pytest.mark.parametrize("variant", list(FrontendVariant))
def test_save_load(tmp_path, variant):
    config = tiny_model_config(variant=variant)
    model = OtsVadModel(config).eval()
    model.save(tmp_path / "m.ckpt", {"stage": 1})
    loaded = OtsVadModel.from_checkpoint(tmp_path / "m.ckpt", config).eval()
    features = torch.randn(1, 1, 80, 24)
    banks = torch.randn(1, 1, 2, 8)
    assert torch.allclose(model(features, banks), loaded(features, banks))


def test_load_mismatched_config(tmp_path):
    OtsVadModel(tiny_model_config()).save(tmp_path / "m.ckpt")
    with pytest.raises(CheckpointError, match="do not match"):
        OtsVadModel.from_checkpoint(tmp_path / "m.ckpt", tiny_model_config(embedding_dim=16))


def test_load_missing_namespace(tmp_path):
    OtsVadModel(tiny_model_config()).save(tmp_path / "m.ckpt")
    with pytest.raises(CheckpointError, match="namespaces"):
        OtsVadModel.from_checkpoint(tmp_path / "m.ckpt", tiny_model_config(multichannel=True))


def test_checkpoint_records_config(tmp_path):
    OtsVadModel(tiny_model_config()).save(tmp_path / "m.ckpt", {"stage": 2, "step": 40, "der": 18.5})
    metadata = load_checkpoint(tmp_path / "m.ckpt").metadata
    assert (metadata["stage"], metadata["step"], metadata["der"]) == (2, 40, 18.5)
    assert metadata["model"]["frontend"]["embedding_dim"] == 8
    assert metadata["model"]["backend"]["num_speakers"] == 2
