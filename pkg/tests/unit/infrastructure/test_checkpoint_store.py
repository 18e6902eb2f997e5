"""
Tests for versioned checkpoint files
"""
import pytest
import torch

from domain.model.errors import CorruptCheckpoint, VersionMismatch
from domain.model.train_config import LossRecord, TrainState
from domain.service.network import build_model
from infrastructure.persistence.checkpoint.checkpoint_store import (
    CheckpointBundle,
    CheckpointStore,
    checkpoint_load,
    checkpoint_save,
)


@pytest.fixture
def bundle(tiny_config, tiny_train_config, toy_codebook):
    torch.manual_seed(0)
    model = build_model(tiny_config, toy_codebook)
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
    model(torch.zeros(2, 1, 64, 64)).ab_hat.sum().backward()
    optimizer.step()
    state = TrainState(
        step=7,
        epoch=1,
        model_state=model.state_dict(),
        optimizer_state=optimizer.state_dict(),
        history=[LossRecord(7, 1.5, 2.5, 4.0, 0.25)],
        rng_state={'torch': torch.get_rng_state(), 'data_epoch': 1},
    )
    return CheckpointBundle(tiny_config, tiny_train_config, toy_codebook, state)


def test_round_trip_restores_everything(tmp_path, bundle):
    path = checkpoint_save(bundle.state, tmp_path / "a.ckpt", bundle.network_config,
                           bundle.train_config, bundle.codebook)
    loaded = checkpoint_load(path)
    assert loaded.network_config == bundle.network_config
    assert loaded.train_config == bundle.train_config
    assert loaded.codebook.fingerprint() == bundle.codebook.fingerprint()
    assert loaded.state.step == 7 and loaded.state.epoch == 1
    assert loaded.state.history == bundle.state.history
    for key, value in bundle.state.model_state.items():
        assert torch.equal(loaded.state.model_state[key], value)
    assert torch.equal(loaded.state.rng_state['torch'], bundle.state.rng_state['torch'])
    moments = loaded.state.optimizer_state['state'][0]['exp_avg']
    assert torch.equal(moments, bundle.state.optimizer_state['state'][0]['exp_avg'])


def test_no_temporary_file_left(tmp_path, bundle):
    CheckpointStore().save(tmp_path / "b.ckpt", bundle)
    assert [p.name for p in tmp_path.iterdir()] == ["b.ckpt"]


def test_overwrite_replaces_previous(tmp_path, bundle):
    store = CheckpointStore()
    path = store.save(tmp_path / "latest.ckpt", bundle)
    bundle.state.step = 9
    store.save(path, bundle)
    assert store.load(path).state.step == 9


def test_version_byte_mismatch(tmp_path, bundle):
    path = CheckpointStore(version=2).save(tmp_path / "v2.ckpt", bundle)
    with pytest.raises(VersionMismatch):
        CheckpointStore().load(path)
    data = bytearray(CheckpointStore().save(tmp_path / "v1.ckpt", bundle).read_bytes())
    data[6] = 9
    (tmp_path / "v9.ckpt").write_bytes(bytes(data))
    with pytest.raises(VersionMismatch):
        checkpoint_load(tmp_path / "v9.ckpt")


def test_truncated_file(tmp_path, bundle):
    path = CheckpointStore().save(tmp_path / "c.ckpt", bundle)
    data = path.read_bytes()
    path.write_bytes(data[:-100])
    with pytest.raises(CorruptCheckpoint):
        checkpoint_load(path)
    path.write_bytes(data[:20])
    with pytest.raises(CorruptCheckpoint):
        checkpoint_load(path)


def test_flipped_payload_byte(tmp_path, bundle):
    path = CheckpointStore().save(tmp_path / "d.ckpt", bundle)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CorruptCheckpoint, match="digest"):
        checkpoint_load(path)


def test_foreign_file(tmp_path):
    path = tmp_path / "random.ckpt"
    path.write_bytes(b"not a checkpoint at all, just some bytes long enough for a header")
    with pytest.raises(CorruptCheckpoint):
        checkpoint_load(path)
