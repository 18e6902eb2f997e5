"""
Versioned checkpoint files

Layout:
    magic     6 bytes  b'UCAPS\\0'
    version   1 byte
    length    8 bytes  big-endian payload size
    digest   32 bytes  sha256 of the payload
    payload            torch.save of tensors and primitives only

The payload loads with weights_only=True.
"""
import hashlib
import io
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict

import torch

from domain.model.errors import CorruptCheckpoint, VersionMismatch
from domain.model.network_config import NetworkConfig
from domain.model.train_config import LossRecord, TrainConfig, TrainState
from domain.service.quantizer import QuantizerCodebook
from infrastructure.persistence.codebook.codebook_store import codebook_from_payload, codebook_to_payload

logger = logging.getLogger(__name__)

MAGIC = b'UCAPS\0'
FORMAT_VERSION = 1
_HEADER = struct.Struct('>6sBQ32s')


@dataclass
class CheckpointBundle:
    """Everything a checkpoint file restores"""

    network_config: NetworkConfig
    train_config: TrainConfig
    codebook: QuantizerCodebook
    state: TrainState


class CheckpointStore:
    """Reads and writes checkpoint files atomically"""

    def __init__(self, version: int = FORMAT_VERSION):
        self.version = version

    def save(self, path: Path, bundle: CheckpointBundle) -> Path:
        """
        Write a checkpoint via a temporary file and rename

        Args:
            path: destination file
            bundle: configs, codebook and train state

        Returns:
            Path: the written file
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        buffer = io.BytesIO()
        torch.save(self._to_payload(bundle), buffer)
        payload = buffer.getvalue()
        header = _HEADER.pack(MAGIC, self.version, len(payload), hashlib.sha256(payload).digest())

        tmp = path.with_name(path.name + '.tmp')
        try:
            with open(tmp, 'wb') as f:
                f.write(header)
                f.write(payload)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except OSError as e:
            logger.error(f"✗ Failed to write checkpoint {path}: {e}")
            tmp.unlink(missing_ok=True)
            raise

        logger.info(f"✓ Checkpoint saved: {path} (step {bundle.state.step})")
        return path

    def load(self, path: Path, map_location: str = 'cpu') -> CheckpointBundle:
        """
        Read and verify a checkpoint

        Raises:
            CorruptCheckpoint: bad magic, truncation or digest mismatch
            VersionMismatch: header version differs from this store's
        """
        path = Path(path)
        data = path.read_bytes()
        if len(data) < _HEADER.size:
            raise CorruptCheckpoint(f"{path}: truncated header ({len(data)} bytes)")

        magic, version, length, digest = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise CorruptCheckpoint(f"{path}: not a checkpoint file")
        if version != self.version:
            raise VersionMismatch(f"{path}: format version {version}, expected {self.version}")

        payload = data[_HEADER.size:]
        if len(payload) != length:
            raise CorruptCheckpoint(f"{path}: payload is {len(payload)} bytes, header says {length}")
        if hashlib.sha256(payload).digest() != digest:
            raise CorruptCheckpoint(f"{path}: payload digest mismatch")

        try:
            raw = torch.load(io.BytesIO(payload), map_location=map_location, weights_only=True)
            bundle = self._from_payload(raw)
        except (KeyError, TypeError, ValueError, RuntimeError) as e:
            logger.error(f"✗ Checkpoint {path} could not be decoded: {e}")
            raise CorruptCheckpoint(f"{path}: undecodable payload ({e})")

        logger.info(f"Loaded checkpoint {path} (step {bundle.state.step})")
        return bundle

    @staticmethod
    def _to_payload(bundle: CheckpointBundle) -> Dict[str, Any]:
        state = bundle.state
        return {
            'network_config': bundle.network_config.model_dump(mode='json'),
            'train_config': bundle.train_config.model_dump(mode='json'),
            'codebook': codebook_to_payload(bundle.codebook),
            'step': state.step,
            'epoch': state.epoch,
            'model_state': state.model_state,
            'optimizer_state': state.optimizer_state,
            'history': [record.as_row() for record in state.history],
            'rng_state': state.rng_state,
        }

    @staticmethod
    def _from_payload(raw: Dict[str, Any]) -> CheckpointBundle:
        state = TrainState(
            step=raw['step'],
            epoch=raw['epoch'],
            model_state=raw['model_state'],
            optimizer_state=raw['optimizer_state'],
            history=[LossRecord(*row) for row in raw['history']],
            rng_state=raw['rng_state'],
        )
        return CheckpointBundle(
            network_config=NetworkConfig(**raw['network_config']),
            train_config=TrainConfig(**raw['train_config']),
            codebook=codebook_from_payload(raw['codebook']),
            state=state,
        )


def checkpoint_save(state: TrainState, path: Path, network_config: NetworkConfig,
                    train_config: TrainConfig, codebook: QuantizerCodebook) -> Path:
    return CheckpointStore().save(path, CheckpointBundle(network_config, train_config, codebook, state))


def checkpoint_load(path: Path) -> CheckpointBundle:
    return CheckpointStore().load(path)
