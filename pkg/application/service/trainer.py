"""
Self-supervised training loop

Adam on the selected loss term, a per-epoch data order fixed by (seed, epoch),
periodic atomic checkpoints and a CSV loss log. A resumed run replays the
exact data order and optimiser state, so its losses match the uninterrupted
run bitwise.
"""
import copy
import logging
import math
import time
from pathlib import Path
from typing import Optional

import torch

from domain.model.errors import NonFiniteInput, NonFiniteLoss
from domain.model.network_config import NetworkConfig
from domain.model.train_config import LossRecord, TrainConfig, TrainState
from domain.service.losses import loss_breakdown
from domain.service.network import UCapsNet, build_model
from domain.service.quantizer import QuantizerCodebook, soft_encode_tensor
from application.service.dataset_loader import ColorizationDataset, batch_loader, load_dataset
from infrastructure.config.config import Config
from infrastructure.persistence.checkpoint.checkpoint_store import CheckpointBundle, CheckpointStore
from infrastructure.persistence.run.run_directory import RunDirectory

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def seed_everything(seed: int, deterministic: bool = True):
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(deterministic, warn_only=True)
    if torch.backends.cudnn.is_available():
        torch.backends.cudnn.benchmark = False
        torch.backends.cudnn.deterministic = deterministic


def parameter_state(model: torch.nn.Module):
    """CPU copy of a state dict"""
    return {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}


def optimizer_state(optimizer: torch.optim.Optimizer):
    """Deep copy of an optimizer state dict, unaffected by later steps"""
    return copy.deepcopy(optimizer.state_dict())


class Trainer:
    """
    Trains one UCapsNet on one dataset

    Attributes:
        model: the network being trained (available after train/resume)
        state: TrainState of the last completed step
    """

    def __init__(
        self,
        train_config: TrainConfig,
        network_config: NetworkConfig,
        codebook: QuantizerCodebook,
        run_dir: Optional[RunDirectory] = None,
        store: Optional[CheckpointStore] = None,
    ):
        """
        Initialize the trainer

        Args:
            train_config: loop hyperparameters
            network_config: architecture; num_bins must equal codebook.Q
            codebook: quantiser for targets and weights
            run_dir: where checkpoints and logs go; nothing is written if None
            store: checkpoint writer
        """
        self.train_config = train_config
        self.network_config = network_config
        self.codebook = codebook
        self.run_dir = run_dir
        self.store = store or CheckpointStore()
        self.device = Config.resolve_device(train_config.device)
        self.model: Optional[UCapsNet] = None
        self.optimizer: Optional[torch.optim.Optimizer] = None
        self.state = TrainState()

    def _build(self, initial: Optional[TrainState] = None):
        cfg = self.train_config
        seed_everything(cfg.seed, Config.DETERMINISTIC)
        self.model = build_model(self.network_config, self.codebook).to(self.device)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=cfg.learning_rate, betas=tuple(cfg.betas), eps=cfg.eps
        )
        if initial is not None:
            self.model.load_state_dict(initial.model_state)
            self.optimizer.load_state_dict(initial.optimizer_state)
            if 'torch' in initial.rng_state:
                torch.set_rng_state(initial.rng_state['torch'])
            self.state = TrainState(step=initial.step, epoch=initial.epoch,
                                    history=list(initial.history), rng_state=dict(initial.rng_state))
        else:
            self.state = TrainState()

    def _snapshot(self) -> TrainState:
        return TrainState(
            step=self.state.step,
            epoch=self.state.epoch,
            model_state=parameter_state(self.model),
            optimizer_state=optimizer_state(self.optimizer),
            history=list(self.state.history),
            rng_state={'torch': torch.get_rng_state()},
        )

    def _checkpoint(self, state: TrainState):
        if self.run_dir is None:
            return
        bundle = CheckpointBundle(self.network_config, self.train_config, self.codebook, state)
        self.store.save(self.run_dir.step_checkpoint(state.step), bundle)
        self.store.save(self.run_dir.latest_checkpoint, bundle)

    def _total_steps(self, steps_per_epoch: int) -> int:
        total = self.train_config.epochs * steps_per_epoch
        if self.train_config.max_steps is not None:
            total = min(total, self.train_config.max_steps)
        return total

    def train(self, dataset: ColorizationDataset, initial: Optional[TrainState] = None) -> TrainState:
        """
        Run the loop from scratch or from a restored state

        Returns:
            TrainState: final state, including parameters and loss history

        Raises:
            NonFiniteLoss: a step produced NaN/Inf; the last checkpoint on
                disk is left untouched
        """
        cfg = self.train_config
        self._build(initial)
        self.model.check_codebook(self.codebook)

        centres, weights = self.codebook.to_tensors(self.device)
        steps_per_epoch = math.ceil(len(dataset) / cfg.batch_size)
        total_steps = self._total_steps(steps_per_epoch)
        wall_offset = self.state.last.wall_time if self.state.last else 0.0
        started = time.perf_counter()

        if self.run_dir is not None:
            self.run_dir.write_config(self.network_config, cfg)
            self.run_dir.open_loss_log(truncate_after=self.state.step if initial is not None else None)

        logger.info(f"Training {cfg.ablation.label} for {total_steps} steps "
                    f"({len(dataset)} images, batch {cfg.batch_size}, lr {cfg.learning_rate}, "
                    f"loss {cfg.loss_mode.value}, device {self.device})")

        self.model.train()
        last_good = None
        while self.state.step < total_steps:
            epoch = self.state.step // steps_per_epoch
            skip = self.state.step - epoch * steps_per_epoch
            self.state.epoch = epoch
            loader = batch_loader(dataset, cfg.batch_size, cfg.seed, epoch, skip, cfg.num_workers)

            for L, ab in loader:
                if self.state.step >= total_steps:
                    break
                record = self._step(L.to(self.device), ab.to(self.device), centres, weights,
                                    wall_offset + time.perf_counter() - started)
                if self.run_dir is not None:
                    self.run_dir.log_loss(record)
                if self.state.step % cfg.log_every == 0 or self.state.step == total_steps:
                    logger.info(f"step {record.step:6d} | l_q {record.l_q:.4f} | "
                                f"l_c {record.l_c:.4f} | total {record.total:.4f}")
                if self.state.step % cfg.checkpoint_every == 0:
                    last_good = self._snapshot()
                    self._checkpoint(last_good)

        self.state.epoch = self.state.step // steps_per_epoch
        final = self._snapshot()
        if last_good is None or last_good.step != final.step:
            self._checkpoint(final)
        if self.run_dir is not None:
            self.run_dir.close()
        logger.info(f"✓ Training finished at step {final.step}")
        self.state = final
        return final

    def _step(self, L: torch.Tensor, ab: torch.Tensor, centres: torch.Tensor,
              weights: torch.Tensor, wall_time: float) -> LossRecord:
        step = self.state.step + 1
        with torch.no_grad():
            z = soft_encode_tensor(ab, centres, self.codebook.k_soft, self.codebook.sigma_soft)

        output = self.model(L)
        try:
            breakdown = loss_breakdown(output.z_hat, z, output.ab_hat, ab, weights)
        except NonFiniteInput as e:
            logger.error(f"✗ Non-finite network output at step {step}: {e}")
            self._abort()
            raise NonFiniteLoss(step, f"Non-finite network output at step {step}: {e}")

        objective = breakdown.objective(self.train_config.loss_mode)
        if not torch.isfinite(breakdown.total):
            logger.error(f"✗ Non-finite loss at step {step}")
            self._abort()
            raise NonFiniteLoss(step)

        self.optimizer.zero_grad(set_to_none=True)
        objective.backward()
        self.optimizer.step()

        l_q, l_c, total = breakdown.as_floats()
        record = LossRecord(step=step, l_q=l_q, l_c=l_c, total=total, wall_time=wall_time)
        self.state.step = step
        self.state.history.append(record)
        return record

    def _abort(self):
        if self.run_dir is not None:
            self.run_dir.close()


def train(cfg: TrainConfig, net_cfg: NetworkConfig, cb: QuantizerCodebook,
          dataset: Optional[ColorizationDataset] = None,
          run_dir: Optional[RunDirectory] = None) -> TrainState:
    """Train on cfg.data_dir (or the given dataset)"""
    if dataset is None:
        if cfg.data_dir is None:
            raise ValueError("TrainConfig.data_dir is required when no dataset is given")
        dataset = load_dataset(cfg.data_dir, cfg.image_size)
    return Trainer(cfg, net_cfg, cb, run_dir).train(dataset)


def resume(checkpoint: Path, dataset: ColorizationDataset, run_dir: Optional[RunDirectory] = None,
           max_steps: Optional[int] = None, epochs: Optional[int] = None,
           store: Optional[CheckpointStore] = None) -> Trainer:
    """
    Continue a run from a checkpoint

    Args:
        checkpoint: checkpoint file
        dataset: the same data the run started with
        run_dir: run directory to keep writing into
        max_steps: optional new global step cap
        epochs: optional new epoch count

    Returns:
        Trainer: finished trainer; its state and model hold the result
    """
    store = store or CheckpointStore()
    bundle = store.load(checkpoint)
    updates = {k: v for k, v in (('max_steps', max_steps), ('epochs', epochs)) if v is not None}
    train_config = bundle.train_config.model_copy(update=updates)
    trainer = Trainer(train_config, bundle.network_config, bundle.codebook, run_dir, store)
    logger.info(f"Resuming from {checkpoint} at step {bundle.state.step}")
    trainer.train(dataset, initial=bundle.state)
    return trainer
