"""
Capsule / skip-connection ablation

Trains the four architecture variants on the same data with the same seed
and codebook, evaluates each on the training folder, and writes one CSV row
per variant. A failing variant is recorded and the remaining ones still run.
"""
import hashlib
import logging
from pathlib import Path
from typing import Iterable, List, Optional

from domain.model.network_config import AblationVariant, NetworkConfig
from domain.model.reports import AblationRow
from domain.model.errors import ColorizationError
from domain.model.train_config import TrainConfig
from domain.service.quantizer import QuantizerCodebook
from application.service.codebook_builder import build_codebook_from_dataset
from application.service.colorizer import Colorizer
from application.service.dataset_loader import ColorizationDataset, load_dataset
from application.service.evaluator import evaluate_folder
from application.service.trainer import Trainer
from infrastructure.persistence.codebook.codebook_store import save_codebook
from infrastructure.persistence.run.run_directory import RunDirectory

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def data_seed_hash(dataset: ColorizationDataset, seed: int) -> str:
    """Identifies the (data, seed) pair every variant is trained on"""
    return hashlib.sha256(f"{dataset.fingerprint()}|{seed}".encode('utf-8')).hexdigest()[:16]


class AblationRunner:
    """Runs every AblationVariant under one shared setup"""

    def __init__(
        self,
        train_config: TrainConfig,
        network_config: NetworkConfig,
        out_dir: Path,
        codebook: Optional[QuantizerCodebook] = None,
    ):
        """
        Args:
            train_config: shared loop settings (data_dir, seed, steps)
            network_config: shared architecture; flags are set per variant
            out_dir: report root, one run directory per variant below it
            codebook: shared quantiser, built from the data when omitted
        """
        self.train_config = train_config
        self.network_config = network_config
        self.out_dir = Path(out_dir)
        self.codebook = codebook
        self.rows: List[AblationRow] = []

    def run(self, dataset: Optional[ColorizationDataset] = None,
            variants: Iterable[AblationVariant] = tuple(AblationVariant)) -> List[AblationRow]:
        cfg = self.train_config
        if dataset is None:
            dataset = load_dataset(cfg.data_dir, cfg.image_size)
        if self.codebook is None:
            self.codebook = build_codebook_from_dataset(dataset)
        network_config = self.network_config.with_bins(self.codebook.Q)
        shared_hash = data_seed_hash(dataset, cfg.seed)

        root = RunDirectory(self.out_dir)
        save_codebook(self.codebook, root.codebook_path)

        self.rows = []
        for variant in variants:
            variant = AblationVariant(variant)
            logger.info(f"\n{'='*60}\nAblation variant: {variant.label}\n{'='*60}")
            row = AblationRow(variant=variant.value, label=variant.label, data_seed_hash=shared_hash)
            try:
                variant_cfg = cfg.model_copy(update={'ablation': variant})
                with RunDirectory(self.out_dir / variant.value) as run_dir:
                    trainer = Trainer(variant_cfg, network_config.for_ablation(variant),
                                      self.codebook, run_dir)
                    state = trainer.train(dataset)
                    report = evaluate_folder(Colorizer(trainer.model, self.codebook, cfg.device),
                                             dataset.data_dir)
                    run_dir.write_report(report, run_dir.eval_report_path)
                last = state.last
                row.mean_psnr = report.mean_psnr
                row.final_l_q = last.l_q if last else None
                row.final_l_c = last.l_c if last else None
                row.final_total = last.total if last else None
                row.steps = state.step
                logger.info(f"✓ {variant.label}: mean PSNR {report.mean_psnr:.2f} dB")
            except (ColorizationError, RuntimeError, ValueError) as e:
                logger.error(f"✗ {variant.label} failed: {e}")
                row.status = f"failed: {e}"
            self.rows.append(row)

        root.write_ablation(self.rows)
        return self.rows
