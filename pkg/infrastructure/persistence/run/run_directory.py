"""
Run directory layout

    <root>/
        config.json
        codebook.txt
        checkpoints/step_000100.ckpt, latest.ckpt
        loss_log.csv
        eval_report.json
        probe_report.json
        ablation_report.csv
"""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional

from pydantic import BaseModel

from domain.model.network_config import NetworkConfig
from domain.model.reports import AblationRow
from domain.model.train_config import LossRecord, TrainConfig

logger = logging.getLogger(__name__)

LOSS_LOG_HEADER = ['step', 'l_q', 'l_c', 'total', 'wall_time']


class RunDirectory:
    """Owns the files of one training run"""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.checkpoint_dir.mkdir(exist_ok=True)
        self._loss_file = None
        self._loss_writer = None

    def __enter__(self):
        """Context manager entry"""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit"""
        self.close()

    def close(self):
        if self._loss_file is not None:
            self._loss_file.close()
            self._loss_file = None
            self._loss_writer = None

    @property
    def config_path(self) -> Path:
        return self.root / 'config.json'

    @property
    def codebook_path(self) -> Path:
        return self.root / 'codebook.txt'

    @property
    def checkpoint_dir(self) -> Path:
        return self.root / 'checkpoints'

    @property
    def latest_checkpoint(self) -> Path:
        return self.checkpoint_dir / 'latest.ckpt'

    @property
    def loss_log_path(self) -> Path:
        return self.root / 'loss_log.csv'

    @property
    def eval_report_path(self) -> Path:
        return self.root / 'eval_report.json'

    @property
    def probe_report_path(self) -> Path:
        return self.root / 'probe_report.json'

    @property
    def ablation_report_path(self) -> Path:
        return self.root / 'ablation_report.csv'

    def step_checkpoint(self, step: int) -> Path:
        return self.checkpoint_dir / f'step_{step:06d}.ckpt'

    def write_config(self, network_config: NetworkConfig, train_config: TrainConfig):
        snapshot = {
            'network': network_config.model_dump(mode='json'),
            'train': train_config.model_dump(mode='json'),
        }
        self.config_path.write_text(json.dumps(snapshot, indent=2), encoding='utf-8')

    def open_loss_log(self, truncate_after: Optional[int] = None):
        """
        Open the CSV loss log for appending

        Args:
            truncate_after: when resuming, drop rows with step > this value so
                the log matches the restored history
        """
        self.close()
        path = self.loss_log_path
        if truncate_after is not None and path.exists():
            with open(path, newline='', encoding='utf-8') as f:
                rows = [r for r in csv.DictReader(f) if int(r['step']) <= truncate_after]
            with open(path, 'w', newline='', encoding='utf-8') as f:
                writer = csv.DictWriter(f, fieldnames=LOSS_LOG_HEADER)
                writer.writeheader()
                writer.writerows(rows)
        fresh = truncate_after is None or not path.exists()
        self._loss_file = open(path, 'w' if fresh else 'a', newline='', encoding='utf-8')
        self._loss_writer = csv.writer(self._loss_file)
        if fresh:
            self._loss_writer.writerow(LOSS_LOG_HEADER)

    def log_loss(self, record: LossRecord):
        if self._loss_writer is None:
            self.open_loss_log()
        self._loss_writer.writerow(record.as_row())
        self._loss_file.flush()

    def read_loss_log(self) -> List[LossRecord]:
        if not self.loss_log_path.exists():
            return []
        with open(self.loss_log_path, newline='', encoding='utf-8') as f:
            return [
                LossRecord(int(r['step']), float(r['l_q']), float(r['l_c']), float(r['total']),
                           float(r['wall_time']))
                for r in csv.DictReader(f)
            ]

    @staticmethod
    def write_report(report: BaseModel, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2), encoding='utf-8')
        logger.info(f"✓ Report written: {path}")
        return path

    def write_ablation(self, rows: Iterable[AblationRow]) -> Path:
        with open(self.ablation_report_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=AblationRow.header())
            writer.writeheader()
            for row in rows:
                writer.writerow(row.model_dump())
        logger.info(f"✓ Ablation report written: {self.ablation_report_path}")
        return self.ablation_report_path
