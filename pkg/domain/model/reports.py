"""
Evaluation, probe and ablation reports
"""
import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class EvalReport(BaseModel):
    """
    PSNR over a folder of colourised images

    Identical images score +inf; the JSON form writes it as Infinity.
    """

    model_config = ConfigDict(ser_json_inf_nan='constants')

    per_image_psnr: List[float] = Field(default_factory=list)
    file_names: List[str] = Field(default_factory=list)
    mean_psnr: float = 0.0
    image_count: int = 0
    skipped: int = 0

    @model_validator(mode='after')
    def _check(self):
        if any(not (v >= 0.0) for v in self.per_image_psnr):
            raise ValueError("PSNR values must be ≥ 0 or +inf")
        if self.image_count != len(self.per_image_psnr):
            raise ValueError("image_count must equal the number of PSNR values")
        return self

    @classmethod
    def from_values(cls, values: List[float], file_names: List[str], skipped: int = 0) -> "EvalReport":
        mean = math.fsum(values) / len(values) if values else 0.0
        return cls(per_image_psnr=list(values), file_names=list(file_names),
                   mean_psnr=mean, image_count=len(values), skipped=skipped)


class ProbeReport(BaseModel):
    """Linear-probe accuracy per encoder tap (D1..D4)"""

    per_layer_accuracy: List[float]
    feature_dims: List[int]
    pool_sizes: List[int]
    num_classes: int
    train_count: int
    test_count: int
    evaluated_on_train: bool = False
    random_baseline: bool = False
    seed: int = 0

    @model_validator(mode='after')
    def _check(self):
        if any(d >= 10000 for d in self.feature_dims):
            raise ValueError("Pooled feature dimensionality must stay below 10000")
        if any(not 0.0 <= a <= 1.0 for a in self.per_layer_accuracy):
            raise ValueError("Accuracies must lie in [0, 1]")
        return self


class AblationRow(BaseModel):
    """One variant of the capsule/skip ablation"""

    variant: str
    label: str
    mean_psnr: Optional[float] = None
    final_l_q: Optional[float] = None
    final_l_c: Optional[float] = None
    final_total: Optional[float] = None
    steps: int = 0
    data_seed_hash: str
    status: str = "ok"

    @classmethod
    def header(cls) -> List[str]:
        return list(cls.model_fields)
