"""
Linear probe of the encoder features

For each down-block tap D1..D4 the frozen features are max-pooled (kernel =
stride = s, the smallest s keeping the flattened size below 10000) and a
single linear classifier is trained on them. The backbone is never updated.
"""
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from domain.model.errors import DecodeError, EmptyDataset, LabelMismatch
from domain.model.reports import ProbeReport
from domain.service.network import UCapsNet, build_model
from application.service.dataset_loader import image_to_pair
from infrastructure.service.imaging.image_io import list_images, read_rgb

logger = logging.getLogger(__name__)

FEATURE_LIMIT = 10000
PROBE_EPOCHS = 100
PROBE_LR = 1e-3


@dataclass
class LabelledImages:
    """Normalised L inputs with integer labels"""

    inputs: torch.Tensor
    labels: torch.Tensor
    class_names: List[str]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def load_labelled_folder(data_dir: Path, image_size: int) -> LabelledImages:
    """
    One sub-directory per class; classes in sorted name order

    Raises:
        EmptyDataset: no decodable image at all
        LabelMismatch: a class directory holds no decodable image
    """
    data_dir = Path(data_dir)
    class_dirs = sorted(p for p in data_dir.iterdir() if p.is_dir()) if data_dir.is_dir() else []
    inputs, labels, names = [], [], []
    for label, class_dir in enumerate(class_dirs):
        for path in list_images(class_dir):
            try:
                inputs.append(image_to_pair(read_rgb(path), image_size, path.name).L)
            except DecodeError as e:
                logger.warning(f"✗ {e}")
                continue
            labels.append(label)
        names.append(class_dir.name)
    if not inputs:
        raise EmptyDataset(f"No labelled images under {data_dir}")
    if len(set(labels)) != len(names):
        empty = [n for i, n in enumerate(names) if i not in set(labels)]
        raise LabelMismatch(f"Classes without images: {empty}")
    return LabelledImages(torch.stack(inputs), torch.tensor(labels, dtype=torch.long), names)


def pool_size(channels: int, height: int, width: int, limit: int = FEATURE_LIMIT) -> int:
    """Smallest s ≥ 1 with channels·⌊h/s⌋·⌊w/s⌋ < limit"""
    for s in range(1, max(height, width) + 1):
        if channels * (height // s) * (width // s) < limit:
            return s
    raise ValueError(f"{channels} channels alone exceed the feature limit {limit}")


def stratified_split(labels: torch.Tensor, test_fraction: float = 0.2,
                     seed: int = 0) -> Tuple[torch.Tensor, torch.Tensor]:
    """Deterministic per-class split into (train indices, test indices)"""
    generator = torch.Generator()
    generator.manual_seed(seed)
    train_idx, test_idx = [], []
    for label in torch.unique(labels).tolist():
        members = torch.nonzero(labels == label).flatten()
        members = members[torch.randperm(len(members), generator=generator)]
        n_test = int(len(members) * test_fraction)
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    return torch.cat(train_idx).sort().values, torch.cat(test_idx).sort().values


def backbone_digest(model: nn.Module) -> str:
    """sha256 of every parameter and buffer"""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode('utf-8'))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


@torch.no_grad()
def extract_features(model: UCapsNet, inputs: torch.Tensor,
                     batch_size: int = 32) -> Tuple[List[torch.Tensor], List[int], List[int]]:
    """
    Pooled, flattened features per tap

    Returns:
        features: one (n, dim) tensor per tap
        dims: flattened dimensionality per tap
        pools: pool size per tap
    """
    device = next(model.parameters()).device
    model.eval()
    chunks: List[List[torch.Tensor]] = [[] for _ in range(4)]
    pools: Optional[List[int]] = None
    for start in range(0, inputs.shape[0], batch_size):
        taps = model.features(inputs[start:start + batch_size].to(device)).as_list()
        if pools is None:
            pools = [pool_size(*t.shape[1:]) for t in taps]
        for i, (tap, s) in enumerate(zip(taps, pools)):
            chunks[i].append(F.max_pool2d(tap, kernel_size=s, stride=s).flatten(1).cpu())
    features = [torch.cat(c) for c in chunks]
    return features, [f.shape[1] for f in features], pools


def train_probe(features: torch.Tensor, labels: torch.Tensor, num_classes: int,
                epochs: int = PROBE_EPOCHS, lr: float = PROBE_LR, seed: int = 0) -> nn.Linear:
    """Full-batch Adam on one linear layer"""
    torch.manual_seed(seed)
    classifier = nn.Linear(features.shape[1], num_classes)
    optimizer = torch.optim.Adam(classifier.parameters(), lr=lr)
    for _ in range(epochs):
        optimizer.zero_grad()
        loss = F.cross_entropy(classifier(features), labels)
        loss.backward()
        optimizer.step()
    return classifier


@torch.no_grad()
def accuracy(classifier: nn.Linear, features: torch.Tensor, labels: torch.Tensor) -> float:
    predictions = classifier(features).argmax(dim=1)
    return float((predictions == labels).float().mean())


def linear_probe(
    model: UCapsNet,
    data: LabelledImages,
    epochs: int = PROBE_EPOCHS,
    lr: float = PROBE_LR,
    test_fraction: float = 0.2,
    seed: int = 0,
    random_baseline: bool = False,
) -> ProbeReport:
    """
    Probe every encoder tap of a (frozen) network

    Args:
        model: trained network; untouched by the probe
        data: labelled inputs sized for the network
        epochs: probe training epochs
        test_fraction: per-class held-out share
        seed: split and classifier seed
        random_baseline: probe a freshly initialised network with the same
            config and seed instead

    Raises:
        LabelMismatch: labels and inputs disagree in count
    """
    if data.labels.shape[0] != data.inputs.shape[0]:
        raise LabelMismatch(f"{data.inputs.shape[0]} inputs but {data.labels.shape[0]} labels")
    if data.inputs.shape[0] == 0:
        raise EmptyDataset("Probe dataset is empty")

    if random_baseline:
        torch.manual_seed(seed)
        device = next(model.parameters()).device
        model = build_model(model.config).to(device)

    train_idx, test_idx = stratified_split(data.labels, test_fraction, seed)
    evaluated_on_train = len(test_idx) == 0
    if evaluated_on_train:
        logger.warning("⚠ Split left no test items; reporting training accuracy")
        test_idx = train_idx

    features, dims, pools = extract_features(model, data.inputs)
    accuracies = []
    for layer, feats in enumerate(features, 1):
        classifier = train_probe(feats[train_idx], data.labels[train_idx], data.num_classes, epochs, lr, seed)
        acc = accuracy(classifier, feats[test_idx], data.labels[test_idx])
        accuracies.append(acc)
        logger.info(f"Probe D{layer}: dim {dims[layer - 1]}, pool {pools[layer - 1]}, accuracy {acc:.3f}")

    return ProbeReport(
        per_layer_accuracy=accuracies,
        feature_dims=dims,
        pool_sizes=pools,
        num_classes=data.num_classes,
        train_count=len(train_idx),
        test_count=0 if evaluated_on_train else len(test_idx),
        evaluated_on_train=evaluated_on_train,
        random_baseline=random_baseline,
        seed=seed,
    )
