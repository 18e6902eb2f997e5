"""
Configuration management for the UCapsNet colourisation system
"""
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch
from dotenv import load_dotenv

from domain.model.network_config import NetworkConfig
from domain.model.train_config import TrainConfig

# Load environment variables from .env file
env_path = Path(__file__).parent.parent.parent / '.env'
load_dotenv(dotenv_path=env_path)

PRESETS = ('desk', 'paper')

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _env_flag(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    """Configuration class for the application"""

    # Run artefacts
    RUN_ROOT = Path(os.getenv('UCAPS_RUN_ROOT', 'runs'))

    # Preset used when no --preset flag is given
    PRESET = os.getenv('UCAPS_PRESET', 'desk').lower()

    # auto | cpu | cuda | cuda:N
    DEVICE = os.getenv('UCAPS_DEVICE', 'auto').lower()

    # Checkpoint served by the HTTP API
    API_CHECKPOINT = os.getenv('UCAPS_API_CHECKPOINT')

    LOG_LEVEL = os.getenv('UCAPS_LOG_LEVEL', 'INFO').upper()

    DETERMINISTIC = _env_flag('UCAPS_DETERMINISTIC', 'true')

    @classmethod
    def resolve_device(cls, requested: Optional[str] = None) -> torch.device:
        """Map 'auto' to cuda when available, else cpu"""
        name = (requested or cls.DEVICE or 'auto').lower()
        if name == 'auto':
            name = 'cuda' if torch.cuda.is_available() else 'cpu'
        return torch.device(name)

    @classmethod
    def validate(cls):
        """Validate that all configurations are usable"""
        errors = []

        if cls.PRESET not in PRESETS:
            errors.append(f"UCAPS_PRESET must be one of {PRESETS}, got '{cls.PRESET}'")

        if cls.LOG_LEVEL not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            errors.append(f"UCAPS_LOG_LEVEL '{cls.LOG_LEVEL}' is not a logging level")

        if cls.DEVICE.startswith('cuda') and not torch.cuda.is_available():
            errors.append(f"UCAPS_DEVICE is '{cls.DEVICE}' but CUDA is not available")
        elif cls.DEVICE not in ('auto', 'cpu') and not cls.DEVICE.startswith('cuda'):
            errors.append(f"UCAPS_DEVICE '{cls.DEVICE}' is not auto, cpu or cuda[:N]")

        if cls.API_CHECKPOINT and not Path(cls.API_CHECKPOINT).is_file():
            errors.append(f"UCAPS_API_CHECKPOINT points to a missing file: {cls.API_CHECKPOINT}")

        if errors:
            raise ValueError(f"Configuration errors:\n" + "\n".join(f"  - {e}" for e in errors))

        return True

    @classmethod
    def display(cls):
        """Display current configuration"""
        print("=== Configuration ===")
        print(f"Run root: {cls.RUN_ROOT}")
        print(f"Preset: {cls.PRESET}")
        print(f"Device: {cls.DEVICE} -> {cls.resolve_device()}")
        print(f"API checkpoint: {cls.API_CHECKPOINT or 'NOT SET'}")
        print(f"Log level: {cls.LOG_LEVEL}")
        print(f"Deterministic kernels: {cls.DETERMINISTIC}")
        print("=" * 40)


def load_config_file(path: Path) -> Dict[str, str]:
    """
    Read a `key = value` config file

    Blank lines and `#` comments are ignored. Values stay strings; the
    pydantic models parse them.

    Raises:
        ValueError: malformed line or duplicate key
    """
    path = Path(path)
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding='utf-8').splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ValueError(f"{path}:{lineno}: empty key")
        if key in values:
            raise ValueError(f"{path}:{lineno}: duplicate key '{key}'")
        values[key] = value
    return values


def resolve_configs(
    preset: Optional[str] = None,
    file_values: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> Tuple[NetworkConfig, TrainConfig]:
    """
    Merge preset < config file < CLI flags into validated configs

    Keys are routed to NetworkConfig or TrainConfig by field name; a key that
    belongs to neither is rejected.

    Raises:
        ValueError: unknown preset or key
        pydantic.ValidationError: invalid field values
    """
    name = (preset or Config.PRESET).lower()
    if name not in PRESETS:
        raise ValueError(f"Unknown preset '{name}', expected one of {PRESETS}")

    net = NetworkConfig.preset(name).model_dump()
    train = TrainConfig.preset(name).model_dump()

    merged: Dict[str, Any] = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = [k for k in merged if k not in net and k not in train]
    if unknown:
        raise ValueError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")

    for key, value in merged.items():
        if key in net:
            net[key] = value
        if key in train:
            train[key] = value

    # the network input follows the training image size unless set explicitly
    if 'image_size' in merged and 'input_size' not in merged:
        net['input_size'] = f"{merged['image_size']},{merged['image_size']}"

    train_cfg = TrainConfig(**train)
    net_cfg = NetworkConfig(**net).for_ablation(train_cfg.ablation)
    return net_cfg, train_cfg


if __name__ == "__main__":
    # Test configuration
    try:
        Config.validate()
        Config.display()
        print("\nConfiguration is valid!")
    except ValueError as e:
        print(f"\nConfiguration validation failed:\n{e}")
