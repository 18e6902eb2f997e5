"""
Tests for configuration and report models
"""
import json
import math

import pytest
from pydantic import ValidationError

from domain.model.network_config import AblationVariant, NetworkConfig
from domain.model.reports import AblationRow, EvalReport, ProbeReport
from domain.model.train_config import LossMode, LossRecord, TrainConfig, TrainState


def test_network_presets():
    desk, paper = NetworkConfig.preset('desk'), NetworkConfig.preset('paper')
    assert desk.input_size == (64, 64)
    assert desk.bottleneck_size == (2, 2)
    assert desk.num_primary_caps == desk.caps_channels * 4
    assert paper.input_size == (224, 224)
    assert paper.bottleneck_size == (7, 7)
    with pytest.raises(ValueError):
        NetworkConfig.preset('huge')


def test_network_config_parses_strings():
    config = NetworkConfig(input_size="96x128", channel_schedule="8,16,32,32")
    assert config.input_size == (96, 128)
    assert config.channel_schedule == (8, 16, 32, 32)
    assert NetworkConfig(input_size=64).input_size == (64, 64)


@pytest.mark.parametrize("values", [
    {'input_size': (48, 64)},
    {'input_size': (0, 64)},
    {'channel_schedule': (8, 0, 8, 8)},
    {'routing_iterations': 0},
    {'num_bins': 0},
    {'upsample_mode': 'cubic'},
    {'unknown_field': 1},
])
def test_network_config_rejects(values):
    with pytest.raises(ValidationError):
        NetworkConfig(**values)


def test_ablation_variants():
    base = NetworkConfig()
    assert [v.value for v in AblationVariant] == ['full', 'no_caps', 'no_skip', 'no_caps_no_skip']
    no_skip = base.for_ablation('no_skip')
    assert (no_skip.use_capsules, no_skip.use_skips) == (True, False)
    both = base.for_ablation(AblationVariant.NO_CAPS_NO_SKIP)
    assert (both.use_capsules, both.use_skips) == (False, False)
    assert AblationVariant.NO_CAPS.label == "UCapsNet No Capsules"
    assert base.with_bins(7).num_bins == 7


def test_train_config_defaults_and_presets():
    desk = TrainConfig.desk()
    assert desk.learning_rate == pytest.approx(2e-4)
    assert desk.betas == (0.9, 0.999)
    assert desk.loss_mode is LossMode.COMBINED
    paper = TrainConfig.preset('paper')
    assert (paper.batch_size, paper.image_size) == (32, 224)
    assert paper.learning_rate == pytest.approx(2e-5)


def test_train_config_allows_frozen_runs():
    assert TrainConfig(learning_rate=0.0).learning_rate == 0.0
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=-1e-4)


@pytest.mark.parametrize("values", [
    {'epochs': 0},
    {'batch_size': 0},
    {'image_size': 50},
    {'loss_mode': 'both'},
    {'max_steps': 0},
])
def test_train_config_rejects(values):
    with pytest.raises(ValidationError):
        TrainConfig(**values)


def test_train_config_parses_betas():
    assert TrainConfig(betas="0.5,0.9").betas == (0.5, 0.9)


def test_train_state_last_record():
    state = TrainState()
    assert state.last is None
    state.history.append(LossRecord(step=1, l_q=2.0, l_c=3.0, total=5.0, wall_time=0.1))
    assert state.last.as_row() == [1, 2.0, 3.0, 5.0, 0.1]


def test_eval_report_mean_and_infinity():
    report = EvalReport.from_values([20.0, 30.0], ["a.png", "b.png"], skipped=1)
    assert report.mean_psnr == 25.0
    assert report.image_count == 2
    perfect = EvalReport.from_values([math.inf], ["x.png"])
    assert math.isinf(perfect.mean_psnr)
    assert "Infinity" in perfect.model_dump_json()
    assert EvalReport.from_values([], []).mean_psnr == 0.0


def test_eval_report_validates():
    with pytest.raises(ValidationError):
        EvalReport(per_image_psnr=[-1.0], file_names=["a"], mean_psnr=-1.0, image_count=1)
    with pytest.raises(ValidationError):
        EvalReport(per_image_psnr=[10.0], file_names=["a"], mean_psnr=10.0, image_count=2)


def test_probe_report_bounds():
    ok = ProbeReport(per_layer_accuracy=[0.5] * 4, feature_dims=[4096] * 4, pool_sizes=[2, 1, 1, 1],
                     num_classes=3, train_count=6, test_count=3)
    assert json.loads(ok.model_dump_json())['num_classes'] == 3
    with pytest.raises(ValidationError):
        ProbeReport(per_layer_accuracy=[0.5], feature_dims=[10000], pool_sizes=[1],
                    num_classes=2, train_count=1, test_count=1)
    with pytest.raises(ValidationError):
        ProbeReport(per_layer_accuracy=[1.5], feature_dims=[10], pool_sizes=[1],
                    num_classes=2, train_count=1, test_count=1)


def test_ablation_row_header():
    assert AblationRow.header()[:2] == ['variant', 'label']
    assert AblationRow.header()[-1] == 'status'
