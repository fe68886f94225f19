# tests/test_config.py
from pathlib import Path

import pytest

from gtpc.config import ExperimentConfig, Variant, apply_overrides, config_hash, load_config
from gtpc.errors import ConfigError
from gtpc.services.error_handler import generate_error_response


def test_defaults():
    config = load_config()
    assert config.variant is Variant.GTPC
    assert config.loss.weights == (0.5, 0.25, 0.25)
    assert config.loss.tau == 0.95
    assert config.gate.quantile == 0.5
    assert config.num_aux == 7
    assert config.data.synthetic is not None


def test_shipped_default_config_masks_and_warms_up():
    config = load_config(Path(__file__).parents[1] / "configs" / "default.yaml")
    assert config.loss.confidence_masking and config.loss.warmup_epochs == 5
    assert config.effective_weights == (0.5, 0.25, 0.25)
    assert config.epochs > config.loss.warmup_epochs


def test_yaml_file_and_overrides(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("epochs: 3\nloss:\n  tau: 0.9\n")
    config = load_config(path, ["seed=5", "gate.quantile=0.25", "perturb.specs=[{kind: feature_noise}]"])
    assert (config.epochs, config.seed, config.loss.tau, config.gate.quantile) == (3, 5, 0.9, 0.25)
    assert config.num_aux == 1


def test_unknown_keys_are_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("epochs: 3\nlearning_rate: 0.1\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert "learning_rate" in str(info.value)
    with pytest.raises(ConfigError):
        load_config(None, ["gate.quantiles=0.3"])


def test_malformed_inputs(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    with pytest.raises(ConfigError):
        load_config(None, ["no-equals-sign"])
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(listing)


def test_sup_only_forces_supervised_weights():
    config = load_config(None, ["variant=sup_only", "loss.lambda2=0.7"])
    assert config.effective_weights == (1.0, 0.0, 0.0)
    assert config.loss.weights == (0.5, 0.7, 0.25)
    assert not config.uses_unlabeled and config.active_specs() == []


def test_arms_derived_from_a_sup_only_base_keep_their_weights():
    """Switching variant away from sup_only restores the configured loss weights."""
    base = load_config(None, ["variant=sup_only"])
    arm = apply_overrides(base, ["variant=gtpc"])
    assert arm.loss.weights == (0.5, 0.25, 0.25)
    assert arm.effective_weights == (0.5, 0.25, 0.25)
    assert apply_overrides(arm, ["variant=image"]).effective_weights == (0.5, 0.25, 0.25)
    print("✓ sup_only weights do not leak into derived arms")


@pytest.mark.parametrize(
    "variant, image, feature, gate",
    [
        ("feature", False, True, False),
        ("image", True, False, False),
        ("feature_image", True, True, False),
        ("gtpc", True, True, True),
    ],
)
def test_variant_switches(variant, image, feature, gate):
    config = load_config(None, [f"variant={variant}"])
    assert (config.uses_image, config.uses_feature, config.uses_gate) == (image, feature, gate)


def test_config_hash_is_stable_and_sensitive():
    first, second = ExperimentConfig(), ExperimentConfig()
    assert config_hash(first) == config_hash(second)
    assert len(config_hash(first)) == 12
    assert config_hash(apply_overrides(first, ["seed=1"])) != config_hash(first)


def test_data_root_override_replaces_synthetic_data():
    config = apply_overrides(ExperimentConfig(), ["data.root=/data/whu"])
    assert config.data.root == "/data/whu" and config.data.synthetic is None


def test_error_messages():
    assert generate_error_response(ConfigError("bad")).startswith("Configuration problem")
    assert generate_error_response(RuntimeError("boom")).startswith("An unexpected error occurred")
