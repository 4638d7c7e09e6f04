"""
Tests for ConfigLoader class - focused on essential functionality.
"""
import json
import os
from pathlib import Path

import pytest
import yaml

from libs.config_loader import ConfigLoader, get_config_loader, set_config_path


class TestConfigLoader:
    """Test cases for ConfigLoader class."""

    def test_config_loader_init_default(self):
        """Test ConfigLoader initialization with default config path."""
        loader = ConfigLoader()
        expected_path = Path('conf/config.yaml')
        assert loader.config_path.name == expected_path.name
        assert loader.config_path.parent.name == expected_path.parent.name
        config = loader.load_config()
        assert config is not None

    def test_config_loader_env_variable(self, temp_dir, monkeypatch):
        """Test FOLDMARK_CONFIG_FILE selects the configuration file."""
        config_file = os.path.join(temp_dir, 'env_config.yaml')
        with open(config_file, 'w') as f:
            yaml.dump({'classifier': {'c': 4.0}}, f)
        monkeypatch.setenv('FOLDMARK_CONFIG_FILE', config_file)

        loader = ConfigLoader()
        assert loader.get_classifier_config()['c'] == 4.0

    def test_config_loader_init_custom_path(self, temp_dir):
        """Test ConfigLoader initialization with custom config path."""
        config_data = {'descriptors': {'n_max': 64}}
        config_file = os.path.join(temp_dir, 'test_config.yaml')
        with open(config_file, 'w') as f:
            yaml.dump(config_data, f)

        loader = ConfigLoader(config_file)
        assert loader.config_path == Path(config_file)
        config = loader.load_config()
        assert config['descriptors']['n_max'] == 64

    def test_json_config(self, temp_dir):
        """Test JSON configuration files are accepted."""
        config_file = os.path.join(temp_dir, 'config.json')
        with open(config_file, 'w') as f:
            json.dump({'shrink': {'tree_metric': 'fixed'}}, f)

        loader = ConfigLoader(config_file)
        assert loader.get_shrink_config()['tree_metric'] == 'fixed'

    def test_missing_sections_use_defaults(self, temp_dir):
        """Test typed getters fill absent sections with defaults."""
        config_file = os.path.join(temp_dir, 'empty.yaml')
        with open(config_file, 'w') as f:
            yaml.dump({'debug': {'enabled': True}}, f)

        loader = ConfigLoader(config_file)
        assert loader.get_shrink_config()['refine_tol'] == 1e-9
        assert loader.get_shrink_config()['th'] is None
        assert loader.get_descriptor_config()['e_max'] == 256
        assert loader.get_classifier_config()['k'] == 10
        assert loader.get_pipeline_config()['alignment'] == 'neutral'
        assert loader.get_svg_config()['palette'] == 'default'
        assert loader.is_debug_enabled() is True

    def test_partial_section_merges(self, config_loader):
        """Test a partial section keeps defaults for missing keys."""
        classifier = config_loader.get_classifier_config()
        assert classifier['k'] == 5
        assert classifier['kernel'] == 'quadratic'

    def test_dot_notation(self, config_loader):
        """Test dot-notation lookups."""
        assert config_loader.get('polygon.margin') == 0.05
        assert config_loader.get('polygon.missing', 'fallback') == 'fallback'

    def test_config_loader_file_not_found(self, temp_dir):
        """Test config loading when file doesn't exist."""
        loader = ConfigLoader(os.path.join(temp_dir, 'nonexistent.yaml'))
        with pytest.raises(FileNotFoundError):
            loader.load_config()

    def test_config_loader_invalid_yaml(self, temp_dir):
        """Test config loading with invalid YAML."""
        config_file = os.path.join(temp_dir, 'invalid.yaml')
        with open(config_file, 'w') as f:
            f.write('invalid: yaml: content: [')

        loader = ConfigLoader(config_file)
        with pytest.raises(ValueError):
            loader.load_config()

    def test_config_loader_non_mapping(self, temp_dir):
        """Test a list at the top level is rejected."""
        config_file = os.path.join(temp_dir, 'list.yaml')
        with open(config_file, 'w') as f:
            f.write('- a\n- b\n')

        with pytest.raises(ValueError):
            ConfigLoader(config_file).load_config()

    def test_set_config_path_replaces_global(self, temp_dir, monkeypatch):
        """Test --config style replacement of the global loader."""
        import libs.config_loader as config_module
        monkeypatch.setattr(config_module, '_config_loader', None)
        config_file = os.path.join(temp_dir, 'global.yaml')
        with open(config_file, 'w') as f:
            yaml.dump({'classifier': {'seed': 42}}, f)

        loader = set_config_path(config_file)
        assert get_config_loader() is loader
        assert get_config_loader().get_classifier_config()['seed'] == 42
