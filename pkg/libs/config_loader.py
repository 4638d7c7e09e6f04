"""
Configuration loader for FoldMark.
Supports both YAML and JSON configuration files.
"""

import os
import yaml
import json
from typing import Dict, Any, Optional
from pathlib import Path
from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).resolve().parent.parent


class ConfigLoader:
    """Handles loading and validation of configuration files."""

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize the configuration loader.

        Args:
            config_path: Path to configuration file. If None, uses environment variable.
        """
        if config_path is None:
            load_dotenv()
            config_path = os.getenv('FOLDMARK_CONFIG_FILE', 'conf/config.yaml')

        self.config_path = Path(config_path)
        self._config: Optional[Dict[str, Any]] = None

    def load_config(self) -> Dict[str, Any]:
        """
        Load configuration from file.

        Returns:
            Dictionary containing configuration settings.

        Raises:
            FileNotFoundError: If configuration file doesn't exist.
            ValueError: If configuration file format is invalid.
        """
        path = self.config_path
        if not path.exists() and not path.is_absolute():
            path = PROJECT_ROOT / path
        if not path.exists():
            raise FileNotFoundError(
                f"Configuration file not found: {self.config_path}")

        try:
            with open(path, 'r', encoding='utf-8') as f:
                if path.suffix.lower() in ('.yaml', '.yml'):
                    self._config = yaml.safe_load(f)
                elif path.suffix.lower() == '.json':
                    self._config = json.load(f)
                else:
                    try:
                        self._config = yaml.safe_load(f)
                    except yaml.YAMLError:
                        f.seek(0)
                        self._config = json.load(f)
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ValueError(f"Invalid configuration file format: {e}")

        if not isinstance(self._config, dict):
            raise ValueError(
                "Configuration file must contain a dictionary/object")
        return self._config

    def get_config(self) -> Dict[str, Any]:
        """
        Get configuration, loading if necessary.

        Returns:
            Dictionary containing configuration settings.
        """
        if self._config is None:
            self._config = self.load_config()
        return self._config

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value using dot notation.

        Args:
            key: Configuration key in dot notation (e.g., 'shrink.refine_tol')
            default: Default value if key not found

        Returns:
            Configuration value or default.
        """
        config = self.get_config()
        value: Any = config

        try:
            for k in key.split('.'):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def _section(self, key: str, defaults: Dict[str, Any]) -> Dict[str, Any]:
        """Return a config section with missing keys filled from defaults."""
        merged = dict(defaults)
        section = self.get(key, {})
        if isinstance(section, dict):
            merged.update(section)
        return merged

    def get_topology_path(self) -> str:
        """Get the shadow-tree topology file path."""
        return self.get('paths.topology', 'templates/topologies/face37.json')

    def get_log_file(self) -> str:
        """Get the log file path."""
        return self.get('paths.log_file', 'logs/foldmark.log')

    def get_shrink_config(self) -> Dict[str, Any]:
        """Get shrinking engine settings (None means derived from the polygon)."""
        return self._section('shrink', {
            'th': None,
            'step': None,
            'refine_tol': 1e-9,
            'max_events': None,
            'tree_metric': 'reduced'
        })

    def get_polygon_config(self) -> Dict[str, Any]:
        """Get Lang polygon construction settings."""
        return self._section('polygon', {
            'margin': 0.05,
            'min_aspect': 0.25,
            'max_aspect': 4.0
        })

    def get_descriptor_config(self) -> Dict[str, Any]:
        """Get descriptor layout settings."""
        return self._section('descriptors', {
            'n_max': 128,
            'e_max': 256,
            'strict_formula': False,
            'pca_dims': None
        })

    def get_classifier_config(self) -> Dict[str, Any]:
        """Get classifier and evaluation settings."""
        return self._section('classifier', {
            'k': 10,
            'c': 1.0,
            'seed': 0,
            'kernel': 'quadratic',
            'tol': 1e-3,
            'max_iterations': 100000
        })

    def get_synthetic_config(self) -> Dict[str, Any]:
        """Get synthetic data generator settings."""
        return self._section('synthetic', {
            'class_count': 4,
            'frames': 8,
            'dimensions': 2,
            'intensity_range': [0.6, 1.0]
        })

    def get_pipeline_config(self) -> Dict[str, Any]:
        """Get pipeline settings."""
        return self._section('pipeline', {
            'alignment': 'neutral',
            'jobs': 1
        })

    def get_logging_config(self) -> Dict[str, Any]:
        """Get logging configuration."""
        return self._section('logging', {
            'level': 'INFO',
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            'file_logging': False,
            'console_logging': True
        })

    def get_display_config(self) -> Dict[str, Any]:
        """Get display configuration."""
        return self._section('display', {
            'terminal_width': 120,
            'stretch_to_terminal': False,
            'decimal_places': 3,
            'colored_mode': True,
            'good_score': 0.85,
            'poor_score': 0.5
        })

    def get_table_config(self) -> Dict[str, Any]:
        """Get table display configuration."""
        return self._section('tables', {
            'bordered_style': 'heavy',
            'header_style': 'bold',
            'number_alignment': 'right'
        })

    def get_svg_config(self) -> Dict[str, Any]:
        """Get SVG rendering configuration."""
        return self._section('svg', {
            'palette': 'default',
            'stroke_width': 0.004,
            'node_radius': 0.008,
            'precision': 6
        })

    def is_debug_enabled(self) -> bool:
        """Check if debug output is enabled."""
        return bool(self.get('debug.enabled', False))


# Global configuration instance
_config_loader: Optional[ConfigLoader] = None


def get_config_loader() -> ConfigLoader:
    """Get the global configuration loader instance."""
    global _config_loader
    if _config_loader is None:
        _config_loader = ConfigLoader()
    return _config_loader


def set_config_path(config_path: Optional[str]) -> ConfigLoader:
    """Replace the global loader, e.g. for the --config flag."""
    global _config_loader
    _config_loader = ConfigLoader(config_path)
    return _config_loader

