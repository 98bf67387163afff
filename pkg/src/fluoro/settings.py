import logging
import sys
from pathlib import Path

import toml


def load_system_config(path=None):
    config_path = Path(path) if path else Path('system.toml')
    try:
        return toml.load(config_path.as_posix())
    except FileNotFoundError:
        if path:
            raise
        return {}


SYSTEM_CONFIG = load_system_config()

FLUORO_CONFIG = SYSTEM_CONFIG.get('fluoro', {})

FILTER_ENGINE = FLUORO_CONFIG.get('filter_engine', 'fluoro.detection.CascadedLowPass')
WORKERS = FLUORO_CONFIG.get('workers', 1)

logger = logging.getLogger('fluoro')
logger.setLevel(logging.getLevelName(FLUORO_CONFIG.get('log_level', 'INFO')))
if not logger.handlers:
    handler = logging.StreamHandler(sys.stderr)
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    handler.setFormatter(formatter)
    logger.addHandler(handler)
logger.propagate = True


def set_log_level(level):
    logger.setLevel(logging.getLevelName(str(level).upper()))
