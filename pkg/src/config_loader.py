import configparser
import json
from pathlib import Path
from typing import Any, Dict

from .exceptions import ConfigError
from .nn.training import TrainConfig
from .sim.config import SimulationConfig


def load_config(path: str) -> Dict[str, Any]:
    """
    Reads and validates srs_sense.ini.
    Returns a flat dict of UPPER_CASE settings.
    Raises ConfigError on a missing file, missing section or non-numeric value.
    """
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(message=f"Config file not found: {path}")

    parser = configparser.ConfigParser()
    parser.read(path)

    try:
        run = parser["run"]
        band = parser["band"]
        energy = parser["energy"]
        sample = parser["sample"]
        logging_cfg = parser["logging"]
    except KeyError as e:
        raise ConfigError(message=f"Missing section in config: {e}")

    try:
        cfg = {
            "SEED": run.getint("SEED", fallback=42),
            "WORKERS": run.getint("WORKERS", fallback=4),
            "REF_ANTENNA": run.getint("REF_ANTENNA", fallback=0),
            "LOW_HZ": band.getfloat("LOW_HZ", fallback=0.1),
            "HIGH_HZ": band.getfloat("HIGH_HZ", fallback=0.5),
            "MIN_WINDOW_S": band.getfloat("MIN_WINDOW_S", fallback=30.0),
            "WINDOW_W": energy.getint("WINDOW_W", fallback=25),
            "THRESHOLD_K": energy.getfloat("THRESHOLD_K", fallback=3.0),
            "MIN_EVENT_S": energy.getfloat("MIN_EVENT_S", fallback=0.4),
            "MERGE_GAP_S": energy.getfloat("MERGE_GAP_S", fallback=0.3),
            "BASELINE_S": energy.getfloat("BASELINE_S", fallback=10.0),
            "AGC_CORRECTION": energy.getboolean("AGC_CORRECTION", fallback=False),
            "FREQ_BINS": sample.getint("FREQ_BINS", fallback=64),
            "TIME_STEPS": sample.getint("TIME_STEPS", fallback=128),
            "LOG_LEVEL": logging_cfg.get("LOG_LEVEL", "INFO"),
            "LOG_FILE": logging_cfg.get("LOG_FILE", "srs_sense.log"),
        }
    except ValueError as e:
        raise ConfigError(message=f"Invalid value in {path}: {e}")

    if cfg["WORKERS"] < 1:
        raise ConfigError("run", "WORKERS", cfg["WORKERS"])
    if cfg["BASELINE_S"] <= 0:
        raise ConfigError("energy", "BASELINE_S", cfg["BASELINE_S"])
    return cfg


def read_json_document(path: str) -> Dict[str, Any]:
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(message=f"Config file not found: {path}")
    try:
        return json.loads(config_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(message=f"Could not parse {path}: {e}")


def load_simulation_config(path: str) -> SimulationConfig:
    """SimulationConfig from a JSON document; unknown keys raise ConfigError."""
    return SimulationConfig.from_dict(read_json_document(path))


def load_train_config(path: str) -> TrainConfig:
    """TrainConfig from a JSON document; unknown keys raise ConfigError."""
    return TrainConfig.from_dict(read_json_document(path))
