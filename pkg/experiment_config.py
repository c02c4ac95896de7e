"""
LeakBound - Experiment Configuration
Parses and validates the flat `key = value` experiment files.
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from leakage_core import LeakageConfig, MAX_ELL, make_config
from mi_estimation import QGrid
from oracle import MAX_ORACLE_ELL, MAX_ORACLE_Q


PROFILE_DRAWS = {"desk": 100_000, "paper": 1_000_000}
DEFAULT_N_ATTACKS = 200
DEFAULT_TARGET_PS = 0.95

SBOX_ALIASES = {
    "identity": "identity",
    "aes-subbytes": "aes-subbytes",
    "aes": "aes-subbytes",
    "random": "seeded-random-bijection",
    "seeded-random-bijection": "seeded-random-bijection",
}

COMMANDS = ("mi", "bound", "attack", "converge", "oracle")


class ConfigError(ValueError):
    """Raised for any invalid experiment configuration."""


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got '{value}'")


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got '{value}'")


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true or false, got '{value}'")


def _parse_list(key: str, value: str, item: Callable[[str, str], object]) -> Tuple:
    items = [v.strip() for v in value.split(",") if v.strip()]
    if not items:
        raise ConfigError(f"{key}: list must not be empty")
    return tuple(item(key, v) for v in items)


def _parse_q_token(token: str) -> List[int]:
    if not token.startswith("linspace:"):
        return [_parse_int("q_grid", token)]
    parts = token.split(":")
    if len(parts) != 4:
        raise ConfigError(f"q_grid: expected linspace:start:stop:count, got '{token}'")
    start, stop, count = (_parse_int("q_grid", p) for p in parts[1:])
    return list(QGrid.linspace(start, stop, count).points)


def parse_q_grid(value: str) -> QGrid:
    """
    Comma-separated trace counts and 'linspace:start:stop:count' ranges.

    Ranges and single points may be mixed, e.g. 'linspace:1:30:30, linspace:100:4800:48';
    the union must come out strictly increasing in the order given.
    """
    tokens = [t.strip() for t in value.split(",") if t.strip()]
    if not tokens:
        raise ConfigError("q_grid: list must not be empty")
    try:
        points = [p for token in tokens for p in _parse_q_token(token)]
        return QGrid(tuple(points))
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"q_grid: {e}")


_PARSERS: Dict[str, Callable[[str], object]] = {
    "ell": lambda v: _parse_int("ell", v),
    "sbox": lambda v: v,
    "sbox_seed": lambda v: _parse_int("sbox_seed", v),
    "masked": lambda v: _parse_bool("masked", v),
    "sigma2_list": lambda v: _parse_list("sigma2_list", v, _parse_float),
    "q_grid": parse_q_grid,
    "n_draws": lambda v: _parse_int("n_draws", v),
    "n_draws_list": lambda v: _parse_list("n_draws_list", v, _parse_int),
    "q_fixed": lambda v: _parse_int("q_fixed", v),
    "n_attacks": lambda v: _parse_int("n_attacks", v),
    "target_ps": lambda v: _parse_float("target_ps", v),
    "seed": lambda v: _parse_int("seed", v),
    "output_dir": lambda v: v,
    "compare_attack": lambda v: _parse_bool("compare_attack", v),
    "confusion_q": lambda v: _parse_int("confusion_q", v),
}

REQUIRED_KEYS = ("ell", "masked", "sigma2_list", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings shared by every command."""

    ell: int
    masked: bool
    sigma2_list: Tuple[float, ...]
    seed: int
    sbox: str = "identity"
    sbox_seed: Optional[int] = None
    q_grid: Optional[QGrid] = None
    n_draws: int = PROFILE_DRAWS["desk"]
    n_draws_list: Tuple[int, ...] = ()
    q_fixed: Optional[int] = None
    n_attacks: int = DEFAULT_N_ATTACKS
    target_ps: float = DEFAULT_TARGET_PS
    output_dir: str = "output"
    compare_attack: bool = False
    confusion_q: Optional[int] = None
    config_hash: str = ""

    def leakage_configs(self) -> List[LeakageConfig]:
        """One channel per noise level, in file order."""
        return [make_config(self.ell, self.masked, s, self.sbox, self.sbox_seed)
                for s in self.sigma2_list]

    def validate_for(self, command: str):
        """Check the keys a particular command needs."""
        if command not in COMMANDS:
            raise ConfigError(f"Unknown command: {command}. Supported: {', '.join(COMMANDS)}")
        if command in ("mi", "bound", "attack", "oracle") and self.q_grid is None:
            raise ConfigError(f"q_grid is required for '{command}'")
        if command == "converge":
            if not self.n_draws_list:
                raise ConfigError("n_draws_list is required for 'converge'")
            if self.q_fixed is None:
                raise ConfigError("q_fixed is required for 'converge'")
        if command == "oracle":
            if self.ell > MAX_ORACLE_ELL:
                raise ConfigError(f"oracle supports ell <= {MAX_ORACLE_ELL}, got {self.ell}")
            if self.q_grid.points[0] < 1 or self.q_grid.q_max > MAX_ORACLE_Q:
                raise ConfigError(f"oracle supports q in 1..{MAX_ORACLE_Q}")
        if command == "attack" and self.q_grid.points[0] < 1:
            raise ConfigError("attack grid points must be >= 1")
        if (command == "attack" and self.confusion_q is not None
                and self.confusion_q not in self.q_grid.points):
            raise ConfigError(f"confusion_q={self.confusion_q} is not a q_grid point")


def _split_lines(text: str) -> Dict[str, str]:
    entries = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {number}: unknown key '{key}'")
        if key in entries:
            raise ConfigError(f"line {number}: duplicate key '{key}'")
        if not value:
            raise ConfigError(f"line {number}: '{key}' has no value")
        entries[key] = value
    return entries


def canonical_form(entries: Dict[str, str]) -> str:
    """Sorted key=value lines with whitespace collapsed."""
    lines = []
    for key in sorted(entries):
        value = " ".join(entries[key].split())
        value = ",".join(part.strip() for part in value.split(","))
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def config_hash(entries: Dict[str, str]) -> str:
    return hashlib.sha256(canonical_form(entries).encode("utf-8")).hexdigest()


def parse_config_text(text: str, profile: str = "desk") -> ExperimentConfig:
    """
    Parse and validate a configuration file body.

    Args:
        text: file contents
        profile: 'desk' or 'paper'; sets n_draws unless the file gives it

    Returns:
        ExperimentConfig
    """
    if profile not in PROFILE_DRAWS:
        raise ConfigError(f"Unknown profile: {profile}. Supported: {', '.join(PROFILE_DRAWS)}")

    entries = _split_lines(text)
    missing = [k for k in REQUIRED_KEYS if k not in entries]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    values = {key: _PARSERS[key](value) for key, value in entries.items()}

    if not 1 <= values["ell"] <= MAX_ELL:
        raise ConfigError(f"ell must lie in [1, {MAX_ELL}], got {values['ell']}")

    sbox = values.get("sbox", "identity")
    if sbox not in SBOX_ALIASES:
        raise ConfigError(f"sbox: unsupported kind '{sbox}'. Supported: identity, aes-subbytes, random")
    values["sbox"] = SBOX_ALIASES[sbox]
    if values["sbox"] == "aes-subbytes" and values["ell"] != 8:
        raise ConfigError("sbox: aes-subbytes requires ell = 8")

    if any(s <= 0 for s in values["sigma2_list"]):
        raise ConfigError("sigma2_list: noise variances must be positive")
    if len(set(values["sigma2_list"])) != len(values["sigma2_list"]):
        raise ConfigError("sigma2_list: duplicate noise variances")
    if values["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    if values.get("n_draws", 2) < 2:
        raise ConfigError("n_draws must be >= 2")
    if any(n < 2 for n in values.get("n_draws_list", ())):
        raise ConfigError("n_draws_list: every entry must be >= 2")
    if values.get("q_fixed", 1) < 1:
        raise ConfigError("q_fixed must be >= 1")
    if values.get("n_attacks", 1) < 1:
        raise ConfigError("n_attacks must be >= 1")
    target = values.get("target_ps", DEFAULT_TARGET_PS)
    if not 2.0 ** -values["ell"] <= target <= 1.0:
        raise ConfigError(f"target_ps must lie in [2^-{values['ell']}, 1], got {target}")

    values.setdefault("n_draws", PROFILE_DRAWS[profile])
    return ExperimentConfig(config_hash=config_hash(entries), **values)


def load_config(path: str, profile: str = "desk") -> ExperimentConfig:
    """Read a configuration file; I/O failures propagate as OSError."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config_text(text, profile)
