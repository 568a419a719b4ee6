"""
Experiment configuration: a flat, line-oriented `key = value` format.

    # comment
    [model]
    p = 3
    q = 1
    [grid]
    L = 30
    n = 3001

Section headers scope the keys that follow. Every key belongs to exactly one
section, so keys given before the first header are routed to it.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from .errors import MissingKey, ParseError, UnknownKey
from .model import Grid1D, ModelParams, validate_params
from .pde import SolverConfig

logger = logging.getLogger(__name__)

SECTION_PATTERN = re.compile(r"^\[\s*([A-Za-z_]\w*)\s*\]$")
PAIR_PATTERN = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.*)$")
NUMBER_PATTERN = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")
INTEGER_PATTERN = re.compile(r"^[+-]?\d+$")
WORD_PATTERN = re.compile(r"^[A-Za-z_][\w\-]*$")

NUMBER, INTEGER, BOOLEAN, WORD, NUMBERS = "number", "integer", "boolean", "word", "numbers"

SCHEMA: Dict[str, Dict[str, str]] = {
    "model": {"p": NUMBER, "q": NUMBER, "A": NUMBER, "B": NUMBER, "K": NUMBER},
    "grid": {"L": NUMBER, "n": INTEGER},
    "solver": {
        "theta": NUMBER,
        "dt0": NUMBER,
        "sigma": NUMBER,
        "blowup_threshold": NUMBER,
        "decay_threshold": NUMBER,
        "t_max": NUMBER,
        "snapshot_dt": NUMBER,
        "boundary": WORD,
    },
    "experiment": {
        "initial": WORD,
        "kappa": NUMBER,
        "amplitude": NUMBER,
        "width": NUMBER,
        "C": NUMBER,
        "h0": NUMBER,
        "horizon": NUMBER,
        "samples": INTEGER,
        "direction": WORD,
        "kappa_lo": NUMBER,
        "kappa_hi": NUMBER,
        "iters": INTEGER,
        "kappas": NUMBERS,
        "workers": INTEGER,
        "lattice_nx": INTEGER,
        "lattice_nt": INTEGER,
        "x_max": NUMBER,
        "t_check": NUMBER,
        "tolerance": NUMBER,
        "energy_horizon": NUMBER,
        "check_ordering": BOOLEAN,
        "write_snapshots": BOOLEAN,
    },
}

REQUIRED = {"model": ("p", "q"), "grid": ("L", "n")}

# key -> owning section, for keys written before any header
OWNER = {key: section for section, keys in SCHEMA.items() for key in keys}


def _convert(kind: str, text: str, line: int) -> Any:
    if kind == NUMBER:
        if not NUMBER_PATTERN.match(text):
            raise ParseError(line, f"expected a number, got '{text}'", text)
        return float(text)
    if kind == INTEGER:
        if not INTEGER_PATTERN.match(text):
            raise ParseError(line, f"expected an integer, got '{text}'", text)
        return int(text)
    if kind == BOOLEAN:
        if text not in ("true", "false"):
            raise ParseError(line, f"expected true or false, got '{text}'", text)
        return text == "true"
    if kind == WORD:
        if not WORD_PATTERN.match(text):
            raise ParseError(line, f"expected a word, got '{text}'", text)
        return text
    items = [item.strip() for item in text.split(",")]
    if not items or not all(NUMBER_PATTERN.match(item) for item in items):
        raise ParseError(line, f"expected a comma-separated list of numbers, got '{text}'", text)
    return tuple(float(item) for item in items)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed configuration, one mapping per section."""
    model: Dict[str, Any]
    grid_values: Dict[str, Any] = field(default_factory=dict)
    solver: Dict[str, Any] = field(default_factory=dict)
    values: Dict[str, Any] = field(default_factory=dict)

    def model_params(self) -> ModelParams:
        return validate_params(**self.model)

    def grid(self) -> Grid1D:
        for key in REQUIRED["grid"]:
            if key not in self.grid_values:
                raise MissingKey("grid", key)
        return Grid1D(self.grid_values["L"], self.grid_values["n"])

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def experiment(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def require(self, *keys: str) -> Union[Any, Tuple[Any, ...]]:
        """Return the experiment values for keys, raising MissingKey for the first absent one."""
        for key in keys:
            if key not in self.values:
                raise MissingKey("experiment", key)
        found = tuple(self.values[key] for key in keys)
        return found[0] if len(found) == 1 else found


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text; see the module docstring for the grammar."""
    sections: Dict[str, Dict[str, Any]] = {name: {} for name in SCHEMA}
    seen = set()
    current: Optional[str] = None

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        header = SECTION_PATTERN.match(line)
        if header:
            current = header.group(1)
            if current not in SCHEMA:
                raise ParseError(number, f"unknown section [{current}]", raw)
            seen.add(current)
            continue

        pair = PAIR_PATTERN.match(line)
        if not pair:
            raise ParseError(number, "expected 'key = value' or '[section]'", raw)
        key, value = pair.group(1), pair.group(2).strip()
        section = current if current is not None else OWNER.get(key)
        if section is None or key not in SCHEMA[section]:
            raise UnknownKey(section or "top level", key, number)
        if key in sections[section]:
            raise ParseError(number, f"duplicate key '{key}' in [{section}]", raw)
        if not value:
            raise ParseError(number, f"missing value for '{key}'", raw)
        sections[section][key] = _convert(SCHEMA[section][key], value, number)
        seen.add(section)

    for key in REQUIRED["model"]:
        if key not in sections["model"]:
            raise MissingKey("model", key)
    if "grid" in seen:
        for key in REQUIRED["grid"]:
            if key not in sections["grid"]:
                raise MissingKey("grid", key)

    logger.debug("parsed config sections: %s", sorted(seen))
    return ExperimentConfig(sections["model"], sections["grid"], sections["solver"],
                            sections["experiment"])


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
