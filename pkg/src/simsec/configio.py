"""Plain-text run configuration: INI sections mapped onto the dataclasses.

Power-like quantities must carry an explicit unit ("30 dBm" or "1.0 W")
so nobody guesses the scale.  Unknown sections or keys are errors, and
all problems in a file are collected and reported together.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields

from .continual import MetaConfig
from .em import ConfigError, SystemConfig
from .manifold import SimhaclOptions


class ConfigFileError(ValueError):
    """One or more problems in a configuration file."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def parse_power(text: str) -> float:
    """Parse a power with mandatory unit into watts: '30 dBm' or '1.0 W'."""
    parts = text.strip().split()
    if len(parts) != 2:
        raise ValueError(f"power needs a value and a unit (dBm or W): {text!r}")
    value = float(parts[0])
    unit = parts[1]
    if unit == "dBm":
        return 10.0 ** (value / 10.0) / 1000.0
    if unit == "W":
        return value
    raise ValueError(f"unknown power unit {unit!r} in {text!r} (use dBm or W)")


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError(f"power must be positive, got {watts}")
    import math

    return 10.0 * math.log10(watts * 1000.0)


@dataclass
class ExperimentSettings:
    """Benchmark defaults a config file may override."""

    trials: int = 100
    seed: int = 1234
    schemes: list = field(default_factory=lambda: ["simhacl", "power-only", "random-all"])


@dataclass
class RunConfig:
    """Everything a benchmark run needs, bundled."""

    system: SystemConfig = field(default_factory=SystemConfig)
    simhacl: SimhaclOptions = field(default_factory=SimhaclOptions)
    meta: MetaConfig = field(default_factory=MetaConfig)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)


def _parse_bits(text: str):
    t = text.strip().lower()
    if t in ("continuous", "none", ""):
        return None
    return int(t)


def _parse_float_list(text: str):
    import numpy as np

    return np.array([float(p) for p in text.split(",") if p.strip() != ""])


def _parse_str_list(text: str):
    return [p.strip() for p in text.split(",") if p.strip() != ""]


_SYSTEM_KEYS = {
    "users": ("n_users", int),
    "layers": ("n_layers", int),
    "nx": ("nx", int),
    "ny": ("ny", int),
    "bits": ("quant_bits", _parse_bits),
    "carrier_hz": ("carrier_hz", float),
    "bandwidth_hz": ("bandwidth_hz", float),
    "noise_psd_dbm": ("noise_psd_dbm", float),
    "total_power": ("total_power_w", parse_power),
    "pathloss_exp": ("pathloss_exp", float),
    "ref_distance_m": ("ref_distance_m", float),
    "thickness_m": ("sim_thickness_m", float),
    "bs_height_m": ("bs_height_m", float),
    "user_height_m": ("user_height_m", float),
    "cluster_distance_m": ("cluster_distance_m", float),
    "cluster_radius_m": ("cluster_radius_m", float),
    "weights": ("weights", _parse_float_list),
}

_SIMHACL_KEYS = {
    "max_iters": ("max_iters", int),
    "restarts": ("restarts", int),
    "phase_scale": ("phase_scale", float),
    "power_rate": ("power_rate", float),
    "window": ("window", int),
    "rel_tol": ("rel_tol", float),
}

_MHACL_KEYS = {
    "epochs": ("n_epochs", int),
    "outer": ("n_outer", int),
    "inner": ("n_inner", int),
    "psn_period": ("psn_period", int),
    "lr_phase": ("lr_phase", float),
    "lr_power": ("lr_power", float),
    "meta_lr": ("meta_lr", float),
    "spsa_samples": ("spsa_samples", int),
    "spsa_scale": ("spsa_scale", float),
    "lambda_reg": ("lambda_reg", float),
    "beta_traj": ("beta_traj", float),
    "memory_decay": ("memory_decay", float),
    "buffer_capacity": ("buffer_capacity", int),
    "buffer_temperature": ("buffer_temperature", float),
}

_EXPERIMENT_KEYS = {
    "trials": ("trials", int),
    "seed": ("seed", int),
    "schemes": ("schemes", _parse_str_list),
}

_SECTIONS = {
    "system": _SYSTEM_KEYS,
    "simhacl": _SIMHACL_KEYS,
    "mhacl": _MHACL_KEYS,
    "experiment": _EXPERIMENT_KEYS,
}


def load_config(path) -> RunConfig:
    """Parse and validate an INI run configuration.

    Raises ConfigFileError listing every problem found.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    problems = []
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigFileError([f"cannot read {path}: {exc}"]) from exc
    except configparser.Error as exc:
        raise ConfigFileError([f"malformed config: {exc}"]) from exc

    values: dict = {name: {} for name in _SECTIONS}
    for section in parser.sections():
        if section not in _SECTIONS:
            problems.append(f"unknown section [{section}]")
            continue
        keymap = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in keymap:
                problems.append(f"unknown key {key!r} in [{section}]")
                continue
            attr, conv = keymap[key]
            try:
                values[section][attr] = conv(raw)
            except (ValueError, TypeError) as exc:
                problems.append(f"[{section}] {key} = {raw!r}: {exc}")

    if problems:
        raise ConfigFileError(problems)

    try:
        system = SystemConfig(**values["system"])
        simhacl = SimhaclOptions(**values["simhacl"])
        meta = MetaConfig(**values["mhacl"])
        experiment = ExperimentSettings(**values["experiment"])
    except (ConfigError, ValueError) as exc:
        raise ConfigFileError([str(exc)]) from exc

    extra = _validate_run_config(RunConfig(system, simhacl, meta, experiment))
    if extra:
        raise ConfigFileError(extra)
    return RunConfig(system, simhacl, meta, experiment)


def _validate_run_config(rc: RunConfig):
    problems = []
    if rc.simhacl.max_iters < 1 or rc.simhacl.restarts < 1:
        problems.append("simhacl max_iters and restarts must be >= 1")
    if rc.simhacl.phase_scale <= 0 or rc.simhacl.power_rate <= 0:
        problems.append("simhacl step sizes must be positive")
    if rc.meta.n_epochs < 1 or rc.meta.n_outer < 1 or rc.meta.n_inner < 1:
        problems.append("mhacl schedule counts must be >= 1")
    if rc.meta.psn_period < 1:
        problems.append("mhacl psn_period must be >= 1")
    if rc.meta.spsa_samples < 0:
        problems.append("mhacl spsa_samples must be >= 0")
    if not 0 < rc.meta.memory_decay <= 1:
        problems.append("mhacl memory_decay must be in (0, 1]")
    if rc.meta.buffer_capacity < 1:
        problems.append("mhacl buffer_capacity must be >= 1")
    if rc.experiment.trials < 1:
        problems.append("experiment trials must be >= 1")
    if not rc.experiment.schemes:
        problems.append("experiment schemes must not be empty")
    return problems


def canonical_text(rc: RunConfig) -> str:
    """Stable textual form of a run configuration, for hashing."""
    lines = []
    for section, obj in (
        ("system", rc.system),
        ("simhacl", rc.simhacl),
        ("mhacl", rc.meta),
        ("experiment", rc.experiment),
    ):
        for f in sorted(fields(obj), key=lambda f: f.name):
            if section == "simhacl" and f.name in ("quant", "init_phases"):
                continue
            val = getattr(obj, f.name)
            if hasattr(val, "tolist"):
                val = val.tolist()
            lines.append(f"{section}.{f.name}={val!r}")
    return "\n".join(lines)


def config_hash(rc: RunConfig) -> str:
    return hashlib.sha256(canonical_text(rc).encode("utf-8")).hexdigest()[:12]
