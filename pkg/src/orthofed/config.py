"""Experiment configuration: defaults, config-file parsing, flag overrides.

Config files are flat JSON objects; every key also has a CLI flag, with
precedence flags > file > preset > defaults. The temperature default is
100 (the converged logit scale of common contrastive encoders); because
it is a silent multiplier on every gradient bound, it is echoed first
in every run report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

VARIANTS = ("orthogonal", "unconstrained", "identity_local", "all_global")

PRESETS: dict[str, dict] = {
    # Rotated-prototype synthetic benchmarks converge faster and hotter.
    "synthetic": {"learning_rate": 1e-3, "rounds": 100},
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    tau: float = 100.0
    learning_rate: float = 5e-5
    momentum: float = 5e-4
    weight_decay: float = 5e-4
    epochs: int = 1
    rounds: int = 200
    batch_size: int = 32
    block_count: int = 1
    variant: str = "orthogonal"
    classifier_init: str = "random"  # "random" or "file:<path>"
    transport: str = "inprocess"  # "inprocess" or "tcp:<host>:<port>"
    manifest: str | None = None
    out_dir: str = "orthofed-out"
    sample_every: int = 10
    probe_size: int = 64

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("momentum and weight_decay must be non-negative")
        for name in ("epochs", "rounds", "batch_size", "block_count", "sample_every",
                     "probe_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"variant must be one of {', '.join(VARIANTS)}, got {self.variant!r}"
            )
        kind, _, path = self.classifier_init.partition(":")
        if kind not in ("random", "file") or (kind == "file" and not path):
            raise ConfigError(
                f"classifier_init must be 'random' or 'file:<path>', got "
                f"{self.classifier_init!r}"
            )
        self.transport_mode()

    def transport_mode(self) -> tuple:
        if self.transport == "inprocess":
            return ("inprocess",)
        kind, _, address = self.transport.partition(":")
        if kind == "tcp" and address:
            host, sep, port = address.rpartition(":")
            if sep and host:
                try:
                    return ("tcp", host, int(port))
                except ValueError:
                    pass
        raise ConfigError(
            f"transport must be 'inprocess' or 'tcp:<host>:<port>', got {self.transport!r}"
        )

    # transport and out_dir decide how/where a run executes, not what it
    # computes; report.json omits them so identical experiments serialize
    # identically regardless of transport (the full echo goes to
    # run_config.json alongside).
    EXECUTION_KEYS = ("transport", "out_dir")

    def echo(self, execution: bool = True) -> dict:
        """All effective values, tau first, for audit-complete run reports."""
        echo = {"tau": self.tau}
        for spec in fields(self):
            if spec.name == "tau":
                continue
            if not execution and spec.name in self.EXECUTION_KEYS:
                continue
            echo[spec.name] = getattr(self, spec.name)
        # Fixed behaviors worth auditing alongside the knobs.
        echo["weight_decay_scope"] = "classifier_only"
        echo["classifier_init_rows_normalized"] = True
        return echo


_INT_KEYS = {"seed", "epochs", "rounds", "batch_size", "block_count", "sample_every",
             "probe_size"}
_FLOAT_KEYS = {"tau", "learning_rate", "momentum", "weight_decay"}
_STR_KEYS = {"variant", "classifier_init", "transport", "manifest", "out_dir"}
ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def _coerce(key: str, value) -> object:
    try:
        if key in _INT_KEYS:
            coerced = int(value)
            if isinstance(value, float) and value != coerced:
                raise ValueError(value)
            return coerced
        if key in _FLOAT_KEYS:
            return float(value)
        return None if value is None else str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} has invalid value {value!r}") from None


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return raw


def load_config(
    file_path=None,
    overrides: dict | None = None,
    preset: str | None = None,
) -> ExperimentConfig:
    """Merge defaults, preset, config file, and flag overrides (in that order)."""
    from_file = read_config_file(file_path) if file_path else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    preset = overrides.pop("preset", None) or from_file.pop("preset", None) or preset
    merged: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    merged.update(from_file)
    merged.update(overrides)

    unknown = set(merged) - ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    cfg.validate()
    return cfg
