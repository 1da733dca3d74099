"""Line-based ``section.key = value`` configuration with strict key checking.

Every tunable of the simulator is reachable here, each with the default
it carries in its typed dataclass, so an empty file resolves to a fully
working configuration.  Unknown keys are rejected with a nearest-match
suggestion; bad values are rejected with their line number.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from typing import Any, Callable

from .channel import ChannelModel, LinkConfig
from .detector import OracleParams
from .latency import LatencyParams
from .sim import SimConfig

__all__ = [
    "Config",
    "ConfigError",
    "build_oracle_params",
    "build_sim_config",
    "dump_config",
    "load_config",
    "parse_config",
]


class ConfigError(ValueError):
    """Configuration problem; message carries the line number when known."""


def _to_int(raw: str) -> int:
    return int(raw, 10)


def _to_float(raw: str) -> float:
    return float(raw)


def _choice(*options: str) -> Callable[[str], str]:
    def convert(raw: str) -> str:
        if raw not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return raw

    convert.options = options  # type: ignore[attr-defined]
    return convert


# key -> (converter, default as written in a config file)
_SCHEMA: dict[str, tuple[Callable[[str], Any], str]] = {
    "sim.frames": (_to_int, "10000"),
    "sim.fps": (_to_float, "30"),
    "sim.framework": (_choice("EODF", "CONV"), "EODF"),
    "sim.policy": (_choice("cqi-threshold", "deadline-estimate"), "cqi-threshold"),
    "sim.compression_ratio": (_to_float, "0.0"),
    "sim.frame_width": (_to_int, "1242"),
    "sim.frame_height": (_to_int, "375"),
    "sim.frame_channels": (_to_int, "3"),
    "sim.mask_layout": (_choice("contiguous", "alternating"), "contiguous"),
    "sim.master_seed": (_to_int, "0"),
    "sim.workers": (_to_int, "1"),
    "channel.kind": (_choice("iid-uniform", "markov"), "iid-uniform"),
    "channel.cqi_min": (_to_int, "1"),
    "channel.cqi_max": (_to_int, "15"),
    "channel.stay_probability": (_to_float, "0.8"),
    "channel.seed": (_to_int, "0"),
    "link.bandwidth_hz": (_to_float, "20e6"),
    "link.carriers": (_to_int, "2"),
    "link.layers": (_to_int, "4"),
    "link.scaling": (_to_float, "1.0"),
    "link.overhead": (_to_float, "0.14"),
    "link.cqi_threshold": (_to_int, "7"),
    "latency.compression_fps": (_to_float, "240"),
    "latency.detection_fps": (_to_float, "59"),
    "latency.result_bytes": (_to_int, "256"),
    "saliency.analysis_size": (_to_int, "64"),
    "oracle.visibility_threshold": (_to_float, "0.5"),
    "oracle.confidence_model": (_choice("retained-fraction", "constant"), "retained-fraction"),
    "eval.iou_threshold": (_to_float, "0.5"),
}


@dataclass
class Config:
    """Raw key/value overrides plus the line each one came from."""

    values: dict[str, str] = field(default_factory=dict)
    lines: dict[str, int] = field(default_factory=dict)

    def get(self, key: str) -> Any:
        """The typed value of ``key``, falling back to its default."""
        convert, default = _SCHEMA[key]
        raw = self.values.get(key, default)
        try:
            return convert(raw)
        except ValueError as exc:
            line = self.lines.get(key)
            where = f"line {line}: " if line is not None else ""
            raise ConfigError(f"{where}invalid value for {key}: {raw!r} ({exc})") from None

    def set(self, key: str, raw: str) -> None:
        if key not in _SCHEMA:
            raise ConfigError(_unknown_key_message(key))
        self.values[key] = raw


def _unknown_key_message(key: str, line: int | None = None) -> str:
    where = f"line {line}: " if line is not None else ""
    close = difflib.get_close_matches(key, _SCHEMA, n=1, cutoff=0.4)
    hint = f" (did you mean {close[0]!r}?)" if close else ""
    return f"{where}unknown key {key!r}{hint}"


def parse_config(text: str) -> Config:
    """Parse ``key = value`` lines; ``#`` comments; later keys override."""
    config = Config()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line.strip()!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _SCHEMA:
            raise ConfigError(_unknown_key_message(key, lineno))
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for {key}")
        config.values[key] = raw
        config.lines[key] = lineno
    # Surface value errors here, with line numbers, rather than at use.
    for key in config.values:
        config.get(key)
    return config


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def dump_config(config: Config) -> str:
    """Fully-resolved configuration, one ``key = value`` line per key."""
    lines = []
    for key in sorted(_SCHEMA):
        raw = config.values.get(key, _SCHEMA[key][1])
        lines.append(f"{key} = {raw}")
    return "\n".join(lines) + "\n"


def build_sim_config(config: Config) -> SimConfig:
    """Typed simulation config; range validation lives in the dataclasses."""
    channel = ChannelModel(
        kind=config.get("channel.kind"),
        cqi_min=config.get("channel.cqi_min"),
        cqi_max=config.get("channel.cqi_max"),
        stay_probability=config.get("channel.stay_probability"),
        seed=config.get("channel.seed"),
    )
    link = LinkConfig(
        bandwidth_hz=config.get("link.bandwidth_hz"),
        num_carriers=config.get("link.carriers"),
        mimo_layers=config.get("link.layers"),
        scaling_factor=config.get("link.scaling"),
        overhead=config.get("link.overhead"),
        cqi_threshold=config.get("link.cqi_threshold"),
    )
    latency = LatencyParams(
        compression_fps=config.get("latency.compression_fps"),
        detection_fps=config.get("latency.detection_fps"),
        result_bytes=config.get("latency.result_bytes"),
    )
    return SimConfig(
        frames=config.get("sim.frames"),
        fps=config.get("sim.fps"),
        framework=config.get("sim.framework"),
        policy=config.get("sim.policy"),
        compression_ratio=config.get("sim.compression_ratio"),
        frame_width=config.get("sim.frame_width"),
        frame_height=config.get("sim.frame_height"),
        frame_channels=config.get("sim.frame_channels"),
        mask_layout=config.get("sim.mask_layout"),
        master_seed=config.get("sim.master_seed"),
        workers=config.get("sim.workers"),
        channel=channel,
        link=link,
        latency=latency,
    )


def build_oracle_params(config: Config) -> OracleParams:
    return OracleParams(
        visibility_threshold=config.get("oracle.visibility_threshold"),
        confidence_model=config.get("oracle.confidence_model"),
    )
