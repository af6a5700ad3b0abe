"""Run configuration: flat ``key = value`` text with one section per task.

Every run writes its fully resolved configuration (defaults included) next to
its outputs, so a run can be repeated from the sidecar alone.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

from gazeconv.errors import ConfigurationError
from gazeconv.genvae import DECODER_WIDTHS, ENCODER_WIDTHS, VaeTrainConfig
from gazeconv.reconnet import EVAL_FRACTIONS, RECON_KERNEL_HEIGHTS, RECON_WIDTHS, ReconTrainConfig
from gazeconv.segnet import SEG_KERNEL_HEIGHTS, SEG_WIDTHS, SegTrainConfig

TASKS = ("segment", "reconstruct", "generate")


def _section_defaults() -> dict[str, dict]:
    sections = {
        "run": {"seed": 0},
        "segment": {**SegTrainConfig().to_dict(),
                    "kernel_heights": SEG_KERNEL_HEIGHTS, "widths": SEG_WIDTHS},
        "reconstruct": {**ReconTrainConfig().to_dict(),
                        "kernel_heights": RECON_KERNEL_HEIGHTS, "widths": RECON_WIDTHS,
                        "sections_per_file": 20, "section_min_len": 64, "section_max_len": 256},
        "generate": {**VaeTrainConfig().to_dict(),
                     "encoder_widths": ENCODER_WIDTHS, "decoder_widths": DECODER_WIDTHS,
                     "section_length": 64},
        "eval": {"fractions": EVAL_FRACTIONS, "draws": 100, "sections_per_draw": 100,
                 "section_min_len": 50, "section_max_len": 500,
                 "generated_per_model": 50, "generated_length": 64,
                 "canvas_width": 1000, "canvas_height": 1000},
    }
    return {name: {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
            for name, values in sections.items()}


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(text: str, like):
    """Parse ``text`` to the type of the default value ``like``."""
    text = text.strip()
    try:
        if text.lower() == "none":
            return None
        if isinstance(like, bool):
            if text.lower() in ("true", "yes", "1", "on"):
                return True
            if text.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, (list, tuple)):
            items = [p for p in text.split(",") if p.strip()]
            proto = like[0] if like else 0.0
            return tuple(parse_value(p, proto) for p in items)
        if like is None:
            # optional integers (max_epochs)
            return int(text)
        return text
    except ValueError:
        raise ConfigurationError(f"cannot parse {text!r} as {type(like).__name__}") from None


@dataclass
class RunConfig:
    sections: dict[str, dict] = field(default_factory=_section_defaults)

    @property
    def seed(self) -> int:
        return int(self.sections["run"]["seed"])

    def set(self, dotted_key: str, text: str):
        """Override ``section.key`` from text, e.g. ``segment.initial_lr=0.01``."""
        if "." not in dotted_key:
            raise ConfigurationError(f"override key must be section.key, got {dotted_key!r}")
        section, key = dotted_key.split(".", 1)
        if section not in self.sections or key not in self.sections[section]:
            raise ConfigurationError(f"unknown config key {dotted_key!r}")
        self.sections[section][key] = parse_value(text, self.sections[section][key])

    def set_value(self, section: str, key: str, value):
        if section not in self.sections or key not in self.sections[section]:
            raise ConfigurationError(f"unknown config key {section}.{key}")
        self.sections[section][key] = value

    def update_from_text(self, text: str):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                self.set(f"{section}.{key}", value)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        with open(path) as handle:
            cfg.update_from_text(handle.read())
        return cfg

    def to_text(self) -> str:
        out = io.StringIO()
        for section, values in self.sections.items():
            out.write(f"[{section}]\n")
            for key in sorted(values):
                out.write(f"{key} = {format_value(values[key])}\n")
            out.write("\n")
        return out.getvalue()

    def _train_config(self, cls, section: str):
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in self.sections[section].items() if k in names}
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from None

    def seg_config(self) -> SegTrainConfig:
        return self._train_config(SegTrainConfig, "segment")

    def recon_config(self) -> ReconTrainConfig:
        return self._train_config(ReconTrainConfig, "reconstruct")

    def vae_config(self) -> VaeTrainConfig:
        return self._train_config(VaeTrainConfig, "generate")
