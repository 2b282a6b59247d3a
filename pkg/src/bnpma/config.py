"""Run configuration: a sectioned key = value file.

Keys above the first section header belong to ``[run]``.  Unknown sections
or keys are errors.
"""
import configparser
import math
from dataclasses import dataclass, field

from .centering import CenteringMeasure
from .model import ModelConfig
from .simulate import SimConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if text.strip().lower() in ("", "auto", "none") else int(text)


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _list(sep):
    return lambda text: [v.strip() for v in text.split(sep) if v.strip()]


SCHEMA = {
    "run": {"seed": int, "workers": int},
    "chain": {"n_iter": int, "burn_in": int, "thin": int},
    "centering": {"family": str, "rate": float, "mu": float, "sigma": float, "auto": _bool},
    "model": {"alpha": float, "H": _opt_int, "c_scale": float, "invgamma_a": float,
              "invgamma_b": float, "depth": int, "random_effects": _bool,
              "marker_covariate": _bool, "standardize": _bool},
    "output": {"predictive": _list(";"), "interactions": _list(",")},
    "sim": {"S": int, "n": int, "seed": int, "beta1": _floats, "beta2": _floats,
            "gamma_range": _floats, "conf_level": float},
}


@dataclass
class CenteringConfig:
    family: str = "exponential"
    rate: float = math.log(2.0)
    mu: float = 0.0
    sigma: float = 1.0
    auto: bool = True

    def build(self, medians):
        if self.auto:
            return CenteringMeasure.from_medians(medians, family=self.family)
        return CenteringMeasure(self.family, rate=self.rate, mu=self.mu, sigma=self.sigma)


@dataclass
class RunConfig:
    seed: int | None = None
    workers: int = 1
    n_iter: int = 50_000
    burn_in: int = 49_000
    thin: int = 1
    centering: CenteringConfig = field(default_factory=CenteringConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    predictive: list = field(default_factory=list)
    interactions: list = field(default_factory=list)
    sim: SimConfig = field(default_factory=SimConfig)

    def validate(self, need_seed=False):
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.n_iter < 0 or self.burn_in < 0:
            raise ConfigError("n_iter and burn_in must be non-negative")
        if self.n_iter and self.burn_in >= self.n_iter:
            raise ConfigError("burn_in must be smaller than n_iter")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if need_seed and self.seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        return self


def parse_config_text(text):
    """Parse config text into ``{section: {key: value}}`` with typed values."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            try:
                out[section][key] = SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return out


def build_config(sections):
    cfg = RunConfig()
    run = sections.get("run", {})
    cfg.seed = run.get("seed", cfg.seed)
    cfg.workers = run.get("workers", cfg.workers)
    chain = sections.get("chain", {})
    cfg.n_iter = chain.get("n_iter", cfg.n_iter)
    cfg.burn_in = chain.get("burn_in", cfg.burn_in if "n_iter" not in chain else chain["n_iter"] // 2)
    cfg.thin = chain.get("thin", cfg.thin)
    try:
        cfg.centering = CenteringConfig(**sections.get("centering", {}))
        CenteringMeasure(cfg.centering.family)  # validates the family name
        cfg.model = ModelConfig(**sections.get("model", {}))
        sim = dict(sections.get("sim", {}))
        cfg.sim = SimConfig(**sim)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = sections.get("output", {})
    cfg.predictive = out.get("predictive", [])
    cfg.interactions = out.get("interactions", [])
    return cfg


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_config_text(text))


def parse_selector(text):
    """``"tumor=melanoma&agent=avelumab"`` -> ordered dict of column -> value."""
    sel = {}
    for part in text.split("&"):
        if "=" not in part:
            raise ConfigError(f"bad selector {text!r}; expected column=value[&column=value]")
        k, v = part.split("=", 1)
        sel[k.strip()] = v.strip()
    return sel
