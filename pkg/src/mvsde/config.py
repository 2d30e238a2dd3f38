"""Experiment configuration: sectioned key = value files and defaults.

Grammar (stdlib configparser INI dialect, UTF-8):

    [model]       name (cubic | quintic | doublewell), model parameters
    [schemes]     schemes = comma list of scheme names
                  (identity | dte(lambda) | me | te(alpha) | se(alpha) | fte | ssm)
    [grid]        T, and either h  = comma list of run step sizes
                  or          h_ref + h_list   (convergence studies)
    [experiment]  N, seed, record_times, repetitions, experiment-specific keys
    [output]      out_dir, formats = comma list of csv | svg

Numbers accept plain decimals, scientific notation and exact dyadic
exponents written as 2^-14.  Arrays are comma-separated.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .models import ModelSpec, make_model
from .stepper import MODIFIED_EULER, SPLIT_STEP, NewtonConfig, SchemeConfig
from .taming import parse_taming

_DYADIC = re.compile(r"^2\^(-?\d+)$")


def parse_number(text: str) -> float:
    text = text.strip()
    m = _DYADIC.match(text)
    if m:
        return 2.0 ** int(m.group(1))
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse number '{text}'") from None


def parse_list(text: str, conv=parse_number) -> list:
    items = [part.strip() for part in text.split(",")]
    return [conv(part) for part in items if part]


def exact_divide(a: float, b: float, what: str) -> int:
    """a / b as an integer, rejecting non-integral ratios."""
    ratio = a / b
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise ConfigError(f"{what}: {a!r} / {b!r} = {ratio!r} is not a positive integer")
    return n


def scheme_label(text: str) -> str:
    """Canonical filesystem-safe label for a scheme name like 'te(1)'."""
    text = text.strip().lower()
    if text == "ssm":
        return "ssm"
    name, arg = text, None
    if "(" in text and text.endswith(")"):
        name, rest = text.split("(", 1)
        name, rest = name.strip(), rest[:-1].strip()
        if rest:
            arg = float(rest)
    if name == "dte":
        return f"dte_l{arg if arg is not None else 0.5:g}"
    if name == "te":
        return f"te_a{arg if arg is not None else 1.0:g}"
    if name == "se":
        return f"se_a{arg if arg is not None else 1.0:g}"
    if name in ("me", "fte", "identity"):
        return name
    raise ConfigError(f"unknown scheme '{text}'")


def build_scheme(text: str, model: ModelSpec, newton: NewtonConfig | None = None) -> SchemeConfig:
    """Scheme from its config name; 'ssm' is the implicit split-step method."""
    label = scheme_label(text)
    if text.strip().lower() == "ssm":
        return SchemeConfig(
            method=SPLIT_STEP, newton=newton or NewtonConfig(), label=label
        )
    try:
        op = parse_taming(text, model_rho=model.rho)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return SchemeConfig(method=MODIFIED_EULER, t1=op, t2=op, label=label)


@dataclass
class ExperimentConfig:
    """Parsed experiment description shared by every subcommand."""

    model_name: str = "cubic"
    model_params: dict = field(default_factory=dict)
    schemes: list = field(default_factory=lambda: ["me"])
    T: float = 1.0
    N: int = 100
    seed: int = 1
    h_values: list = field(default_factory=list)  # run step sizes (one cell per h)
    h_ref: float | None = None  # convergence reference step
    h_list: list = field(default_factory=list)  # convergence coarse steps
    record_times: list | None = None
    repetitions: int = 1
    orders: list = field(default_factory=lambda: [2, 4])
    moment_ceiling: float = 1e4
    trace_particles: list | None = None
    trace_stride: int = 1
    n_list: list = field(default_factory=list)
    proxy_n: int = 0
    reference_scheme: str | None = None
    reference_h: float | None = None
    out_dir: str = "out"
    formats: list = field(default_factory=lambda: ["csv"])

    def build_model(self) -> ModelSpec:
        try:
            return make_model(self.model_name, **self.model_params)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad model: {err}") from None

    def build_schemes(self, model: ModelSpec) -> list:
        if not self.schemes:
            raise ConfigError("no schemes configured")
        return [build_scheme(text, model) for text in self.schemes]

    def validate_convergence(self):
        if self.h_ref is None or not self.h_list:
            raise ConfigError("convergence study needs h_ref and h_list in [grid]")
        exact_divide(self.T, self.h_ref, "T / h_ref")
        n_ref = round(self.T / self.h_ref)
        for h in [self.h_ref, *self.h_list]:
            if not 0.0 < h < 1.0:
                raise ConfigError(f"step size {h} outside (0, 1)")
        for h in self.h_list:
            factor = exact_divide(h, self.h_ref, "h / h_ref")
            if n_ref % factor != 0:
                raise ConfigError(f"h = {h} does not divide the reference grid")

    def validate_run_steps(self):
        if not self.h_values:
            raise ConfigError("this experiment needs h = ... in [grid]")
        for h in self.h_values:
            if not 0.0 < h < 1.0:
                raise ConfigError(f"step size {h} outside (0, 1)")
            exact_divide(self.T, h, "T / h")


_MODEL_PARAM_CONVERTERS = {"mu0": float, "sigma0sq": float}


def load_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"cannot read config file '{path}'")
    cfg = ExperimentConfig()

    if parser.has_section("model"):
        sec = parser["model"]
        cfg.model_name = sec.get("name", cfg.model_name).strip()
        for key in sec:
            if key == "name":
                continue
            conv = _MODEL_PARAM_CONVERTERS.get(key, parse_number)
            cfg.model_params[key] = conv(sec[key])

    if parser.has_section("schemes"):
        raw = parser["schemes"].get("schemes", "")
        cfg.schemes = [s.strip() for s in raw.split(",") if s.strip()]
        if not cfg.schemes:
            raise ConfigError("[schemes] section present but empty")

    if parser.has_section("grid"):
        sec = parser["grid"]
        if "t" in sec:
            cfg.T = parse_number(sec["t"])
        if "h" in sec:
            cfg.h_values = parse_list(sec["h"])
        if "h_ref" in sec:
            cfg.h_ref = parse_number(sec["h_ref"])
        if "h_list" in sec:
            cfg.h_list = parse_list(sec["h_list"])

    if parser.has_section("experiment"):
        sec = parser["experiment"]
        if "n" in sec:
            cfg.N = int(sec["n"])
        if "seed" in sec:
            cfg.seed = int(sec["seed"])
        if "record_times" in sec:
            cfg.record_times = parse_list(sec["record_times"])
        if "repetitions" in sec:
            cfg.repetitions = int(sec["repetitions"])
        if "orders" in sec:
            cfg.orders = [int(v) for v in parse_list(sec["orders"], conv=parse_number)]
        if "moment_ceiling" in sec:
            cfg.moment_ceiling = parse_number(sec["moment_ceiling"])
        if "trace_particles" in sec:
            cfg.trace_particles = [int(v) for v in parse_list(sec["trace_particles"])]
        if "trace_stride" in sec:
            cfg.trace_stride = int(sec["trace_stride"])
        if "n_list" in sec:
            cfg.n_list = [int(v) for v in parse_list(sec["n_list"])]
        if "proxy_n" in sec:
            cfg.proxy_n = int(sec["proxy_n"])
        if "reference_scheme" in sec:
            name = sec["reference_scheme"].strip().lower()
            cfg.reference_scheme = None if name in ("", "none") else name
        if "reference_h" in sec:
            cfg.reference_h = parse_number(sec["reference_h"])

    if parser.has_section("output"):
        sec = parser["output"]
        if "out_dir" in sec:
            cfg.out_dir = sec["out_dir"].strip()
        if "formats" in sec:
            cfg.formats = [f.strip().lower() for f in sec["formats"].split(",") if f.strip()]
            bad = [f for f in cfg.formats if f not in ("csv", "svg")]
            if bad:
                raise ConfigError(f"unknown output formats: {bad}")

    if cfg.T <= 0:
        raise ConfigError("horizon T must be positive")
    if cfg.N < 1:
        raise ConfigError("particle count N must be positive")
    if cfg.repetitions < 1:
        raise ConfigError("repetitions must be at least 1")
    return cfg


def paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Published convergence protocol: h_ref = 2^-17, integer-ratio coarse
    steps 2^-13..2^-16, N = 100."""
    return replace(
        cfg,
        h_ref=2.0**-17,
        h_list=[2.0**-13, 2.0**-14, 2.0**-15, 2.0**-16],
        N=100,
    )
