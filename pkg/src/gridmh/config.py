"""Experiment configuration: INI sections of ``key = value`` lines.

Every value is parsed and validated when the file is read; unknown sections
or keys are errors.
"""

from dataclasses import dataclass, field
import configparser
import math
from importlib import resources

import numpy as np

from .errors import ConfigError
from .models import GrfModel, load_karate, read_edge_list, suff_stats
from .priors import parse_prior

STUDIES = ("table1", "example1", "prop1", "prop2", "tv_toy", "ising_desk", "karate")
CHAIN_KINDS = ("mh", "exchange", "noisy", "precomp", "abc")
ESTIMATORS = ("op", "dp", "fp")


def _floats(text):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}") from None


def _float(text):
    vals = _floats(text)
    if len(vals) != 1:
        raise ConfigError(f"expected one number, got {text!r}")
    return vals[0]


def _int(text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _opt_int(text):
    return None if text.strip() in ("default", "") else _int(text)


def _pairs(text):
    out = []
    for chunk in text.split(";"):
        vals = _floats(chunk)
        if len(vals) != 2:
            raise ConfigError(f"pairs are written 'a b; c d', got {chunk!r}")
        out.append(vals)
    return tuple(out)


def _positive(name, value):
    if not value > 0:
        raise ConfigError(f"{name} must be positive")
    return value


def _nonneg(name, value):
    if value < 0:
        raise ConfigError(f"{name} must be >= 0")
    return value


def _choice(options):
    def parse(text):
        if text not in options:
            raise ConfigError(f"{text!r} is not one of {', '.join(options)}")
        return text
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "experiment": {
        "seed": (_int, 0),
        "out": (str, "runs"),
        "threads": (_int, 1),
    },
    "model": {
        "kind": (str, "toy_gaussian"),
        "data": (str, ""),
        "synthetic_sweeps": (_int, 100),
    },
    "prior": {"spec": (str, "flat")},
    "proposal": {
        "kind": (_choice(("log_scale", "random_walk")), "random_walk"),
        "scale": (str, "grid"),
    },
    "grid": {
        "type": (_choice(("adaptive", "regular")), "adaptive"),
        "eps": (_float, 0.1),
        "start": (_float, math.nan),
        "stop": (_float, math.nan),
        "m": (_float, 1e-3),
        "N": (_int, 50),
        "max_steps": (_int, 10),
        "mode_steps": (_int, 200),
        "mode_init": (str, "auto"),
        "sweeps": (_opt_int, None),
    },
    "precompute": {
        "n": (_int, 10),
        "sweeps": (_opt_int, None),
    },
    "chain": {
        "kind": (_choice(CHAIN_KINDS), "precomp"),
        "estimator": (_choice(ESTIMATORS), "fp"),
        "iters": (_int, 1000),
        "chains": (_int, 1),
        "n_aux": (_int, 1),
        "tolerance": (_float, 0.1),
        "init": (str, "prior"),
        "sweeps": (_opt_int, None),
        "average_axis_orders": (lambda t: _choice(("yes", "no"))(t) == "yes", False),
    },
    "study": {
        "name": (_choice(STUDIES), ""),
        "replicates": (_int, 1000),
        "pairs": (_pairs, ()),
        "theta": (_floats, ()),
        "theta_prime": (_floats, ()),
        "h_values": (_floats, ()),
        "check_h": (_float, 0.5),
        "fit_from": (_float, math.nan),
        "eps_values": (_floats, ()),
        "p": (_int, 5),
        "n": (_int, 10),
        "chains": (_int, 1000),
        "iters": (_int, 50),
        "reference_iters": (_int, 10000),
        "burn_in": (_int, 0),
        "bins": (_int, 50),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    sections: dict
    text: str = ""
    explicit: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    def get(self, section, key):
        return self.sections[section][key]

    def is_set(self, section, key):
        return key in self.explicit.get(section, ())

    @property
    def model(self):
        try:
            return GrfModel.parse(self.get("model", "kind"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def prior(self):
        return parse_prior(self.get("prior", "spec"))

    @property
    def seed(self):
        return self.get("experiment", "seed")

    def with_overrides(self, **overrides):
        """Copy with ``section__key=value`` overrides (already parsed values)."""
        sections = {s: dict(v) for s, v in self.sections.items()}
        explicit = {s: set(v) for s, v in self.explicit.items()}
        for name, value in overrides.items():
            section, key = name.split("__", 1)
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            sections[section][key] = value
            explicit.setdefault(section, set()).add(key)
        return ExperimentConfig(sections, self.text, explicit)


def parse_config(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    sections = {name: {k: d for k, (_, d) in keys.items()} for name, keys in SCHEMA.items()}
    explicit = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        for key, raw in parser.items(name):
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            parse, _ = SCHEMA[name][key]
            sections[name][key] = parse(raw.strip())
            explicit.setdefault(name, set()).add(key)
    cfg = ExperimentConfig(sections, text, explicit)
    validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def bundled_config(name):
    """Text of a config shipped with the package (e.g. ``"toy"``)."""
    try:
        return resources.files("gridmh").joinpath(f"configs/{name}.ini").read_text()
    except FileNotFoundError:
        raise ConfigError(f"no bundled config named {name!r}") from None


def validate(cfg):
    model = cfg.model
    cfg.prior  # noqa: B018  (parses or raises)
    _nonneg("threads", cfg.get("experiment", "threads") - 1)
    _nonneg("seed", cfg.seed)
    g = cfg["grid"]
    _positive("grid eps", g["eps"])
    _positive("grid m", g["m"])
    _nonneg("grid max_steps", g["max_steps"])
    _positive("grid mode_steps", g["mode_steps"])
    if g["N"] < 2:
        raise ConfigError("grid N must be >= 2")
    if g["type"] == "regular":
        if model.dims != 1:
            raise ConfigError("regular grids are one-dimensional")
        if not (g["stop"] >= g["start"]):
            raise ConfigError("regular grid needs start <= stop")
    _nonneg("precompute n", cfg.get("precompute", "n"))
    c = cfg["chain"]
    _positive("chain iters", c["iters"])
    _positive("chain chains", c["chains"])
    _positive("chain n_aux", c["n_aux"])
    _positive("chain tolerance", c["tolerance"])
    for section in ("grid", "precompute", "chain"):
        sw = cfg.get(section, "sweeps")
        if sw is not None:
            _positive(f"{section} sweeps", sw)
    scale = cfg.get("proposal", "scale")
    if scale.startswith("grid"):
        cells = _floats(scale[4:])
        if len(cells) > 1 or (cells and cells[0] <= 0):
            raise ConfigError("'grid' proposal scale takes at most one positive cell multiplier")
    else:
        vals = _floats(scale)
        if len(vals) not in (1, model.dims, model.dims**2):
            raise ConfigError("proposal scale must be 'grid', one number, d numbers or a d*d covariance")
    if cfg.get("proposal", "kind") == "log_scale" and scale.startswith("grid"):
        raise ConfigError("the log_scale proposal needs a numeric scale")
    if c["init"] not in ("prior", "mode"):
        if len(_floats(c["init"])) != model.dims:
            raise ConfigError("chain init must be 'prior', 'mode' or d numbers")
    if g["mode_init"] != "auto" and len(_floats(g["mode_init"])) != model.dims:
        raise ConfigError("grid mode_init must be 'auto' or d numbers")
    _positive("study replicates", cfg.get("study", "replicates") - 1)
    observed_spec(cfg)


def observed_spec(cfg):
    """Parsed ``[model] data``: (kind, args)."""
    text = cfg.get("model", "data").split()
    if not text:
        return ("none", ())
    kind, args = text[0], text[1:]
    model = cfg.model
    if kind == "stats":
        vals = _floats(" ".join(args))
        if len(vals) != model.dims:
            raise ConfigError(f"observed statistics need {model.dims} numbers")
        return kind, vals
    if kind == "karate":
        if model.kind not in ("ergm_edges_triangles", "ergm_edges_twostars", "erdos_renyi") or model.size != 34:
            raise ConfigError("karate data need a 34-node graph model")
        return kind, ()
    if kind == "edges":
        if len(args) != 1:
            raise ConfigError("edges data take one path")
        return kind, (args[0],)
    if kind == "synthetic":
        vals = _floats(" ".join(args))
        if len(vals) != model.dims:
            raise ConfigError(f"synthetic data need {model.dims} parameter values")
        return kind, vals
    raise ConfigError(f"unknown data source {kind!r}")


def observed_stats(cfg, rng=None):
    """Sufficient statistics of the observed data described by ``[model] data``."""
    from .models import sample_aux

    kind, args = observed_spec(cfg)
    model = cfg.model
    if kind == "none":
        raise ConfigError("[model] data is required for this command")
    if kind == "stats":
        return np.array(args)
    if kind == "karate":
        return suff_stats(model, load_karate())
    if kind == "edges":
        try:
            with open(args[0]) as fh:
                return suff_stats(model, read_edge_list(fh.read().splitlines(), model.size))
        except OSError as exc:
            raise ConfigError(f"cannot read edge list: {exc}") from None
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0, 5)))
    return suff_stats(model, sample_aux(model, args, cfg.get("model", "synthetic_sweeps"), rng))
