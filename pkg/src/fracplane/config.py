"""Run configuration: a flat ``key = value`` file with a strict schema.

Lines starting with ``#`` are comments.  Every key is optional and falls
back to the flagship default; unknown keys and out-of-range values raise
``ConfigError`` naming the offending field.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

DOMAINS = ("interval", "rectangle", "disk")
NONLINEARITIES = ("allen-cahn", "zero", "linear")
INITIALS = ("tent", "random")
CHECKS = ("sweep", "symmetry", "growth", "holder")
FORMATS = ("csv", "binary")


@dataclass(frozen=True)
class RunConfig:
    domain: str = "interval"
    extent: tuple = (-1.0, 1.0)
    h: float = 1 / 256
    s: float = 0.5
    nonlinearity: str = "allen-cahn"
    a: float = 1.0
    b: float = 1.0
    a_amp: float = 0.0
    b_amp: float = 0.0
    period: float = 1.0
    coef: float = 0.0
    initial: str = "tent"
    amplitude: float = 0.8
    asymmetry: float = 0.4
    T: float = 50.0
    dt: float = 5e-3
    save_every: int = 20
    lambda_count: int = 16
    threshold: float = 1e-6
    burn_in: float = 0.0
    omega_window: tuple = ()  # empty: the last fifth of [0, T]
    omega_tol: float = 1e-3
    sym_tol: float = math.nan
    checks: tuple = CHECKS
    holder_region: float = 0.5
    regularity_t0: float = 1.0
    trajectory_format: str = "csv"
    seed: int = 0

    def echo(self):
        """``key = value`` lines in schema order (round-trips through ``parse``)."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(x if isinstance(x, str) else repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{f.name} = {v}")
        return out

    @property
    def window(self):
        return tuple(self.omega_window) if self.omega_window else (0.8 * self.T, self.T)

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return validate(RunConfig(**d))


_FLOAT_TUPLES = {"extent", "omega_window"}


def _convert(name, raw, default):
    raw = raw.strip()
    try:
        if name in _FLOAT_TUPLES:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if name == "checks":
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def _require(ok, name, msg):
    if not ok:
        raise ConfigError(f"{name}: {msg}")


def validate(cfg):
    _require(cfg.domain in DOMAINS, "domain", f"must be one of {DOMAINS}")
    need = {"interval": 2, "rectangle": 4, "disk": 1}[cfg.domain]
    _require(len(cfg.extent) == need, "extent", f"{cfg.domain} needs {need} numbers")
    if cfg.domain == "disk":
        _require(cfg.extent[0] > 0, "extent", "radius must be positive")
    else:
        pairs = list(zip(cfg.extent[::2], cfg.extent[1::2]))
        _require(all(lo < hi for lo, hi in pairs), "extent", "need lo < hi")
    _require(0 < cfg.h <= 0.25, "h", "must lie in (0, 0.25]")
    _require(0 < cfg.s < 1, "s", f"must lie in (0, 1), got {cfg.s!r}")
    _require(cfg.nonlinearity in NONLINEARITIES, "nonlinearity", f"must be one of {NONLINEARITIES}")
    _require(cfg.b >= 0, "b", "must be nonnegative")
    _require(abs(cfg.b_amp) <= cfg.b, "b_amp", "must not exceed b")
    _require(cfg.period > 0, "period", "must be positive")
    _require(cfg.initial in INITIALS, "initial", f"must be one of {INITIALS}")
    _require(0 < cfg.amplitude <= 1, "amplitude", "must lie in (0, 1]")
    _require(-1 < cfg.asymmetry < 1, "asymmetry", "must lie in (-1, 1)")
    _require(cfg.T > 0 and math.isfinite(cfg.T), "T", "must be positive")
    _require(0 < cfg.dt <= cfg.T, "dt", "must lie in (0, T]")
    steps = cfg.T / cfg.dt
    _require(abs(steps - round(steps)) < 1e-9 * steps, "dt", "must divide T")
    _require(cfg.save_every >= 1, "save_every", "must be at least 1")
    _require(2 <= cfg.lambda_count <= 1024, "lambda_count", "must lie in [2, 1024]")
    _require(cfg.threshold > 0, "threshold", "must be positive")
    _require(0 <= cfg.burn_in < cfg.T, "burn_in", "must lie in [0, T)")
    _require(not cfg.omega_window or (len(cfg.omega_window) == 2 and
                                      0 <= cfg.omega_window[0] < cfg.omega_window[1] <= cfg.T),
             "omega_window", "must be 'a,b' with 0 <= a < b <= T")
    _require(cfg.omega_tol > 0, "omega_tol", "must be positive")
    _require(math.isnan(cfg.sym_tol) or cfg.sym_tol > 0, "sym_tol", "must be positive")
    bad = [c for c in cfg.checks if c not in CHECKS]
    _require(not bad, "checks", f"unknown entries {bad}")
    _require(0 < cfg.holder_region, "holder_region", "must be positive")
    _require(0 < cfg.regularity_t0 < cfg.T, "regularity_t0", "must lie in (0, T)")
    _require(cfg.trajectory_format in FORMATS, "trajectory_format", f"must be one of {FORMATS}")
    _require(cfg.seed >= 0, "seed", "must be nonnegative")
    return cfg


def parse(text):
    """Parse config text into a validated ``RunConfig``."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), strict=True)
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if len(cp.sections()) != 1:
        raise ConfigError("sections are not allowed; use flat key = value lines")
    defaults = {f.name: f.default for f in fields(RunConfig)}
    kw = {}
    for key, raw in cp["run"].items():
        if key not in defaults:
            raise ConfigError(f"{key}: unknown key")
        kw[key] = _convert(key, raw, defaults[key])
    return validate(RunConfig(**kw))


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    return parse(text)
