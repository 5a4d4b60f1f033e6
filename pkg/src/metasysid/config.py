"""INI-style configuration for the CLI and experiment runners.

The grammar is flat ``key = value`` lines under ``[section]`` headers
(UTF-8, ``#``/``;`` comments). Every key has a default, unknown keys are
rejected, and constraint violations name the offending keys. Some
experiments override defaults for keys the user did not set explicitly
(see ``EXPERIMENT_DEFAULTS``); an explicit value always wins.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import (
    FixedListSampler,
    HarmonicSwitchSampler,
    IIDUniformSampler,
    NoiseConfig,
    SystemParams,
    scalar_params,
)

__all__ = [
    "ExperimentConfig",
    "EXPERIMENT_NAMES",
    "parse_config",
    "apply_experiment_defaults",
    "serialize_config",
]


# Default value strings, in canonical serialization order.
_DEFAULTS: dict[tuple[str, str], str] = {
    ("experiment", "name"): "",
    ("experiment", "seed"): "0",
    ("experiment", "out"): "out",
    ("experiment", "repetitions"): "5",
    ("experiment", "test_blocks"): "50",
    ("model", "n"): "1",
    ("model", "m"): "1",
    ("model", "sigma_a2"): "0.1",
    ("model", "sigma_w2"): "0.01",
    ("model", "sampler"): "uniform",
    ("model", "lo"): "0.5",
    ("model", "hi"): "1.0",
    ("model", "reject_unstable"): "auto",
    ("model", "params"): "0.5 0.7 ; 0.8 0.8",
    ("meta", "alpha"): "0.01",
    ("meta", "d"): "300",
    ("meta", "d_list"): "10 50 100 200 300",
    ("meta", "l"): "12",
    ("meta", "m_train"): "4",
    ("meta", "m_train_list"): "1 2 5",
    ("meta", "l_list"): "6 8 10 12 16",
    ("meta", "dim_list"): "1 2 3",
    ("meta", "rcond"): "none",
    ("adapt", "alpha"): "0.01",
    ("adapt", "steps"): "20",
    ("adapt", "steps_list"): "1 5 10 20",
    ("adapt", "alpha_list"): "0.01 0.05",
    ("adapt", "c_phi"): "auto",
    ("adapt", "c_z"): "auto",
    ("adapt", "epsilon_list"): "0.0",
    ("adapt", "norm"): "spectral",
    ("bounds", "k"): "2",
    ("bounds", "p"): "0.15",
    ("bounds", "delta"): "0.1",
    ("bounds", "n_env"): "1000",
    ("bounds", "rho"): "auto",
    ("bounds", "gap0"): "0.04",
}

EXPERIMENT_NAMES = (
    "fig-gap-vs-D",
    "fig-gap-vs-dim",
    "fig-gap-vs-L",
    "fig-adapt-vs-D",
    "fig-adapt-vs-M",
    "fig-lse-vs-meta",
    "fig-harmonic",
    "fig-weighting",
    "bounds-report",
)

# Per-experiment defaults, applied only to keys the user did not set.
EXPERIMENT_DEFAULTS: dict[str, dict[tuple[str, str], str]] = {
    "fig-harmonic": {
        ("model", "sampler"): "harmonic",
        ("model", "sigma_a2"): "1.0",
        ("model", "sigma_w2"): "0.001",
        ("adapt", "alpha"): "0.2",
        ("adapt", "steps"): "20",
        ("experiment", "repetitions"): "100",
    },
    "fig-lse-vs-meta": {
        ("model", "sigma_a2"): "1.0",
        ("model", "sigma_w2"): "1.0",
        ("adapt", "steps_list"): "1 2 3 4 5",
    },
    "fig-weighting": {
        ("model", "sigma_w2"): "0.0",
    },
    "fig-gap-vs-dim": {
        ("model", "lo"): "-0.5",
        ("model", "hi"): "0.5",
        ("model", "reject_unstable"): "on",
    },
    "bounds-report": {
        ("model", "sampler"): "harmonic",
        ("model", "params"): "0.5 0.9486832980505138",
        ("meta", "d"): "6000",
        ("meta", "l"): "202",
        ("meta", "m_train"): "2",
        ("meta", "alpha"): "0.005",
        ("experiment", "repetitions"): "200",
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved, validated configuration.

    ``None`` stands for the documented "auto"/"none" sentinels: projection
    radii and ``rho`` derived from the model at run time, and the default
    pseudo-inverse cutoff. ``explicit`` records which keys the user set;
    it never affects equality.
    """

    name: str
    seed: int
    out: str
    repetitions: int
    test_blocks: int
    n: int
    m: int
    sigma_a2: float
    sigma_w2: float
    sampler: str
    lo: float
    hi: float
    reject_unstable: bool | None
    params: tuple[tuple[float, float], ...]
    meta_alpha: float
    d: int
    d_list: tuple[int, ...]
    l: int
    m_train: int
    m_train_list: tuple[int, ...]
    l_list: tuple[int, ...]
    dim_list: tuple[int, ...]
    rcond: float | None
    adapt_alpha: float
    steps: int
    steps_list: tuple[int, ...]
    alpha_list: tuple[float, ...]
    c_phi: float | None
    c_z: float | None
    epsilon_list: tuple[float, ...]
    norm: str
    k: int
    p: float
    delta: float
    n_env: int
    rho: float | None
    gap0: float
    explicit: frozenset = field(default_factory=frozenset, compare=False)

    def noise(self) -> NoiseConfig:
        return NoiseConfig(sigma_a2=self.sigma_a2, sigma_w2=self.sigma_w2)

    def task_params(self) -> tuple[SystemParams, ...]:
        return tuple(scalar_params(a, b) for a, b in self.params)

    def make_sampler(self):
        """Instantiate the configured task sampler."""
        if self.sampler == "uniform":
            return IIDUniformSampler(
                n=self.n, m=self.m, lo=self.lo, hi=self.hi,
                reject_unstable=self.reject_unstable,
            )
        if self.sampler == "fixed":
            return FixedListSampler(params=self.task_params())
        return HarmonicSwitchSampler(params=self.task_params())


def _fail(key: tuple[str, str], message: str) -> ConfigError:
    return ConfigError(f"{key[0]}.{key[1]}: {message}")


def _parse_int(key, text, low=None):
    try:
        value = int(text)
    except ValueError:
        raise _fail(key, f"expected an integer, got {text!r}") from None
    if low is not None and value < low:
        raise _fail(key, f"must be >= {low}, got {value}")
    return value


def _parse_float(key, text, low=None, strict_low=None):
    try:
        value = float(text)
    except ValueError:
        raise _fail(key, f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise _fail(key, f"must be finite, got {value}")
    if low is not None and value < low:
        raise _fail(key, f"must be >= {low}, got {value}")
    if strict_low is not None and value <= strict_low:
        raise _fail(key, f"must be > {strict_low}, got {value}")
    return value


def _parse_int_list(key, text, low=None):
    parts = text.split()
    if not parts:
        raise _fail(key, "list must not be empty")
    return tuple(_parse_int(key, part, low) for part in parts)


def _parse_float_list(key, text, low=None):
    parts = text.split()
    if not parts:
        raise _fail(key, "list must not be empty")
    return tuple(_parse_float(key, part, low) for part in parts)


def _parse_params(key, text):
    groups = [group.strip() for group in text.split(";")]
    pairs = []
    for group in groups:
        if not group:
            raise _fail(key, "empty task entry (stray ';')")
        parts = group.split()
        if len(parts) != 2:
            raise _fail(
                key,
                f"each task entry must be two numbers 'a b', got {group!r} "
                "(matrix-valued tasks are library-only)",
            )
        pairs.append((
            _parse_float(key, parts[0]),
            _parse_float(key, parts[1]),
        ))
    return tuple(pairs)


def _parse_choice(key, text, choices):
    if text not in choices:
        raise _fail(key, f"must be one of {', '.join(choices)}, got {text!r}")
    return text


def _build(values: dict[tuple[str, str], str], explicit: frozenset) -> ExperimentConfig:
    get = values.__getitem__
    name = get(("experiment", "name")).strip()
    if name and name not in EXPERIMENT_NAMES:
        raise _fail(
            ("experiment", "name"),
            f"unknown experiment {name!r}; known: {', '.join(EXPERIMENT_NAMES)}",
        )

    sampler = _parse_choice(("model", "sampler"), get(("model", "sampler")),
                            ("uniform", "fixed", "harmonic"))
    reject_raw = _parse_choice(("model", "reject_unstable"),
                               get(("model", "reject_unstable")), ("auto", "on", "off"))
    reject = None if reject_raw == "auto" else reject_raw == "on"

    n = _parse_int(("model", "n"), get(("model", "n")), low=1)
    m = _parse_int(("model", "m"), get(("model", "m")), low=0)
    lo = _parse_float(("model", "lo"), get(("model", "lo")))
    hi = _parse_float(("model", "hi"), get(("model", "hi")))
    if not lo < hi:
        raise _fail(("model", "lo"), f"model.lo must be smaller than model.hi, got [{lo}, {hi}]")
    params = _parse_params(("model", "params"), get(("model", "params")))
    if sampler in ("fixed", "harmonic") and (n, m) != (1, 1):
        raise _fail(
            ("model", "sampler"),
            f"the {sampler} sampler reads scalar tasks from model.params and "
            f"needs n = m = 1, got n={n}, m={m}",
        )

    l = _parse_int(("meta", "l"), get(("meta", "l")), low=2)
    m_train = _parse_int(("meta", "m_train"), get(("meta", "m_train")), low=1)
    if not m_train < l:
        raise _fail(("meta", "m_train"),
                    f"meta.m_train must be smaller than meta.l, got m_train={m_train}, l={l}")
    l_list = _parse_int_list(("meta", "l_list"), get(("meta", "l_list")), low=2)
    for value in l_list:
        if value <= m_train:
            raise _fail(("meta", "l_list"),
                        f"every entry must exceed meta.m_train={m_train}, got {value}")
    m_train_list = _parse_int_list(("meta", "m_train_list"),
                                   get(("meta", "m_train_list")), low=1)
    for value in m_train_list:
        if value >= l:
            raise _fail(("meta", "m_train_list"),
                        f"every entry must be smaller than meta.l={l}, got {value}")

    k = _parse_int(("bounds", "k"), get(("bounds", "k")), low=1)
    if k > (l - m_train) // 2:
        raise _fail(("bounds", "k"),
                    f"need k <= (l - m_train) // 2 = {(l - m_train) // 2}, got {k}")
    p = _parse_float(("bounds", "p"), get(("bounds", "p")), strict_low=0.0)
    if p > 1.0:
        raise _fail(("bounds", "p"), f"must be <= 1, got {p}")
    delta = _parse_float(("bounds", "delta"), get(("bounds", "delta")), strict_low=0.0)
    if delta >= 1.0:
        raise _fail(("bounds", "delta"), f"must be < 1, got {delta}")

    rho_raw = get(("bounds", "rho"))
    if rho_raw == "auto":
        rho = None
    else:
        rho = _parse_float(("bounds", "rho"), rho_raw, strict_low=0.0)
        if rho >= 1.0:
            raise _fail(("bounds", "rho"), f"must be < 1, got {rho}")

    rcond_raw = get(("meta", "rcond"))
    rcond = None if rcond_raw == "none" else _parse_float(
        ("meta", "rcond"), rcond_raw, strict_low=0.0
    )

    def radius(key_name):
        raw = get(("adapt", key_name))
        if raw == "auto":
            return None
        return _parse_float(("adapt", key_name), raw, strict_low=0.0)

    return ExperimentConfig(
        name=name,
        seed=_parse_int(("experiment", "seed"), get(("experiment", "seed")), low=0),
        out=get(("experiment", "out")),
        repetitions=_parse_int(("experiment", "repetitions"),
                               get(("experiment", "repetitions")), low=1),
        test_blocks=_parse_int(("experiment", "test_blocks"),
                               get(("experiment", "test_blocks")), low=1),
        n=n,
        m=m,
        sigma_a2=_parse_float(("model", "sigma_a2"), get(("model", "sigma_a2")), low=0.0),
        sigma_w2=_parse_float(("model", "sigma_w2"), get(("model", "sigma_w2")), low=0.0),
        sampler=sampler,
        lo=lo,
        hi=hi,
        reject_unstable=reject,
        params=params,
        meta_alpha=_parse_float(("meta", "alpha"), get(("meta", "alpha")), low=0.0),
        d=_parse_int(("meta", "d"), get(("meta", "d")), low=1),
        d_list=_parse_int_list(("meta", "d_list"), get(("meta", "d_list")), low=1),
        l=l,
        m_train=m_train,
        m_train_list=m_train_list,
        l_list=l_list,
        dim_list=_parse_int_list(("meta", "dim_list"), get(("meta", "dim_list")), low=1),
        rcond=rcond,
        adapt_alpha=_parse_float(("adapt", "alpha"), get(("adapt", "alpha")), low=0.0),
        steps=_parse_int(("adapt", "steps"), get(("adapt", "steps")), low=0),
        steps_list=_parse_int_list(("adapt", "steps_list"),
                                   get(("adapt", "steps_list")), low=0),
        alpha_list=_parse_float_list(("adapt", "alpha_list"),
                                     get(("adapt", "alpha_list")), low=0.0),
        c_phi=radius("c_phi"),
        c_z=radius("c_z"),
        epsilon_list=_parse_float_list(("adapt", "epsilon_list"),
                                       get(("adapt", "epsilon_list")), low=0.0),
        norm=_parse_choice(("adapt", "norm"), get(("adapt", "norm")), ("spectral", "fro")),
        k=k,
        p=p,
        delta=delta,
        n_env=_parse_int(("bounds", "n_env"), get(("bounds", "n_env")), low=1),
        rho=rho,
        gap0=_parse_float(("bounds", "gap0"), get(("bounds", "gap0")), low=0.0),
        explicit=explicit,
    )


def _read_document(text: str) -> dict[tuple[str, str], str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config document: {exc}") from None
    if parser.defaults():
        raise ConfigError("a [DEFAULT] section is not supported; use the named sections")
    found: dict[tuple[str, str], str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if (section, key) not in _DEFAULTS:
                known = sorted({sec for sec, _ in _DEFAULTS})
                if section not in known:
                    raise ConfigError(
                        f"unknown section [{section}]; known sections: {', '.join(known)}"
                    )
                keys = sorted(k for sec, k in _DEFAULTS if sec == section)
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; known keys: {', '.join(keys)}"
                )
            found[(section, key)] = value.strip()
    return found


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document, filling defaults.

    An empty document yields the full default configuration. Unknown
    sections or keys are rejected outright.
    """
    found = _read_document(text)
    values = dict(_DEFAULTS)
    values.update(found)
    return _build(values, frozenset(found))


def apply_experiment_defaults(cfg: ExperimentConfig, name: str | None = None) -> ExperimentConfig:
    """Fill experiment-specific defaults for keys the user never set.

    ``name`` overrides (and is recorded as) the experiment name; the
    merged document is re-validated from scratch.
    """
    name = cfg.name if name is None else name
    if name not in EXPERIMENT_NAMES:
        raise ConfigError(
            f"unknown experiment {name!r}; known: {', '.join(EXPERIMENT_NAMES)}"
        )
    values = dict(_DEFAULTS)
    for key, value in EXPERIMENT_DEFAULTS.get(name, {}).items():
        values[key] = value
    for key in cfg.explicit:
        values[key] = _serialize_value(cfg, key)
    values[("experiment", "name")] = name
    explicit = frozenset(cfg.explicit | {("experiment", "name")})
    return _build(values, explicit)


def _fmt_float(value: float) -> str:
    return repr(float(value))


def _serialize_value(cfg: ExperimentConfig, key: tuple[str, str]) -> str:
    section, option = key
    attr = {
        ("experiment", "name"): cfg.name,
        ("experiment", "seed"): str(cfg.seed),
        ("experiment", "out"): cfg.out,
        ("experiment", "repetitions"): str(cfg.repetitions),
        ("experiment", "test_blocks"): str(cfg.test_blocks),
        ("model", "n"): str(cfg.n),
        ("model", "m"): str(cfg.m),
        ("model", "sigma_a2"): _fmt_float(cfg.sigma_a2),
        ("model", "sigma_w2"): _fmt_float(cfg.sigma_w2),
        ("model", "sampler"): cfg.sampler,
        ("model", "lo"): _fmt_float(cfg.lo),
        ("model", "hi"): _fmt_float(cfg.hi),
        ("model", "reject_unstable"): (
            "auto" if cfg.reject_unstable is None
            else ("on" if cfg.reject_unstable else "off")
        ),
        ("model", "params"): " ; ".join(
            f"{_fmt_float(a)} {_fmt_float(b)}" for a, b in cfg.params
        ),
        ("meta", "alpha"): _fmt_float(cfg.meta_alpha),
        ("meta", "d"): str(cfg.d),
        ("meta", "d_list"): " ".join(str(v) for v in cfg.d_list),
        ("meta", "l"): str(cfg.l),
        ("meta", "m_train"): str(cfg.m_train),
        ("meta", "m_train_list"): " ".join(str(v) for v in cfg.m_train_list),
        ("meta", "l_list"): " ".join(str(v) for v in cfg.l_list),
        ("meta", "dim_list"): " ".join(str(v) for v in cfg.dim_list),
        ("meta", "rcond"): "none" if cfg.rcond is None else _fmt_float(cfg.rcond),
        ("adapt", "alpha"): _fmt_float(cfg.adapt_alpha),
        ("adapt", "steps"): str(cfg.steps),
        ("adapt", "steps_list"): " ".join(str(v) for v in cfg.steps_list),
        ("adapt", "alpha_list"): " ".join(_fmt_float(v) for v in cfg.alpha_list),
        ("adapt", "c_phi"): "auto" if cfg.c_phi is None else _fmt_float(cfg.c_phi),
        ("adapt", "c_z"): "auto" if cfg.c_z is None else _fmt_float(cfg.c_z),
        ("adapt", "epsilon_list"): " ".join(_fmt_float(v) for v in cfg.epsilon_list),
        ("adapt", "norm"): cfg.norm,
        ("bounds", "k"): str(cfg.k),
        ("bounds", "p"): _fmt_float(cfg.p),
        ("bounds", "delta"): _fmt_float(cfg.delta),
        ("bounds", "n_env"): str(cfg.n_env),
        ("bounds", "rho"): "auto" if cfg.rho is None else _fmt_float(cfg.rho),
        ("bounds", "gap0"): _fmt_float(cfg.gap0),
    }
    return attr[(section, option)]


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical fully-explicit document for ``cfg``.

    Parsing the result reproduces an equal configuration, and serializing
    that parse returns the identical text (round-trip stability).
    """
    lines = []
    current = None
    for section, option in _DEFAULTS:
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{section}]")
            current = section
        lines.append(f"{option} = {_serialize_value(cfg, (section, option))}")
    return "\n".join(lines) + "\n"
