"""Run configuration: flat, typed ``section.key = value`` text files.

Blank lines and lines starting with ``#`` are ignored.  Every key must be
declared in :data:`SCHEMA`; unknown keys and unparsable values raise
:class:`~lowmach.errors.ConfigError` naming the key.  Units are CGS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

__all__ = ["SCHEMA", "RunConfig", "parse_config", "load_config"]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


# key -> (parser, default)
SCHEMA = {
    "grid.nx": (int, 32),
    "grid.ny": (int, 32),
    "grid.dx": (float, 1.0),
    "grid.dy": (float, 1.0),
    "grid.thickness": (float, 1.0),
    "eos.rho1_bar": (float, 1.0),
    "eos.rho2_bar": (float, 1.0),
    "eos.kBT": (float, 1.0),
    "eos.m1": (float, 1.0),
    "eos.m2": (float, 1.0),
    "eos.mu_model": (str, "hard_disk"),
    "eos.inv_mu_value": (_opt_float, None),
    "transport.viscosity_model": (str, "constant"),
    "transport.viscosity": (float, 1.0),
    "transport.diffusion_model": (str, "constant"),
    "transport.diffusion": (float, 1.0),
    "transport.mass_ratio": (float, 1.0),
    "gravity.x": (float, 0.0),
    "gravity.y": (float, 0.0),
    "bc.x_lo": (str, "periodic"),
    "bc.x_hi": (str, "periodic"),
    "bc.y_lo": (str, "periodic"),
    "bc.y_hi": (str, "periodic"),
    "bc.x_lo_c": (_opt_float, None),
    "bc.x_hi_c": (_opt_float, None),
    "bc.y_lo_c": (_opt_float, None),
    "bc.y_hi_c": (_opt_float, None),
    "noise.seed": (int, 0),
    "noise.mass": (_bool, True),
    "noise.momentum": (_bool, True),
    "noise.filter_width": (int, 0),
    "noise.variance_scale": (float, 1.0),
    "integrator.scheme": (str, "midpoint"),
    "integrator.dt": (float, 1.0),
    "integrator.n_steps": (int, 100),
    "integrator.drift_correction_every": (int, -1),
    "integrator.allow_cfl_violation": (_bool, False),
    "integrator.allow_uncorrected": (_bool, False),
    "scenario.name": (str, "equilibrium"),
    "scenario.batch": (int, 1),
    "scenario.c_mean": (float, 0.5),
    "scenario.thermal_init": (_bool, True),
    "scenario.skip_steps": (int, 0),
    "scenario.sample_every": (int, 10),
    "scenario.h_par": (_opt_float, None),
    "scenario.c_ref": (_opt_float, None),
    "scenario.band_lo": (float, 1.0 / 3.0),
    "scenario.band_hi": (float, 2.0 / 3.0),
    "scenario.amplitude": (float, 0.1),
    "output.dir": (str, "output"),
    "output.snapshot_every": (int, 0),
    "output.checkpoint_every": (int, 0),
    "output.eos_limit": (_opt_float, None),
    "poisson.method": (str, "mg"),
    "poisson.rel_tol": (float, 1e-11),
    "poisson.max_iter": (int, 200),
}


@dataclass
class RunConfig:
    """Validated configuration values with defaults filled in.

    ``values`` maps every schema key to its typed value; ``given`` lists
    the keys that were set explicitly.
    """

    values: dict = field(default_factory=dict)
    given: set = field(default_factory=set)

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.values[key]

    def set(self, key: str, value) -> None:
        """Set ``key`` from a typed value or its text form."""
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        parser, _ = SCHEMA[key]
        if isinstance(value, str) and parser is not str:
            try:
                value = parser(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        self.values[key] = value
        self.given.add(key)

    def to_text(self) -> str:
        """Canonical text form listing every key."""
        return "".join(f"{k} = {self.values[k]}\n" for k in SCHEMA)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse configuration text.

    Raises
    ------
    ConfigError
        On syntax errors, unknown keys, duplicate keys or bad values.
    """
    cfg = RunConfig({k: d for k, (_, d) in SCHEMA.items()})
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown configuration key {key!r}")
        if key in cfg.given:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        cfg.set(key, value)
    return cfg


def load_config(path) -> RunConfig:
    """Read and parse a configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
