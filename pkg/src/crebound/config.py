"""Case configuration files.

A case file is INI-style text read with :mod:`configparser`::

    [case]
    mesh = fixture:cantilever_sensor     # or a path to a mesh file
    output = results/cantilever
    reference_levels = 2
    repeats = 3

    [fixture]                            # keyword options of the fixture
    h = 0.25
    smooth = true

    [material]
    young = 1.0
    poisson = 0.3

    [estimators]
    methods = eet, spet, eespt
    costs = J0, J1, J2
    k = 3
    penalty = 1e5

    [load.top]                           # one section per boundary group
    traction = 0.0, -1.0

    [displacement.clamp]
    value = 0.0, 0.0

    [body]
    force = 0.0, 0.0

Relative mesh and output paths are resolved against the case file's
directory. Only ``[case] mesh`` is required; a fixture brings its own
material and loads, which the other sections override.
"""
import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eespt import DEFAULT_PENALTY
from .equil import CostKind
from .errors import ConfigError
from .estimator import Method
from .fem import LoadCase, Material
from .fixtures import FIXTURES, get_fixture
from .mesh import read_mesh

__all__ = ["CaseConfig", "load_config", "parse_config", "OUTPUT_ENV"]

OUTPUT_ENV = "CREBOUND_OUTPUT_DIR"
FIXTURE_PREFIX = "fixture:"


@dataclass
class CaseConfig:
    """Everything needed to run one estimator comparison."""

    mesh: str
    methods: tuple = ("EET", "SPET", "EESPT")
    costs: tuple = ("J0",)
    k: int = 3
    penalty: float = DEFAULT_PENALTY
    reference_levels: int = 2
    output: str = "crebound-out"
    repeats: int = 3
    pinning: str = "mean"
    fixture_options: dict = field(default_factory=dict)
    material: dict = field(default_factory=dict)
    tractions: dict = field(default_factory=dict)
    displacements: dict = field(default_factory=dict)
    body_force: tuple | None = None

    @property
    def fixture(self):
        """Fixture name, or None when the mesh comes from a file."""
        if self.mesh.startswith(FIXTURE_PREFIX):
            return self.mesh[len(FIXTURE_PREFIX):]
        return None

    def validate(self):
        if not self.methods:
            raise ConfigError("at least one estimator method is required")
        methods = tuple(dict.fromkeys(Method.parse(m) for m in self.methods))
        costs = tuple(dict.fromkeys(CostKind.parse(c).value for c in self.costs))
        if not costs and any(m != Method.SPET for m in methods):
            raise ConfigError("EET and EESPT need at least one cost function")
        if not self.penalty > 0:
            raise ConfigError(f"penalty must be positive, got {self.penalty}")
        if self.k not in (1, 2, 3):
            raise ConfigError(f"k must be 1, 2 or 3, got {self.k}")
        if self.reference_levels < 0:
            raise ConfigError("reference_levels must be non-negative")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if self.pinning not in ("mean", "point"):
            raise ConfigError(f"unknown pinning {self.pinning!r}")
        if self.fixture is not None and self.fixture not in FIXTURES:
            raise ConfigError(f"unknown fixture {self.fixture!r}; "
                              f"available: {', '.join(sorted(FIXTURES))}")
        if self.fixture is None and not Path(self.mesh).is_file():
            raise ConfigError(f"mesh file not found: {self.mesh}")
        self.methods, self.costs = methods, costs
        return self

    def output_dir(self):
        """Output directory, honouring the environment override."""
        return Path(os.environ.get(OUTPUT_ENV) or self.output)

    def build(self):
        """Mesh, material and loads described by the configuration."""
        if self.fixture is not None:
            fx = get_fixture(self.fixture, **self.fixture_options)
            mesh, material, loads = fx.mesh, fx.material, fx.loads
        else:
            mesh, material, loads = read_mesh(self.mesh), Material(), LoadCase()
        if self.material:
            params = {"young": material.young, "poisson": material.poisson, **self.material}
            material = Material(**params)
        if self.tractions or self.displacements or self.body_force is not None:
            loads = LoadCase(tractions={**loads.tractions, **self.tractions},
                             displacements={**loads.displacements, **self.displacements},
                             body_force=(self.body_force if self.body_force is not None
                                         else loads.body_force))
        loads.check(mesh)
        return mesh, material, loads


def _vector(text, where):
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: expected two numbers, got {text!r}") from None
    if len(vals) != 2 or not np.all(np.isfinite(vals)):
        raise ConfigError(f"{where}: expected two finite numbers, got {text!r}")
    return vals


def _scalar(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(low)
        except ValueError:
            pass
    return text.strip()


def _list(text):
    return tuple(v for v in text.replace(",", " ").split() if v)


def _number(section, key, cast, default):
    if key not in section:
        return default
    try:
        return cast(section[key])
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: not a valid {cast.__name__}: "
                          f"{section[key]!r}") from None


def parse_config(text, base_dir="."):
    """Build a validated :class:`CaseConfig` from case-file text."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed case file: {exc}") from None
    if not parser.has_section("case") or "mesh" not in parser["case"]:
        raise ConfigError("the [case] section must give a mesh")
    base = Path(base_dir)
    case = parser["case"]
    mesh = case["mesh"].strip()
    if not mesh.startswith(FIXTURE_PREFIX):
        mesh = str(base / mesh)
    cfg = CaseConfig(mesh=mesh)
    cfg.output = str(base / case.get("output", cfg.output).strip())
    cfg.reference_levels = _number(case, "reference_levels", int, cfg.reference_levels)
    cfg.repeats = _number(case, "repeats", int, cfg.repeats)

    if parser.has_section("fixture"):
        cfg.fixture_options = {k: _scalar(v) for k, v in parser["fixture"].items()}
    if parser.has_section("material"):
        mat = parser["material"]
        unknown = set(mat) - {"young", "poisson"}
        if unknown:
            raise ConfigError(f"[material]: unknown keys {sorted(unknown)}")
        cfg.material = {k: _number(mat, k, float, None) for k in mat}
    if parser.has_section("estimators"):
        est = parser["estimators"]
        if "methods" in est:
            cfg.methods = _list(est["methods"])
        if "costs" in est:
            cfg.costs = _list(est["costs"])
        cfg.k = _number(est, "k", int, cfg.k)
        cfg.penalty = _number(est, "penalty", float, cfg.penalty)
        cfg.pinning = est.get("pinning", cfg.pinning).strip()
    for name in parser.sections():
        if name.startswith("load."):
            sec = parser[name]
            if "traction" not in sec:
                raise ConfigError(f"[{name}]: missing 'traction'")
            cfg.tractions[name[5:]] = _vector(sec["traction"], name)
        elif name.startswith("displacement."):
            sec = parser[name]
            if "value" not in sec:
                raise ConfigError(f"[{name}]: missing 'value'")
            cfg.displacements[name[13:]] = _vector(sec["value"], name)
        elif name == "body":
            cfg.body_force = _vector(parser[name].get("force", "0 0"), name)
        elif name not in ("case", "fixture", "material", "estimators"):
            raise ConfigError(f"unknown section [{name}]")
    return cfg.validate()


def load_config(path):
    """Read and validate a case file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read case file {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)
