"""Experiment configuration: JSON schema, validation, and object construction.

Configs name a model (two-level parameters or a general system), an initial
state, a time grid, a reduction scheme, and an optional list of identity
checks with tolerance overrides.  Matrix entries are written row-major as
[re, im] pairs; Hermiticity is validated on load, never silently repaired.
Validation errors carry the dotted path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelScheme, TimeGrid
from .liouville import TlsModel, assert_density_matrix, assert_hermitian
from .projectors import ProjectorSpec, System

SCHEMES = tuple(s.value for s in KernelScheme) + ("rotated",)

CHECK_NAMES = ("f_convolution", "kernel_relation_g", "matrix_laplace",
               "laplace_solution", "scheme_equivalence")

DEFAULT_CHECK_TOLERANCES = {
    "f_convolution": 1e-5,
    "kernel_relation_g": 1e-5,
    "matrix_laplace": 1e-8,
    "laplace_solution": 1e-10,
    "scheme_equivalence": 2e-4,
}


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _expect_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    return value


def _expect_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _expect_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {type(value).__name__}")
    return value


def _expect_keys(mapping: dict, path: str, required=(), optional=()):
    for key in required:
        if key not in mapping:
            _fail(f"{path}.{key}", "missing required field")
    for key in mapping:
        if key not in (*required, *optional):
            _fail(f"{path}.{key}", "unknown field")


def _complex_matrix(value, path: str) -> np.ndarray:
    """Parse a row-major matrix of [re, im] entry pairs."""
    if not isinstance(value, list) or not value:
        _fail(path, "expected a non-empty list of rows")
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != len(value):
            _fail(f"{path}[{i}]", f"expected a row of length {len(value)}")
        entries = []
        for j, entry in enumerate(row):
            if not isinstance(entry, list) or len(entry) != 2:
                _fail(f"{path}[{i}][{j}]", "expected an [re, im] pair")
            re = _expect_number(entry[0], f"{path}[{i}][{j}][0]")
            im = _expect_number(entry[1], f"{path}[{i}][{j}][1]")
            entries.append(complex(re, im))
        rows.append(entries)
    return np.array(rows, dtype=complex)


@dataclass(eq=False)
class ExperimentConfig:
    """Validated configuration plus constructors for the objects it describes."""

    tls: TlsModel | None
    general: dict | None
    initial_state: object
    projector_pairs: tuple | None
    projector_bath_ref: np.ndarray | None
    dt: float
    t_max: float
    scheme: str
    checks: tuple
    tolerances: dict
    seed: int

    def time_grid(self) -> TimeGrid:
        return TimeGrid.from_duration(self.dt, self.t_max)

    def system(self) -> System:
        if self.tls is not None:
            return System(self.tls.hamiltonian(), system_dim=2, bath_dim=1)
        g = self.general
        if g.get("hamiltonian") is not None:
            return System(g["hamiltonian"], system_dim=g["system_dim"],
                          bath_dim=g["bath_dim"], bath_ref=g.get("bath_ref"))
        rnd = System.random(g["system_dim"], g["bath_dim"], self.seed)
        if g.get("bath_ref") is not None:
            rnd = System(rnd.hamiltonian, rnd.system_dim, rnd.bath_dim,
                         bath_ref=g["bath_ref"])
        return rnd

    def initial_density(self, system: System) -> np.ndarray:
        if isinstance(self.initial_state, str):
            return system.ket0_density()
        rho0 = self.initial_state
        if rho0.shape[0] != system.dim:
            raise ConfigError(
                f"initial_state: dimension {rho0.shape[0]} does not match the "
                f"system dimension {system.dim}")
        return rho0

    def projector_spec(self, system: System) -> ProjectorSpec:
        """The configured projector, or the scheme's natural default."""
        if self.projector_pairs is not None:
            pairs = self.projector_pairs
        elif self.scheme == "projected_single":
            pairs = ((0, 0),)
        else:
            pairs = tuple((n, n) for n in range(system.system_dim))
        bath_ref = self.projector_bath_ref if self.projector_bath_ref is not None \
            else system.bath_ref
        return ProjectorSpec(system.system_dim, system.bath_dim, pairs, bath_ref)

    def tolerance_for(self, check: str) -> float:
        return float(self.tolerances.get(check, DEFAULT_CHECK_TOLERANCES[check]))


def config_from_dict(data: dict) -> ExperimentConfig:
    data = _expect_mapping(data, "config")
    _expect_keys(data, "config", required=("model", "grid", "scheme"),
                 optional=("initial_state", "projector", "checks", "tolerances", "seed"))

    model = _expect_mapping(data["model"], "model")
    if ("tls" in model) == ("general" in model):
        _fail("model", "exactly one of 'tls' or 'general' must be present")
    tls = None
    general = None
    if "tls" in model:
        _expect_keys(model, "model", required=("tls",))
        section = _expect_mapping(model["tls"], "model.tls")
        _expect_keys(section, "model.tls", required=("epsilon", "delta"))
        tls = TlsModel(_expect_number(section["epsilon"], "model.tls.epsilon"),
                       _expect_number(section["delta"], "model.tls.delta"))
    else:
        _expect_keys(model, "model", required=("general",))
        section = _expect_mapping(model["general"], "model.general")
        _expect_keys(section, "model.general", required=("system_dim", "bath_dim"),
                     optional=("hamiltonian", "bath_ref"))
        system_dim = _expect_int(section["system_dim"], "model.general.system_dim")
        bath_dim = _expect_int(section["bath_dim"], "model.general.bath_dim")
        if system_dim < 1 or bath_dim < 1:
            _fail("model.general.system_dim", "dimensions must be positive")
        general = {"system_dim": system_dim, "bath_dim": bath_dim,
                   "hamiltonian": None, "bath_ref": None}
        if "hamiltonian" in section:
            H = _complex_matrix(section["hamiltonian"], "model.general.hamiltonian")
            if H.shape[0] != system_dim * bath_dim:
                _fail("model.general.hamiltonian",
                      f"dimension {H.shape[0]} != system_dim*bath_dim = {system_dim * bath_dim}")
            try:
                assert_hermitian(H, name="hamiltonian")
            except ValueError as exc:
                _fail("model.general.hamiltonian", str(exc))
            general["hamiltonian"] = H
        if "bath_ref" in section:
            B = _complex_matrix(section["bath_ref"], "model.general.bath_ref")
            try:
                assert_density_matrix(B)
            except ValueError as exc:
                _fail("model.general.bath_ref", str(exc))
            general["bath_ref"] = B

    initial_state = data.get("initial_state", "ket0")
    if isinstance(initial_state, str):
        if initial_state != "ket0":
            _fail("initial_state", f"unknown preset {initial_state!r}; presets: 'ket0'")
    else:
        rho0 = _complex_matrix(initial_state, "initial_state")
        try:
            assert_density_matrix(rho0)
        except ValueError as exc:
            _fail("initial_state", str(exc))
        initial_state = rho0

    projector_pairs = None
    projector_bath_ref = None
    if "projector" in data:
        proj = _expect_mapping(data["projector"], "projector")
        _expect_keys(proj, "projector", required=("index_set",), optional=("bath_ref",))
        raw_pairs = proj["index_set"]
        if not isinstance(raw_pairs, list) or not raw_pairs:
            _fail("projector.index_set", "expected a non-empty list of [m, n] pairs")
        pairs = []
        for i, pair in enumerate(raw_pairs):
            if not isinstance(pair, list) or len(pair) != 2:
                _fail(f"projector.index_set[{i}]", "expected an [m, n] pair")
            pairs.append((_expect_int(pair[0], f"projector.index_set[{i}][0]"),
                          _expect_int(pair[1], f"projector.index_set[{i}][1]")))
        projector_pairs = tuple(pairs)
        if "bath_ref" in proj:
            B = _complex_matrix(proj["bath_ref"], "projector.bath_ref")
            try:
                assert_density_matrix(B)
            except ValueError as exc:
                _fail("projector.bath_ref", str(exc))
            projector_bath_ref = B

    grid = _expect_mapping(data["grid"], "grid")
    _expect_keys(grid, "grid", required=("dt", "t_max"))
    dt = _expect_number(grid["dt"], "grid.dt")
    t_max = _expect_number(grid["t_max"], "grid.t_max")
    if dt <= 0:
        _fail("grid.dt", f"must be positive, got {dt}")
    if t_max < dt:
        _fail("grid.t_max", f"must be at least dt, got {t_max} < {dt}")

    scheme = data["scheme"]
    if scheme not in SCHEMES:
        _fail("scheme", f"unknown scheme {scheme!r}; valid schemes: {', '.join(SCHEMES)}")

    checks = data.get("checks", [])
    if not isinstance(checks, list):
        _fail("checks", "expected a list of check names")
    for i, name in enumerate(checks):
        if name not in CHECK_NAMES:
            _fail(f"checks[{i}]",
                  f"unknown check {name!r}; valid checks: {', '.join(CHECK_NAMES)}")

    tolerances = data.get("tolerances", {})
    tolerances = _expect_mapping(tolerances, "tolerances")
    for key, value in tolerances.items():
        if key not in CHECK_NAMES:
            _fail(f"tolerances.{key}",
                  f"unknown check {key!r}; valid checks: {', '.join(CHECK_NAMES)}")
        _expect_number(value, f"tolerances.{key}")

    seed = _expect_int(data.get("seed", 0), "seed")

    return ExperimentConfig(
        tls=tls, general=general, initial_state=initial_state,
        projector_pairs=projector_pairs, projector_bath_ref=projector_bath_ref,
        dt=dt, t_max=t_max, scheme=scheme, checks=tuple(checks),
        tolerances=dict(tolerances), seed=seed)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from exc
    return config_from_dict(data)
