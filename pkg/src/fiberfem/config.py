"""Run configuration: TOML parsing, normalization, and serialization.

All pressures are normalized to kPa; inputs may be numeric (already kPa) or
strings with a unit ("500 mmHg", "66.661 kPa"). parse -> normalize ->
serialize -> parse is a fixed point. Units are kPa / mm throughout.
"""

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigurationError
from .materials import MMHG_TO_KPA

BENCHMARKS = ("artery", "ellipsoid")
FORMULATIONS = ("p0as", "p0was", "projection", "mini")
ELEMENT_KINDS = ("tet", "hex")
ELLIPSOID_LAWS = ("guccione", "holzapfelogden")


def parse_pressure(value):
    """Pressure in kPa from a number (kPa) or a '<value> <unit>' string."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        parts = value.split()
        if len(parts) == 2:
            try:
                mag = float(parts[0])
            except ValueError:
                raise ConfigurationError(f"bad pressure value {value!r}") from None
            unit = parts[1].lower()
            if unit == "mmhg":
                return mag * MMHG_TO_KPA
            if unit == "kpa":
                return mag
        raise ConfigurationError(f"bad pressure spec {value!r}; use kPa or mmHg")
    raise ConfigurationError(f"bad pressure spec {value!r}")


@dataclass
class RunConfig:
    benchmark: str = "artery"
    level: int = 1
    formulation: str = "projection"
    elem: str = "tet"
    phase: str = "passive"              # ellipsoid only
    law: str = "guccione"               # ellipsoid material
    output_dir: str = "out"
    mesh_path: str = None               # custom VTK mesh instead of a benchmark mesh
    # load
    pressure_kpa: float = None          # None -> benchmark default
    steps: int = None
    axial_mm: float = 2.0
    twist_deg: float = 60.0
    active_kpa: float = 60.0
    # material overrides
    material: dict = field(default_factory=dict)
    kappa: float = None
    # solver
    newton_tol: float = 1e-6
    newton_max_iter: int = 20
    linear_tol: float = 1e-8
    max_krylov: int = 500
    preconditioner: str = "auto"
    # outputs
    vtk: bool = True
    csv: bool = True
    figures: bool = True
    matrices: bool = False
    # sweep matrix
    sweep: dict = field(default_factory=dict)

    def validate(self):
        if self.benchmark not in BENCHMARKS:
            raise ConfigurationError(f"unknown benchmark {self.benchmark!r}")
        if self.formulation not in FORMULATIONS:
            raise ConfigurationError(f"unknown formulation {self.formulation!r}")
        if self.elem not in ELEMENT_KINDS:
            raise ConfigurationError(f"unknown element kind {self.elem!r}")
        if self.benchmark == "ellipsoid":
            if self.elem != "tet":
                raise ConfigurationError("the ellipsoid benchmark is tetrahedral")
            if self.phase not in ("passive", "active"):
                raise ConfigurationError(f"unknown phase {self.phase!r}")
            if self.law not in ELLIPSOID_LAWS:
                raise ConfigurationError(f"unknown ellipsoid law {self.law!r}")
        if self.mesh_path is not None and not Path(self.mesh_path).exists():
            raise ConfigurationError(f"mesh file {self.mesh_path!r} does not exist")
        if not (0.0 < self.newton_tol < 1.0 and 0.0 < self.linear_tol < 1.0):
            raise ConfigurationError("solver tolerances must lie in (0,1)")
        return self


_SECTION_KEYS = {
    "run": ("benchmark", "level", "formulation", "elem", "phase", "law",
            "output_dir", "mesh_path"),
    "load": ("pressure", "pressure_kpa", "steps", "axial_mm", "twist_deg",
             "active_kpa"),
    "material": None,      # free-form parameter block
    "newton": ("tol", "max_iter", "preconditioner"),
    "linear": ("tol", "max_krylov"),
    "output": ("vtk", "csv", "figures", "matrices"),
    "sweep": None,
}


def from_dict(data):
    """Normalize a raw (TOML) mapping into a validated RunConfig."""
    cfg = RunConfig()
    for section in data:
        if section not in _SECTION_KEYS and section != "units":
            raise ConfigurationError(f"unknown config section [{section}]")
    for section, keys in _SECTION_KEYS.items():
        block = data.get(section, {})
        if not isinstance(block, dict):
            raise ConfigurationError(f"section [{section}] must be a table")
        if keys is not None:
            for key in block:
                if key not in keys:
                    raise ConfigurationError(f"unknown key {key!r} in [{section}]")
    run = data.get("run", {})
    for key in ("benchmark", "formulation", "elem", "phase", "law", "output_dir",
                "mesh_path"):
        if key in run:
            setattr(cfg, key, run[key])
    if "level" in run:
        cfg.level = int(run["level"])
    load = data.get("load", {})
    if "pressure" in load and "pressure_kpa" in load:
        raise ConfigurationError("give either pressure or pressure_kpa, not both")
    if "pressure" in load:
        cfg.pressure_kpa = parse_pressure(load["pressure"])
    if "pressure_kpa" in load:
        cfg.pressure_kpa = float(load["pressure_kpa"])
    for key in ("steps",):
        if key in load:
            cfg.steps = int(load[key])
    for key in ("axial_mm", "twist_deg", "active_kpa"):
        if key in load:
            setattr(cfg, key, float(load[key]))
    mat = dict(data.get("material", {}))
    cfg.kappa = float(mat.pop("kappa")) if "kappa" in mat else None
    cfg.material = {k: float(v) for k, v in mat.items()}
    newton = data.get("newton", {})
    if "tol" in newton:
        cfg.newton_tol = float(newton["tol"])
    if "max_iter" in newton:
        cfg.newton_max_iter = int(newton["max_iter"])
    if "preconditioner" in newton:
        cfg.preconditioner = str(newton["preconditioner"])
    linear = data.get("linear", {})
    if "tol" in linear:
        cfg.linear_tol = float(linear["tol"])
    if "max_krylov" in linear:
        cfg.max_krylov = int(linear["max_krylov"])
    out = data.get("output", {})
    for key in ("vtk", "csv", "figures", "matrices"):
        if key in out:
            setattr(cfg, key, bool(out[key]))
    cfg.sweep = dict(data.get("sweep", {}))
    return cfg.validate()


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {str(path)!r} does not exist")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as err:
        raise ConfigurationError(f"malformed config: {err}") from err
    return from_dict(data)


def to_dict(cfg):
    """Normalized nested mapping (the serialization schema)."""
    d = {
        "run": {
            "benchmark": cfg.benchmark,
            "level": cfg.level,
            "formulation": cfg.formulation,
            "elem": cfg.elem,
            "output_dir": cfg.output_dir,
        },
        "load": {
            "axial_mm": cfg.axial_mm,
            "twist_deg": cfg.twist_deg,
            "active_kpa": cfg.active_kpa,
        },
        "newton": {
            "tol": cfg.newton_tol,
            "max_iter": cfg.newton_max_iter,
            "preconditioner": cfg.preconditioner,
        },
        "linear": {"tol": cfg.linear_tol, "max_krylov": cfg.max_krylov},
        "output": {
            "vtk": cfg.vtk, "csv": cfg.csv, "figures": cfg.figures,
            "matrices": cfg.matrices,
        },
        "units": {"length": "mm", "pressure": "kPa"},
    }
    if cfg.benchmark == "ellipsoid":
        d["run"]["phase"] = cfg.phase
        d["run"]["law"] = cfg.law
    if cfg.mesh_path is not None:
        d["run"]["mesh_path"] = cfg.mesh_path
    if cfg.pressure_kpa is not None:
        d["load"]["pressure_kpa"] = cfg.pressure_kpa
    if cfg.steps is not None:
        d["load"]["steps"] = cfg.steps
    mat = dict(cfg.material)
    if cfg.kappa is not None:
        mat["kappa"] = cfg.kappa
    if mat:
        d["material"] = mat
    if cfg.sweep:
        d["sweep"] = cfg.sweep
    return d


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigurationError(f"cannot serialize config value {v!r}")


def dumps(cfg):
    """Serialize a RunConfig to TOML text (round-trips through from_dict)."""
    d = to_dict(cfg)
    d.pop("units")  # echo-only block, not a parse key
    lines = []
    for section, block in d.items():
        lines.append(f"[{section}]")
        for k, v in block.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)
