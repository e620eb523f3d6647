"""Command-line interface: run, sweep, validate-config, export-mesh.

Exit codes: 0 success, 2 config error, 3 mesh error, 4 material error,
5 solver error. The output root can be set with FIBERFEM_OUTPUT_ROOT.
"""

import os
import sys
from pathlib import Path

import click

from . import config as cfgmod
from .benchmarks import run_artery, run_ellipsoid
from .errors import FiberFemError
from .mesh_generators import make_ellipsoid_mesh, make_tube_mesh
from .report import write_run_outputs
from .solver import NewtonConfig
from .vtk_io import read_mesh, write_mesh

OUTPUT_ROOT_ENV = "FIBERFEM_OUTPUT_ROOT"


def _out_dir(cfg, sub=None):
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    path = root / cfg.output_dir
    if sub:
        path = path / sub
    return path


def _newton_config(cfg):
    return NewtonConfig(
        tol=cfg.newton_tol,
        max_iter=cfg.newton_max_iter,
        linear_tol=cfg.linear_tol,
        max_krylov=cfg.max_krylov,
        load_steps=cfg.steps or 32,
        preconditioner=cfg.preconditioner,
    )


def _execute(cfg, sub=None):
    newton = _newton_config(cfg)
    mesh = read_mesh(cfg.mesh_path) if cfg.mesh_path else None
    if cfg.benchmark == "artery":
        report = run_artery(
            cfg.level, cfg.formulation, cfg.elem,
            newton=newton, steps=cfg.steps, mesh=mesh,
            material=_material_override(cfg), pressure_kpa=cfg.pressure_kpa,
        )
    else:
        report = run_ellipsoid(
            cfg.level, cfg.formulation, phase=cfg.phase, law=cfg.law,
            newton=newton, mesh=mesh, material=_material_override(cfg),
            passive_steps=cfg.steps or 10,
            active_kpa=cfg.active_kpa, pressure_kpa=cfg.pressure_kpa,
        )
    outdir = _out_dir(cfg, sub)
    written = write_run_outputs(report, cfg, outdir)
    click.echo(f"run complete; {len(written)} files in {outdir}")
    return report


def _material_override(cfg):
    if not cfg.material and cfg.kappa is None:
        return None
    from .benchmarks import artery_material, ellipsoid_material
    from .materials import VolumetricLaw, make_material

    if cfg.benchmark == "artery":
        kwargs = dict(cfg.material)
        if cfg.kappa is not None:
            kwargs["kappa"] = cfg.kappa
        return artery_material(cfg.formulation, **kwargs)
    base = ellipsoid_material(
        cfg.formulation, cfg.law, kappa=cfg.kappa if cfg.kappa is not None else 1000.0
    )
    if cfg.material:
        incomp = cfg.formulation in ("projection", "mini")
        vol = VolumetricLaw("lnJ", kappa=cfg.kappa or 1000.0, inverse_kappa_zero=incomp)
        split = "WAS" if cfg.formulation == "p0was" else "AS"
        params = dict(cfg.material)
        if cfg.law == "holzapfelogden":
            params.setdefault("split", split)
        return make_material(cfg.law, volumetric=vol, **params)
    return base


def _load_cli_config(config_path, overrides):
    cfg = cfgmod.load_config(config_path) if config_path else cfgmod.from_dict({})
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


@click.group()
def main():
    """Finite element benchmarks for anisotropic incompressible solids."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML run configuration.")
@click.option("--benchmark", type=click.Choice(cfgmod.BENCHMARKS), default=None)
@click.option("--level", type=int, default=None)
@click.option("--formulation", type=click.Choice(cfgmod.FORMULATIONS), default=None)
@click.option("--elem", type=click.Choice(cfgmod.ELEMENT_KINDS), default=None)
@click.option("--phase", type=click.Choice(("passive", "active")), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--output-dir", default=None)
def run(config_path, benchmark, level, formulation, elem, phase, steps, output_dir):
    """Run one benchmark case and write its report."""
    overrides = dict(benchmark=benchmark, level=level, formulation=formulation,
                     elem=elem, phase=phase, steps=steps, output_dir=output_dir)
    cfg = _load_cli_config(config_path, overrides)
    _execute(cfg)


@main.command()
@click.option("--config", "config_path", type=click.Path(), required=True)
def sweep(config_path):
    """Run the (level x formulation x elem) matrix from [sweep]."""
    base = _load_cli_config(config_path, {})
    levels = base.sweep.get("levels", [base.level])
    formulations = base.sweep.get("formulations", [base.formulation])
    elems = base.sweep.get("elems", [base.elem])
    for level in levels:
        for formulation in formulations:
            for elem in elems:
                cfg = _load_cli_config(config_path, {})
                cfg.level = int(level)
                cfg.formulation = str(formulation)
                cfg.elem = str(elem)
                cfg.validate()
                sub = f"L{level}_{formulation}_{elem}"
                click.echo(f"sweep case {sub}")
                _execute(cfg, sub=sub)


@main.command("validate-config")
@click.argument("config_path", type=click.Path())
def validate_config(config_path):
    """Parse, normalize, and echo a configuration."""
    cfg = cfgmod.load_config(config_path)
    click.echo(cfgmod.dumps(cfg))


@main.command("export-mesh")
@click.argument("out_path", type=click.Path())
@click.option("--benchmark", type=click.Choice(cfgmod.BENCHMARKS), default="artery")
@click.option("--level", type=int, default=1)
@click.option("--elem", type=click.Choice(cfgmod.ELEMENT_KINDS), default="tet")
def export_mesh(out_path, benchmark, level, elem):
    """Generate a benchmark mesh and write it as legacy VTK."""
    if benchmark == "artery":
        mesh = make_tube_mesh(level, elem)
    else:
        if elem != "tet":
            raise FiberFemError("the ellipsoid mesh is tetrahedral")
        mesh = make_ellipsoid_mesh(level)
    write_mesh(mesh, out_path)
    click.echo(f"wrote {out_path}")


def entry():
    try:
        main(standalone_mode=False)
    except click.exceptions.NoArgsIsHelpError as err:
        click.echo(err.format_message())
        sys.exit(0)
    except click.exceptions.UsageError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    except click.exceptions.Abort:
        sys.exit(1)
    except FiberFemError as err:
        click.echo(f"{err.category} error: {err}", err=True)
        sys.exit(err.exit_code)
    except click.exceptions.Exit as err:
        sys.exit(err.exit_code)


if __name__ == "__main__":
    entry()
