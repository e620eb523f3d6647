"""Loading programs: Dirichlet ramps, follower pressures, active transients.

A load case is a sequence of stages; within a stage the load factor runs
0 -> 1 and every program maps it to absolute values (totals, not increments,
so torsion angles are re-derived from scratch each step and cannot drift).
"""

from dataclasses import dataclass, field

import numpy as np

from .materials import MMHG_TO_KPA


@dataclass
class DirichletProgram:
    """Prescribed displacement on a node set: u(X, lam) on all 3 components."""

    nodes: np.ndarray
    displacement: callable            # (X (n,3), lam) -> (n,3)

    @property
    def dofs(self):
        return (3 * self.nodes[:, None] + np.arange(3)).ravel()

    def values(self, X, lam):
        return np.asarray(self.displacement(X[self.nodes], lam), dtype=float)


@dataclass
class FollowerProgram:
    facet_set: str
    pressure: callable                # lam -> kPa

    def value(self, lam):
        return float(self.pressure(lam))


@dataclass
class LoadStage:
    name: str
    mesh: object
    steps: int = None                 # None -> solver default
    dirichlet: list = field(default_factory=list)
    followers: list = field(default_factory=list)
    active: callable = None           # lam -> kPa

    def apply_dirichlet(self, state, lam):
        for prog in self.dirichlet:
            state.u[prog.nodes] = prog.values(self.mesh.nodes, lam)

    def follower_values(self, lam):
        return [(p.facet_set, p.value(lam)) for p in self.followers]

    def active_value(self, lam):
        return float(self.active(lam)) if self.active is not None else 0.0

    def constrained_dofs(self):
        if not self.dirichlet:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate([p.dofs for p in self.dirichlet]))


@dataclass
class LoadCase:
    stages: list
    body_force: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def constrained_dofs(self):
        sets = [s.constrained_dofs() for s in self.stages]
        return np.unique(np.concatenate(sets)) if sets else np.empty(0, dtype=np.int64)


def ramp(v_max):
    return lambda lam: lam * v_max


def constant(v):
    return lambda lam: v


def clamp_program(mesh, facet_set):
    """Zero displacement on all nodes of a facet set."""
    nodes = mesh.facet_set_nodes(facet_set)
    return DirichletProgram(nodes, lambda X, lam: np.zeros_like(X))


def stretch_twist_program(mesh, facet_set, axial_max, twist_max_deg):
    """Rigid rotation about the z-axis plus axial displacement, both ramped.

    u(X, lam) = R_z(lam * twist) X - X + lam * axial * e_z.
    """
    nodes = mesh.facet_set_nodes(facet_set)

    def displacement(X, lam):
        ang = np.radians(lam * twist_max_deg)
        c, s = np.cos(ang), np.sin(ang)
        u = np.zeros_like(X)
        u[:, 0] = c * X[:, 0] - s * X[:, 1] - X[:, 0]
        u[:, 1] = s * X[:, 0] + c * X[:, 1] - X[:, 1]
        u[:, 2] = lam * axial_max
        return u

    return DirichletProgram(nodes, displacement)


def tube_load_case(mesh, steps=None, pressure_kpa=None, axial_mm=2.0, twist_deg=60.0):
    """Artery benchmark loading: bottom clamped; top stretched 2 mm and
    twisted 60 deg; inner surface under follower pressure to 500 mmHg.
    All three ramps run simultaneously and linearly."""
    p_max = 500.0 * MMHG_TO_KPA if pressure_kpa is None else float(pressure_kpa)
    stage = LoadStage(
        name="load",
        mesh=mesh,
        steps=steps,
        dirichlet=[
            clamp_program(mesh, "bottom"),
            stretch_twist_program(mesh, "top", axial_mm, twist_deg),
        ],
        followers=[FollowerProgram("inner", ramp(p_max))],
    )
    return LoadCase(stages=[stage])


def ellipsoid_load_case(
    mesh,
    passive_steps=None,
    active_steps=None,
    pressure_kpa=None,
    active_kpa=60.0,
    phase="passive",
):
    """Ventricle benchmark: passive endocardial inflation, then an optional
    prescribed uniform active-tension ramp at held pressure."""
    p_max = 15.0 * MMHG_TO_KPA if pressure_kpa is None else float(pressure_kpa)
    stages = [
        LoadStage(
            name="passive",
            mesh=mesh,
            steps=passive_steps,
            dirichlet=[clamp_program(mesh, "base")],
            followers=[FollowerProgram("endo", ramp(p_max))],
        )
    ]
    if phase == "active":
        stages.append(
            LoadStage(
                name="active",
                mesh=mesh,
                steps=active_steps,
                dirichlet=[clamp_program(mesh, "base")],
                followers=[FollowerProgram("endo", constant(p_max))],
                active=ramp(active_kpa),
            )
        )
    elif phase != "passive":
        raise ValueError(f"unknown ellipsoid phase {phase!r}")
    return LoadCase(stages=stages)
