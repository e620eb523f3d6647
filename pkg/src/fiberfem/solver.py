"""Load-stepped Newton iteration with a block-preconditioned GMRES solve.

Full Newton steps (no line search); the only globalization is halving the
load increment, at most `max_cutbacks` times per scheduled step. Residual
norms are Euclidean over the concatenated blocks, relative to the first
nonzero residual of the current load step. The block preconditioner is
cached across Newton iterations and load steps and rebuilt lazily when the
Krylov iteration count degrades.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    InvertedElementError,
    LinearSolverError,
    MaterialOverflowError,
    NonconvergenceError,
)

_ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-6              # relative residual reduction (Newton)
    max_iter: int = 20
    linear_tol: float = 1e-8       # relative reduction for GMRES
    max_krylov: int = 500
    load_steps: int = 32
    max_cutbacks: int = 5          # per scheduled load step
    divergence_ratio: float = 1e4  # residual blow-up triggering a cutback
    preconditioner: str = "auto"   # auto | ilu | amg

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0 and 0.0 < self.linear_tol < 1.0):
            raise ValueError("tolerances must lie in (0,1)")
        if self.load_steps < 1 or self.max_iter < 1:
            raise ValueError("step counts must be >= 1")


@dataclass
class StepRecord:
    stage: str
    load_factor: float
    newton_iters: int = 0
    residual_norms: list = field(default_factory=list)
    krylov_iters: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    from_cutback: bool = False


@dataclass
class SolveReport:
    steps: list = field(default_factory=list)
    converged: bool = False
    cutbacks_used: int = 0
    config: NewtonConfig = None
    state: object = None
    cavity_volume_history: list = field(default_factory=list)
    active_history: list = field(default_factory=list)

    @property
    def total_newton_iters(self):
        return sum(s.newton_iters for s in self.steps)

    @property
    def total_krylov_iters(self):
        return sum(sum(s.krylov_iters) for s in self.steps)

    def summary_dict(self):
        return {
            "converged": self.converged,
            "steps": len(self.steps),
            "cutbacks": self.cutbacks_used,
            "total_newton_iters": self.total_newton_iters,
            "total_krylov_iters": self.total_krylov_iters,
            "per_step": [
                {
                    "stage": s.stage,
                    "load_factor": s.load_factor,
                    "newton_iters": s.newton_iters,
                    "residual_norms": [float(r) for r in s.residual_norms],
                    "krylov_iters": s.krylov_iters,
                    "wall_time": s.wall_time,
                    "from_cutback": s.from_cutback,
                }
                for s in self.steps
            ],
        }


class BlockPreconditioner:
    """Upper block-triangular preconditioner for [[K,B,E],[C,D,0],[F,H,G]].

    Displacement block: incomplete LU (or a smoothed-aggregation AMG cycle);
    pressure block: direct factorization of the SIMPLE-type Schur complement
    D - C diag(K)^{-1} B; cavity dofs: exact scalar Schur complement through
    the displacement solve.
    """

    _LU_LIMIT = 50000   # below this many u-dofs a complete LU is cheaper

    def __init__(self, system, mode="auto"):
        A = system.A.tocsr()
        dof = system.dof
        nu, np_, nc = dof.n_u_solved, dof.n_p, dof.n_cav
        self.nu, self.np_, self.nc = nu, np_, nc
        K = A[:nu, :][:, :nu].tocsc()
        if mode == "auto":
            mode = "lu" if nu <= self._LU_LIMIT else "ilu"
        self.mode = mode
        if mode == "lu":
            self._lu = spla.splu(K)
            self.solve_u = self._lu.solve
        elif mode == "ilu":
            self._ilu = spla.spilu(K, drop_tol=1e-4, fill_factor=10.0)
            self.solve_u = self._ilu.solve
        elif mode == "amg":
            import pyamg

            ml = pyamg.smoothed_aggregation_solver(
                sp.csr_matrix(K), max_coarse=500, symmetry="nonsymmetric"
            )
            self._amg = ml.aspreconditioner(cycle="V")
            self.solve_u = self._amg.matvec
        else:
            raise ValueError(f"unknown preconditioner mode {mode!r}")

        if np_:
            self.B = A[:nu, :][:, nu : nu + np_]
            Dblk = A[nu : nu + np_, :][:, nu : nu + np_]
            C = A[nu : nu + np_, :][:, :nu]
            dK = K.diagonal()
            dK[dK == 0.0] = 1.0
            S = (Dblk - (C.multiply(1.0 / dK)) @ self.B).tocsc()
            self._lu_p = spla.splu(S)
        if nc:
            self.E = A[:nu, :][:, nu + np_ :].toarray()
            G = A[nu + np_ :, :][:, nu + np_ :].toarray()
            F = A[nu + np_ :, :][:, :nu]
            W = np.column_stack([self.solve_u(self.E[:, j]) for j in range(nc)])
            s_cav = G - F @ W
            self._cav = np.linalg.inv(s_cav)

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        nu, np_, nc = self.nu, self.np_, self.nc
        z = np.zeros_like(r)
        ru = r[:nu].copy()
        if nc:
            z_c = self._cav @ r[nu + np_ :]
            z[nu + np_ :] = z_c
            ru -= self.E @ z_c
        if np_:
            z_p = self._lu_p.solve(r[nu : nu + np_])
            z[nu : nu + np_] = z_p
            ru -= self.B @ z_p
        z[:nu] = self.solve_u(ru)
        return z

    def as_operator(self, n):
        return spla.LinearOperator((n, n), matvec=self.apply)


class PreconditionerCache:
    """Reuse the block preconditioner across Newton iterations and steps,
    rebuilding when the Krylov iteration count degrades markedly."""

    def __init__(self, mode="auto"):
        self.mode = mode
        self.M = None
        self.iters_at_build = None
        self._rebuild = False

    def get(self, system):
        if self.M is None or self._rebuild:
            self.M = BlockPreconditioner(system, mode=self.mode)
            self.iters_at_build = None
            self._rebuild = False
            self._fresh = True
        else:
            self._fresh = False
        return self.M

    def note_iters(self, iters):
        if self.iters_at_build is None:
            self.iters_at_build = max(iters, 1)
        elif iters > max(80, 3 * self.iters_at_build):
            self._rebuild = True

    def note_failure(self):
        """True if a retry with a fresh preconditioner makes sense."""
        if self._fresh:
            return False
        self._rebuild = True
        return True


def linear_solve(system, tol, max_krylov=500, preconditioner=None, mode="auto"):
    """GMRES on the assembled block system; returns (update, iterations).

    Raises `LinearSolverError` on stagnation/non-convergence, which the
    Newton driver converts into a load-step cutback.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("linear tolerance must lie in (0,1)")
    n = system.R.size
    b = system.rhs
    if not np.any(b):
        return np.zeros(n), 0
    M = preconditioner or BlockPreconditioner(system, mode=mode)
    iters = [0]

    def cb(_):
        iters[0] += 1

    restart = int(min(200, max_krylov))
    maxiter = max(1, int(np.ceil(max_krylov / restart)))
    x, info = spla.gmres(
        system.A,
        b,
        rtol=tol,
        atol=0.0,
        restart=restart,
        maxiter=maxiter,
        M=M.as_operator(n),
        callback=cb,
        callback_type="pr_norm",
    )
    if info != 0:
        raise LinearSolverError(f"GMRES failed to reach {tol:g} in {iters[0]} iterations")
    if not np.all(np.isfinite(x)):
        raise LinearSolverError("GMRES produced non-finite update")
    return x, iters[0]


def _newton_step(assembler, state, followers, active_scalar, config, record, pc=None):
    """Newton iteration at fixed load; mutates `state`; fills `record`."""
    pc = pc or PreconditionerCache(config.preconditioner)
    r0 = None
    best = np.inf
    for it in range(config.max_iter + 1):
        system = assembler.assemble(state, followers, active_scalar=active_scalar)
        norm = float(np.linalg.norm(system.R))
        record.residual_norms.append(norm)
        if r0 is None:
            if norm <= _ABS_FLOOR:
                record.converged = True
                record.newton_iters = 0
                return system
            r0 = norm
        if not np.isfinite(norm) or norm > config.divergence_ratio * r0 or norm > 5.0 * best:
            raise NonconvergenceError(f"Newton diverged (residual {norm:.3e})", 0.0)
        best = min(best, norm)
        if norm <= config.tol * r0 or norm <= _ABS_FLOOR:
            record.converged = True
            record.newton_iters = it
            return system
        if it == config.max_iter:
            raise NonconvergenceError(
                f"Newton stalled at relative residual {norm / r0:.3e}", 0.0
            )
        try:
            delta, kit = linear_solve(
                system, config.linear_tol, max_krylov=config.max_krylov,
                preconditioner=pc.get(system),
            )
        except LinearSolverError:
            if not pc.note_failure():
                raise
            delta, kit = linear_solve(
                system, config.linear_tol, max_krylov=config.max_krylov,
                preconditioner=pc.get(system),
            )
        pc.note_iters(kit)
        record.krylov_iters.append(kit)
        assembler.apply_update(state, system, delta)
    raise AssertionError("unreachable")


def newton_load_stepping(assembler, load_case, config=None, state=None, report=None,
                         callback=None):
    """March the load stages with Newton and cutback-halved load increments.

    `load_case` supplies per-stage Dirichlet values, follower pressures, and
    the active scalar as functions of the stage load factor; `callback`, when
    given, runs after every accepted step as callback(state, stage_name, lam).
    Returns a `SolveReport` holding the final state and the full history.
    """
    from .assembly import State

    config = config or NewtonConfig()
    report = report or SolveReport(config=config)
    if state is None:
        state = State.zeros(assembler.mesh, assembler.formulation, n_cav=assembler.n_cav)
    last_good = 0.0
    pc = PreconditionerCache(config.preconditioner)

    for stage in load_case.stages:
        steps = stage.steps if stage.steps is not None else config.load_steps
        targets = list(np.linspace(0.0, 1.0, steps + 1)[1:])
        inserted = [False] * len(targets)
        lam = 0.0
        step_cutbacks = 0
        checkpoint = state.copy()
        i = 0
        while i < len(targets):
            lam_try = targets[i]
            record = StepRecord(stage=stage.name, load_factor=lam_try,
                                from_cutback=inserted[i])
            stage.apply_dirichlet(state, lam_try)
            followers = stage.follower_values(lam_try)
            active = stage.active_value(lam_try)
            t0 = time.perf_counter()
            try:
                _newton_step(assembler, state, followers, active, config, record, pc)
            except (NonconvergenceError, LinearSolverError, InvertedElementError,
                    MaterialOverflowError) as err:
                if step_cutbacks >= config.max_cutbacks:
                    raise NonconvergenceError(
                        f"stage {stage.name!r}: cutbacks exhausted ({err})", last_good
                    ) from err
                step_cutbacks += 1
                report.cutbacks_used += 1
                targets.insert(i, 0.5 * (lam + lam_try))
                inserted.insert(i, True)
                state = checkpoint.copy()
                continue
            record.wall_time = time.perf_counter() - t0
            report.steps.append(record)
            lam = lam_try
            last_good = lam_try
            if not inserted[i]:
                step_cutbacks = 0
            checkpoint = state.copy()
            if assembler.n_cav:
                report.cavity_volume_history.append(
                    (stage.name, lam, assembler.cavity_volumes(state).tolist())
                )
            report.active_history.append((stage.name, lam, active))
            if callback is not None:
                callback(state, stage.name, lam)
            i += 1
    report.converged = True
    report.state = state
    return report
