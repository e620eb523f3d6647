"""Exception hierarchy. Each category maps to a CLI exit code."""


class FiberFemError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    category = "generic"


class ConfigurationError(FiberFemError):
    """Bad run configuration, unsupported option, or malformed input file."""

    exit_code = 2
    category = "config"


class MeshError(FiberFemError):
    """Invalid mesh topology or geometry."""

    exit_code = 3
    category = "mesh"


class InvertedElementError(MeshError):
    """Non-positive Jacobian of the isoparametric or deformation map."""

    def __init__(self, element_id, detail="", load_factor=None):
        self.element_id = int(element_id)
        self.load_factor = load_factor
        msg = f"inverted element {element_id}"
        if load_factor is not None:
            msg += f" at load factor {load_factor:.6g}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class TopologyError(MeshError):
    """Facet-set or surface-mesh topology violation (e.g. open cavity surface)."""


class MaterialError(FiberFemError):
    """Invalid material parameters or state."""

    exit_code = 4
    category = "material"


class MaterialOverflowError(MaterialError):
    """Exponential overflow in a Fung-type law; carries the offending invariants."""

    def __init__(self, law, max_exponent, invariants=None):
        self.law = law
        self.max_exponent = float(max_exponent)
        self.invariants = dict(invariants or {})
        inv = ", ".join(f"{k}={v:.6g}" for k, v in self.invariants.items())
        super().__init__(
            f"{law}: exponent {max_exponent:.3g} exceeds overflow guard"
            + (f" ({inv})" if inv else "")
        )


class SolverError(FiberFemError):
    """Nonlinear or linear solver failure."""

    exit_code = 5
    category = "solver"


class LinearSolverError(SolverError):
    """Krylov breakdown or stagnation; triggers a Newton cutback."""


class NonconvergenceError(SolverError):
    """Newton did not converge after exhausting load-step cutbacks."""

    def __init__(self, msg, last_good_factor=0.0):
        self.last_good_factor = float(last_good_factor)
        super().__init__(f"{msg} (last accepted load factor {last_good_factor:.6g})")


class CondensationError(SolverError):
    """Singular interior (bubble) block during static condensation."""

    def __init__(self, element_id, detail=""):
        self.element_id = int(element_id)
        super().__init__(f"singular interior block in element {element_id}"
                         + (f": {detail}" if detail else ""))
