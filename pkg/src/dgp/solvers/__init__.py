from .darcy import DarcyProblem, SolverError, assemble_darcy_system, solve_darcy
from .litho import LithoConfig, litho_forward
from .ns import CflError, DivergenceError, NsConfig, NsTrajectory, default_forcing, solve_ns, vorticity_to_velocity

__all__ = [
    "DarcyProblem",
    "SolverError",
    "assemble_darcy_system",
    "solve_darcy",
    "LithoConfig",
    "litho_forward",
    "CflError",
    "DivergenceError",
    "NsConfig",
    "NsTrajectory",
    "default_forcing",
    "solve_ns",
    "vorticity_to_velocity",
]
