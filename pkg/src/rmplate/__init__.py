"""Finite element laboratory for Reissner-Mindlin plates.

Submodules: ``geometry`` (meshes), ``material`` (plate tensors), ``fem``
(P2 spaces and assembly), ``neumann`` (traction problem), ``korn`` (best
constants), ``uc`` (unique-continuation diagnostics), ``regprobe``
(boundary charts and H2 checks), ``cli``.
"""

__version__ = "0.1.0"

from .geometry import Mesh, make_disk_mesh, make_rect_mesh, mesh_validate, read_mesh, refine, write_mesh
from .material import LameField, isotropic_plate, orthotropic_plate
from .fem import BoundaryData, P2Space, PlateField, assemble_system
from .neumann import check_compatibility, solve_problem

__all__ = [
    "__version__",
    "BoundaryData",
    "LameField",
    "Mesh",
    "P2Space",
    "PlateField",
    "assemble_system",
    "check_compatibility",
    "isotropic_plate",
    "make_disk_mesh",
    "make_rect_mesh",
    "mesh_validate",
    "orthotropic_plate",
    "read_mesh",
    "refine",
    "solve_problem",
    "write_mesh",
]
