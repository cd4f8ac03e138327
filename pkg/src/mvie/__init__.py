"""Volume-integral scattering by dielectric bodies in uniform motion."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .media import MediumSpec, RegimeReport, assemble_M, check_regime  # noqa: E402
from .grid import ProbeSpec, ShapeSpec, VoxelDomain, rasterize, sphere_domain  # noqa: E402
from .greens import KernelTable, dyadic_green_apply, newtonian_apply  # noqa: E402
from .scatter import (FieldState, IncidentSpec, LSOperator, SolveReport,  # noqa: E402
                      solve_born, solve_krylov)
from .farfield import FarField, far_field, scattered_at, silver_muller_residual  # noqa: E402
from .oracle import image_green, mie_far_field  # noqa: E402
from .inverse import discriminate, probe_blowup  # noqa: E402
