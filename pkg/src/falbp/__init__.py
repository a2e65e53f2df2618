"""First-order augmented Lagrangian solvers for basis pursuit and its noisy variants."""

from .certify import Certificate, duality_gap_certificate, unique_solution_certificate
from .denoise import denoise_solve
from .fal import FalConfig, SolveReport, fal_solve, fal_solve_theoretical
from .linops import DenseOperator, LinearOperator, PartialDCT
from .probgen import ProblemInstance, SignalSpec, evaluate, generate
from .storage import load_instance, save_instance

__all__ = [
    "Certificate", "DenseOperator", "FalConfig", "LinearOperator", "PartialDCT",
    "ProblemInstance", "SignalSpec", "SolveReport", "denoise_solve", "duality_gap_certificate",
    "evaluate", "fal_solve", "fal_solve_theoretical", "generate", "load_instance",
    "save_instance", "unique_solution_certificate",
]
__version__ = "0.1.0"
