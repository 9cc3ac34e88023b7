"""Package for seeded synthetic phantoms and ground-truth registration pairs."""

from .ground_truth import GroundTruthError, RegistrationPair, make_ground_truth_svf, make_registration_pair
from .phantoms import DEFAULT_GRID, Phantom, PhantomKind, PhantomSpec, make_phantom

__all__ = [
    "DEFAULT_GRID",
    "GroundTruthError",
    "Phantom",
    "PhantomKind",
    "PhantomSpec",
    "RegistrationPair",
    "make_ground_truth_svf",
    "make_phantom",
    "make_registration_pair",
]
