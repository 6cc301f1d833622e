"""Interactive late-reverberation engine.

Builds a radiance-transfer energy propagation system from a polygonal
scene, extracts its dominant energy-decay modes (poles, eigenvectors,
residues), and renders position-dependent energy impulse responses as
sources and listeners move.
"""

from .errors import *  # noqa: F401,F403
from .geometry import Hit, Ray, Scene, intersect, line_of_sight, load_scene, point_inside

__version__ = "0.1.0"
