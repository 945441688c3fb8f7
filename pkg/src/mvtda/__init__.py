"""Detect and track the most persistent void in a time-lapse image stack."""
from .array_core import ImageStack, load_stack, permute_stack, save_stack, slice_at_time
from .filtration import assign_filtration, freudenthal_complex
from .persistence import PersistenceDiagram, PersistencePoint, betti_at, compute_persistence
from .smoothing import SmootherConfig, smooth_frame, smooth_stack

__version__ = "0.1.0"
