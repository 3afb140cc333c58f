"""Combinatorial-complex scene modelling for operating rooms, with higher-order attention."""

from .complex import Cell, CellKind, CombinatorialComplex
from .config import RunConfig
from .hat import HatConfig, HatNetwork
from .scene import BuildConfig, SceneFrame, build_frame, build_window
from .synth import SynthConfig, generate_episode
from .tasks import detect_sterility_breach, macro_f1, reduce_to_scene_graph

__version__ = "0.1.0"

__all__ = [
    "BuildConfig",
    "Cell",
    "CellKind",
    "CombinatorialComplex",
    "HatConfig",
    "HatNetwork",
    "RunConfig",
    "SceneFrame",
    "SynthConfig",
    "build_frame",
    "build_window",
    "detect_sterility_breach",
    "generate_episode",
    "macro_f1",
    "reduce_to_scene_graph",
]
