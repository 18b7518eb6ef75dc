"""Resource-aware configuration planning for multi-network scene rendering.

Pipeline: score per-object spectral detail (`segmentation`), fit
closed-form size/quality surfaces from a few samples (`profiler`), and
select one config per object maximizing total predicted quality under a
device memory budget (`selector`). `simharness` runs seeded end-to-end
experiments on synthetic known-truth scenes; `cli` wires everything into
the `nerfplan` command.
"""

__version__ = "0.1.0"

from .core import (
    AllocationPlan,
    ConfigPair,
    ConfigSpace,
    DEVICE_PRESETS,
    DeviceBudget,
    NerfplanError,
    PlanEntry,
    SampleObservation,
    SceneDescriptor,
    SceneObject,
    device_preset,
    load_plan,
    load_scene,
    save_plan,
    save_scene,
    validate_scene,
)

__all__ = [
    "AllocationPlan",
    "ConfigPair",
    "ConfigSpace",
    "DEVICE_PRESETS",
    "DeviceBudget",
    "NerfplanError",
    "PlanEntry",
    "SampleObservation",
    "SceneDescriptor",
    "SceneObject",
    "__version__",
    "device_preset",
    "load_plan",
    "load_scene",
    "save_plan",
    "save_scene",
    "validate_scene",
]
