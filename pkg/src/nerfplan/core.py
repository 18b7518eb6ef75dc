"""Shared domain types, scene validation, and JSON serialization.

All types are immutable (frozen dataclasses over tuples) so they can be
shared freely between worker threads. Constructors enforce hard type
invariants; scene-level consistency problems (duplicate ids, bad value
lists) are reported by :func:`validate_scene` instead of raised, so a
malformed scene file can still be loaded and diagnosed.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field

log = logging.getLogger("nerfplan")


class NerfplanError(Exception):
    """Base class for domain errors. The CLI maps these to exit code 1."""


# Memory budgets (MB) of the two reference handsets.
DEVICE_PRESETS: dict[str, float] = {
    "iphone13": 240.0,
    "pixel4": 150.0,
}


def device_preset(name: str) -> "DeviceBudget":
    if name not in DEVICE_PRESETS:
        raise KeyError(f"unknown device preset {name!r}; known: {sorted(DEVICE_PRESETS)}")
    return DeviceBudget(name=name, capacity_mb=DEVICE_PRESETS[name])


@dataclass(frozen=True, order=True)
class ConfigPair:
    """One (mesh granularity, texture patch size) decision point."""

    g: int
    p: int

    def __post_init__(self) -> None:
        if self.g < 1 or self.p < 1:
            raise ValueError(f"config pair requires g >= 1 and p >= 1, got ({self.g}, {self.p})")

    def to_dict(self) -> dict:
        return {"g": self.g, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfigPair":
        return cls(g=int(d["g"]), p=int(d["p"]))


@dataclass(frozen=True)
class ConfigSpace:
    """The discrete set of admissible config pairs for one object.

    ``pairs`` is the Cartesian product of ``g_values`` x ``p_values``
    unless an explicit enumeration was supplied.
    """

    object_id: str
    g_values: tuple[int, ...]
    p_values: tuple[int, ...]
    pairs: tuple[ConfigPair, ...]

    @classmethod
    def product(
        cls,
        object_id: str,
        g_values: "list[int] | tuple[int, ...]",
        p_values: "list[int] | tuple[int, ...]",
    ) -> "ConfigSpace":
        gs = tuple(int(g) for g in g_values)
        ps = tuple(int(p) for p in p_values)
        pairs = tuple(ConfigPair(g, p) for g in gs for p in ps)
        return cls(object_id=object_id, g_values=gs, p_values=ps, pairs=pairs)

    def to_dict(self) -> dict:
        return {"g_values": list(self.g_values), "p_values": list(self.p_values)}

    @classmethod
    def from_dict(cls, object_id: str, d: dict) -> "ConfigSpace":
        return cls.product(object_id, d["g_values"], d["p_values"])


@dataclass(frozen=True)
class DeviceBudget:
    name: str
    capacity_mb: float

    def __post_init__(self) -> None:
        if not self.capacity_mb > 0:
            raise ValueError(f"budget capacity must be positive, got {self.capacity_mb}")

    def to_dict(self) -> dict:
        return {"name": self.name, "capacity_mb": self.capacity_mb}

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceBudget":
        return cls(name=str(d["name"]), capacity_mb=float(d["capacity_mb"]))


@dataclass(frozen=True)
class SampleObservation:
    """One measured (size, quality) point at a given configuration.

    Quality is an SSIM-like score; out-of-range values are clamped to
    [0, 1] on ingestion with a warning. Negative sizes are rejected.
    """

    config: ConfigPair
    size_mb: float
    quality: float

    def __post_init__(self) -> None:
        if self.size_mb < 0:
            raise ValueError(f"size_mb must be >= 0, got {self.size_mb}")
        if not 0.0 <= self.quality <= 1.0:
            clamped = min(1.0, max(0.0, self.quality))
            log.warning(
                "quality %g at config (%d, %d) outside [0, 1]; clamped to %g",
                self.quality, self.config.g, self.config.p, clamped,
            )
            object.__setattr__(self, "quality", clamped)

    def to_dict(self) -> dict:
        return {
            "g": self.config.g,
            "p": self.config.p,
            "size_mb": self.size_mb,
            "quality": self.quality,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleObservation":
        return cls(
            config=ConfigPair(int(d["g"]), int(d["p"])),
            size_mb=float(d["size_mb"]),
            quality=float(d["quality"]),
        )


SOLVER_NAMES = ("dp", "fairness", "greedy", "oracle")


@dataclass(frozen=True)
class PlanEntry:
    object_id: str
    config: ConfigPair
    predicted_size_mb: float
    predicted_quality: float

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "config": self.config.to_dict(),
            "predicted_size_mb": self.predicted_size_mb,
            "predicted_quality": self.predicted_quality,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlanEntry":
        return cls(
            object_id=str(d["object_id"]),
            config=ConfigPair.from_dict(d["config"]),
            predicted_size_mb=float(d["predicted_size_mb"]),
            predicted_quality=float(d["predicted_quality"]),
        )


@dataclass(frozen=True)
class AllocationPlan:
    """Solver output: exactly one config per planned object plus totals.

    Totals are always recomputed from the entries (left-to-right, in
    entry order, so float sums reproduce the solver's accumulation
    bitwise) and never trusted from serialized input.
    """

    entries: tuple[PlanEntry, ...]
    total_size_mb: float
    total_quality: float
    budget_mb: float
    solver: str

    def __post_init__(self) -> None:
        if self.solver not in SOLVER_NAMES:
            raise ValueError(f"unknown solver {self.solver!r}")
        seen = set()
        for e in self.entries:
            if e.object_id in seen:
                raise ValueError(f"plan has more than one entry for object {e.object_id!r}")
            seen.add(e.object_id)

    @classmethod
    def from_entries(
        cls, entries: "list[PlanEntry] | tuple[PlanEntry, ...]", budget_mb: float, solver: str
    ) -> "AllocationPlan":
        entries = tuple(entries)
        total_size = 0.0
        total_quality = 0.0
        for e in entries:
            total_size += e.predicted_size_mb
            total_quality += e.predicted_quality
        if total_size > budget_mb:
            raise ValueError(
                f"plan total size {total_size} MB exceeds budget {budget_mb} MB"
            )
        return cls(
            entries=entries,
            total_size_mb=total_size,
            total_quality=total_quality,
            budget_mb=budget_mb,
            solver=solver,
        )

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "total_size_mb": self.total_size_mb,
            "total_quality": self.total_quality,
            "budget_mb": self.budget_mb,
            "solver": self.solver,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationPlan":
        return cls.from_entries(
            entries=[PlanEntry.from_dict(e) for e in d["entries"]],
            budget_mb=float(d["budget_mb"]),
            solver=str(d["solver"]),
        )


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    space: ConfigSpace
    samples: tuple[SampleObservation, ...] = ()

    def to_dict(self) -> dict:
        d: dict = {"id": self.object_id, "space": self.space.to_dict()}
        if self.samples:
            d["samples"] = [s.to_dict() for s in self.samples]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneObject":
        object_id = str(d["id"])
        return cls(
            object_id=object_id,
            space=ConfigSpace.from_dict(object_id, d["space"]),
            samples=tuple(SampleObservation.from_dict(s) for s in d.get("samples", [])),
        )


@dataclass(frozen=True)
class SceneDescriptor:
    """Parsed scene.json: objects in file order plus an optional budget."""

    objects: tuple[SceneObject, ...]
    budget: "DeviceBudget | None" = None

    def to_dict(self) -> dict:
        d: dict = {"objects": [o.to_dict() for o in self.objects]}
        if self.budget is not None:
            d["budget"] = self.budget.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneDescriptor":
        budget = DeviceBudget.from_dict(d["budget"]) if "budget" in d else None
        return cls(
            objects=tuple(SceneObject.from_dict(o) for o in d["objects"]),
            budget=budget,
        )

    def object_ids(self) -> list[str]:
        return [o.object_id for o in self.objects]


def _strictly_increasing(values: tuple[int, ...]) -> bool:
    return all(a < b for a, b in zip(values, values[1:]))


def validate_scene(scene: SceneDescriptor) -> list[str]:
    """Return a list of human-readable violations; empty iff the scene is valid."""
    violations: list[str] = []
    seen: set[str] = set()
    for obj in scene.objects:
        if obj.object_id in seen:
            violations.append(f"duplicate object id: {obj.object_id!r}")
        seen.add(obj.object_id)
        space = obj.space
        if not space.pairs:
            violations.append(f"object {obj.object_id!r}: empty config space")
        if not _strictly_increasing(space.g_values):
            violations.append(f"object {obj.object_id!r}: g_values not strictly increasing")
        if not _strictly_increasing(space.p_values):
            violations.append(f"object {obj.object_id!r}: p_values not strictly increasing")
        if len(set(space.pairs)) != len(space.pairs):
            violations.append(f"object {obj.object_id!r}: duplicate config pairs")
    return violations


# ---------------------------------------------------------------------------
# File I/O. All writes are atomic (temp file in the target directory, then
# rename) so a crashed run never leaves a truncated artifact behind.
# ---------------------------------------------------------------------------

def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_json(path: str, payload: dict) -> None:
    # json emits shortest round-trip decimals for floats, which is exactly
    # the full-precision serialization the file contracts require.
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_scene(path: str) -> SceneDescriptor:
    return SceneDescriptor.from_dict(read_json(path))


def save_scene(path: str, scene: SceneDescriptor) -> None:
    write_json(path, scene.to_dict())


def load_plan(path: str) -> AllocationPlan:
    return AllocationPlan.from_dict(read_json(path))


def save_plan(path: str, plan: AllocationPlan) -> None:
    write_json(path, plan.to_dict())
