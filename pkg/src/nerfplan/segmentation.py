"""Spectral detail scoring and object extraction.

Scores each object's level of high-frequency detail across training
images, applies the max-frequency threshold rule to decide which objects
deserve a dedicated network, and produces cropped, rescaled per-object
training images.

The detail score of a masked region is the smallest normalized radial
frequency f in [0, 0.5] such that the bins within radius f hold at least
``energy_fraction`` of the region's total AC spectral energy. Bin radii
are hypot(u/W, v/H) in cycles/pixel with wraparound. Subtracting the
region mean only changes the DC bin of the transform, so DC removal is
implemented by excluding that bin from the energy sums.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .core import NerfplanError
from ._parallel import parallel_map
from .raster import ObjectMask, RasterImage, bilinear_resize

BACKGROUND_ID = "background"


class EmptyMask(NerfplanError):
    """Mask contains no object pixel."""


class DimensionMismatch(NerfplanError):
    """Mask dimensions disagree with the referenced image."""


class UnknownObject(NerfplanError):
    """A mask references an object the scene does not declare."""


@dataclass(frozen=True)
class ObjectScore:
    object_id: str
    max_frequency: float
    argmax_image_id: str

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "max_frequency": self.max_frequency,
            "argmax_image_id": self.argmax_image_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectScore":
        return cls(
            object_id=str(d["object_id"]),
            max_frequency=float(d["max_frequency"]),
            argmax_image_id=str(d["argmax_image_id"]),
        )


@dataclass(frozen=True)
class FrequencyReport:
    """Per-object max detail scores plus the threshold decision."""

    per_object: tuple[ObjectScore, ...]
    threshold: float
    selected: tuple[str, ...]

    @property
    def background(self) -> tuple[str, ...]:
        """Objects below the threshold, grouped under one shared network."""
        chosen = set(self.selected)
        return tuple(s.object_id for s in self.per_object if s.object_id not in chosen)

    def to_dict(self) -> dict:
        return {
            "per_object": [s.to_dict() for s in self.per_object],
            "threshold": self.threshold,
            "selected": list(self.selected),
            "background": list(self.background),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyReport":
        return cls(
            per_object=tuple(ObjectScore.from_dict(s) for s in d["per_object"]),
            threshold=float(d["threshold"]),
            selected=tuple(str(s) for s in d["selected"]),
        )


def detail_frequency(image: RasterImage, mask: ObjectMask, energy_fraction: float = 0.95) -> float:
    """Radial frequency below which ``energy_fraction`` of the AC energy lies.

    Returns 0.0 for a constant region (no AC energy). The result only
    depends on spectral magnitudes, so it is invariant under cyclic
    shifts of a fully-masked image and under uniform brightness offsets.
    """
    if not 0.0 < energy_fraction <= 1.0:
        raise ValueError(f"energy_fraction must be in (0, 1], got {energy_fraction}")
    if (mask.width, mask.height) != (image.width, image.height):
        raise DimensionMismatch(
            f"mask {mask.width}x{mask.height} vs image {image.width}x{image.height} "
            f"for object {mask.object_id!r}"
        )
    bbox = mask.bounding_box()
    if bbox is None:
        raise EmptyMask(f"mask for object {mask.object_id!r} in {mask.image_id!r} is empty")
    x0, y0, x1, y1 = bbox

    region = np.where(mask.object_pixels()[y0:y1, x0:x1], image.luma()[y0:y1, x0:x1], 0.0)
    spectrum = np.abs(np.fft.fft2(region)) ** 2
    dc = spectrum[0, 0]
    spectrum[0, 0] = 0.0
    # Relative floor: roundoff leaks a vanishing fraction of the DC energy
    # into AC bins on non-power-of-two sizes.
    if spectrum.sum() <= 1e-18 * max(dc, 1.0):
        return 0.0

    h, w = region.shape
    radii = np.hypot(np.fft.fftfreq(h)[:, None], np.fft.fftfreq(w)[None, :]).ravel()
    order = np.argsort(radii, kind="stable")
    cum = np.cumsum(spectrum.ravel()[order])
    target = energy_fraction * cum[-1]
    idx = int(np.searchsorted(cum, target, side="left"))
    return float(min(radii[order][idx], 0.5))


def max_frequency_per_object(
    images: "list[tuple[RasterImage, list[ObjectMask]]]",
    energy_fraction: float = 0.95,
    known_ids: "set[str] | None" = None,
) -> list[ObjectScore]:
    """Max detail score per object over all images containing it.

    Ties between images are broken toward the lexicographically smallest
    image id. Scoring of distinct (image, mask) pairs runs on the worker
    pool; aggregation order is fixed by the input order, so results are
    identical regardless of thread count.
    """
    tasks = [(image, mask) for image, masks in images for mask in masks]
    if known_ids is not None:
        for _, mask in tasks:
            if mask.object_id not in known_ids:
                raise UnknownObject(
                    f"mask in image {mask.image_id!r} references unknown object {mask.object_id!r}"
                )
    scores = parallel_map(lambda t: detail_frequency(t[0], t[1], energy_fraction), tasks)

    best: dict[str, tuple[float, str]] = {}
    order: list[str] = []
    for (_, mask), score in zip(tasks, scores):
        oid = mask.object_id
        if oid not in best:
            order.append(oid)
            best[oid] = (score, mask.image_id)
        else:
            cur_score, cur_img = best[oid]
            if score > cur_score or (score == cur_score and mask.image_id < cur_img):
                best[oid] = (score, mask.image_id)
    return [ObjectScore(oid, best[oid][0], best[oid][1]) for oid in order]


def select_by_threshold(
    scores: "list[ObjectScore]",
    threshold_mode: str = "auto_min",
    threshold: "float | None" = None,
) -> FrequencyReport:
    """Apply the dedicated-network decision rule.

    ``auto_min`` sets the threshold to the lowest max-frequency in the
    scene and selects with >=, so every object gets its own network (the
    evaluation setting). ``fixed`` selects only objects whose score
    strictly exceeds the given threshold; the rest fall back to the
    shared background network.
    """
    if not scores:
        raise ValueError("scores must be nonempty")
    if threshold_mode == "auto_min":
        alpha = min(s.max_frequency for s in scores)
        selected = tuple(s.object_id for s in scores if s.max_frequency >= alpha)
    elif threshold_mode == "fixed":
        if threshold is None:
            raise ValueError("fixed threshold mode requires a threshold value")
        alpha = float(threshold)
        selected = tuple(s.object_id for s in scores if s.max_frequency > alpha)
    else:
        raise ValueError(f"unknown threshold mode {threshold_mode!r}")
    return FrequencyReport(per_object=tuple(scores), threshold=alpha, selected=selected)


def crop_and_scale(
    image: RasterImage, mask: ObjectMask, canvas_w: int, canvas_h: int
) -> RasterImage:
    """Extract the object and rescale it onto a black canvas.

    Crops to the mask's tight bounding box, blacks out non-object pixels,
    scales by the largest aspect-preserving factor that fits the canvas
    (bilinear), and centers the result.
    """
    if canvas_w < 1 or canvas_h < 1:
        raise ValueError(f"canvas dims must be >= 1, got {canvas_w}x{canvas_h}")
    if (mask.width, mask.height) != (image.width, image.height):
        raise DimensionMismatch(
            f"mask {mask.width}x{mask.height} vs image {image.width}x{image.height} "
            f"for object {mask.object_id!r}"
        )
    bbox = mask.bounding_box()
    if bbox is None:
        raise EmptyMask(f"mask for object {mask.object_id!r} in {mask.image_id!r} is empty")
    x0, y0, x1, y1 = bbox
    bw, bh = x1 - x0, y1 - y0

    crop = image.data[y0:y1, x0:x1]
    keep = mask.object_pixels()[y0:y1, x0:x1]
    if image.channels == 3:
        keep = keep[..., None]
    crop = np.where(keep, crop, 0).astype(np.uint8)

    scale = min(canvas_w / bw, canvas_h / bh)
    tw = min(canvas_w, max(1, int(np.floor(bw * scale + 0.5))))
    th = min(canvas_h, max(1, int(np.floor(bh * scale + 0.5))))
    scaled = bilinear_resize(crop, tw, th)

    shape = (canvas_h, canvas_w) if image.channels == 1 else (canvas_h, canvas_w, 3)
    canvas = np.zeros(shape, dtype=np.uint8)
    oy, ox = (canvas_h - th) // 2, (canvas_w - tw) // 2
    canvas[oy:oy + th, ox:ox + tw] = scaled
    return RasterImage.from_array(canvas)


# ---------------------------------------------------------------------------
# Input discovery: <image_id>.ppm / <image_id>.pgm next to
# <image_id>.<object_id>.mask.pgm files.
# ---------------------------------------------------------------------------

_MASK_RE = re.compile(r"^(?P<image_id>.+)\.(?P<object_id>[^.]+)\.mask\.pgm$")


def discover_inputs(directory: str) -> "list[tuple[str, str, list[tuple[str, str]]]]":
    """Scan a directory for training images and their masks.

    Returns [(image_id, image_path, [(object_id, mask_path), ...])],
    sorted by image id, masks sorted by object id.
    """
    images: dict[str, str] = {}
    masks: dict[str, list[tuple[str, str]]] = {}
    for name in sorted(os.listdir(directory)):
        path = os.path.join(directory, name)
        m = _MASK_RE.match(name)
        if m:
            masks.setdefault(m.group("image_id"), []).append((m.group("object_id"), path))
        elif name.endswith((".ppm", ".pgm")):
            images[name.rsplit(".", 1)[0]] = path
    out = []
    for image_id in sorted(images):
        out.append((image_id, images[image_id], sorted(masks.get(image_id, []))))
    return out
