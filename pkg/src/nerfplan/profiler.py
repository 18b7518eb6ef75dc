"""Closed-form size/quality surface models, sampling plans, and fitting.

The size of one object's baked representation is modeled as
``S(g, p) = m - k / ((g + a)^3 * (p + b)^2)`` and its rendering quality
as ``Q(g, p) = k_q * (g + a_q)^3 * (p + b_q)^2``. Both surfaces are fit
independently by damped least squares on a small variable-step sample
plan, then evaluated everywhere in the object's config space.

Fitting is deterministic: a fixed grid of eight starts, central-difference
gradients, and a fully pinned damping schedule, so identical samples
always produce identical parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigPair, ConfigSpace, NerfplanError, SampleObservation


class PoleInDomain(NerfplanError):
    """A model pole (g + a <= 0 or p + b <= 0) lies inside the config domain."""


class InsufficientSamples(NerfplanError):
    pass


class DegenerateSamples(NerfplanError):
    """Samples do not span at least two distinct g and two distinct p."""


class FitRejected(NerfplanError):
    """No start converged to a pole-free, monotone parameter set."""


class EmptySpace(NerfplanError):
    pass


@dataclass(frozen=True)
class SizeModelParams:
    k: float
    a: float
    b: float
    m: float

    def to_dict(self) -> dict:
        return {"k": self.k, "a": self.a, "b": self.b, "m": self.m}

    @classmethod
    def from_dict(cls, d: dict) -> "SizeModelParams":
        return cls(k=float(d["k"]), a=float(d["a"]), b=float(d["b"]), m=float(d["m"]))


@dataclass(frozen=True)
class QualityModelParams:
    k_q: float
    a_q: float
    b_q: float

    def to_dict(self) -> dict:
        return {"k_q": self.k_q, "a_q": self.a_q, "b_q": self.b_q}

    @classmethod
    def from_dict(cls, d: dict) -> "QualityModelParams":
        return cls(k_q=float(d["k_q"]), a_q=float(d["a_q"]), b_q=float(d["b_q"]))


@dataclass(frozen=True)
class FitStats:
    rmse_size_mb: float
    rmse_quality: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "rmse_size_mb": self.rmse_size_mb,
            "rmse_quality": self.rmse_quality,
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitStats":
        return cls(
            rmse_size_mb=float(d["rmse_size_mb"]),
            rmse_quality=float(d["rmse_quality"]),
            n_samples=int(d["n_samples"]),
        )


@dataclass(frozen=True)
class ProfileModel:
    object_id: str
    size: SizeModelParams
    quality: QualityModelParams
    fit_stats: FitStats

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "size": self.size.to_dict(),
            "quality": self.quality.to_dict(),
            "fit_stats": self.fit_stats.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileModel":
        return cls(
            object_id=str(d["object_id"]),
            size=SizeModelParams.from_dict(d["size"]),
            quality=QualityModelParams.from_dict(d["quality"]),
            fit_stats=FitStats.from_dict(d["fit_stats"]),
        )


@dataclass(frozen=True)
class SamplingPlan:
    object_id: str
    points: tuple[ConfigPair, ...]

    def to_dict(self) -> dict:
        return {"object_id": self.object_id, "points": [c.to_dict() for c in self.points]}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingPlan":
        return cls(
            object_id=str(d["object_id"]),
            points=tuple(ConfigPair.from_dict(c) for c in d["points"]),
        )


def eval_size(params: SizeModelParams, c: ConfigPair) -> float:
    """Predicted baked size in MB at config c, clamped below at 0."""
    gb, pb = c.g + params.a, c.p + params.b
    if gb <= 0 or pb <= 0:
        raise PoleInDomain(f"size model pole at config ({c.g}, {c.p})")
    return max(0.0, -params.k / (gb ** 3 * pb ** 2) + params.m)


def eval_quality(params: QualityModelParams, c: ConfigPair) -> float:
    """Predicted quality score at config c, clamped to [0, 1]."""
    gb, pb = c.g + params.a_q, c.p + params.b_q
    if gb <= 0 or pb <= 0:
        raise PoleInDomain(f"quality model pole at config ({c.g}, {c.p})")
    return min(1.0, max(0.0, params.k_q * gb ** 3 * pb ** 2))


def sampling_plan(space: ConfigSpace, step_multiplier: float = 2.0) -> SamplingPlan:
    """Variable-step sample plan over one object's config space.

    g starts at the range minimum and each step adds ``step_multiplier``
    times the previous sample value (default 2, i.e. g -> 3g), stopping
    once the next value would exceed the range maximum. Each g is paired
    with the min, mid, and max of the p range. Planned points are snapped
    to the nearest admissible pair and deduplicated.
    """
    if not space.pairs:
        raise EmptySpace(f"object {space.object_id!r} has an empty config space")
    if step_multiplier <= 0:
        raise ValueError(f"step_multiplier must be positive, got {step_multiplier}")

    g_min, g_max = min(space.g_values), max(space.g_values)
    p_min, p_max = min(space.p_values), max(space.p_values)

    g_targets: list[float] = [float(g_min)]
    while True:
        nxt = g_targets[-1] + step_multiplier * g_targets[-1]
        if nxt > g_max:
            break
        g_targets.append(nxt)

    p_targets: list[int] = []
    for p in (p_min, (p_min + p_max) // 2, p_max):
        if p not in p_targets:
            p_targets.append(p)

    points: list[ConfigPair] = []
    for g_t in g_targets:
        for p_t in p_targets:
            snapped = _nearest_pair(space, g_t, float(p_t))
            if snapped not in points:
                points.append(snapped)
    return SamplingPlan(object_id=space.object_id, points=tuple(points))


def _nearest_pair(space: ConfigSpace, g_t: float, p_t: float) -> ConfigPair:
    # Ties resolve toward smaller g, then smaller p.
    return min(space.pairs, key=lambda c: ((c.g - g_t) ** 2 + (c.p - p_t) ** 2, c.g, c.p))


# ---------------------------------------------------------------------------
# Curve fitting
# ---------------------------------------------------------------------------

_BARRIER = 1e9          # residual magnitude signalling a pole inside the step
_POLE_EPS = 1e-9
_LM_MAX_ITER = 200
_LM_REL_TOL = 1e-10
_FD_REL_STEP = 6e-6     # ~cbrt(eps), optimal for central differences


def _jacobian(fn, x: np.ndarray) -> np.ndarray:
    cols = []
    for j in range(x.size):
        h = _FD_REL_STEP * max(abs(x[j]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((fn(xp) - fn(xm)) / (2.0 * h))
    return np.stack(cols, axis=1)


def _levenberg_marquardt(residual_fn, x0: np.ndarray, scale: np.ndarray):
    """Damped least squares over internally rescaled parameters.

    lambda starts at 1e-3, is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one; stops when the relative residual
    change drops below 1e-10 or after 200 step attempts.
    """
    scale = np.asarray(scale, dtype=float)
    fn = lambda xs: residual_fn(xs * scale)
    xs = np.asarray(x0, dtype=float) / scale
    r = fn(xs)
    sse = float(r @ r)
    lam = 1e-3
    jac = None
    for _ in range(_LM_MAX_ITER):
        if jac is None:
            jac = _jacobian(fn, xs)
            jtj = jac.T @ jac
            grad = jac.T @ r
            damp = np.maximum(np.diag(jtj), 1e-12)
        try:
            step = np.linalg.solve(jtj + lam * np.diag(damp), -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        if not np.all(np.isfinite(step)):
            lam *= 10.0
            continue
        cand = xs + step
        r_new = fn(cand)
        sse_new = float(r_new @ r_new)
        if sse_new < sse:
            converged = abs(sse - sse_new) <= _LM_REL_TOL * max(sse, 1e-300)
            xs, r, sse = cand, r_new, sse_new
            jac = None
            lam = max(lam / 10.0, 1e-12)
            if converged or sse == 0.0:
                break
        else:
            lam *= 10.0
            if lam > 1e15:
                break
    return xs * scale, sse


def _size_residual_fn(g: np.ndarray, p: np.ndarray, y: np.ndarray):
    def fn(params: np.ndarray) -> np.ndarray:
        k, a, b, m = params
        gb, pb = g + a, p + b
        if np.any(gb <= _POLE_EPS) or np.any(pb <= _POLE_EPS):
            return np.full_like(y, _BARRIER)
        return (m - k / (gb ** 3 * pb ** 2)) - y
    return fn


def _quality_residual_fn(g: np.ndarray, p: np.ndarray, y: np.ndarray):
    def fn(params: np.ndarray) -> np.ndarray:
        kq, aq, bq = params
        gb, pb = g + aq, p + bq
        if np.any(gb <= _POLE_EPS) or np.any(pb <= _POLE_EPS):
            return np.full_like(y, _BARRIER)
        return kq * gb ** 3 * pb ** 2 - y
    return fn


def fit_profile(
    object_id: str,
    samples: "list[SampleObservation]",
    space: "ConfigSpace | None" = None,
) -> ProfileModel:
    """Fit both surfaces for one object and return the validated model.

    Requires at least 4 samples spanning >= 2 distinct g and >= 2 distinct
    p. Eight deterministic starts per surface: the (a, b) offsets grid
    {0, g_min/2} x {0, p_min/2} crossed with k solved through each of the
    two extreme samples. The best converged start that keeps poles out of
    the domain and the surfaces monotone wins; exact ties keep the
    earliest start.
    """
    if len(samples) < 4:
        raise InsufficientSamples(
            f"object {object_id!r}: need >= 4 samples to fit both surfaces, got {len(samples)}"
        )
    g = np.array([s.config.g for s in samples], dtype=float)
    p = np.array([s.config.p for s in samples], dtype=float)
    if len(set(g.tolist())) < 2 or len(set(p.tolist())) < 2:
        raise DegenerateSamples(
            f"object {object_id!r}: samples must span >= 2 distinct g and p values"
        )
    sizes = np.array([s.size_mb for s in samples], dtype=float)
    quals = np.array([s.quality for s in samples], dtype=float)

    # Domain over which the fitted surfaces must stay pole-free/monotone.
    if space is not None:
        dom_g_lo, dom_p_lo = float(min(space.g_values)), float(min(space.p_values))
    else:
        dom_g_lo, dom_p_lo = float(g.min()), float(p.min())

    by_config = sorted(samples, key=lambda s: (s.config.g, s.config.p))
    extremes = (by_config[0], by_config[-1])
    offsets = [
        (0.0, 0.0),
        (0.0, dom_p_lo / 2.0),
        (dom_g_lo / 2.0, 0.0),
        (dom_g_lo / 2.0, dom_p_lo / 2.0),
    ]

    size_params = _fit_size(g, p, sizes, extremes, offsets, dom_g_lo, dom_p_lo, object_id)
    quality_params = _fit_quality(g, p, quals, extremes, offsets, dom_g_lo, dom_p_lo, object_id)

    size_pred = np.array([eval_size(size_params, s.config) for s in samples])
    qual_pred = np.array([eval_quality(quality_params, s.config) for s in samples])
    stats = FitStats(
        rmse_size_mb=float(np.sqrt(np.mean((size_pred - sizes) ** 2))),
        rmse_quality=float(np.sqrt(np.mean((qual_pred - quals) ** 2))),
        n_samples=len(samples),
    )
    return ProfileModel(object_id=object_id, size=size_params, quality=quality_params, fit_stats=stats)


def _fit_size(g, p, y, extremes, offsets, dom_g_lo, dom_p_lo, object_id) -> SizeModelParams:
    residual_fn = _size_residual_fn(g, p, y)
    m0 = 1.1 * float(y.max()) if y.max() > 0 else 1.0
    best = None
    for a0, b0 in offsets:
        for e in extremes:
            k0 = (m0 - e.size_mb) * (e.config.g + a0) ** 3 * (e.config.p + b0) ** 2
            if not math.isfinite(k0) or k0 <= 0:
                k0 = m0
            x0 = np.array([k0, a0, b0, m0])
            scale = np.array([abs(k0), max(dom_g_lo / 2.0, 1.0), max(dom_p_lo / 2.0, 1.0), m0])
            params, sse = _levenberg_marquardt(residual_fn, x0, scale)
            k, a, b, m = params
            ok = (
                np.all(np.isfinite(params))
                and k >= 0
                and m > 0
                and dom_g_lo + a > 0
                and dom_p_lo + b > 0
            )
            if ok and (best is None or sse < best[0]):
                best = (sse, SizeModelParams(k=float(k), a=float(a), b=float(b), m=float(m)))
    if best is None:
        raise FitRejected(f"object {object_id!r}: no size-model start converged to a valid fit")
    return best[1]


def _fit_quality(g, p, y, extremes, offsets, dom_g_lo, dom_p_lo, object_id) -> QualityModelParams:
    residual_fn = _quality_residual_fn(g, p, y)
    y_max = float(y.max())
    best = None
    for a0, b0 in offsets:
        for e in extremes:
            k0 = e.quality / ((e.config.g + a0) ** 3 * (e.config.p + b0) ** 2)
            if not math.isfinite(k0) or k0 <= 0:
                k0 = max(y_max, 1e-6) / ((g.max() + a0) ** 3 * (p.max() + b0) ** 2)
            x0 = np.array([k0, a0, b0])
            scale = np.array([abs(k0), max(dom_g_lo / 2.0, 1.0), max(dom_p_lo / 2.0, 1.0)])
            params, sse = _levenberg_marquardt(residual_fn, x0, scale)
            kq, aq, bq = params
            ok = (
                np.all(np.isfinite(params))
                and kq >= 0
                and dom_g_lo + aq > 0
                and dom_p_lo + bq > 0
            )
            if ok and (best is None or sse < best[0]):
                best = (sse, QualityModelParams(k_q=float(kq), a_q=float(aq), b_q=float(bq)))
    if best is None:
        raise FitRejected(f"object {object_id!r}: no quality-model start converged to a valid fit")
    return best[1]


def validate_fit(
    model: ProfileModel, holdout: "list[SampleObservation]"
) -> tuple[float, float, float, float]:
    """(mae_size, sd_size, mae_quality, sd_quality) on held-out observations.

    sd_* is the population standard deviation of the absolute errors.
    """
    if not holdout:
        raise ValueError("holdout must be nonempty")
    err_s = np.array([abs(eval_size(model.size, s.config) - s.size_mb) for s in holdout])
    err_q = np.array([abs(eval_quality(model.quality, s.config) - s.quality) for s in holdout])
    return (
        float(err_s.mean()),
        float(err_s.std()),
        float(err_q.mean()),
        float(err_q.std()),
    )


# ---------------------------------------------------------------------------
# profiles.json: fitted parameters plus each object's config space, so the
# planner can enumerate candidates without the original scene file.
# ---------------------------------------------------------------------------

def profiles_to_dict(profiles: "list[tuple[ProfileModel, ConfigSpace]]") -> dict:
    objects = []
    for model, space in profiles:
        rec = model.to_dict()
        rec["space"] = space.to_dict()
        objects.append(rec)
    return {"objects": objects}


def profiles_from_dict(d: dict) -> "list[tuple[ProfileModel, ConfigSpace]]":
    out = []
    for rec in d["objects"]:
        model = ProfileModel.from_dict(rec)
        space = ConfigSpace.from_dict(model.object_id, rec["space"])
        out.append((model, space))
    return out
