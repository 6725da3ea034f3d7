"""Best-of-N FDE, permutation / leave-one-feature-out ablations, and sweeps."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataio import DatasetSplit, Scene
from .geometry import UNKNOWN, IntentLabel
from .goalnet import GoalNet, ModelConfig, sample_goals

_PFI_STREAM = 0x9F1
_BOOT_STREAM = 0xB007


def model_hash(model: GoalNet) -> str:
    h = hashlib.sha256(model.config.config_hash().encode())
    for name in sorted(model.params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name].value, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def scenes_hash(scenes: Sequence[Scene]) -> str:
    h = hashlib.sha256()
    for s in scenes:
        h.update(s.scene_id.encode())
        h.update(str(s.intent).encode())
        h.update(np.ascontiguousarray(s.obs, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(s.goal, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class SceneFDE:
    scene_id: str
    fde: float
    intent: str
    call_age: float | None


@dataclass
class EvalReport:
    mean: float
    std: float
    q25: float
    q75: float
    per_scene: list[SceneFDE]
    N: int
    seed: int
    model_hash: str
    config_hash: str
    data_hash: str
    mode: str = "sample"
    horizontal: bool = False

    @property
    def fdes(self) -> np.ndarray:
        return np.array([r.fde for r in self.per_scene])

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("per_scene")
        d["n_scenes"] = len(self.per_scene)
        return d

    def write(self, path: str | Path) -> None:
        """Summary JSON at ``path`` and per-scene CSV next to it (``*.scenes.csv``)."""
        path = Path(path)
        path.write_text(json.dumps(self.summary(), sort_keys=True, indent=1) + "\n")
        write_per_scene(path.with_suffix(".scenes.csv"), self.per_scene)


def summarize(fdes: np.ndarray) -> tuple[float, float, float, float]:
    """Mean, population std and linearly interpolated quartiles."""
    fdes = np.asarray(fdes, dtype=np.float64)
    q25, q75 = np.percentile(fdes, [25.0, 75.0], method="linear")
    return float(fdes.mean()), float(fdes.std(ddof=0)), float(q25), float(q75)


def write_per_scene(path: str | Path, rows: Sequence[SceneFDE]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scene_id", "fde_km", "intent", "call_age_s"])
        for r in rows:
            w.writerow([r.scene_id, repr(r.fde), r.intent, "" if r.call_age is None else repr(r.call_age)])


def best_of_n_distances(samples: np.ndarray, goal: np.ndarray, horizontal: bool = False) -> float:
    d = samples - goal
    if horizontal:
        d = d[:, :2]
    return float(np.min(np.sqrt(np.sum(d * d, axis=1))))


def fde_best_of_n(
    model: GoalNet,
    scenes: Sequence[Scene],
    N: int = 10,
    seed: int = 0,
    mode: str = "sample",
    horizontal: bool = False,
) -> EvalReport:
    """Per scene, min over N predicted goals of the distance to the true goal.

    ``mode="sample"`` draws N goals from the mixture with a stream seeded by
    ``(seed, scene position)``, so re-labelled copies of the same scene list see
    the same random numbers. ``mode="means"`` uses the N heaviest component
    means (cycled when N > K).
    """
    if not scenes:
        raise ValueError("no scenes to evaluate")
    if N < 1:
        raise ValueError("N must be >= 1")
    if mode not in ("sample", "means"):
        raise ValueError(f"unknown mode {mode!r}")
    mixes = model.predict_batch([s.obs for s in scenes], [s.intent for s in scenes])
    rows = []
    for i, (s, mix) in enumerate(zip(scenes, mixes)):
        pts = sample_goals(mix, N, [seed, i]) if mode == "sample" else mix.top_means(N)
        rows.append(SceneFDE(s.scene_id, best_of_n_distances(pts, s.goal, horizontal), str(s.intent), s.call_age))
    mean, std, q25, q75 = summarize(np.array([r.fde for r in rows]))
    return EvalReport(mean, std, q25, q75, rows, N, seed, model_hash(model), model.config.config_hash(),
                      scenes_hash(scenes), mode, horizontal)


# ---------------------------------------------------------------- ablations


@dataclass
class AblationReport:
    method: str  # "PFI" or "LOFO"
    baseline: float
    perturbed: float
    delta: float
    repetitions: int
    ci_low: float
    ci_high: float
    deltas: list[float] = field(default_factory=list)
    N: int = 10
    seed: int = 0
    hashes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")


def _percentile_ci(values: np.ndarray, level: float) -> tuple[float, float]:
    a = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(values, [a, 100.0 - a], method="linear")
    return float(lo), float(hi)


def permutation_importance(
    model: GoalNet,
    scenes: Sequence[Scene],
    N: int = 10,
    seed: int = 0,
    reps: int = 10,
    ci_level: float = 0.95,
    permutation: str | Callable[[np.random.Generator, int], np.ndarray] = "random",
) -> AblationReport:
    """Shuffle intent labels (with their call ages) among scenes and re-score.

    Sampling noise is shared between the baseline and every permuted run, so
    a permutation that changes nothing reproduces the baseline exactly.
    """
    scenes = list(scenes)
    if len(scenes) < 2:
        raise ValueError("permutation importance needs at least two scenes")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    base = fde_best_of_n(model, scenes, N, seed)
    rng = np.random.default_rng([seed, _PFI_STREAM])
    n = len(scenes)
    deltas, perturbed = [], []
    for _ in range(reps):
        if permutation == "identity":
            perm = np.arange(n)
        elif permutation == "random":
            perm = rng.permutation(n)
        else:
            perm = np.asarray(permutation(rng, n))
        shuffled = [s.with_intent(scenes[j].intent, scenes[j].call_age) for s, j in zip(scenes, perm)]
        rep = fde_best_of_n(model, shuffled, N, seed)
        perturbed.append(rep.mean)
        deltas.append(rep.mean - base.mean)
    d = np.array(deltas)
    lo, hi = _percentile_ci(d, ci_level)
    return AblationReport("PFI", base.mean, float(np.mean(perturbed)), float(d.mean()), reps, lo, hi,
                          [float(x) for x in d], N, seed,
                          {"model": base.model_hash, "config": base.config_hash, "data": base.data_hash})


def bootstrap_ci(diffs: np.ndarray, seed: int, n_boot: int = 2000, level: float = 0.95) -> tuple[float, float]:
    rng = np.random.default_rng([seed, _BOOT_STREAM])
    idx = rng.integers(0, len(diffs), size=(n_boot, len(diffs)))
    return _percentile_ci(diffs[idx].mean(axis=1), level)


@dataclass
class LofoResult:
    report: AblationReport
    with_intent: EvalReport
    without_intent: EvalReport
    models: tuple[GoalNet, GoalNet] | None = None


def lofo_study(
    dataset: DatasetSplit,
    mconfig: ModelConfig,
    tconfig,
    labels: Sequence[IntentLabel],
    N: int = 10,
    seed: int = 0,
    out_dir: str | Path | None = None,
    keep_models: bool = False,
) -> LofoResult:
    """Train the intent-conditioned model and its trajectory-only twin, score both.

    ``delta`` is FDE(without intent) minus FDE(with intent); the interval is a
    paired bootstrap over test scenes.
    """
    from .trainer import train

    if not dataset.train or not dataset.test:
        raise ValueError("LOFO needs non-empty train and test splits")
    reports, models = {}, {}
    for flag in (True, False):
        cfg = replace(mconfig, use_intent=flag)
        sub = None if out_dir is None else Path(out_dir) / ("with_intent" if flag else "without_intent")
        model, _ = train(dataset, GoalNet(cfg, labels), tconfig, sub)
        reports[flag] = fde_best_of_n(model, dataset.test, N, seed)
        models[flag] = model
    on, off = reports[True], reports[False]
    diffs = off.fdes - on.fdes
    lo, hi = bootstrap_ci(diffs, seed)
    rep = AblationReport("LOFO", on.mean, off.mean, off.mean - on.mean, 1, lo, hi, [off.mean - on.mean], N, seed,
                         {"model_on": on.model_hash, "model_off": off.model_hash, "data": on.data_hash})
    return LofoResult(rep, on, off, (models[True], models[False]) if keep_models else None)


# ------------------------------------------------------------------ sweeps

SWEEP_VARIABLES = ("obs_horizon", "pred_horizon", "call_age_bucket")


@dataclass
class CurvePoint:
    value: object
    report: EvalReport | None  # None marks an absent point

    @property
    def absent(self) -> bool:
        return self.report is None

    @property
    def mean(self) -> float | None:
        return None if self.report is None else self.report.mean


@dataclass
class Curve:
    variable: str
    points: list[CurvePoint]

    def present(self) -> list[CurvePoint]:
        return [p for p in self.points if not p.absent]

    def means(self) -> list[float | None]:
        return [p.mean for p in self.points]

    def pooled_iqr(self) -> float:
        fdes = np.concatenate([p.report.fdes for p in self.present()])
        q25, q75 = np.percentile(fdes, [25.0, 75.0], method="linear")
        return float(q75 - q25)


def _value_text(v) -> str:
    if isinstance(v, tuple):
        return f"{v[0]:g}-{v[1]:g}"
    return f"{v:g}" if isinstance(v, (int, float)) else str(v)


def sweep(
    variable: str,
    values: Sequence,
    dataset_builder: Callable[[object], DatasetSplit],
    model_or_trainer: GoalNet | Callable[[DatasetSplit], GoalNet],
    N: int = 10,
    seed: int = 0,
) -> Curve:
    """Mean best-of-N FDE as a function of one information condition.

    Horizon sweeps rebuild the dataset with ``dataset_builder(value)`` and call
    ``model_or_trainer(split)`` to fit a fresh model per value. Call-age sweeps
    take ``(lo, hi)`` bucket bounds in seconds, build the dataset once with
    ``dataset_builder(None)`` and score one model on each bucket's test scenes
    (``lo <= call_age < hi``; scenes without a call are excluded).
    """
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"unknown sweep variable {variable!r}")
    values = list(values)
    points = []
    if variable == "call_age_bucket":
        if not values:
            raise ValueError("need at least one call-age bucket")
        split = dataset_builder(None)
        model = model_or_trainer if isinstance(model_or_trainer, GoalNet) else model_or_trainer(split)
        for lo, hi in values:
            sel = [s for s in split.test if s.call_age is not None and lo <= s.call_age < hi]
            points.append(CurvePoint((lo, hi), fde_best_of_n(model, sel, N, seed) if sel else None))
        return Curve(variable, points)
    if len(values) < 2:
        raise ValueError("a horizon sweep needs at least two values")
    for v in values:
        split = dataset_builder(v)
        if not split.test or not split.train:
            points.append(CurvePoint(v, None))
            continue
        model = model_or_trainer if isinstance(model_or_trainer, GoalNet) else model_or_trainer(split)
        points.append(CurvePoint(v, fde_best_of_n(model, split.test, N, seed)))
    return Curve(variable, points)


def write_curve_csv(path: str | Path, curve: Curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "mean_fde", "q25", "q75"])
        for p in curve.points:
            if p.absent:
                w.writerow([_value_text(p.value), "", "", ""])
            else:
                r = p.report
                w.writerow([_value_text(p.value), repr(r.mean), repr(r.q25), repr(r.q75)])


def write_curve_svg(path: str | Path, curves: dict[str, Curve], title: str = "", width: int = 480, height: int = 320) -> None:
    """Plain SVG line chart: one polyline per curve, IQR as a shaded band."""
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    pad_l, pad_r, pad_t, pad_b = 56, 16, 28, 40
    series = list(curves.items())
    labels = [_value_text(p.value) for p in series[0][1].points] if series else []
    ys = [v for _, c in series for p in c.present() for v in (p.report.q25, p.report.q75, p.report.mean)]
    y_max = max(ys) * 1.05 if ys else 1.0
    y_max = y_max if y_max > 0 else 1.0
    n = max(len(labels), 1)

    def sx(i):
        return pad_l + (width - pad_l - pad_r) * (0.5 if n == 1 else i / (n - 1))

    def sy(v):
        return pad_t + (height - pad_t - pad_b) * (1.0 - v / y_max)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">']
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="16" text-anchor="middle">{title}</text>')
    out.append(f'<line x1="{pad_l}" y1="{sy(0):.1f}" x2="{width - pad_r}" y2="{sy(0):.1f}" stroke="black"/>')
    out.append(f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{sy(0):.1f}" stroke="black"/>')
    for k in range(5):
        v = y_max * k / 4
        out.append(f'<text x="{pad_l - 4}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.2f}</text>')
    for i, lab in enumerate(labels):
        out.append(f'<text x="{sx(i):.1f}" y="{height - pad_b + 16}" text-anchor="middle">{lab}</text>')
    out.append(f'<text x="{pad_l - 44}" y="{pad_t - 10}">FDE km</text>')
    for c_i, (name, curve) in enumerate(series):
        col = colours[c_i % len(colours)]
        pts = [(i, p.report) for i, p in enumerate(curve.points) if not p.absent]
        if pts:
            band = [f"{sx(i):.1f},{sy(r.q75):.1f}" for i, r in pts] + [f"{sx(i):.1f},{sy(r.q25):.1f}" for i, r in reversed(pts)]
            out.append(f'<polygon points="{" ".join(band)}" fill="{col}" fill-opacity="0.15" stroke="none"/>')
            line = " ".join(f"{sx(i):.1f},{sy(r.mean):.1f}" for i, r in pts)
            out.append(f'<polyline points="{line}" fill="none" stroke="{col}" stroke-width="2"/>')
            for i, r in pts:
                out.append(f'<circle cx="{sx(i):.1f}" cy="{sy(r.mean):.1f}" r="3" fill="{col}"/>')
        out.append(f'<text x="{width - pad_r - 4}" y="{pad_t + 14 * (c_i + 1)}" text-anchor="end" fill="{col}">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


# ------------------------------------------------------- intent partition


@dataclass(frozen=True)
class GroupStats:
    n: int
    mean: float
    std: float


@dataclass(frozen=True)
class IntentPartition:
    matched: GroupStats | None  # scenes whose label satisfies the predicate
    rest: GroupStats | None


def split_report_by_intent(report: EvalReport, predicate: Callable[[IntentLabel], bool] | None = None) -> IntentPartition:
    """Mean and population std of per-scene FDE for matching vs other labels.

    The default predicate selects Unknown-labelled scenes. An empty side is
    reported as ``None``.
    """
    pred = predicate or (lambda label: label == UNKNOWN)
    a, b = [], []
    for r in report.per_scene:
        (a if pred(IntentLabel.parse(r.intent)) else b).append(r.fde)

    def stats(v):
        if not v:
            return None
        arr = np.array(v)
        return GroupStats(len(v), float(arr.mean()), float(arr.std(ddof=0)))

    return IntentPartition(stats(a), stats(b))
