"""Benchmark harness: manifests, batch scoring, win rates, reports.

A manifest is a line-delimited JSON file; each line describes one edit
triplet (input image, instruction, ground-truth target) plus per-model
edited outputs. The harness scores every (entry, model) pair with the
reward stack and MAS, aggregates per model and per category, computes
pairwise win rates, and serializes a deterministic report.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import (
    DuplicateId,
    InsufficientModels,
    MissingReferencedFile,
    ParseError,
    WeightMismatch,
    WeightSumInvalid,
)
from .estimator import BACKEND, Estimator
from .flowfield import flow_magnitude, normalize_flow
from .imageio import GrayImage, load_image, resize_bilinear, to_grayscale
from .reward import (
    MasConfig,
    MasResult,
    RewardBreakdown,
    RewardConfig,
    mas_from_flows,
    motion_reward_from_flows,
)
from .reward import _triplet_flows

__all__ = [
    "BenchmarkManifest",
    "EntryScore",
    "ManifestEntry",
    "Report",
    "WinRates",
    "combine_rewards",
    "dataset_motion_stats",
    "load_external_scores",
    "load_manifest",
    "run_benchmark",
    "score_entry",
    "win_rate",
]

CATEGORIES = (
    "pose",
    "locomotion",
    "object-state",
    "orientation",
    "subject-object",
    "inter-subject",
)

_CATEGORY_ALIASES = {
    "pose": "pose",
    "posture": "pose",
    "pose / posture": "pose",
    "pose/posture": "pose",
    "locomotion": "locomotion",
    "distance": "locomotion",
    "locomotion / distance": "locomotion",
    "locomotion/distance": "locomotion",
    "object-state": "object-state",
    "object state": "object-state",
    "formation": "object-state",
    "object state / formation": "object-state",
    "object state/formation": "object-state",
    "orientation": "orientation",
    "viewpoint": "orientation",
    "orientation / viewpoint": "orientation",
    "orientation/viewpoint": "orientation",
    "subject-object": "subject-object",
    "subject-object interaction": "subject-object",
    "subject–object interaction": "subject-object",
    "inter-subject": "inter-subject",
    "inter-subject interaction": "inter-subject",
    "other": "other",
}


@dataclass(frozen=True)
class ManifestEntry:
    entry_id: str
    category: str
    instruction: str
    input_path: str
    gt_path: str
    outputs: dict[str, str]
    category_warning: bool = False


@dataclass(frozen=True)
class BenchmarkManifest:
    entries: tuple[ManifestEntry, ...]
    path: str | None = None

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.entry_id for e in self.entries)

    def models(self) -> tuple[str, ...]:
        names: set[str] = set()
        for entry in self.entries:
            names.update(entry.outputs)
        return tuple(sorted(names))


@dataclass(frozen=True)
class EntryScore:
    entry_id: str
    model: str
    category: str
    reward: RewardBreakdown
    mas: MasResult
    external: dict[str, float] = field(default_factory=dict)
    combined: float | None = None
    resized: bool = False


@dataclass(frozen=True)
class WinRates:
    models: tuple[str, ...]
    wins: dict[str, dict[str, float]]  # W[a][b]: percent a beats b
    ties: dict[str, dict[str, float]]
    compared: dict[str, dict[str, int]]
    metric: str = "mas"


@dataclass(frozen=True)
class Report:
    scores: tuple[EntryScore, ...]
    failures: tuple[dict, ...]
    aggregates: dict[str, dict]
    win_rates: WinRates | None
    provenance: dict

    def to_dict(self) -> dict:
        def breakdown(r: RewardBreakdown) -> dict:
            return {
                "d_mag": r.d_mag,
                "d_dir": r.d_dir,
                "m_move": r.m_move,
                "d_comb": r.d_comb,
                "d_min_star": r.d_min_star,
                "d_tilde": r.d_tilde,
                "r_cont": r.r_cont,
                "r_motion": r.r_motion,
            }

        doc = {
            "provenance": self.provenance,
            "aggregates": self.aggregates,
            "win_rates": None,
            "scores": [
                {
                    "entry_id": s.entry_id,
                    "model": s.model,
                    "category": s.category,
                    "reward": breakdown(s.reward),
                    "mas": {
                        "d_ovl": s.mas.d_ovl,
                        "mas": s.mas.mas,
                        "static_failure": s.mas.static_failure,
                    },
                    "external": s.external,
                    "combined": s.combined,
                    "resized": s.resized,
                }
                for s in self.scores
            ],
            "failures": list(self.failures),
        }
        if self.win_rates is not None:
            doc["win_rates"] = {
                "metric": self.win_rates.metric,
                "models": list(self.win_rates.models),
                "wins": self.win_rates.wins,
                "ties": self.win_rates.ties,
                "compared": self.win_rates.compared,
            }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_manifest(path: str) -> BenchmarkManifest:
    """Parse and validate a line-delimited JSON manifest."""
    if not os.path.isfile(path):
        raise MissingReferencedFile([path])
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    missing: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise ParseError(f"{path}:{lineno}: entry must be an object")
            try:
                entry_id = record["id"]
                input_path = record["input_path"]
                gt_path = record["gt_path"]
                outputs = record["outputs"]
            except KeyError as exc:
                raise ParseError(
                    f"{path}:{lineno}: missing required field {exc.args[0]!r}"
                ) from exc
            if not isinstance(entry_id, str) or not entry_id:
                raise ParseError(f"{path}:{lineno}: id must be a nonempty string")
            if not isinstance(outputs, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in outputs.items()
            ):
                raise ParseError(
                    f"{path}:{lineno}: outputs must map model names to paths"
                )
            if entry_id in seen:
                raise DuplicateId(f"{path}:{lineno}: duplicate entry id {entry_id!r}")
            seen.add(entry_id)
            raw_category = str(record.get("category", "other")).strip().lower()
            category = _CATEGORY_ALIASES.get(raw_category)
            warning = category is None
            if warning:
                category = "other"
            base = os.path.dirname(os.path.abspath(path))

            def resolve(p: str) -> str:
                return p if os.path.isabs(p) else os.path.join(base, p)

            input_path = resolve(input_path)
            gt_path = resolve(gt_path)
            outputs = {m: resolve(p) for m, p in sorted(outputs.items())}
            for ref in (input_path, gt_path, *outputs.values()):
                if not os.path.isfile(ref):
                    missing.append(ref)
            entries.append(
                ManifestEntry(
                    entry_id=entry_id,
                    category=category,
                    instruction=str(record.get("instruction", "")),
                    input_path=input_path,
                    gt_path=gt_path,
                    outputs=outputs,
                    category_warning=warning,
                )
            )
    if missing:
        raise MissingReferencedFile(sorted(set(missing)))
    return BenchmarkManifest(entries=tuple(entries), path=os.path.abspath(path))


def _load_gray(path: str) -> GrayImage:
    return to_grayscale(load_image(path))


def score_entry(
    entry: ManifestEntry,
    model_name: str,
    est: Estimator,
    rcfg: RewardConfig | None = None,
    mcfg: MasConfig | None = None,
    external: dict[str, float] | None = None,
    weights: dict[str, float] | None = None,
) -> EntryScore:
    """Score one entry for one model; raises on per-entry failures."""
    rcfg = rcfg or RewardConfig()
    mcfg = mcfg or MasConfig()
    edited_path = entry.outputs.get(model_name)
    if edited_path is None:
        raise KeyError(f"entry {entry.entry_id!r} has no output for {model_name!r}")
    orig = _load_gray(entry.input_path)
    gt = _load_gray(entry.gt_path)
    edited = _load_gray(edited_path)
    resized = False
    if (edited.width, edited.height) != (orig.width, orig.height):
        data = resize_bilinear(edited.data, orig.width, orig.height)
        edited = GrayImage(width=orig.width, height=orig.height, data=data)
        resized = True
    v_pred, v_gt = _triplet_flows(orig, edited, gt, est, entry.entry_id)
    reward = motion_reward_from_flows(v_pred, v_gt, rcfg)
    mas = mas_from_flows(v_pred, v_gt, mcfg, rcfg)
    combined = None
    ext = dict(external or {})
    if weights:
        combined = combine_rewards(reward.r_motion, ext, weights)
    return EntryScore(
        entry_id=entry.entry_id,
        model=model_name,
        category=entry.category,
        reward=reward,
        mas=mas,
        external=ext,
        combined=combined,
        resized=resized,
    )


def win_rate(scores: dict[str, dict[str, float]], metric: str = "mas") -> WinRates:
    """Pairwise win-rate matrix from per-model, per-entry scalar scores.

    For each model pair, only entries scored by both count; W[a][b] is the
    percentage of those where a strictly beats b, with ties tracked apart.
    """
    models = tuple(sorted(scores))
    if len(models) < 2:
        raise InsufficientModels(
            f"win rates need at least 2 models, got {len(models)}"
        )
    wins = {a: {} for a in models}
    ties = {a: {} for a in models}
    compared = {a: {} for a in models}
    for a in models:
        for b in models:
            if a == b:
                continue
            shared = sorted(set(scores[a]) & set(scores[b]))
            n = len(shared)
            n_win = sum(1 for e in shared if scores[a][e] > scores[b][e])
            n_tie = sum(1 for e in shared if scores[a][e] == scores[b][e])
            compared[a][b] = n
            wins[a][b] = 100.0 * n_win / n if n else 0.0
            ties[a][b] = 100.0 * n_tie / n if n else 0.0
    return WinRates(models=models, wins=wins, ties=ties, compared=compared, metric=metric)


def dataset_motion_stats(
    manifest: BenchmarkManifest,
    est: Estimator,
    sample_size: int | None = None,
    seed: int = 0,
) -> dict:
    """Mean normalized motion magnitude of input->gt flows over a sample."""
    n = len(manifest.entries)
    indices = np.arange(n)
    if sample_size is not None and sample_size < n:
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(n, size=sample_size, replace=False))
    magnitudes = []
    sampled_ids = []
    errors = []
    for idx in indices:
        entry = manifest.entries[int(idx)]
        sampled_ids.append(entry.entry_id)
        try:
            orig = _load_gray(entry.input_path)
            gt = _load_gray(entry.gt_path)
            key = f"{entry.entry_id}__gt"
            flow = est.estimate_flow(orig, gt, key=key)
            mag = flow_magnitude(normalize_flow(flow))
            magnitudes.append(float(np.mean(mag.data)))
        except Exception as exc:  # noqa: BLE001 - per-entry isolation
            errors.append({"entry_id": entry.entry_id, "error": str(exc)})
    mean = float(np.mean(magnitudes)) if magnitudes else float("nan")
    std = float(np.std(magnitudes)) if magnitudes else float("nan")
    return {
        "mean_normalized_magnitude": mean,
        "std_normalized_magnitude": std,
        "measured_entries": len(magnitudes),
        "error_count": len(errors),
        "errors": errors,
        "sampled_ids": sampled_ids,
        "seed": seed,
    }


def load_external_scores(path: str) -> dict[tuple[str, str], dict[str, float]]:
    """Read a sidecar of named per-(entry, model) scores, one JSON per line."""
    if not os.path.isfile(path):
        raise MissingReferencedFile([path])
    scores: dict[tuple[str, str], dict[str, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            try:
                entry_id = record["id"] if "id" in record else record["entry_id"]
                model = record["model"]
                name = record["name"]
                value = float(record["value"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(
                    f"{path}:{lineno}: expected fields id, model, name, value"
                ) from exc
            scores.setdefault((str(entry_id), str(model)), {})[str(name)] = value
    return scores


def combine_rewards(
    motion: float,
    external: dict[str, float],
    weights: dict[str, float],
) -> float:
    """Weighted sum of the motion reward and named external scores."""
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-9:
        raise WeightSumInvalid(f"weights sum to {total!r}, expected 1.0")
    scores = dict(external)
    scores["motion"] = motion
    missing = sorted(set(weights) - set(scores))
    if missing:
        raise WeightMismatch(f"weights name scores that are absent: {missing}")
    return sum(w * scores[name] for name, w in weights.items())


def _aggregate(scores: list[EntryScore], models: tuple[str, ...]) -> dict:
    aggregates: dict[str, dict] = {}
    for model in models:
        rows = [s for s in scores if s.model == model]
        per_category: dict[str, dict] = {}
        for category in (*CATEGORIES, "other"):
            cat_rows = [s for s in rows if s.category == category]
            if not cat_rows:
                continue
            per_category[category] = {
                "count": len(cat_rows),
                "mean_mas": float(np.mean([s.mas.mas for s in cat_rows])),
                "mean_r_motion": float(
                    np.mean([s.reward.r_motion for s in cat_rows])
                ),
            }
        aggregates[model] = {
            "count": len(rows),
            "mean_mas": float(np.mean([s.mas.mas for s in rows])) if rows else None,
            "mean_r_motion": (
                float(np.mean([s.reward.r_motion for s in rows])) if rows else None
            ),
            "static_failure_rate": (
                float(np.mean([1.0 if s.mas.static_failure else 0.0 for s in rows]))
                if rows
                else None
            ),
            "per_category": per_category,
        }
    return aggregates


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _hash_file(path: str | None) -> str | None:
    if path is None or not os.path.isfile(path):
        return None
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_benchmark(
    manifest: BenchmarkManifest,
    models: list[str] | None,
    est: Estimator,
    rcfg: RewardConfig | None = None,
    mcfg: MasConfig | None = None,
    external_scores: dict[tuple[str, str], dict[str, float]] | None = None,
    weights: dict[str, float] | None = None,
    jobs: int = 1,
    config_text: str | None = None,
) -> Report:
    """Score every (entry, model) pair and assemble the full report.

    external_scores maps (entry_id, model) to named scalar scores. Win
    rates use MAS unless weights are given, in which case the combined
    score ranks models. Output is independent of the worker count.
    """
    rcfg = rcfg or RewardConfig()
    mcfg = mcfg or MasConfig()
    model_names = tuple(models) if models is not None else manifest.models()
    tasks = []
    for entry in manifest.entries:
        for model in model_names:
            if model in entry.outputs:
                tasks.append((entry, model))

    def run_task(task):
        entry, model = task
        ext = (external_scores or {}).get((entry.entry_id, model), {})
        return score_entry(
            entry, model, est, rcfg, mcfg, external=ext, weights=weights
        )

    results: dict[tuple[str, str], EntryScore] = {}
    failures: list[dict] = []
    if jobs <= 1:
        outcomes = []
        for task in tasks:
            try:
                outcomes.append((task, run_task(task), None))
            except Exception as exc:  # noqa: BLE001 - entry isolation
                outcomes.append((task, None, exc))
    else:
        outcomes = []
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run_task, task): task for task in tasks}
            for future in concurrent.futures.as_completed(futures):
                task = futures[future]
                try:
                    outcomes.append((task, future.result(), None))
                except Exception as exc:  # noqa: BLE001 - entry isolation
                    outcomes.append((task, None, exc))
    for (entry, model), score, exc in outcomes:
        if exc is None:
            results[(entry.entry_id, model)] = score
        else:
            failures.append(
                {
                    "entry_id": entry.entry_id,
                    "model": model,
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
    # Deterministic assembly: manifest order for entries, sorted models.
    ordered: list[EntryScore] = []
    for entry in manifest.entries:
        for model in sorted(model_names):
            if (entry.entry_id, model) in results:
                ordered.append(results[(entry.entry_id, model)])
    failures.sort(key=lambda f: (f["entry_id"], f["model"]))

    aggregates = _aggregate(ordered, tuple(sorted(model_names)))
    metric = "combined" if weights else "mas"
    table: dict[str, dict[str, float]] = {m: {} for m in model_names}
    for score in ordered:
        value = score.combined if weights else score.mas.mas
        if value is not None:
            table[score.model][score.entry_id] = value
    win_rates = None
    win_rate_error = None
    try:
        win_rates = win_rate(table, metric=metric)
    except InsufficientModels as exc:
        win_rate_error = str(exc)

    provenance = {
        "package_version": __version__,
        "estimator": getattr(est, "name", type(est).__name__),
        "kernel_backend": BACKEND,
        "manifest_path": manifest.path,
        "manifest_hash": _hash_file(manifest.path),
        "config_hash": _hash_text(config_text) if config_text else None,
        "models": list(sorted(model_names)),
        "entry_count": len(manifest.entries),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if win_rate_error:
        provenance["win_rate_error"] = win_rate_error
    return Report(
        scores=tuple(ordered),
        failures=tuple(failures),
        aggregates=aggregates,
        win_rates=win_rates,
        provenance=provenance,
    )


def report_csv(report: Report) -> str:
    """Flat per-(entry, model) rows; failures appear with empty metrics."""
    lines = [
        "entry_id,model,category,r_motion,d_mag,d_dir,m_move,mas,static_failure,errors"
    ]
    for s in report.scores:
        lines.append(
            ",".join(
                [
                    s.entry_id,
                    s.model,
                    s.category,
                    f"{s.reward.r_motion:.6g}",
                    f"{s.reward.d_mag:.9g}",
                    f"{s.reward.d_dir:.9g}",
                    f"{s.reward.m_move:.9g}",
                    f"{s.mas.mas:.6f}",
                    "true" if s.mas.static_failure else "false",
                    "",
                ]
            )
        )
    for f in report.failures:
        error_text = f["error"].replace('"', "'")
        lines.append(
            f'{f["entry_id"]},{f["model"]},,,,,,,,"{error_text}"'
        )
    return "\n".join(lines) + "\n"
