"""Experiment drivers: run policies, score retention, benchmark memory.

Reports are plain dicts written as JSON and CSV. Everything except wall
times is deterministic for a given spec, and the canonical byte form
(volatile fields stripped, keys sorted) is hashed into the report so two
runs of the same spec can be compared byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import __version__
from .baselines import POLICY_IDS, ema, no_memory, spatial_pool, temporal_pool, token_budget
from .consolidation import ConsolidationConfig
from .errors import (
    GateFailure,
    GridTooLarge,
    InvalidSpec,
    IoFailure,
    MissingQuestion,
)
from .frames import WeightedFrame, cosine, frame_descriptor
from .pipeline import Pipeline
from .streamio import SyntheticSpec, generate_synthetic, iter_synthetic, read_stream

__all__ = [
    "ExperimentSpec",
    "RelevanceMetrics",
    "compute_relevance_metrics",
    "run",
    "plant_eval",
    "bench_mem",
    "sweep",
    "check_gate",
    "build_report",
    "canonical_report_bytes",
    "write_report",
]

# wall-clock and derived-from-wall-clock fields never enter the canonical form
VOLATILE_KEYS = frozenset({"wall_time_s", "r_squared", "canonical_sha256"})

SWEEP_ALIASES = {"l_short": "k", "l_long": "ltm_cap"}
SWEEP_KEYS = ("k", "ltm_cap", "m0", "alpha", "sigma", "basis", "reinit")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a harness driver needs to reproduce a run.

    Exactly one of ``synthetic`` and ``stream_file`` supplies the frames.
    ``question`` overrides the stream's embedded question vector when given
    (a sequence of floats, or a path handled by the CLI layer). Seeds feed
    the synthetic generator; for file streams they only label rows.
    """

    synthetic: SyntheticSpec | None = None
    stream_file: str | None = None
    question: tuple[float, ...] | None = None
    cfg: ConsolidationConfig = field(default_factory=ConsolidationConfig)
    ltm_capacity: int = 256
    reinit_mode: str = "merged_tokens"
    policies: tuple[str, ...] = ("question_merge",)
    seeds: tuple[int, ...] = (0,)
    sweep: tuple[tuple[str, tuple], ...] = ()
    sample_count: int = 16
    ema_decay: float = 0.5
    max_grid_points: int = 1024

    def __post_init__(self):
        if (self.synthetic is None) == (self.stream_file is None):
            raise InvalidSpec("exactly one of synthetic and stream_file must be set")
        if not self.policies:
            raise InvalidSpec("at least one policy is required")
        for p in self.policies:
            if p not in POLICY_IDS:
                raise InvalidSpec(f"unknown policy {p!r}; known: {POLICY_IDS}")
        if not self.seeds:
            raise InvalidSpec("at least one seed is required")
        if any(s < 0 for s in self.seeds):
            raise InvalidSpec("seeds must be >= 0")
        sweep = []
        for key, values in self.sweep:
            key = SWEEP_ALIASES.get(key, key)
            if key not in SWEEP_KEYS:
                raise InvalidSpec(f"unknown sweep axis {key!r}; known: {SWEEP_KEYS}")
            if not values:
                raise InvalidSpec(f"sweep axis {key!r} has no values")
            sweep.append((key, tuple(values)))
        object.__setattr__(self, "sweep", tuple(sweep))
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.question is not None:
            object.__setattr__(self, "question",
                               tuple(float(v) for v in self.question))

    def to_dict(self) -> dict:
        return {
            "synthetic": None if self.synthetic is None else {
                "frame_count": self.synthetic.frame_count,
                "n_tokens": self.synthetic.n_tokens,
                "dims": self.synthetic.dims,
                "segments": [list(s) for s in self.synthetic.segments],
                "noise_scale": self.synthetic.noise_scale,
                "seed": self.synthetic.seed,
            },
            "stream_file": self.stream_file,
            "question": None if self.question is None else list(self.question),
            "cfg": asdict(self.cfg),
            "ltm_capacity": self.ltm_capacity,
            "reinit_mode": self.reinit_mode,
            "policies": list(self.policies),
            "seeds": list(self.seeds),
            "sweep": {k: list(v) for k, v in self.sweep},
            "sample_count": self.sample_count,
            "ema_decay": self.ema_decay,
        }


@dataclass(frozen=True)
class RelevanceMetrics:
    """How much of the retained representation is planted content.

    relevant_mass_fraction: planted share of the retained slot budget, the
    mean over entries of (planted provenance mass / entry weight). Every
    entry spends the same downstream token budget regardless of weight, so
    this is the fraction of that budget backing planted frames.
    slot_recall: fraction of planted source frames covered by at least one
    entry's provenance.
    q_affinity: mean cosine between entry descriptors and the question, None
    without a question.
    applicable: False when there are no planted segments to score against.
    """

    relevant_mass_fraction: float
    slot_recall: float
    q_affinity: float | None
    applicable: bool

    def to_dict(self) -> dict:
        return {
            "relevant_mass_fraction": self.relevant_mass_fraction,
            "slot_recall": self.slot_recall,
            "q_affinity": self.q_affinity,
            "applicable": self.applicable,
        }


def _overlap(a_start: int, a_stop: int, b_start: int, b_stop: int) -> int:
    return max(0, min(a_stop, b_stop) - max(a_start, b_start))


def compute_relevance_metrics(frames: Sequence[WeightedFrame],
                              segments: Sequence[tuple],
                              question=None) -> RelevanceMetrics:
    frames = list(frames)
    spans = [(int(s), int(e)) for s, e, *_ in segments]
    planted_total = sum(e - s for s, e in spans)
    affinity = None
    if question is not None and frames:
        q = np.asarray(question, dtype=np.float64)
        affinity = float(np.mean([cosine(frame_descriptor(f), q) for f in frames]))
    if not spans or planted_total == 0 or not frames:
        return RelevanceMetrics(0.0, 0.0, affinity, applicable=False)
    fractions = []
    for f in frames:
        mass = sum(_overlap(s, e, ps, pe) * c
                   for s, e, c in f.provenance for ps, pe in spans)
        fractions.append(mass / f.weight)
    covered = 0
    for ps, pe in spans:
        for t in range(ps, pe):
            if any(s <= t < e for f in frames for s, e, _ in f.provenance):
                covered += 1
    return RelevanceMetrics(
        relevant_mass_fraction=float(np.mean(fractions)),
        slot_recall=covered / planted_total,
        q_affinity=affinity,
        applicable=True,
    )


# -- grid handling -------------------------------------------------------


def _expand_grid(spec: ExperimentSpec) -> list[dict]:
    if not spec.sweep:
        points = [{}]
    else:
        keys = [k for k, _ in spec.sweep]
        points = [dict(zip(keys, combo))
                  for combo in itertools.product(*(v for _, v in spec.sweep))]
    total = len(points) * len(spec.policies) * len(spec.seeds)
    if total > spec.max_grid_points:
        raise GridTooLarge(
            f"{total} rows exceed the cap of {spec.max_grid_points}")
    return points


def _apply_point(spec: ExperimentSpec, point: dict):
    cfg = spec.cfg
    updates = {}
    if "k" in point:
        k = int(point["k"])
        updates.update(capacity=k, window_size=k, windows_per_fill=1)
    if "m0" in point:
        updates.update(base_target=int(point["m0"]))
    if "alpha" in point:
        updates.update(alpha=float(point["alpha"]))
    if "sigma" in point:
        updates.update(sigma=float(point["sigma"]))
    if "basis" in point:
        updates.update(basis=str(point["basis"]))
    if updates:
        cfg = replace(cfg, **updates)
    ltm_capacity = int(point.get("ltm_cap", spec.ltm_capacity))
    reinit_mode = str(point.get("reinit", spec.reinit_mode))
    return cfg, ltm_capacity, reinit_mode


def _params_echo(cfg: ConsolidationConfig, ltm_capacity: int, reinit_mode: str) -> dict:
    return {
        "k": cfg.capacity,
        "m0": cfg.base_target,
        "alpha": cfg.alpha,
        "sigma": cfg.sigma,
        "basis": cfg.basis,
        "reinit": reinit_mode,
        "ltm_cap": ltm_capacity,
    }


# -- drivers -------------------------------------------------------------


def _stream_for(spec: ExperimentSpec, seed: int):
    """Materialize (frames, question, segments) for one row seed."""
    if spec.synthetic is not None:
        sspec = replace(spec.synthetic, seed=seed)
        frames, question = generate_synthetic(sspec)
        segments = sspec.segments
    else:
        _, frames, question = read_stream(spec.stream_file)
        segments = ()
    if spec.question is not None:
        question = np.asarray(spec.question, dtype=np.float64)
    return frames, question, segments


def _run_pipeline(policy: str, frames, question, cfg, ltm_capacity, reinit_mode) -> Pipeline:
    if policy == "question_merge":
        if question is None:
            raise MissingQuestion("question_merge needs a question vector")
        q = question
    else:
        # stream_merge ignores the question by definition
        q = None
        cfg = replace(cfg, question_required=False)
    pipe = Pipeline(frames[0].shape[0], frames[0].shape[1], cfg,
                    question=q, ltm_capacity=ltm_capacity, reinit_mode=reinit_mode)
    for i in range(len(frames)):
        pipe.step(frames[i])
    pipe.flush()
    return pipe


def _run_single(spec: ExperimentSpec, policy: str, seed: int, point: dict,
                frames, question, segments) -> dict:
    cfg, ltm_capacity, reinit_mode = _apply_point(spec, point)
    t0 = time.perf_counter()
    counters: dict
    accounting = None
    if policy in ("stream_merge", "question_merge"):
        pipe = _run_pipeline(policy, frames, question, cfg, ltm_capacity, reinit_mode)
        retained = list(pipe.long.entries)
        accounting = pipe.bytes_model().to_dict()
        counters = {
            "frames_pushed": pipe.frames_pushed,
            "consolidations_run": pipe.consolidations_run,
            "consolidation_input_total": pipe.consolidation_input_total,
            "consolidation_output_total": pipe.consolidation_output_total,
            "seeded_weight_total": pipe.seeded_weight_total,
            "peak_resident_frames": pipe.peak_resident_frames,
            "ltm_entries": len(pipe.long),
            "ltm_total_weight": pipe.long.total_weight(),
        }
    elif policy == "no_memory":
        retained = no_memory(frames, spec.sample_count)
        counters = {"retained_frames": len(retained)}
    elif policy == "spatial_pool":
        retained = spatial_pool(frames)
        counters = {"retained_frames": len(retained)}
    elif policy == "temporal_pool":
        retained = [temporal_pool(frames)]
        counters = {"retained_frames": 1}
    else:
        retained = [ema(frames, spec.ema_decay)]
        counters = {"retained_frames": 1}
    wall = time.perf_counter() - t0
    metrics = compute_relevance_metrics(retained, segments, question)
    budget = token_budget(policy, frame_count=len(frames),
                          n_tokens=frames[0].shape[0],
                          sample_count=spec.sample_count,
                          ltm_capacity=ltm_capacity)
    return {
        "policy": policy,
        "seed": seed,
        "params": _params_echo(cfg, ltm_capacity, reinit_mode),
        "relevance": metrics.to_dict(),
        "accounting": accounting,
        "token_budget": budget,
        "counters": counters,
        "wall_time_s": wall,
    }


def run(spec: ExperimentSpec) -> dict:
    """One row per (seed, grid point, policy); returns the report dict."""
    points = _expand_grid(spec)
    rows = []
    for seed in spec.seeds:
        frames, question, segments = _stream_for(spec, seed)
        for point in points:
            for policy in spec.policies:
                rows.append(_run_single(spec, policy, seed, point,
                                        frames, question, segments))
    return build_report(spec, rows)


def plant_eval(spec: ExperimentSpec, min_wins: int | None = None) -> dict:
    """Paired question-aware vs question-agnostic runs over planted streams.

    The aware config is taken from ``spec.cfg`` (alpha < 1 required); the agnostic
    partner is the same config with alpha = 1, which keeps every window at
    the full budget no matter the question. Both see identical streams.
    """
    if spec.synthetic is None:
        raise InvalidSpec("plant_eval needs a synthetic stream with known segments")
    segments = spec.synthetic.segments
    applicable = bool(segments)
    if applicable:
        if max(rho for _, _, rho in segments) < 0.6:
            raise InvalidSpec("plant_eval needs at least one segment with rho >= 0.6")
        if spec.cfg.alpha >= 1.0:
            raise InvalidSpec("question-aware config needs alpha < 1")
    agnostic_cfg = replace(spec.cfg, alpha=1.0)
    rows = []
    wins = 0
    diffs = []
    for seed in spec.seeds:
        frames, question, segs = _stream_for(spec, seed)
        if question is None:
            raise MissingQuestion("plant_eval needs a question vector")
        t0 = time.perf_counter()
        aware = _run_pipeline("question_merge", frames, question, spec.cfg,
                              spec.ltm_capacity, spec.reinit_mode)
        agnostic = _run_pipeline("question_merge", frames, question, agnostic_cfg,
                                 spec.ltm_capacity, spec.reinit_mode)
        wall = time.perf_counter() - t0
        m_aware = compute_relevance_metrics(aware.long.entries, segs, question)
        m_agnostic = compute_relevance_metrics(agnostic.long.entries, segs, question)
        diff = m_aware.relevant_mass_fraction - m_agnostic.relevant_mass_fraction
        win = diff > 0
        wins += int(win)
        diffs.append(diff)
        rows.append({
            "seed": seed,
            "aware": m_aware.to_dict(),
            "agnostic": m_agnostic.to_dict(),
            "diff": diff,
            "win": win,
            "wall_time_s": wall,
        })
    if min_wins is None:
        min_wins = math.ceil(0.9 * len(spec.seeds))
    summary = {
        "applicable": applicable,
        "seeds": len(spec.seeds),
        "wins": wins if applicable else None,
        "mean_diff": float(np.mean(diffs)) if applicable else None,
        "gate": {"min_wins": min_wins, "passed": bool(applicable and wins >= min_wins)},
    }
    return build_report(spec, rows, extra={"summary": summary})


def bench_mem(spec: ExperimentSpec, t_list: Sequence[int] = (100, 1000, 10000)) -> dict:
    """Growth table over stream lengths, streaming frames lazily.

    Runs question-agnostically with re-initialization off so the amortized
    accounting has a single interpretation: appended frames per pushed
    frame. Peak model bytes must not depend on T; the instrumented resident
    counter is reported alongside as a cross-check.
    """
    if spec.synthetic is None:
        raise InvalidSpec("bench_mem needs a synthetic stream template")
    rows = []
    for t in t_list:
        if t < 1:
            raise InvalidSpec(f"stream length must be >= 1, got {t}")
        sspec = replace(spec.synthetic, frame_count=int(t))
        _, lazy = iter_synthetic(sspec)
        pipe = Pipeline(sspec.n_tokens, sspec.dims, spec.cfg,
                        question=None, ltm_capacity=spec.ltm_capacity,
                        reinit_mode="none")
        t0 = time.perf_counter()
        for frame in lazy:
            pipe.step(frame)
        pipe.flush()
        wall = time.perf_counter() - t0
        record = pipe.bytes_model()
        raw = record.raw_bytes_per_frame
        empirical = raw * pipe.consolidation_output_total / pipe.frames_pushed
        rows.append({
            "frame_count": int(t),
            "raw_bytes_per_frame": raw,
            "amortized_bytes_per_frame": record.amortized_bytes_per_frame,
            "empirical_bytes_per_frame": empirical,
            "peak_resident_bytes": record.peak_resident_bytes,
            "measured_peak_frames": pipe.peak_resident_frames,
            "measured_peak_bytes": pipe.peak_resident_frames * raw,
            "ltm_entries": len(pipe.long),
            "wall_time_s": wall,
        })
    peaks = {row["peak_resident_bytes"] for row in rows}
    amortized_ok = all(
        abs(row["empirical_bytes_per_frame"] - row["amortized_bytes_per_frame"])
        <= 0.01 * row["amortized_bytes_per_frame"]
        for row in rows)
    r_squared = None
    if len(rows) >= 3:
        ts = np.array([row["frame_count"] for row in rows], dtype=np.float64)
        ws = np.array([row["wall_time_s"] for row in rows], dtype=np.float64)
        slope, intercept = np.polyfit(ts, ws, 1)
        fitted = slope * ts + intercept
        ss_res = float(np.sum((ws - fitted) ** 2))
        ss_tot = float(np.sum((ws - ws.mean()) ** 2))
        r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    summary = {
        "peak_constant": len(peaks) == 1,
        "amortized_within_1pct": amortized_ok,
        "r_squared": r_squared,
        "gate": {"passed": bool(len(peaks) == 1 and amortized_ok)},
    }
    return build_report(spec, rows, extra={"summary": summary})


def sweep(spec: ExperimentSpec) -> dict:
    """Grid sweep; identical to :func:`run` but insists on a grid."""
    if not spec.sweep:
        raise InvalidSpec("sweep needs at least one axis")
    return run(spec)


def check_gate(report: dict) -> None:
    """Raise GateFailure when a report's summary gate did not pass."""
    gate = report.get("summary", {}).get("gate")
    if gate is not None and not gate.get("passed", False):
        raise GateFailure(f"assertion gate failed: {gate}")


# -- report plumbing -----------------------------------------------------


def _build_hash() -> str:
    root = os.path.dirname(os.path.abspath(__file__))
    digest = hashlib.sha256()
    for name in sorted(os.listdir(root)):
        if name.endswith(".py"):
            digest.update(name.encode())
            with open(os.path.join(root, name), "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()[:16]


def _strip_volatile(node):
    if isinstance(node, dict):
        return {k: _strip_volatile(v) for k, v in node.items()
                if k not in VOLATILE_KEYS}
    if isinstance(node, (list, tuple)):
        return [_strip_volatile(v) for v in node]
    return node


def canonical_report_bytes(report: dict) -> bytes:
    """Deterministic byte form: volatile fields out, keys sorted, compact."""
    return json.dumps(_strip_volatile(report), sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def build_report(spec: ExperimentSpec, rows: list[dict], extra: dict | None = None) -> dict:
    report = {
        "spec_echo": spec.to_dict(),
        "rows": rows,
        "environment": {"version": __version__, "build_hash": _build_hash()},
    }
    if extra:
        report.update(extra)
    report["canonical_sha256"] = hashlib.sha256(
        canonical_report_bytes(report)).hexdigest()
    return report


def _flatten(prefix: str, node, out: dict) -> None:
    if isinstance(node, dict):
        for k, v in node.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(node, (list, tuple)):
        out[prefix] = json.dumps(node)
    else:
        out[prefix] = node


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    # numbers and booleans use their JSON spelling so both formats agree
    return json.dumps(value)


def write_report(report: dict, out_dir: str, formats: Sequence[str] = ("json",)) -> list[str]:
    """Write report.json and/or report.csv under out_dir; returns the paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir!r}: {exc}") from exc
    written = []
    try:
        if "json" in formats:
            path = os.path.join(out_dir, "report.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            written.append(path)
        if "csv" in formats:
            path = os.path.join(out_dir, "report.csv")
            rows = report.get("rows", [])
            flat_rows = []
            columns: list[str] = []
            for row in rows:
                flat: dict = {}
                _flatten("", row, flat)
                flat_rows.append(flat)
                for key in flat:
                    if key not in columns:
                        columns.append(key)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(columns)
                for flat in flat_rows:
                    writer.writerow([_csv_cell(flat.get(c)) for c in columns])
            written.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write report under {out_dir!r}: {exc}") from exc
    return written
