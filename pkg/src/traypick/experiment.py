"""Seeded grasp campaigns: repeated pick attempts, records, and summaries.

A campaign runs n attempts of the full pipeline (generate or continue a
scene, render depth and masks, corrupt masks, plan, execute) with per-attempt
seeds derived additively from the base seed, so campaigns are reproducible
bit-for-bit and extensible without reshuffling history.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import stats

from .archetypes import DEFAULT_ARCHETYPES
from .errors import ParameterError
from .graspsim import (
    Classification,
    ExecutionParams,
    FingerKind,
    FingerModel,
    execute_grasp,
)
from .perception import CorruptionParams, corrupt_masks, render_depth, render_masks
from .planner import FingerGeometry, plan
from .scenegen import SceneConfig, TrayScene, generate_scene

FRESH = "fresh_scene_each_attempt"
DEPLETE = "deplete_until_empty_then_refresh"


@dataclass
class ExperimentConfig:
    archetype: str = "fried_chicken"
    finger: FingerKind = FingerKind.ADAPTIVE
    filtering: bool = True
    n_attempts: int = 50
    base_seed: int = 0
    refill_policy: str = DEPLETE
    depth_sigma: float = 0.0
    depth_quant: float = 0.0
    corruption: CorruptionParams = field(default_factory=CorruptionParams)
    finger_geometry: FingerGeometry = field(default_factory=FingerGeometry)
    execution: ExecutionParams = field(default_factory=ExecutionParams)
    scene: SceneConfig | None = None
    output_dir: str | None = None

    def validate(self) -> None:
        if self.n_attempts < 1:
            raise ParameterError("n_attempts must be >= 1")
        if self.refill_policy not in (FRESH, DEPLETE):
            raise ParameterError(f"unknown refill policy {self.refill_policy!r}")
        if self.archetype not in (self.scene.archetypes if self.scene else DEFAULT_ARCHETYPES):
            raise ParameterError(f"unknown archetype {self.archetype!r}")

    def scene_config(self) -> SceneConfig:
        if self.scene is not None:
            return self.scene
        return SceneConfig(archetype=self.archetype)

    def finger_model(self) -> FingerModel:
        return FingerModel(kind=self.finger, geometry=self.finger_geometry)


@dataclass
class TrialRecord:
    attempt: int
    seed: int
    epoch: int  # scene generation counter; piece ids are unique per epoch
    candidate_count: int
    retained_count: int
    target_id: int | None
    classification: str
    picked: list[int]
    damaged: list[int]
    reason: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class SummaryStats:
    n_attempts: int
    success_single_rate: float
    success_incl_multiple_rate: float
    multi_pick_rate: float
    damaged_piece_total: int
    no_target_count: int


def run_trial(
    cfg: ExperimentConfig,
    attempt_idx: int,
    scene: TrayScene | None = None,
    epoch: int = 0,
) -> tuple[TrialRecord, TrayScene | None, int]:
    """One pick attempt. Returns (record, scene-to-carry, epoch).

    With the fresh policy a new scene is generated every attempt; with the
    depleting policy the carried scene is reused until it runs out of pieces
    or yields no target, then refreshed with the attempt's seed.
    """
    cfg.validate()
    seed = cfg.base_seed + attempt_idx
    if cfg.refill_policy == FRESH or scene is None or not scene.pieces:
        scene = generate_scene(cfg.scene_config(), seed)
        epoch += 1

    depth_rng = np.random.default_rng((seed, 1))
    corrupt_rng = np.random.default_rng((seed, 2))
    depth = render_depth(scene, cfg.depth_sigma, cfg.depth_quant, depth_rng)
    masks = render_masks(scene)
    if not cfg.corruption.is_identity:
        masks = corrupt_masks(masks, cfg.corruption, corrupt_rng)

    arch = scene.archetypes[cfg.archetype]
    p = plan(masks, depth, arch, cfg.finger_geometry, cfg.filtering)
    retained = sum(1 for c in p.candidates if not c.filtered) if cfg.filtering else len(
        p.candidates
    )
    if p.target is None:
        record = TrialRecord(
            attempt=attempt_idx,
            seed=seed,
            epoch=epoch,
            candidate_count=len(p.candidates),
            retained_count=retained,
            target_id=None,
            classification=Classification.FAILURE.value,
            picked=[],
            damaged=[],
            reason="no-target",
        )
        # a depleting campaign must not retry the same dead scene forever
        carry = None if cfg.refill_policy == DEPLETE else scene
        return record, carry, epoch

    outcome = execute_grasp(scene, p.target, cfg.finger_model(), cfg.execution)
    record = TrialRecord(
        attempt=attempt_idx,
        seed=seed,
        epoch=epoch,
        candidate_count=len(p.candidates),
        retained_count=retained,
        target_id=p.target.instance_id,
        classification=outcome.classification.value,
        picked=sorted(outcome.picked),
        damaged=sorted(outcome.damaged),
    )
    return record, scene, epoch


def summarize(records: list[TrialRecord]) -> SummaryStats:
    n = len(records)
    single = sum(r.classification == Classification.SUCCESS_SINGLE.value for r in records)
    multiple = sum(
        r.classification == Classification.SUCCESS_MULTIPLE.value for r in records
    )
    # Table-style damage counting: pieces, not events, deduplicated per epoch
    damaged = {(r.epoch, pid) for r in records for pid in r.damaged}
    return SummaryStats(
        n_attempts=n,
        success_single_rate=single / n,
        success_incl_multiple_rate=(single + multiple) / n,
        multi_pick_rate=multiple / n,
        damaged_piece_total=len(damaged),
        no_target_count=sum(r.reason == "no-target" for r in records),
    )


def run_experiment(cfg: ExperimentConfig) -> tuple[SummaryStats, list[TrialRecord]]:
    """Run a full campaign; optionally persist records (JSONL) and summary (CSV)."""
    cfg.validate()
    records: list[TrialRecord] = []
    scene: TrayScene | None = None
    epoch = 0
    for idx in range(cfg.n_attempts):
        record, scene, epoch = run_trial(cfg, idx, scene, epoch)
        records.append(record)
    summary = summarize(records)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_records(records, out / "records.jsonl")
        (out / "summary.csv").write_text(summary_csv([("campaign", cfg, summary)]))
    return summary, records


def write_records(records: list[TrialRecord], path: str | Path) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(r.to_json())
            f.write("\n")


def read_records(path: str | Path) -> list[TrialRecord]:
    records = []
    with open(path) as f:
        for line in f:
            if line.strip():
                records.append(TrialRecord(**json.loads(line)))
    return records


def summary_csv(rows: list[tuple[str, ExperimentConfig, SummaryStats]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        [
            "label",
            "archetype",
            "finger",
            "filtering",
            "n_attempts",
            "success_single_rate",
            "success_incl_multiple_rate",
            "multi_pick_rate",
            "damaged_piece_total",
            "no_target_count",
        ]
    )
    for label, cfg, s in rows:
        w.writerow(
            [
                label,
                cfg.archetype,
                cfg.finger.value,
                cfg.filtering,
                s.n_attempts,
                f"{s.success_single_rate:.4f}",
                f"{s.success_incl_multiple_rate:.4f}",
                f"{s.multi_pick_rate:.4f}",
                s.damaged_piece_total,
                s.no_target_count,
            ]
        )
    return buf.getvalue()


def compare_conditions(
    cfgs: list[ExperimentConfig],
) -> tuple[str, dict[tuple[str, bool], SummaryStats]]:
    """Run several campaigns over one archetype and tabulate a finger x
    filtering grid with per-finger filtering deltas. Returns (CSV, grid)."""
    if len(cfgs) < 2:
        raise ParameterError("compare_conditions needs >= 2 configs")
    archetypes = {c.archetype for c in cfgs}
    if len(archetypes) != 1:
        raise ParameterError(f"configs must share an archetype, got {sorted(archetypes)}")
    grid: dict[tuple[str, bool], SummaryStats] = {}
    rows = []
    for cfg in cfgs:
        summary, _ = run_experiment(cfg)
        key = (cfg.finger.value, cfg.filtering)
        grid[key] = summary
        rows.append((f"{cfg.finger.value}/{'filter' if cfg.filtering else 'nofilter'}", cfg, summary))
    csv_text = summary_csv(rows)
    delta_lines = []
    for finger in (FingerKind.ADAPTIVE.value, FingerKind.FIXED.value):
        on = grid.get((finger, True))
        off = grid.get((finger, False))
        if on and off:
            delta_lines.append(
                f"delta_{finger},success_single,{on.success_single_rate - off.success_single_rate:+.4f},"
                f"multi_pick,{on.multi_pick_rate - off.multi_pick_rate:+.4f},"
                f"damaged,{on.damaged_piece_total - off.damaged_piece_total:+d}"
            )
    if delta_lines:
        csv_text += "\n".join(delta_lines) + "\n"
    return csv_text, grid


def paired_success_pvalue(
    records_a: list[TrialRecord],
    records_b: list[TrialRecord],
    success=Classification.SUCCESS_SINGLE,
) -> float:
    """One-sided McNemar exact test that condition A succeeds more than B on
    paired attempts (same seeds). Small p favors A."""
    if len(records_a) != len(records_b):
        raise ParameterError("paired campaigns must have equal length")
    a_only = b_only = 0
    for ra, rb in zip(records_a, records_b):
        sa = ra.classification == success.value
        sb = rb.classification == success.value
        if sa and not sb:
            a_only += 1
        elif sb and not sa:
            b_only += 1
    n = a_only + b_only
    if n == 0:
        return 1.0
    return float(stats.binom.sf(a_only - 1, n, 0.5))
