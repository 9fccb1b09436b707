"""Configuration-driven experiment runner.

A single JSON config describes the dataset (on-disk or synthetic), the
sub-model pair, the seed list, and a list of attack settings. Every
(seed, setting) cell runs the full pipeline: perturb, split, co-train,
evaluate. Reports aggregate mean and sample standard deviation over seeds
and are byte-identical across reruns of the same config.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attacks import (
    dice_perturb,
    feature_flip_attack,
    load_perturbed_adjacency,
    mixed_budget,
    random_structure_perturb,
)
from .calibration import calibrate, reliability, reliability_rows
from .cotrain import cotrain
from .errors import ValidationError
from .graph import Graph, generate_synthetic, split_nodes
from .io import load_graph_dir
from .models import (
    KIND_FMLP,
    SubModelSpec,
    build_submodel,
    predict_logits,
    train_submodel,
)
from .nn import TrainHyper

_ATTACK_METHODS = ("none", "random", "dice", "grad-feat", "external")
_SEED_ROLE_ATTACK = 7
_SEED_ROLE_VICTIM = 8


@dataclass(frozen=True)
class AttackSetting:
    """One column of the evaluation sweep.

    method names the structural perturber; feature_ratio > 0 diverts that
    share of the budget to gradient-guided feature-bit flips (grad-feat is
    shorthand for feature_ratio = 1). external replaces the edge set with
    the file at path.
    """

    name: str
    method: str = "none"
    rate: float = 0.0
    feature_ratio: float = 0.0
    path: str | None = None

    def __post_init__(self):
        if self.method not in _ATTACK_METHODS:
            raise ValidationError(f"attack method must be one of {_ATTACK_METHODS}")
        if not 0.0 <= self.rate <= 1.0 or not 0.0 <= self.feature_ratio <= 1.0:
            raise ValidationError("attack rate and feature_ratio must lie in [0, 1]")
        if self.method == "external" and not self.path:
            raise ValidationError("external attack setting needs a path")


def _spec_from_dict(d: dict) -> SubModelSpec:
    d = dict(d)
    hyper = TrainHyper(**d.pop("hyper", {}))
    hidden = d.pop("hidden", None)
    return SubModelSpec(
        kind=d.pop("kind"),
        hidden=tuple(hidden) if hidden is not None else None,
        k=d.pop("k", 50),
        hyper=hyper,
        **d,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...]
    struct_model: SubModelSpec
    feat_model: SubModelSpec
    dataset_dir: str | None = None
    synthetic: dict | None = None
    train_frac: float = 0.1
    val_frac: float = 0.1
    n_add: int = 250
    max_iters: int = 4
    attacks: tuple[AttackSetting, ...] = (AttackSetting(name="clean"),)
    out_dir: str = "results"
    calibration: bool = True
    class_balancing: bool = True
    threads: int = 1
    reliability_bins: int = 10

    def __post_init__(self):
        if not self.seeds:
            raise ValidationError("config needs at least one seed")
        if (self.dataset_dir is None) == (self.synthetic is None):
            raise ValidationError("config needs exactly one of dataset_dir or synthetic")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        names = [a.name for a in self.attacks]
        if len(set(names)) != len(names):
            raise ValidationError("attack setting names must be unique")

    @classmethod
    def from_dict(cls, raw: dict, overrides: dict | None = None) -> "ExperimentConfig":
        raw = dict(raw)
        raw.update(overrides or {})
        attacks = tuple(
            AttackSetting(**a) for a in raw.pop("attacks", [{"name": "clean"}])
        )
        seed_offset = raw.pop("seed_offset", 0)
        return cls(
            seeds=tuple(int(s) + seed_offset for s in raw.pop("seeds")),
            struct_model=_spec_from_dict(raw.pop("struct_model")),
            feat_model=_spec_from_dict(raw.pop("feat_model")),
            attacks=attacks,
            **raw,
        )

    @classmethod
    def from_json(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), overrides)

    def to_json_dict(self) -> dict:
        out = {
            "seeds": list(self.seeds),
            "struct_model": _spec_to_dict(self.struct_model),
            "feat_model": _spec_to_dict(self.feat_model),
            "dataset_dir": self.dataset_dir,
            "synthetic": self.synthetic,
            "train_frac": self.train_frac,
            "val_frac": self.val_frac,
            "n_add": self.n_add,
            "max_iters": self.max_iters,
            "attacks": [asdict(a) for a in self.attacks],
            "out_dir": self.out_dir,
            "calibration": self.calibration,
            "class_balancing": self.class_balancing,
            "threads": self.threads,
            "reliability_bins": self.reliability_bins,
        }
        return out


def _spec_to_dict(spec: SubModelSpec) -> dict:
    return {
        "kind": spec.kind,
        "hidden": list(spec.hidden_dims),
        "k": spec.k,
        "hyper": asdict(spec.hyper),
    }


def load_base_graph(config: ExperimentConfig) -> Graph:
    if config.dataset_dir is not None:
        return load_graph_dir(config.dataset_dir)
    return generate_synthetic(**config.synthetic)


def _derived_seed(seed: int, role: int) -> int:
    return int(np.random.SeedSequence((seed, role)).generate_state(1)[0])


def apply_attack(
    g: Graph,
    setting: AttackSetting,
    seed: int,
    train_frac: float = 0.1,
    val_frac: float = 0.1,
    victim_hyper: TrainHyper | None = None,
) -> Graph:
    """Produce the poisoned graph for one cell.

    Budgets are computed against the clean edge count. The feature portion
    trains a fresh raw-feature victim on this cell's labeled split and
    flips bits that most increase its loss on the test nodes.
    """
    if setting.method == "none":
        return g
    if setting.method == "external":
        return load_perturbed_adjacency(g, setting.path)

    attack_seed = _derived_seed(seed, _SEED_ROLE_ATTACK)
    ratio = 1.0 if setting.method == "grad-feat" else setting.feature_ratio
    feature_bits, _ = mixed_budget(setting.rate, ratio, g.num_edges)
    structure_rate = (1.0 - ratio) * setting.rate

    perturbed = g
    if structure_rate > 0.0:
        if setting.method == "dice":
            perturbed = dice_perturb(perturbed, g.labels, structure_rate, attack_seed)
        else:
            perturbed = random_structure_perturb(perturbed, structure_rate, attack_seed)
    if feature_bits > 0:
        split = split_nodes(g, train_frac, val_frac, seed)
        victim_spec = SubModelSpec(kind=KIND_FMLP, hyper=victim_hyper or TrainHyper())
        victim = train_submodel(
            build_submodel(victim_spec, g),
            {int(i): int(g.labels[i]) for i in split.labeled},
            seed=_derived_seed(seed, _SEED_ROLE_VICTIM),
        )
        perturbed = feature_flip_attack(
            perturbed, victim, feature_bits, attack_seed, targets=split.test
        )
    return perturbed


@dataclass
class CellResult:
    setting: str
    seed: int
    history: list[dict] = field(default_factory=list)
    reliability: list[dict] = field(default_factory=list)
    temperature_struct: float = 1.0
    temperature_feat: float = 1.0
    error: str | None = None


def _run_cell(args) -> CellResult:
    g, setting, seed, config = args
    cell = CellResult(setting=setting.name, seed=seed)
    try:
        perturbed = apply_attack(
            g, setting, seed, config.train_frac, config.val_frac, config.struct_model.hyper
        )
        split = split_nodes(perturbed, config.train_frac, config.val_frac, seed)
        f_struct, f_feat, state = cotrain(
            perturbed,
            split,
            config.struct_model,
            config.feat_model,
            config.n_add,
            config.max_iters,
            seed,
            calibration=config.calibration,
            class_balancing=config.class_balancing,
        )
        cell.history = [rec.to_json() for rec in state.history]
        cell.temperature_struct = f_struct.temperature
        cell.temperature_feat = f_feat.temperature
        test_labels = perturbed.labels[split.test]
        for role, model in (("struct", f_struct), ("feat", f_feat)):
            logits = predict_logits(model, split.test)
            for phase, T in (("uncalibrated", 1.0), ("calibrated", model.temperature)):
                bins = reliability(calibrate(logits, T), test_labels, config.reliability_bins)
                for row in reliability_rows(bins):
                    cell.reliability.append(
                        {
                            "model": role,
                            "phase": phase,
                            "bin_low": row[0],
                            "bin_high": row[1],
                            "count": row[2],
                            "confidence": row[3],
                            "accuracy": row[4],
                        }
                    )
    except Exception as exc:  # noqa: BLE001 -- cell failures are data, not crashes
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


@dataclass
class Report:
    config: dict
    cells: list[CellResult]
    summary: dict


def _aggregate(config: ExperimentConfig, cells: list[CellResult]) -> dict:
    settings: dict[str, dict] = {}
    for setting in config.attacks:
        done = [c for c in cells if c.setting == setting.name and c.error is None]
        failed = [c for c in cells if c.setting == setting.name and c.error is not None]
        entry: dict = {
            "seeds_completed": len(done),
            "seeds_failed": len(failed),
            "complete": not failed,
        }
        if failed:
            entry["errors"] = sorted(c.error for c in failed)
        if done:
            for key in ("acc_ensemble", "acc_struct", "acc_feat"):
                finals = np.array([c.history[-1][key] for c in done])
                entry[f"final_{key}_mean"] = float(finals.mean())
                entry[f"final_{key}_std"] = float(finals.std(ddof=1)) if finals.size > 1 else 0.0
            starts = np.array([c.history[0]["acc_ensemble"] for c in done])
            entry["iter0_acc_ensemble_mean"] = float(starts.mean())
            entry["iterations"] = max(len(c.history) - 1 for c in done)
        settings[setting.name] = entry
    return {
        "settings": settings,
        "complete": all(c.error is None for c in cells),
        "cells": len(cells),
    }


def run_experiment(config: ExperimentConfig) -> Report:
    """Execute every (seed, attack-setting) cell and aggregate.

    Cells are independent; with threads > 1 they run in worker processes.
    Failures are captured per cell and aggregation proceeds over the
    completed ones, flagged by the completeness markers.
    """
    g = load_base_graph(config)
    tasks = [
        (g, setting, seed, config)
        for setting in config.attacks
        for seed in config.seeds
    ]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = [_run_cell(t) for t in tasks]

    order = {s.name: i for i, s in enumerate(config.attacks)}
    cells.sort(key=lambda c: (order[c.setting], c.seed))
    return Report(
        config=config.to_json_dict(),
        cells=cells,
        summary=_aggregate(config, cells),
    )


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ";".join(str(v) for v in value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def emit_report(report: Report, out_dir) -> list[Path]:
    """Write results.csv, summary.json, reliability.csv, confusion.csv.

    Column order is fixed and floats are emitted with repr, so identical
    configs produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    results_rows = []
    confusion_rows = []
    reliability_rows_out = []
    for cell in report.cells:
        if cell.error is not None:
            continue
        for rec in cell.history:
            results_rows.append(
                [
                    cell.setting,
                    cell.seed,
                    rec["iter"],
                    rec["S_size"],
                    rec["conflicts"],
                    rec["acc_struct"],
                    rec["acc_feat"],
                    rec["acc_ensemble"],
                    rec["added_per_class_struct"],
                    rec["added_per_class_feat"],
                    rec["shortfall_struct"],
                    rec["shortfall_feat"],
                ]
            )
            for true_c, row in enumerate(rec["confusion_matrix"]):
                for pred_c, count in enumerate(row):
                    confusion_rows.append(
                        [cell.setting, cell.seed, rec["iter"], true_c, pred_c, count]
                    )
        for row in cell.reliability:
            reliability_rows_out.append(
                [
                    cell.setting,
                    cell.seed,
                    row["model"],
                    row["phase"],
                    row["bin_low"],
                    row["bin_high"],
                    row["count"],
                    row["confidence"],
                    row["accuracy"],
                ]
            )

    results_path = out / "results.csv"
    _write_csv(
        results_path,
        [
            "setting",
            "seed",
            "iter",
            "S_size",
            "conflicts",
            "acc_struct",
            "acc_feat",
            "acc_ensemble",
            "added_per_class_struct",
            "added_per_class_feat",
            "shortfall_struct",
            "shortfall_feat",
        ],
        results_rows,
    )
    summary_path = out / "summary.json"
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {"config": report.config, "summary": report.summary},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    reliability_path = out / "reliability.csv"
    _write_csv(
        reliability_path,
        ["setting", "seed", "model", "phase", "bin_low", "bin_high", "count", "confidence", "accuracy"],
        reliability_rows_out,
    )
    confusion_path = out / "confusion.csv"
    _write_csv(
        confusion_path,
        ["setting", "seed", "iter", "true_class", "pred_class", "count"],
        confusion_rows,
    )
    return [results_path, summary_path, reliability_path, confusion_path]
