"""Command-line interface.

Subcommands: train, cotrain, attack, calibrate, experiment, gen-synthetic.
Exit codes: 0 on success, 2 on validation/configuration errors, 1 on
runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from . import attacks as _attacks
from .calibration import calibrate, fit_temperature, nll, reliability, reliability_rows
from .cotrain import cotrain, ensemble_predict
from .errors import ValidationError
from .experiment import (
    AttackSetting,
    ExperimentConfig,
    apply_attack,
    emit_report,
    run_experiment,
)
from .graph import generate_synthetic, split_nodes
from .io import load_graph_dir, save_dataset_dir
from .models import (
    ALL_KINDS,
    SubModelSpec,
    accuracy,
    build_submodel,
    predict_logits,
    train_submodel,
)
from .nn import TrainHyper, save_params_csv


def _hyper_from_args(args) -> TrainHyper:
    return TrainHyper(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        dropout=args.dropout,
        epochs=args.epochs,
        optimizer=args.optimizer,
    )


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-frac", type=float, default=0.1)
    p.add_argument("--val-frac", type=float, default=0.1)


def _spec(kind: str, k: int, hidden, hyper: TrainHyper) -> SubModelSpec:
    return SubModelSpec(
        kind=kind,
        hidden=tuple(hidden) if hidden else None,
        k=k,
        hyper=hyper,
    )


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_gen_synthetic(args) -> int:
    g = generate_synthetic(
        n=args.nodes,
        C=args.classes,
        p_in=args.p_in,
        p_out=args.p_out,
        m=args.feature_dim,
        feature_noise=args.feature_noise,
        seed=args.seed,
    )
    out = Path(args.out or "synthetic")
    save_dataset_dir(g, out)
    meta = {
        "n": g.n,
        "edges": g.num_edges,
        "classes": g.C,
        "feature_dim": g.m,
        "p_in": args.p_in,
        "p_out": args.p_out,
        "feature_noise": args.feature_noise,
        "seed": args.seed,
    }
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit(meta)
    return 0


def cmd_train(args) -> int:
    g = load_graph_dir(args.data)
    split = split_nodes(g, args.train_frac, args.val_frac, args.seed)
    spec = _spec(args.model, args.k, args.hidden, _hyper_from_args(args))
    model = train_submodel(
        build_submodel(spec, g),
        {int(i): int(g.labels[i]) for i in split.labeled},
        seed=args.seed,
    )
    metrics = {
        "model": args.model,
        "seed": args.seed,
        "train_accuracy": accuracy(model, split.labeled, g.labels[split.labeled]),
        "val_accuracy": accuracy(model, split.validation, g.labels[split.validation]),
        "test_accuracy": accuracy(model, split.test, g.labels[split.test]),
        "final_loss": model.loss_history[-1],
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_params_csv(model.params, out / "checkpoint.csv")
        with open(out / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _emit(metrics)
    return 0


def cmd_cotrain(args) -> int:
    g = load_graph_dir(args.data)
    split = split_nodes(g, args.train_frac, args.val_frac, args.seed)
    hyper = _hyper_from_args(args)
    spec_struct = _spec(args.struct, args.struct_k, None, hyper)
    spec_feat = _spec(args.feat, args.feat_k, None, hyper)
    f_struct, f_feat, state = cotrain(
        g,
        split,
        spec_struct,
        spec_feat,
        n_add=args.n_add,
        max_iters=args.max_iters,
        seed=args.seed,
        calibration=not args.no_calibration,
        class_balancing=not args.no_class_balancing,
    )
    pred, _ = ensemble_predict(f_struct, f_feat, split.test)
    metrics = {
        "struct": args.struct,
        "feat": args.feat,
        "iterations": state.iteration,
        "labeled_final": state.s_size,
        "acc_struct": state.history[-1].acc_struct,
        "acc_feat": state.history[-1].acc_feat,
        "acc_ensemble": float((pred == g.labels[split.test]).mean()),
        "temperature_struct": f_struct.temperature,
        "temperature_feat": f_feat.temperature,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "history.jsonl", "w", encoding="utf-8") as fh:
            for rec in state.history:
                fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
        save_params_csv(f_struct.params, out / "struct_checkpoint.csv")
        save_params_csv(f_feat.params, out / "feat_checkpoint.csv")
        with open(out / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _emit(metrics)
    return 0


def cmd_attack(args) -> int:
    g = load_graph_dir(args.data)
    setting = AttackSetting(
        name="cli",
        method=args.method,
        rate=args.rate,
        feature_ratio=args.feature_ratio,
        path=args.external_path,
    )
    perturbed = apply_attack(g, setting, args.seed, args.train_frac, args.val_frac)
    out = Path(args.out or "perturbed")
    save_dataset_dir(perturbed, out)
    plan = _attacks.PerturbationPlan(
        total_rate=args.rate,
        ratio=args.feature_ratio if args.method != "grad-feat" else 1.0,
        method=args.method if args.method != "none" else "random",
        seed=args.seed,
    )
    _attacks.write_sidecar(out / "perturbation.json", plan, g, perturbed)
    _emit(
        {
            "method": args.method,
            "rate": args.rate,
            "feature_ratio": args.feature_ratio,
            "edges_before": g.num_edges,
            "edges_after": perturbed.num_edges,
            "feature_bits_changed": int((g.X != perturbed.X).sum()),
            "out": str(out),
        }
    )
    return 0


def cmd_calibrate(args) -> int:
    g = load_graph_dir(args.data)
    split = split_nodes(g, args.train_frac, args.val_frac, args.seed)
    spec = _spec(args.model, args.k, None, _hyper_from_args(args))
    model = train_submodel(
        build_submodel(spec, g),
        {int(i): int(g.labels[i]) for i in split.labeled},
        seed=args.seed,
    )
    val_logits = predict_logits(model, split.validation)
    val_labels = g.labels[split.validation]
    T = fit_temperature(val_logits, val_labels)
    test_logits = predict_logits(model, split.test)
    test_labels = g.labels[split.test]
    before = reliability(calibrate(val_logits, 1.0), val_labels, args.bins)
    after = reliability(calibrate(val_logits, T), val_labels, args.bins)
    metrics = {
        "model": args.model,
        "temperature": T,
        "val_nll_before": nll(val_logits, val_labels, 1.0),
        "val_nll_after": nll(val_logits, val_labels, T),
        "val_ece_before": before.ece,
        "val_ece_after": after.ece,
        "test_accuracy": float(
            (test_logits.argmax(axis=1) == test_labels).mean()
        ),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "reliability.csv", "w", encoding="utf-8") as fh:
            fh.write("split,phase,bin_low,bin_high,count,confidence,accuracy\n")
            for split_name, logits, labels in (
                ("validation", val_logits, val_labels),
                ("test", test_logits, test_labels),
            ):
                for phase, temp in (("uncalibrated", 1.0), ("calibrated", T)):
                    bins = reliability(calibrate(logits, temp), labels, args.bins)
                    for row in reliability_rows(bins):
                        fh.write(
                            f"{split_name},{phase},{row[0]!r},{row[1]!r},{row[2]},{row[3]!r},{row[4]!r}\n"
                        )
    _emit(metrics)
    return 0


def cmd_experiment(args) -> int:
    if not args.config:
        raise ValidationError("experiment needs --config PATH")
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.seed_offset:
        overrides["seed_offset"] = args.seed_offset
    config = ExperimentConfig.from_json(args.config, overrides)
    report = run_experiment(config)
    paths = emit_report(report, config.out_dir)
    _emit({"out": [str(p) for p in paths], "summary": report.summary})
    return 0 if report.summary["complete"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cograph",
        description="Two-view co-training defense for node classification on graphs",
    )
    parser.add_argument("--config", help="JSON config file (experiment subcommand)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a planted-partition dataset directory")
    p.add_argument("--nodes", type=int, default=300)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--p-in", type=float, default=0.1)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--feature-dim", type=int, default=30)
    p.add_argument("--feature-noise", type=float, default=0.05)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a single sub-model and report accuracy")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=ALL_KINDS, required=True)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--hidden", type=int, nargs="*", default=None)
    _add_split_flags(p)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cotrain", help="run the two-view co-training loop")
    p.add_argument("--data", required=True)
    p.add_argument("--struct", choices=("gcn", "s-mlp"), default="gcn")
    p.add_argument("--feat", choices=("f-mlp", "knn-gcn"), default="f-mlp")
    p.add_argument("--struct-k", type=int, default=50)
    p.add_argument("--feat-k", type=int, default=50)
    p.add_argument("--n-add", type=int, default=250)
    p.add_argument("--max-iters", type=int, default=4)
    p.add_argument("--no-calibration", action="store_true")
    p.add_argument("--no-class-balancing", action="store_true")
    _add_split_flags(p)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_cotrain)

    p = sub.add_parser("attack", help="write a perturbed copy of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("random", "dice", "grad-feat", "external"), required=True)
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--feature-ratio", type=float, default=0.0)
    p.add_argument("--external-path", default=None)
    _add_split_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("calibrate", help="fit a temperature and report calibration stats")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=ALL_KINDS, default="gcn")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--bins", type=int, default=10)
    _add_split_flags(p)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("experiment", help="run a config-driven experiment sweep")
    p.add_argument("--seed-offset", type=int, default=0)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # noqa: BLE001 -- surface anything else as a runtime failure
        traceback.print_exc()
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
