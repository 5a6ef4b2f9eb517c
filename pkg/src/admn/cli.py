"""Command-line workflows: generate, pretrain, finetune, train-controller,
eval, report.

Exit codes: 0 success, 2 config error, 3 missing dependency artifact,
4 invariant violation. Every command is idempotent given the same config
and seed. ``ADMN_THREADS`` caps eval worker fan-out (default 1).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .budget import FlopsReport, write_flops_csv
from .config import MODE_BY_PROVIDER, PROVIDER_LABELS, RunConfig
from .controller import ControllerNet, baseline_provider, controller_macs, \
    controller_provider, dump_latents, train_controller, write_plan_log
from .data import load_dataset, make_dataset, save_dataset
from .errors import ArtifactError, BudgetError, ConfigError, ContractError
from .model import MultimodalNet, evaluate, load_backbone_weights, load_net, \
    plan_model_macs, save_net, train_mae, train_stage1
from .layerdrop import LayerMask
from .rng import RngState, derive_seed
from .tensor_io import load_checkpoint, save_checkpoint


def _write_curve(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _require_dataset(cfg: RunConfig):
    if not (cfg.data_dir / "manifest.txt").exists():
        raise ArtifactError(f"no dataset at {cfg.data_dir}; run `admn generate` first")
    return load_dataset(cfg.data_dir)


# -- commands -----------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = RunConfig.from_file(args.config)
    out = Path(args.out) if args.out else cfg.data_dir
    dataset = make_dataset(cfg.corruption, cfg.data_n, cfg.data_seed,
                           cfg.split_ratios, task=cfg.task)
    save_dataset(dataset, out)
    sizes = {name: len(split) for name, split in dataset.splits.items()}
    print(f"dataset written to {out} (splits: {sizes})")
    return 0


def cmd_pretrain(args) -> int:
    cfg = RunConfig.from_file(args.config)
    dataset = _require_dataset(cfg)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    train = dataset.splits["train"]
    for m, mod in enumerate(cfg.model.modalities):
        trainer, losses = train_mae(
            mod, train.inputs[m], steps=cfg.pretrain_steps, lr=cfg.pretrain_lr,
            seed=derive_seed(seed, 100 + m), layer_rate=cfg.drop.layer_rate,
            mask_ratio=cfg.mask_ratio,
        )
        out = cfg.stage0_dir(mod.name, seed)
        save_checkpoint(out, trainer.named_params())
        _write_curve(out / "loss_curve.csv", ["step", "loss"],
                     list(enumerate(losses)))
        print(f"{mod.name}: reconstruction loss {losses[0]:.4f} -> {losses[-1]:.4f} "
              f"({out})")
    return 0


def cmd_finetune(args) -> int:
    cfg = RunConfig.from_file(args.config)
    dataset = _require_dataset(cfg)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    net = MultimodalNet(cfg.model, RngState(derive_seed(seed, 200)))
    if cfg.use_pretrained:
        for m, mod in enumerate(cfg.model.modalities):
            stage0 = cfg.stage0_dir(mod.name, seed)
            if (stage0 / "manifest.txt").exists():
                arrays = load_checkpoint(stage0)
                load_backbone_weights(net, m, arrays)
    resume_arrays = None
    if cfg.finetune_resume:
        resume_dir = Path(cfg.finetune_resume)
        if not (resume_dir / "manifest.txt").exists():
            raise ArtifactError(f"resume checkpoint missing: {resume_dir}")
        resume_arrays = load_checkpoint(resume_dir)
    out = cfg.stage1_dir(seed)
    result = train_stage1(
        net, dataset, epochs=cfg.finetune_epochs, lr=cfg.finetune_lr,
        cfg=cfg.drop, seed=seed, batch_size=cfg.finetune_batch,
        lr_schedule=cfg.finetune_schedule, resume_arrays=resume_arrays,
        checkpoint_dir=out / "state" if cfg.finetune_checkpoint_every else None,
        checkpoint_every=cfg.finetune_checkpoint_every,
    )
    save_net(net, out)
    _write_curve(out / "loss_curve.csv", ["epoch", "train_loss", "val_metric"],
                 [(e, l, v) for e, (l, v) in
                  enumerate(zip(result.train_losses, result.val_metrics))])
    print(f"stage1 seed {seed}: train loss {result.train_losses[-1]:.4f}, "
          f"val metric {result.val_metrics[-1]:.4f} ({out})")
    return 0


def _load_stage1(cfg: RunConfig, seed: int) -> MultimodalNet:
    stage1 = cfg.stage1_dir(seed)
    if not (stage1 / "manifest.txt").exists():
        raise ArtifactError(f"stage-1 checkpoint missing: {stage1}; "
                            "run `admn finetune` first")
    return load_net(cfg.model, stage1)


def cmd_train_controller(args) -> int:
    cfg = RunConfig.from_file(args.config)
    dataset = _require_dataset(cfg)
    budgets = [args.budget] if args.budget is not None else cfg.budgets
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    mode = args.mode or cfg.controller_mode
    for seed in seeds:
        net = _load_stage1(cfg, seed)
        for budget in budgets:
            ctrl = ControllerNet(cfg.model, cfg.controller,
                                 RngState(derive_seed(seed, 300 + budget)))
            result = train_controller(
                ctrl, net, dataset, cfg.budget_spec(budget), mode,
                epochs=cfg.controller_epochs, lr=cfg.controller_lr, seed=seed,
                batch_size=cfg.controller_batch, ae_steps=cfg.ae_steps,
                ae_lr=cfg.ae_lr,
            )
            out = cfg.controller_dir(mode, budget, seed)
            save_checkpoint(out, ctrl.named_params())
            rows = [(e, d.get("task", ""), d.get("corruption", ""), d["total"])
                    for e, d in enumerate(result.epoch_losses)]
            _write_curve(out / "loss_curve.csv",
                         ["epoch", "task", "corruption", "total"], rows)
            if result.ae_losses:
                _write_curve(out / "ae_curve.csv", ["step", "loss"],
                             list(enumerate(result.ae_losses)))
            final = result.epoch_losses[-1]["total"]
            print(f"controller {mode} budget {budget} seed {seed}: "
                  f"final loss {final:.4f} ({out})")
    return 0


def _load_controller(cfg: RunConfig, mode: str, budget: int, seed: int) -> ControllerNet:
    path = cfg.controller_dir(mode, budget, seed)
    if not (path / "manifest.txt").exists():
        raise ArtifactError(f"controller checkpoint missing: {path}; "
                            "run `admn train-controller` first")
    ctrl = ControllerNet(cfg.model, cfg.controller, RngState(0))
    arrays = load_checkpoint(path)
    for name, tensor in ctrl.named_params().items():
        if name not in arrays:
            raise ContractError(f"controller checkpoint missing tensor {name}")
        tensor.data = arrays[name].copy()
    return ctrl


def _provider_for(cfg: RunConfig, name: str, budget: int, seed: int, net):
    """(provider, controller_macs) or raises BudgetError when infeasible."""
    spec = cfg.budget_spec(budget)
    if name in MODE_BY_PROVIDER:
        ctrl = _load_controller(cfg, MODE_BY_PROVIDER[name], budget, seed)
        return controller_provider(ctrl, spec), controller_macs(ctrl)
    if name == "naive":
        return baseline_provider("naive", cfg.model, budget, costs=cfg.costs), 0
    if name == "upper_bound":
        return baseline_provider("upper_bound", cfg.model, budget), 0
    if name.startswith("unimodal"):
        m = int(name[len("unimodal"):])
        return baseline_provider("unimodal", cfg.model, budget, costs=cfg.costs,
                                 unimodal_index=m), 0
    raise ConfigError(f"unknown provider {name!r}")


def eval_cell(config_path: str, budget: int, seed: int) -> dict:
    """Evaluate every configured provider for one (budget, seed) cell."""
    cfg = RunConfig.from_file(config_path)
    dataset = _require_dataset(cfg)
    test = dataset.splits["test"]
    net = _load_stage1(cfg, seed)
    out = {}
    for name in cfg.providers:
        try:
            provider, ctrl_macs = _provider_for(cfg, name, budget, seed, net)
        except BudgetError:
            out[name] = None          # infeasible at this budget -> dash
            continue
        report = evaluate(net, test, provider)
        cfg.eval_dir.mkdir(parents=True, exist_ok=True)
        write_plan_log(cfg.eval_dir / f"plans_{name}_b{budget}_seed{seed}.log",
                       report, budget)
        out[name] = {
            "metric": report.metric,
            "model_macs": report.predicted_macs / len(test),
            "controller_macs": ctrl_macs,
            "executed_macs": report.executed_macs,
            "predicted_macs": report.predicted_macs,
        }
    return out


def _rank_providers(cells: dict, budget: int, providers, higher_better: bool):
    scored = [(name, cells[(name, budget)]) for name in providers
              if cells.get((name, budget)) is not None]
    order = sorted(scored, key=lambda kv: kv[1]["mean"],
                   reverse=higher_better)
    return {name: rank + 1 for rank, (name, _) in enumerate(order)}


def cmd_eval(args) -> int:
    cfg = RunConfig.from_file(args.config)
    _require_dataset(cfg)
    budgets = [args.budget] if args.budget is not None else cfg.budgets
    threads = int(os.environ.get("ADMN_THREADS", "1"))
    jobs = [(budget, seed) for budget in budgets for seed in cfg.seeds]
    results = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {
                (budget, seed): pool.submit(eval_cell, str(args.config), budget, seed)
                for budget, seed in jobs
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for budget, seed in jobs:
            results[(budget, seed)] = eval_cell(str(args.config), budget, seed)

    # aggregate over seeds
    cells = {}
    for name in cfg.providers:
        for budget in budgets:
            metrics, flops, ctrl_flops = [], [], []
            feasible = True
            for seed in cfg.seeds:
                cell = results[(budget, seed)].get(name)
                if cell is None:
                    feasible = False
                    break
                metrics.append(cell["metric"])
                flops.append(cell["model_macs"] + cell["controller_macs"])
                ctrl_flops.append(cell["controller_macs"])
            if not feasible:
                cells[(name, budget)] = None
                continue
            cells[(name, budget)] = {
                "mean": float(np.mean(metrics)),
                "std": float(np.std(metrics)),
                "mean_flops": float(np.mean(flops)),
                "controller_flops": float(np.mean(ctrl_flops)),
            }

    higher_better = cfg.task == "classify"
    ranks = {budget: _rank_providers(cells, budget, cfg.providers, higher_better)
             for budget in budgets}

    cfg.eval_dir.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.eval_dir / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["provider", "budget", "mean", "std", "rank", "n_seeds",
                         "mean_flops", "controller_flops", "controller_share"])
        for name in cfg.providers:
            for budget in budgets:
                cell = cells[(name, budget)]
                if cell is None:
                    writer.writerow([PROVIDER_LABELS[name], budget] + ["—"] * 7)
                    continue
                share = (cell["controller_flops"] / cell["mean_flops"]
                         if cell["mean_flops"] else 0.0)
                writer.writerow([
                    PROVIDER_LABELS[name], budget,
                    repr(cell["mean"]), repr(cell["std"]),
                    ranks[budget].get(name, ""), len(cfg.seeds),
                    repr(cell["mean_flops"]), repr(cell["controller_flops"]),
                    repr(share),
                ])

    # aligned text table
    lines = []
    width = max(len(PROVIDER_LABELS[p]) for p in cfg.providers) + 2
    header = "provider".ljust(width) + "".join(
        f"L={b}".ljust(22) for b in budgets)
    lines.append(header)
    for name in cfg.providers:
        row = PROVIDER_LABELS[name].ljust(width)
        for budget in budgets:
            cell = cells[(name, budget)]
            if cell is None:
                row += "—".ljust(22)
            else:
                row += (f"{cell['mean']:.4f}±{cell['std']:.4f}"
                        f" ({ranks[budget][name]})").ljust(22)
        lines.append(row)
    table = "\n".join(lines)
    (cfg.eval_dir / "results.txt").write_text(table + "\n")
    print(table)
    print(f"\nwritten: {csv_path}")
    return 0


def cmd_report(args) -> int:
    cfg = RunConfig.from_file(args.config)
    csv_path = cfg.eval_dir / "results.csv"
    if not csv_path.exists():
        raise ArtifactError(f"no eval results at {csv_path}; run `admn eval` first")
    rows = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["mean"] == "—":
                continue
            report = FlopsReport(
                backbone_macs=float(row["mean_flops"]) - float(row["controller_flops"]),
                fusion_macs=0.0, head_macs=0.0,
                controller_macs=float(row["controller_flops"]),
            )
            rows.append((int(row["budget"]), row["provider"], report,
                         float(row["mean"])))
    out = cfg.eval_dir / "flops_report.csv"
    write_flops_csv(out, rows)
    print(f"FLOPs report written to {out}")
    if args.timing:
        dataset = _require_dataset(cfg)
        net = _load_stage1(cfg, cfg.seeds[0])
        test = dataset.splits["test"]
        provider = baseline_provider("upper_bound", cfg.model, cfg.budgets[0])
        t0 = time.perf_counter()
        evaluate(net, test, provider)
        dt = time.perf_counter() - t0
        print(f"informational timing: full-depth eval of {len(test)} samples "
              f"took {dt:.2f}s on this machine")
    return 0


# -- entry point ----------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="admn",
        description="Adaptive-depth multimodal training and evaluation workflows",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "generate": cmd_generate,
        "pretrain": cmd_pretrain,
        "finetune": cmd_finetune,
        "train-controller": cmd_train_controller,
        "eval": cmd_eval,
        "report": cmd_report,
    }
    for name, fn in specs.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--mode", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        if name == "report":
            p.add_argument("--timing", action="store_true")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except ContractError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
