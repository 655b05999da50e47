"""
命令行入口

子命令:
    run        运行实验矩阵（--check 执行验收检查）
    sweep      学习率 × 节点数扫描
    elastic    弹性链式运行
    report     从指标文件生成汇总
    calibrate  标定计时模型并输出吞吐对照表

退出码: 0 成功，1 配置错误，2 运行失败，3 验收检查未通过
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import ExperimentConfig, PlanConfig
from .errors import ConfigError, EditSimError
from .logger import configure_root_logger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edit-sim", description="EDiT / A-EDiT Local-SGD 模拟器")
    parser.add_argument("--quiet", action="store_true", help="控制台只输出 WARNING 及以上")
    parser.add_argument("--log-file", help="启用轮转日志文件")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("-c", "--config", required=config_required, help="实验配置 JSON")
        p.add_argument("--seed", type=int, help="覆盖种子列表")
        p.add_argument("--out", help="输出目录")
        p.add_argument("--protocol", help="覆盖协议")

    run = sub.add_parser("run", help="运行实验矩阵")
    common(run)
    run.add_argument("--check", action="store_true", help="执行验收检查")
    run.add_argument("--quick", action="store_true", help="缩短收敛界检验")

    common(sub.add_parser("sweep", help="学习率扫描"))
    common(sub.add_parser("elastic", help="弹性链式运行"))

    report = sub.add_parser("report", help="生成汇总报告")
    report.add_argument("paths", nargs="*", help="指标 JSONL 文件")
    report.add_argument("--out", default="report", help="输出目录")

    calib = sub.add_parser("calibrate", help="标定计时模型")
    common(calib, config_required=False)
    calib.add_argument("--rounds", type=int, default=6, help="每个场景的计时轮数")
    return parser


def load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, protocol=args.protocol, out=args.out)


def cmd_run(args: argparse.Namespace) -> int:
    from .harness import run_checks, run_experiment

    cfg = load(args)
    if args.check:
        report = run_checks(cfg, quick=args.quick)
        for r in report.results:
            print(f"{r.name:12s} {'PASS' if r.passed else 'FAIL'}  {r.detail}")
        return EXIT_OK if report.passed else EXIT_CHECK
    result = run_experiment(cfg)
    print(f"summary: {result.summary_path}")
    return EXIT_RUNTIME if result.failed else EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    from .harness import lr_sweep
    from .harness.report import write_sweep

    cfg = load(args)
    result = lr_sweep(cfg)
    path = write_sweep(result, Path(cfg.output.dir) / "sweep.csv")
    for protocol in result.losses:
        picks = ", ".join(f"K={k}: {result.argmin_lr(protocol, k):g}" for k in result.worker_counts)
        print(f"{protocol}: {picks}")
    print(f"sweep: {path}")
    return EXIT_OK


def cmd_elastic(args: argparse.Namespace) -> int:
    from .harness import compare_chains, elastic_chain

    cfg = load(args)
    result = elastic_chain(cfg)
    for n, phase in enumerate(result.phases):
        print(f"phase {n}: K={phase.workers} rounds={phase.rounds} loss={phase.final_loss:.6g}")
    if len(cfg.elastic.phases) > 1:
        comparison = compare_chains(cfg)
        for row in comparison.rows():
            print(f"{row['protocol']} {row['direction']}: loss={row['final_loss']:.6g}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    from .harness import report

    result = report(args.paths, args.out)
    print(f"summary: {result.summary_path} ({len(result.rows)} rows)")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    from .harness.report import write_throughput_table
    from .timing import (
        REFERENCE_THROUGHPUT,
        CostModel,
        LayerPlan,
        calibrate,
        normalize,
        reference_retention,
        reference_values,
        retention_table,
    )

    cfg = load(args)
    plan_cfg = cfg.timing.plan or PlanConfig()
    plan = LayerPlan.uniform(plan_cfg.layers, plan_cfg.params_per_layer, plan_cfg.M, plan_cfg.N, plan_cfg.batch_size)
    fitted = calibrate(CostModel.from_config(cfg.timing.cost), plan)
    print(
        f"step_time={fitted.step_time:.4g}s compute_time_per_param={fitted.cost.compute_time_per_param:.4g} "
        f"inter_beta={fitted.cost.inter_beta:.4g}"
    )
    out_dir = Path(cfg.output.dir)
    for kind in REFERENCE_THROUGHPUT:
        values = reference_values(kind)
        table = retention_table(
            fitted.cost,
            plan,
            kind,
            rounds=args.rounds,
            tau=cfg.protocol.sync.tau,
            tau_time=cfg.timing.policy.tau_time,
            seed=cfg.seeds[0],
        )
        key = "repeat" if kind == "limited_bandwidth" else "lag"
        write_throughput_table(out_dir / f"throughput_{kind}.csv", key, values, table)
        print(kind)
        for protocol, row in table.items():
            got = " ".join(f"{v:.3f}" for v in normalize(row))
            ref = " ".join(f"{v:.3f}" for v in reference_retention(kind, protocol))
            print(f"  {protocol:9s} model {got} | reference {ref}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "elastic": cmd_elastic,
    "report": cmd_report,
    "calibrate": cmd_calibrate,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_root_logger(level=logging.WARNING if args.quiet else logging.INFO, log_file=args.log_file)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        return EXIT_CONFIG
    except EditSimError as e:
        logger.error(f"运行失败: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"未预期的错误: {e}", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
