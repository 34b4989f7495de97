"""
命令行入口
子命令: simulate / attribute / learn / evaluate / bench
退出码: 0 成功, 2 输入校验错误, 3 IO 错误, 4 数值失败
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import ValidationError

from astrbot.api import logger

from ..common.errors import DivergenceError, InputValidationError, NumericalFailure
from ..config.config_manager import EffectiveConfig, build_config

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

DEFAULT_SENSITIVITY_GRID = tuple(round(0.05 * i, 2) for i in range(21))


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数: {text}") from e


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的数值: {text}") from e


def parse_sweep(text: str) -> tuple[str, list[float]]:
    """解析 axis=v1,v2,... 形式的扫描参数"""
    axis, sep, grid = text.partition("=")
    if not sep or not axis:
        raise argparse.ArgumentTypeError(f"扫描参数格式应为 axis=v1,v2,...: {text}")
    return axis.strip(), parse_float_list(grid)


def dump_report(path: Path | None, payload: dict[str, Any]) -> None:
    """写报告 JSON；未给出路径时输出到标准输出"""
    text = json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True)
    if path is None:
        print(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"报告已写出: {path}")


def write_csv(path: Path, rows: list[dict[str, Any]], config: dict[str, Any]) -> Path:
    """写扁平 CSV，首行为 # config: {...}"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    echo = json.dumps(config, ensure_ascii=False, sort_keys=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config: {echo}\n")
        pd.DataFrame(rows).to_csv(f, index=False, float_format="%.17g", lineterminator="\n")
    return path


def echo_config(effective: EffectiveConfig) -> None:
    print(f"生效配置: {json.dumps(effective.to_dict(), ensure_ascii=False, sort_keys=True)}", file=sys.stderr)


def model_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """从命令行参数中取出显式给出的分析参数"""
    mapping = {
        "p": "p",
        "q": "q",
        "window_ticks": "window_ticks",
        "window_start_tick": "window_start_tick",
        "tau_causal": "tau_causal",
        "alpha": "alpha",
        "metric_column": "metric_column",
        "bootstrap_resamples": "bootstrap_resamples",
        "seed": "seed",
        "jobs": "jobs",
        "lam": "lam",
        "max_iters": "max_iters",
    }
    overrides = {key: getattr(args, attr) for key, attr in mapping.items() if getattr(args, attr, None) is not None}
    if getattr(args, "bh_step_up", False):
        overrides["bh_step_up"] = True
    if getattr(args, "no_conditioning", False):
        overrides["condition_on_resources"] = False
    return overrides


def cmd_simulate(args: argparse.Namespace) -> int:
    from ..simulator.generator import batch_generate, generate
    from ..simulator.presets import default_template, load_preset
    from ..simulator.scenario_spec import ScenarioSpec
    from ..simulator.scenario_store import write_scenario

    seed = args.seed
    if args.preset and args.spec:
        raise InputValidationError("--preset 与 --spec 只能给出一个")
    if args.spec:
        spec = ScenarioSpec.from_file(Path(args.spec))
        if seed is not None:
            spec = ScenarioSpec.from_data({**spec.model_dump(), "seed": seed}, str(args.spec))
    elif args.preset:
        spec = load_preset(args.preset, seed)
    else:
        spec = default_template()
        if seed is not None:
            spec = ScenarioSpec.from_data({**spec.model_dump(), "seed": seed}, "default_template")

    if args.count is not None:
        if spec.template is None:
            raise InputValidationError(f"批量生成需要带 template 字段的场景描述: {spec.name}")
        batch_generate(spec, args.count, spec.seed, out_dir=Path(args.output), jobs=args.jobs or 1)
    else:
        write_scenario(Path(args.output), generate(spec))
    print(f"场景已写出: {args.output}（种子 {spec.seed}）")
    return EXIT_OK


def cmd_attribute(args: argparse.Namespace) -> int:
    from ..workflow.attribution_flow import run_attribution

    baselines = (args.compare_baseline,) if args.compare_baseline else ()
    outcome = run_attribution(
        Path(args.scenario),
        config_file=Path(args.config) if args.config else None,
        overrides=model_overrides(args),
        theta_path=Path(args.theta) if args.theta else None,
        baselines=baselines,
    )
    echo_config(outcome.config)
    report = outcome.to_dict()
    dump_report(Path(args.output) if args.output else None, report)

    if args.render:
        from ..render.report_renderer import AttributionRenderer

        renderer = AttributionRenderer()
        image = renderer.render_attribution(
            outcome.result, title=outcome.scenario.directory.name, events=outcome.scenario.truth.get("events")
        )
        renderer.save(image, Path(args.render))
    if args.history_db:
        from ..db import CommonDatabase, RunDBOperations

        ops = RunDBOperations(CommonDatabase(Path(args.history_db)))
        report.pop("pairs", None)
        ops.record_run(
            "attribute",
            outcome.scenario.directory.name,
            outcome.config.model.seed,
            len(outcome.result.graph.edges),
            outcome.path_text(),
            outcome.result.path.path_score,
            report,
        )
    if outcome.result.path.empty:
        print("未检测到攻击路径", file=sys.stderr)
    return EXIT_OK


def _training_log_path(theta_path: Path, log: str | None) -> Path:
    return Path(log) if log else theta_path.with_name(f"{theta_path.stem}_training_log.csv")


def cmd_learn(args: argparse.Namespace) -> int:
    from ..learning.likelihood import sample_planted_labels
    from ..learning.theta import ThetaParams
    from ..learning.trainer import train
    from ..simulator.scenario_store import load_corpus

    effective = build_config(config_file=Path(args.config) if args.config else None, overrides=model_overrides(args))
    echo_config(effective)
    config = effective.model
    corpus = load_corpus(Path(args.corpus), config)
    if args.planted:
        planted = ThetaParams.load(Path(args.planted))
        corpus = sample_planted_labels(corpus, planted, config.seed)

    theta_path = Path(args.output)
    log_path = _training_log_path(theta_path, args.log)
    echo = effective.to_dict()
    extra = {"lambda": effective.lam, "seed": config.seed}
    try:
        report = train(corpus, lam=effective.lam, max_iters=effective.max_iters, seed=config.seed)
    except DivergenceError as e:
        if e.last_theta is not None:
            e.last_theta.save(theta_path, {**extra, "diverged": True})
        write_csv(log_path, e.history, echo)
        raise
    report.theta.save(theta_path, {**extra, "converged": report.converged, "log_likelihood": report.log_likelihood})
    write_csv(log_path, report.history, echo)
    if args.history_db:
        from ..db import CommonDatabase, RunDBOperations

        ops = RunDBOperations(CommonDatabase(Path(args.history_db)))
        run_id = ops.record_run("learn", str(args.corpus), config.seed, 0, "", 0.0, report.to_dict())
        ops.record_training(run_id, report.history)
    print(f"θ 已写出: {theta_path}（迭代 {report.iterations} 次, 收敛={report.converged}）")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    from ..evaluation.ablation import ablation_run
    from ..evaluation.evaluator import cross_validate, evaluate_corpus
    from ..evaluation.sweeps import robustness_sweep
    from ..learning.trainer import sensitivity_sweep
    from ..simulator.presets import default_template
    from ..simulator.scenario_spec import ScenarioSpec
    from ..simulator.scenario_store import load_corpus
    from ..workflow.attribution_flow import load_theta

    effective = build_config(config_file=Path(args.config) if args.config else None, overrides=model_overrides(args))
    theta = load_theta(Path(args.theta)) if args.theta else None
    if theta is not None:
        effective.model = replace(effective.model, theta=theta)
    echo_config(effective)
    config = effective.model
    echo = effective.to_dict()
    out_dir = Path(args.output)
    plot_dir = Path(args.plot_data) if args.plot_data else None
    payload: dict[str, Any] = {"config": echo, "seed": config.seed}

    if args.sweep:
        axis, grid = args.sweep
        template = ScenarioSpec.from_file(Path(args.template)) if args.template else default_template()
        table = robustness_sweep(template, axis, grid, config, count=args.count, seed=config.seed)
        payload["sweep"] = {**table.to_dict(), "trend": table.trend()}
        write_csv(out_dir / f"sweep_{axis}.csv", table.summary_rows(), echo)
        if plot_dir is not None:
            write_csv(plot_dir / f"robustness_{axis}.csv", table.summary_rows(), echo)

    if args.corpus:
        corpus = load_corpus(Path(args.corpus), config)
        if args.folds:
            payload["cross_validation"] = cross_validate(
                corpus, config, folds=args.folds, lam=effective.lam, max_iters=effective.max_iters, seed=config.seed
            )
        else:
            payload["report"] = evaluate_corpus(corpus, config).to_dict()
        if args.ablation:
            table = ablation_run(corpus, config, learned_theta=theta, lam=effective.lam, max_iters=effective.max_iters)
            payload["ablation"] = table.to_dict()
            write_csv(out_dir / "ablation.csv", table.rows(), echo)
        if args.sensitivity is not None:
            grid = args.sensitivity or list(DEFAULT_SENSITIVITY_GRID)
            series = sensitivity_sweep(corpus, grid, theta)
            rows = [{"omega1": w, "accuracy": acc} for w, acc in series]
            payload["sensitivity"] = rows
            write_csv(out_dir / "sensitivity.csv", rows, echo)
            if plot_dir is not None:
                write_csv(plot_dir / "sensitivity_omega1.csv", rows, echo)
    elif args.ablation or args.folds or args.sensitivity is not None:
        raise InputValidationError("--ablation / --folds / --sensitivity 需要给出语料清单")

    if len(payload) == 2:
        raise InputValidationError("evaluate 至少需要语料清单或 --sweep")
    dump_report(out_dir / "evaluation.json", payload)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    from ..evaluation.benchmark import bench_latency, bench_window_grid
    from ..simulator.scenario_spec import ScenarioSpec

    effective = build_config(config_file=Path(args.config) if args.config else None, overrides=model_overrides(args))
    echo_config(effective)
    config = effective.model
    echo = effective.to_dict()
    template = ScenarioSpec.from_file(Path(args.template)) if args.template else None
    out_dir = Path(args.output)

    table = bench_latency(args.n, config, repeats=args.repeats, seed=config.seed, template=template)
    payload: dict[str, Any] = {"config": echo, "seed": config.seed, "scaling": table.to_dict()}
    write_csv(out_dir / "scaling.csv", table.rows, echo)
    if args.window_grid:
        window_table = bench_window_grid(
            args.window_grid, config, n_slices=args.window_n, repeats=args.repeats, seed=config.seed, template=template
        )
        rows = window_table.rows
        ratios = [b["pairwise_mean_ms"] / a["pairwise_mean_ms"] for a, b in zip(rows, rows[1:]) if a["pairwise_mean_ms"] > 0]
        payload["window_scaling"] = {**window_table.to_dict(), "ratios": ratios}
        write_csv(out_dir / "window_scaling.csv", rows, echo)
    if args.plot_data:
        write_csv(Path(args.plot_data) / "scaling_n.csv", table.rows, echo)
    dump_report(out_dir / "bench.json", payload)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON 配置文件")
    parser.add_argument("--seed", type=int, help="运行种子")
    parser.add_argument("--jobs", type=int, help="并行线程数上限")


def _add_model(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("分析参数（覆盖配置文件）")
    group.add_argument("--p", type=int, help="目标自回归阶数")
    group.add_argument("--q", type=int, help="源切片滞后阶数")
    group.add_argument("--window-ticks", dest="window_ticks", type=int, help="窗口长度 W")
    group.add_argument(
        "--window-start", dest="window_start_tick", type=int, help="分析窗口的起始 tick，缺省取前 W 个 tick"
    )
    group.add_argument("--tau-causal", dest="tau_causal", type=float, help="边强度阈值")
    group.add_argument("--alpha", type=float, help="显著性水平")
    group.add_argument("--metric-column", dest="metric_column", help="作为切片信号的指标列")
    group.add_argument("--bootstrap", dest="bootstrap_resamples", type=int, help="逐跳区间的自助重采样次数")
    group.add_argument("--bh-step-up", dest="bh_step_up", action="store_true", help="BH 校正启用累计最小值")
    group.add_argument("--no-conditioning", dest="no_conditioning", action="store_true", help="回归中不加资源条件项")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m src.cli", description="跨切片攻击溯源命令行工具")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="生成合成场景或语料")
    simulate.add_argument("--preset", help="预置场景: case-study / default-template")
    simulate.add_argument("--spec", help="JSON 场景描述文件")
    simulate.add_argument("--count", type=int, help="按模板批量生成的场景数")
    simulate.add_argument("-o", "--output", required=True, help="输出目录")
    _add_common(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    attribute = sub.add_parser("attribute", help="对场景目录执行溯源")
    attribute.add_argument("scenario", help="场景目录")
    attribute.add_argument("--theta", help="θ 文件，缺失时使用缺省参数")
    attribute.add_argument("--compare-baseline", dest="compare_baseline", choices=["correlation"], help="附加基线")
    attribute.add_argument("--render", help="渲染结果图片的输出路径（PNG）")
    attribute.add_argument("--history-db", dest="history_db", help="记录运行摘要的 sqlite 文件")
    attribute.add_argument("-o", "--output", help="报告 JSON 路径，缺省输出到标准输出")
    _add_common(attribute)
    _add_model(attribute)
    attribute.set_defaults(handler=cmd_attribute)

    learn = sub.add_parser("learn", help="在语料上学习 θ")
    learn.add_argument("corpus", help="语料清单 corpus.json 或其所在目录")
    learn.add_argument("--lambda", dest="lam", type=float, help="L2 正则系数，缺省 1e-3")
    learn.add_argument("--max-iters", dest="max_iters", type=int, help="最大迭代次数")
    learn.add_argument("--planted", help="按此 θ 文件重新抽取真实边集（参数找回验证）")
    learn.add_argument("--log", help="训练日志 CSV 路径")
    learn.add_argument("--history-db", dest="history_db", help="记录训练过程的 sqlite 文件")
    learn.add_argument("-o", "--output", required=True, help="θ 输出文件")
    _add_common(learn)
    _add_model(learn)
    learn.set_defaults(handler=cmd_learn)

    evaluate = sub.add_parser("evaluate", help="评估、消融与扫描")
    evaluate.add_argument("corpus", nargs="?", help="语料清单 corpus.json 或其所在目录")
    evaluate.add_argument("--theta", help="θ 文件")
    evaluate.add_argument("--folds", type=int, help="K 折交叉验证")
    evaluate.add_argument("--ablation", action="store_true", help="输出四变体消融表")
    evaluate.add_argument("--sweep", type=parse_sweep, help="鲁棒性扫描 axis=v1,v2,...")
    evaluate.add_argument("--template", help="扫描所用的模板场景文件")
    evaluate.add_argument("--count", type=int, default=20, help="扫描每个网格点的场景数")
    evaluate.add_argument(
        "--sensitivity", nargs="?", const=[], type=parse_float_list, help="ω_1 敏感性扫描，可给出网格"
    )
    evaluate.add_argument("--lambda", dest="lam", type=float, help="学习时的 L2 正则系数")
    evaluate.add_argument("--max-iters", dest="max_iters", type=int, help="学习时的最大迭代次数")
    evaluate.add_argument("--plot-data", dest="plot_data", help="绘图数据输出目录")
    evaluate.add_argument("-o", "--output", required=True, help="输出目录")
    _add_common(evaluate)
    _add_model(evaluate)
    evaluate.set_defaults(handler=cmd_evaluate)

    bench = sub.add_parser("bench", help="延迟与规模基准")
    bench.add_argument("--n", type=parse_int_list, default=[8, 16, 32], help="切片数网格，如 8,16,32")
    bench.add_argument("--repeats", type=int, default=10, help="每个网格点的重复次数（≥ 5）")
    bench.add_argument("--window-grid", dest="window_grid", type=parse_int_list, help="窗口长度网格")
    bench.add_argument("--window-n", dest="window_n", type=int, default=15, help="窗口扫描时的切片数")
    bench.add_argument("--template", help="模板场景文件")
    bench.add_argument("--plot-data", dest="plot_data", help="绘图数据输出目录")
    bench.add_argument("-o", "--output", required=True, help="输出目录")
    _add_common(bench)
    _add_model(bench)
    bench.set_defaults(handler=cmd_bench)
    return parser


def parse_arguments(argv: list[str] | None = None) -> argparse.Namespace:
    """
    解析命令行参数

    Returns:
        argparse.Namespace: 包含解析后参数的命名空间
    """
    return build_parser().parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    """执行子命令并把异常映射为退出码"""
    try:
        args = parse_arguments(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code not in (0, None) else EXIT_OK
    try:
        return args.handler(args)
    except (InputValidationError, ValidationError, json.JSONDecodeError) as e:
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_IO
    except NumericalFailure as e:
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
