#!/usr/bin/env python3
"""命令行入口：classify / solve / oracle / fixture"""
import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from config import GRID_STEPS, ORACLE_LADDER, OUTPUT_DIR, Tolerances
from integrate import integrate_p1, integrate_regular_riccati
from linalg import NoSolution, as_matrix, sym
from model import FIXTURES, LQProblem, dump_problem, fixture, load_problem, require_valid
from oracle import ComparisonReport, compare, discretize, solve_discrete
from reduce import classify, reduce
from sim import audit_fbde, export_csv, simulate, value_at
from synth import (check_solvability, closed_loop_nonsingular, closed_loop_singular, open_loop,
                   select_p1_terminal, solve_regular)
from utils import (ConditioningError, InputError, NumericalError, ensure_dirs, fmt, logger, read_json,
                   write_atomic_json, write_atomic_text)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNSOLVABLE = 3
EXIT_NUMERICAL = 4

MODES = ("open", "closed", "auto")


@dataclass
class SolveReport:
    name: str
    classification: str
    m0: int
    solvable: str  # regular / solvable / unsolvable
    open_loop_solvable: Optional[bool] = None
    controller: Optional[str] = None
    path: Optional[str] = None
    attempts: List[str] = field(default_factory=list)
    cost: Optional[float] = None
    value: Optional[float] = None
    gamma1_max: Optional[float] = None
    terminal_violation: Optional[float] = None
    p1_terminal: Optional[list] = None
    residuals: dict = field(default_factory=dict)
    comparison: Optional[ComparisonReport] = None
    tolerances: dict = field(default_factory=dict)

    @property
    def oracle(self) -> Optional[dict]:
        return self.comparison.as_dict() if self.comparison is not None else None

    @property
    def summary(self) -> str:
        parts = [self.classification]
        if self.solvable != "regular":
            parts.append(self.solvable)
        if self.open_loop_solvable is not None:
            parts.append("open-loop solvable" if self.open_loop_solvable else "not open-loop solvable")
        return ", ".join(parts)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.controller else EXIT_UNSOLVABLE

    def to_dict(self) -> dict:
        return {
            "name": self.name, "summary": self.summary, "classification": self.classification, "m0": self.m0,
            "solvable": self.solvable, "open_loop_solvable": self.open_loop_solvable,
            "controller": self.controller, "path": self.path, "attempts": self.attempts,
            "cost": self.cost, "value": self.value, "gamma1_max": self.gamma1_max,
            "terminal_violation": self.terminal_violation, "p1_terminal": self.p1_terminal,
            "residuals": self.residuals, "oracle": self.oracle, "tolerances": self.tolerances,
        }

    def to_text(self) -> str:
        def num(x):
            return "n/a" if x is None else fmt(x)

        lines = [
            f"问题: {self.name}",
            f"结论: {self.summary}",
            f"分类: {self.classification}  m0={self.m0}",
            f"控制器: {self.controller or 'none'} ({self.path or '-'})",
            f"尝试路径: {', '.join(self.attempts) or '-'}",
            f"代价 J: {num(self.cost)}",
            f"两层 Riccati 预测值: {num(self.value)}",
            f"gamma1_max: {num(self.gamma1_max)}",
            f"终端违背 ||P1(T)x(T)||: {num(self.terminal_violation)}",
        ]
        if self.residuals:
            lines.append("FBDE 残差:")
            lines += [f"  {k}: {fmt(v)}" for k, v in sorted(self.residuals.items())]
        if self.comparison is not None:
            c = self.comparison
            lines.append(f"离散校验 (连续代价 {fmt(c.continuous_cost)}, 单调={c.monotone}):")
            lines += ["  " + row for row in c.frame().to_string(index=False, float_format=fmt).splitlines()]
        lines.append("容差: " + ", ".join(f"{k}={fmt(v)}" for k, v in sorted(self.tolerances.items())))
        return "\n".join(lines) + "\n"


def load_p1_override(path: str) -> np.ndarray:
    """P1(T) 覆盖文件：矩阵本身，或 {"p1_terminal": 矩阵}"""
    data = read_json(path)
    if isinstance(data, dict):
        if "p1_terminal" not in data:
            raise InputError(f"{path}: 需要 p1_terminal 字段")
        data = data["p1_terminal"]
    return sym(as_matrix(data, "P1(T)"))


def _open_loop_flag(p, reduced, l2, tol: Tolerances, report: SolveReport):
    """开环可解性；Ψ 病态时记为未知"""
    try:
        opened = open_loop(p, reduced, l2, tol.range, tol.rank)
    except ConditioningError as e:
        logger.warning(f"开环可解性未判定: {e}")
        report.open_loop_solvable = None
        return None
    report.open_loop_solvable = bool(opened)
    return opened


def _synthesize(p, reduced, l2, mode: str, tol: Tolerances, report: SolveReport):
    """按模式尝试各综合路径；auto 先闭环（非奇异、奇异），再开环"""
    if mode == "open":
        report.attempts.append("open-loop")
        opened = open_loop(p, reduced, l2, tol.range, tol.rank)
        report.open_loop_solvable = bool(opened)
        return opened or None

    report.attempts.append("closed-loop-nonsingular")
    controller = closed_loop_nonsingular(reduced, l2, tol.range, tol.rank)
    if not controller:
        logger.warning(f"非奇异闭环路径未给出增益: {controller.reason}")
        report.attempts.append("closed-loop-singular")
        controller = closed_loop_singular(reduced, l2, tol.range, tol.rank, tol.overlap)
        if not controller:
            logger.warning(f"奇异闭环路径未给出增益: {controller.reason}")
    opened = _open_loop_flag(p, reduced, l2, tol, report)
    if controller or mode == "closed":
        return controller or None
    report.attempts.append("open-loop")
    return opened or None


def run_pipeline(p, mode: str = "auto", tol: Tolerances = Tolerances(), p1_override=None,
                 ladder: Optional[List[int]] = None, name: str = "problem"):
    """
    classify → reduce → 第二层 → 综合 → 仿真 → 审计 → 离散校验
    :return: (SolveReport, Trajectory 或 None)
    """
    if mode not in MODES:
        raise InputError(f"未知模式 {mode}，可选 {', '.join(MODES)}")
    require_valid(p)
    P = integrate_regular_riccati(p, tol.rank)
    classification = classify(p, P, tol.range, tol.rank)
    report = SolveReport(name, classification.verdict, classification.m0, "regular", tolerances=tol.as_dict())

    l2 = reduced = None
    if classification.regular:
        controller = solve_regular(p, P, classification, tol.range, tol.rank)
        report.attempts.append("regular")
    else:
        reduced = reduce(p, P, tol.rank)
        terminal = p1_override if p1_override is not None else select_p1_terminal(reduced, tol.range, tol.rank)
        if isinstance(terminal, NoSolution):
            report.solvable = "unsolvable"
            logger.warning(f"按最小范数终值判定不可解: {terminal.reason}")
            return report, None
        if p1_override is not None:
            logger.info(f"使用指定的 P1(T): {np.array2string(terminal, precision=6)}")
        l2 = check_solvability(reduced, integrate_p1(reduced, terminal), tol.gamma)
        report.p1_terminal = l2.p1_terminal.tolist()
        report.gamma1_max = l2.gamma1_max
        if not l2.solvable:
            report.solvable = "unsolvable"
            return report, None
        report.solvable = "solvable"
        controller = _synthesize(p, reduced, l2, mode, tol, report)
        if controller is None:
            logger.warning(f"模式 {mode} 未得到控制器")
            return report, None

    traj = simulate(p, controller)
    residuals = audit_fbde(p, traj, P, l2, reduced)
    report.controller = controller.kind
    report.path = controller.path
    report.cost = traj.cost
    report.value = value_at(P, l2, p.x0)
    report.terminal_violation = traj.terminal_violation
    report.residuals = residuals.as_dict()
    if ladder:
        report.comparison = compare(p, traj, ladder, tol.opt)
    logger.info(f"求解完成: {report.summary}, 控制器 {report.controller}, J={report.cost:.10g}")
    return report, traj


def _load(args) -> LQProblem:
    return load_problem(args.file, steps=args.grid)


def _tolerances(args) -> Tolerances:
    return Tolerances(rank=args.tol_rank, gamma=args.tol_gamma, range=args.tol_range, opt=args.tol_opt)


def cmd_classify(args) -> int:
    p = require_valid(_load(args))
    tol = _tolerances(args)
    c = classify(p, integrate_regular_riccati(p, tol.rank), tol.range, tol.rank)
    print(f"{c.verdict} m0={c.m0}")
    return EXIT_OK


def cmd_solve(args) -> int:
    p = _load(args)
    override = load_p1_override(args.p1_terminal) if args.p1_terminal else None
    stem = Path(args.file).stem
    report, traj = run_pipeline(p, args.mode, _tolerances(args), override, ladder=ORACLE_LADDER, name=stem)

    ensure_dirs(args.out)
    base = os.path.join(args.out, stem)
    write_atomic_text(f"{base}_report.txt", report.to_text())
    write_atomic_json(f"{base}_report.json", report.to_dict())
    if traj is not None:
        export_csv(traj, f"{base}_trajectory.csv")
    print(report.summary)
    return report.exit_code


def _parse_ladder(text: str) -> List[int]:
    try:
        ladder = [int(n) for n in text.split(",") if n.strip()]
    except ValueError as e:
        raise InputError(f"--steps 需要逗号分隔的整数: {text}") from e
    if not ladder or any(n < 2 for n in ladder):
        raise InputError("--steps 中每个 N 都必须不小于 2")
    return ladder


def cmd_oracle(args) -> int:
    p = require_valid(_load(args))
    ladder = _parse_ladder(args.steps) if args.steps else ORACLE_LADDER
    report, traj = run_pipeline(p, "auto", _tolerances(args), name=Path(args.file).stem)
    if traj is not None:
        comparison = compare(p, traj, ladder, args.tol_opt)
        costs = [row.discrete_cost for row in comparison.rows]
        print(f"continuous J={fmt(comparison.continuous_cost)} monotone={comparison.monotone}")
        for row in comparison.rows:
            print(f"N={row.N} J={fmt(row.discrete_cost)} gap={fmt(row.gap)} ok={row.below_continuous_plus_tol}")
    else:
        # 不可解问题只报告离散代价的走势
        costs = [solve_discrete(discretize(p, N), p.x0).optimal_cost for N in ladder]
        print(f"{report.summary}: 无连续控制器可比较")
        for N, cost in zip(ladder, costs):
            print(f"N={N} J={fmt(cost)}")
    for (a, b), (na, nb) in zip(zip(costs, costs[1:]), zip(ladder, ladder[1:])):
        print(f"|J({nb}) - J({na})| = {fmt(abs(b - a))}")
    return EXIT_OK


def cmd_fixture(args) -> int:
    ensure_dirs(args.out)
    path = os.path.join(args.out, f"{args.name}.json")
    dump_problem(fixture(args.name, steps=args.grid or GRID_STEPS), path)
    logger.info(f"算例 {args.name} 已写入 {path}")
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, default=None, help="时间网格步数（默认取问题文件或 LQ_GRID_STEPS）")
    common.add_argument("--tol-rank", type=float, default=Tolerances.rank, help="伪逆相对秩阈值")
    common.add_argument("--tol-gamma", type=float, default=Tolerances.gamma, help="Γ1 ≡ 0 判定容差")
    common.add_argument("--tol-range", type=float, default=Tolerances.range, help="值域包含判定容差")
    common.add_argument("--tol-opt", type=float, default=Tolerances.opt, help="离散校验容差")
    common.add_argument("--out", default=OUTPUT_DIR, help="输出目录")

    parser = argparse.ArgumentParser(description="非正则有限时域 LQ 最优控制求解器")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="判定 Regular / Irregular")
    p.add_argument("file")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("solve", parents=[common], help="完整求解并写出报告与轨迹")
    p.add_argument("file")
    p.add_argument("--mode", choices=MODES, default="auto")
    p.add_argument("--p1-terminal", default=None, help="P1(T) 覆盖矩阵 JSON 文件")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", parents=[common], help="离散最优代价阶梯")
    p.add_argument("file")
    p.add_argument("--steps", default=None, help="逗号分隔的 N 列表")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("fixture", parents=[common], help="写出内置算例")
    p.add_argument("name", choices=FIXTURES)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as e:
        logger.error(f"输入错误: {e}")
        return EXIT_INPUT
    except NumericalError as e:
        logger.error(f"数值失败: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
