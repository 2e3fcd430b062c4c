"""问题定义：时间网格、时变矩阵函数、LQ 问题、校验、算例 E1/E2、问题文件 JSON 读写"""
import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import GRID_STEPS
from linalg import as_matrix, check_symmetric_psd
from utils import InputError, logger, read_json, write_atomic_json

CONSTANT = "constant"
SAMPLED = "sampled"


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.T)) or self.T <= self.t0:
            raise InputError(f"时域不合法: t0={self.t0}, T={self.T}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InputError(f"steps 必须是正整数，实际 {self.steps}")

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.steps

    @property
    def nodes(self) -> np.ndarray:
        nodes = self.t0 + self.h * np.arange(self.steps + 1)
        nodes[-1] = self.T
        return nodes

    def contains(self, t: float) -> bool:
        slack = 1e-12 * (self.T - self.t0)
        return self.t0 - slack <= t <= self.T + slack


def _frozen(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class MatrixFunction:
    """时变矩阵：常值，或均匀采样 + 线性插值"""
    kind: str
    value: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, value, name: str = "matrix") -> "MatrixFunction":
        return cls(CONSTANT, value=_frozen(as_matrix(value, name).copy()))

    @classmethod
    def sampled(cls, times: Sequence[float], values, name: str = "matrix") -> "MatrixFunction":
        times = np.asarray(times, dtype=float)
        mats = [as_matrix(v, name) for v in values]
        if times.ndim != 1 or len(times) < 2 or len(times) != len(mats):
            raise InputError(f"{name}: 采样时间与采样矩阵数量不一致")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise InputError(f"{name}: 采样时间必须严格递增")
        if np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
            raise InputError(f"{name}: 采样时间必须是均匀网格")
        if len({m.shape for m in mats}) != 1:
            raise InputError(f"{name}: 采样矩阵维度不一致")
        return cls(SAMPLED, times=_frozen(times), values=_frozen(np.stack(mats)))

    @property
    def shape(self):
        return self.value.shape if self.kind == CONSTANT else self.values.shape[1:]

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def __call__(self, t: float) -> np.ndarray:
        return evaluate(self, t)


def evaluate(f: MatrixFunction, t: float, grid: Optional[TimeGrid] = None) -> np.ndarray:
    """
    计算 f(t)；采样型在节点处精确返回存储值，节点之间线性插值
    :param grid: 给定时校验 t 是否在时域内
    """
    if grid is not None and not grid.contains(t):
        raise InputError(f"t={t} 超出时域 [{grid.t0}, {grid.T}]")
    if f.kind == CONSTANT:
        return f.value

    times = f.times
    slack = 1e-12 * (times[-1] - times[0])
    if t < times[0] - slack or t > times[-1] + slack:
        raise InputError(f"t={t} 超出采样范围 [{times[0]}, {times[-1]}]")
    i = int(np.searchsorted(times, t, side="right")) - 1
    i = min(max(i, 0), len(times) - 1)
    if times[i] == t or i == len(times) - 1:
        return f.values[i]
    w = (t - times[i]) / (times[i + 1] - times[i])
    return (1.0 - w) * f.values[i] + w * f.values[i + 1]


@dataclass(frozen=True)
class LQProblem:
    n: int
    m: int
    grid: TimeGrid
    A: MatrixFunction
    B: MatrixFunction
    Q: MatrixFunction
    R: MatrixFunction
    H: np.ndarray
    x0: np.ndarray

    def mats(self, t: float):
        return evaluate(self.A, t), evaluate(self.B, t), evaluate(self.Q, t), evaluate(self.R, t)


@dataclass
class ValidationReport:
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _sample_points(f: MatrixFunction) -> np.ndarray:
    # 线性插值保持对称与半正定（凸锥），检查采样点即覆盖所有网格节点
    return f.values if f.kind == SAMPLED else f.value[None, :, :]


def validate(p: LQProblem) -> ValidationReport:
    report = ValidationReport()
    expected = {"A": (p.n, p.n), "B": (p.n, p.m), "Q": (p.n, p.n), "R": (p.m, p.m)}
    for name, shape in expected.items():
        f = getattr(p, name)
        if tuple(f.shape) != shape:
            report.violations.append(f"{name} dimension {tuple(f.shape)} != {shape}")
        if f.kind == SAMPLED and not (f.times[0] <= p.grid.t0 + 1e-12 and f.times[-1] >= p.grid.T - 1e-12):
            report.violations.append(f"{name} samples do not span [{p.grid.t0}, {p.grid.T}]")
    if p.H.shape != (p.n, p.n):
        report.violations.append(f"H dimension {p.H.shape} != {(p.n, p.n)}")
    if p.x0.shape != (p.n,):
        report.violations.append(f"x0 length {p.x0.shape} != ({p.n},)")
    if report.violations:
        return report

    for mat in _sample_points(p.Q):
        report.violations += [v for v in check_symmetric_psd(mat, "Q") if v == "Q not symmetric"]
    for mat in _sample_points(p.R):
        report.violations += check_symmetric_psd(mat, "R")
    if np.max(np.abs(p.H - p.H.T), initial=0.0) > 1e-10 * (1.0 + np.max(np.abs(p.H), initial=0.0)):
        report.violations.append("H not symmetric")
    # 去重，保持顺序
    report.violations = list(dict.fromkeys(report.violations))
    return report


def require_valid(p: LQProblem) -> LQProblem:
    report = validate(p)
    if not report.ok:
        raise InputError("问题不合法: " + "; ".join(report.violations))
    return p


def make_problem(A, B, Q, R, H, x0, t0: float = 0.0, T: float = 1.0, steps: int = GRID_STEPS) -> LQProblem:
    """常值系数问题的便捷构造"""
    fA, fB, fQ, fR = (x if isinstance(x, MatrixFunction) else MatrixFunction.constant(x, name)
                      for x, name in ((A, "A"), (B, "B"), (Q, "Q"), (R, "R")))
    H = _frozen(as_matrix(H, "H").copy())
    x0 = _frozen(np.asarray(x0, dtype=float).reshape(-1).copy())
    return LQProblem(n=fA.rows, m=fB.cols, grid=TimeGrid(float(t0), float(T), int(steps)),
                     A=fA, B=fB, Q=fQ, R=fR, H=H, x0=x0)


def with_overrides(p: LQProblem, **fields) -> LQProblem:
    """返回修改了部分字段的副本，例如 with_overrides(E1, R=np.eye(2))"""
    current = {"A": p.A, "B": p.B, "Q": p.Q, "R": p.R, "H": p.H, "x0": p.x0,
               "t0": p.grid.t0, "T": p.grid.T, "steps": p.grid.steps}
    unknown = set(fields) - set(current)
    if unknown:
        raise InputError(f"未知字段: {sorted(unknown)}")
    current.update(fields)
    return make_problem(**current)


def _scale_function(f: MatrixFunction, alpha: float) -> MatrixFunction:
    if f.kind == CONSTANT:
        return MatrixFunction.constant(alpha * f.value)
    return MatrixFunction.sampled(f.times, alpha * f.values)


def scaled(p: LQProblem, alpha: float) -> LQProblem:
    """(Q, R, H) -> (αQ, αR, αH)"""
    if alpha <= 0:
        raise InputError("alpha 必须为正")
    return dataclasses.replace(p, Q=_scale_function(p.Q, alpha), R=_scale_function(p.R, alpha),
                               H=_frozen(alpha * p.H))


# ---------- 算例 ----------
FIXTURES = ("E1", "E2", "regular-scalar")


def fixture(name: str, steps: int = GRID_STEPS, x0=None) -> LQProblem:
    x0 = [1.0] if x0 is None else x0
    B = [[1.0, 1.0]]
    R = [[1.0, 0.0], [0.0, 0.0]]
    if name == "E1":
        return make_problem(A=[[0.0]], B=B, Q=[[0.0]], R=R, H=[[1.0]], x0=x0, steps=steps)
    if name == "E2":
        return make_problem(A=[[0.0]], B=B, Q=[[1.0]], R=R, H=[[2.0]], x0=x0, steps=steps)
    if name == "regular-scalar":
        return make_problem(A=[[0.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], H=[[0.0]], x0=x0, steps=steps)
    raise InputError(f"未知算例: {name}，可选 {', '.join(FIXTURES)}")


# ---------- 问题文件 ----------
def _function_from_json(entry, name: str) -> MatrixFunction:
    if isinstance(entry, dict) and "constant" in entry:
        return MatrixFunction.constant(entry["constant"], name)
    if isinstance(entry, dict) and "sampled" in entry:
        sampled = entry["sampled"]
        try:
            return MatrixFunction.sampled(sampled["times"], sampled["values"], name)
        except (KeyError, TypeError) as e:
            raise InputError(f"{name}: sampled 需要 times 与 values") from e
    raise InputError(f"{name}: 需要 {{'constant': ...}} 或 {{'sampled': ...}}")


def _function_to_json(f: MatrixFunction) -> Dict:
    if f.kind == CONSTANT:
        return {"constant": f.value.tolist()}
    return {"sampled": {"times": f.times.tolist(), "values": f.values.tolist()}}


def problem_from_dict(data: Dict) -> LQProblem:
    missing = [k for k in ("n", "m", "t0", "T", "x0", "A", "B", "Q", "R", "H") if k not in data]
    if missing:
        raise InputError(f"问题文件缺少字段: {missing}")
    H = data["H"]
    if isinstance(H, dict):
        if "constant" not in H:
            raise InputError("H 必须是常值矩阵")
        H = H["constant"]
    try:
        p = make_problem(A=_function_from_json(data["A"], "A"), B=_function_from_json(data["B"], "B"),
                         Q=_function_from_json(data["Q"], "Q"), R=_function_from_json(data["R"], "R"),
                         H=H, x0=data["x0"], t0=float(data["t0"]), T=float(data["T"]),
                         steps=int(data.get("steps", GRID_STEPS)))
        declared = (int(data["n"]), int(data["m"]))
    except (TypeError, ValueError) as e:
        if isinstance(e, InputError):
            raise
        raise InputError(f"问题文件数值不合法: {e}") from e
    if (p.n, p.m) != declared:
        raise InputError(f"声明的维度 n={data['n']}, m={data['m']} 与矩阵不一致 (n={p.n}, m={p.m})")
    return p


def problem_to_dict(p: LQProblem) -> Dict:
    return {
        "n": p.n, "m": p.m, "t0": p.grid.t0, "T": p.grid.T, "steps": p.grid.steps,
        "x0": p.x0.tolist(),
        "A": _function_to_json(p.A), "B": _function_to_json(p.B),
        "Q": _function_to_json(p.Q), "R": _function_to_json(p.R),
        "H": {"constant": p.H.tolist()},
    }


def load_problem(path: str, steps: Optional[int] = None) -> LQProblem:
    data = read_json(path)
    if not isinstance(data, dict):
        raise InputError(f"{path}: 顶层必须是 JSON 对象")
    if steps is not None:
        data = dict(data, steps=steps)
    p = problem_from_dict(data)
    logger.info(f"已读取问题 {path}: n={p.n}, m={p.m}, [{p.grid.t0}, {p.grid.T}], steps={p.grid.steps}")
    return p


def dump_problem(p: LQProblem, path: str):
    write_atomic_json(path, problem_to_dict(p))
