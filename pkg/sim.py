"""前向仿真、代价计算、终端约束与 FBDE 残差审计、轨迹 CSV 导出"""
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from integrate import MatrixGridFunction, quadrature
from model import LQProblem, TimeGrid
from utils import DivergenceError, InputError, ensure_dirs, logger, write_atomic_csv


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    x: np.ndarray  # (N+1, n)
    u: np.ndarray  # (N+1, m)
    theta: np.ndarray  # Θ(t)
    costate: np.ndarray  # p = Px + Θ
    cost: float
    terminal_violation: float  # ||P1(T)x(T)||
    kind: str = ""

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes


@dataclass(frozen=True)
class ResidualReport:
    state: float
    costate: float
    equilibrium: float
    algebraic: float
    theta: float
    terminal_violation: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def max(self) -> float:
        return max(self.as_dict().values())


def _rk4_step(f, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + h / 2, x + h / 2 * k1)
    k3 = f(t + h / 2, x + h / 2 * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _last_cell(controller, f, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """
    增益在 T 处 ~ 1/(t-T)，最后一格不在 T 处取值：
    y = 𝒯1ᵀx，y1 按精确解 y1(t) ∝ (T-t) 归零，y2 用显式中点法
    """
    basis, r = controller.basis, controller.basis_rank
    e, f_cols = basis[:, :r], basis[:, r:]
    y1, y2 = e.T @ x, f_cols.T @ x
    if f_cols.shape[1] == 0:
        return np.zeros_like(x)
    y2_half = y2 + h / 2 * f_cols.T @ f(t, x)
    x_half = e @ (y1 / 2) + f_cols @ y2_half
    y2_end = y2 + h * f_cols.T @ f(t + h / 2, x_half)
    return f_cols @ y2_end


def _cost(p: LQProblem, x: np.ndarray, u: np.ndarray) -> float:
    nodes = p.grid.nodes
    running = np.array([x[k] @ p.Q(t) @ x[k] + u[k] @ p.R(t) @ u[k] for k, t in enumerate(nodes)])
    if len(nodes) >= 3:
        integral = float(quadrature(MatrixGridFunction(nodes, running[:, None, None]))[0, 0])
    else:
        integral = float(trapezoid(running, nodes))
    return integral + float(x[-1] @ p.H @ x[-1])


def simulate(p: LQProblem, controller) -> Trajectory:
    """RK4 前向积分 ẋ = Ax + Bu，u 取自控制器"""
    nodes = p.grid.nodes
    if len(controller.times) != len(nodes) or not np.allclose(controller.times, nodes, rtol=0.0, atol=1e-12):
        raise InputError("控制器与问题的时间网格不一致")

    def f(t, x):
        return p.A(t) @ x + p.B(t) @ controller.control(t, x)

    x = np.empty((len(nodes), p.n))
    x[0] = p.x0
    last = len(nodes) - 1
    for k in range(last):
        h = nodes[k + 1] - nodes[k]
        if controller.singular_at_T and k == last - 1:
            x[k + 1] = _last_cell(controller, f, nodes[k], x[k], h)
        else:
            x[k + 1] = _rk4_step(f, nodes[k], x[k], h)
        if not np.all(np.isfinite(x[k + 1])):
            raise DivergenceError(f"仿真在 t={nodes[k + 1]:.6g} 发散", node=k + 1, t=float(nodes[k + 1]))

    u = np.empty((len(nodes), p.m))
    for k, t in enumerate(nodes):
        if controller.singular_at_T and k == last:
            # 终端处增益奇异，u(T) 取线性外推
            u[k] = 2 * u[k - 1] - u[k - 2] if k >= 2 else u[k - 1]
        else:
            u[k] = controller.control(t, x[k])

    if controller.P1 is not None:
        theta = np.einsum("kij,kj->ki", controller.P1.values, x)
        terminal_violation = float(np.linalg.norm(theta[-1]))
    else:
        theta = np.zeros_like(x)
        terminal_violation = 0.0
    costate = np.einsum("kij,kj->ki", controller.P.values, x) + theta
    cost = _cost(p, x, u)
    logger.info(f"仿真完成 ({controller.kind}): J={cost:.10g}, x(T)={np.array2string(x[-1], precision=6)}, "
                f"终端违背={terminal_violation:.3e}")
    return Trajectory(p.grid, x, u, theta, costate, cost, terminal_violation, controller.kind)


def _central(values: np.ndarray, times: np.ndarray, rhs) -> float:
    if len(times) < 3:
        return 0.0
    worst = 0.0
    for k in range(1, len(times) - 1):
        derivative = (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1])
        worst = max(worst, float(np.linalg.norm(derivative - rhs(k, times[k]))))
    return worst


def audit_fbde(p: LQProblem, traj: Trajectory, P, l2=None, reduced=None) -> ResidualReport:
    """
    检查轨迹满足的方程：
      ẋ = Ax + Bu；ṗ = -(Aᵀp + Qx)；0 = Ru + Bᵀp
      非正则时另有 0 = C0x + B0ᵀΘ 与 Θ̇ = -(A0ᵀΘ + C0ᵀu1)，u1 = G0ᵀu
    """
    times = traj.times
    if len(times) != len(P.P.times):
        raise InputError("轨迹与 Riccati 解的网格不一致")
    x, u, theta = traj.x, traj.u, traj.theta
    costate = np.einsum("kij,kj->ki", P.P.values, x) + theta

    state = _central(x, times, lambda k, t: p.A(t) @ x[k] + p.B(t) @ u[k])
    adjoint = _central(costate, times, lambda k, t: -(p.A(t).T @ costate[k] + p.Q(t) @ x[k]))
    equilibrium = max(float(np.linalg.norm(p.R(t) @ u[k] + p.B(t).T @ costate[k])) for k, t in enumerate(times))

    algebraic = theta_residual = 0.0
    terminal = 0.0
    if l2 is not None and reduced is not None:
        u1 = np.einsum("kji,kj->ki", reduced.g0.values, u)
        algebraic = max(float(np.linalg.norm(reduced.c0[k] @ x[k] + reduced.b0[k].T @ theta[k]))
                        for k in range(len(times)))
        theta_residual = _central(theta, times, lambda k, t: -(reduced.a0[k].T @ theta[k] + reduced.c0[k].T @ u1[k]))
        terminal = float(np.linalg.norm(l2.P1[-1] @ x[-1]))

    report = ResidualReport(state, adjoint, equilibrium, algebraic, theta_residual, terminal)
    logger.info("FBDE 残差: " + ", ".join(f"{k}={v:.3e}" for k, v in report.as_dict().items()))
    return report


def value_at(P, l2, x0) -> float:
    """两层 Riccati 预测的最优代价 x0ᵀ(P(t0) + P1(t0))x0；正则时 P1 不存在"""
    x0 = np.asarray(x0, dtype=float)
    s = P.P[0] if l2 is None else P.P[0] + l2.P1[0]
    return float(x0 @ s @ x0)


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    n, m = traj.x.shape[1], traj.u.shape[1]
    columns = {"t": traj.times}
    columns.update({f"x_{i + 1}": traj.x[:, i] for i in range(n)})
    columns.update({f"u_{i + 1}": traj.u[:, i] for i in range(m)})
    columns.update({f"theta_{i + 1}": traj.theta[:, i] for i in range(n)})
    columns.update({f"p_{i + 1}": traj.costate[:, i] for i in range(n)})
    return pd.DataFrame(columns)


def export_csv(traj: Trajectory, path: str, out_dir: Optional[str] = None):
    if out_dir:
        ensure_dirs(out_dir)
    write_atomic_csv(path, trajectory_frame(traj))
    logger.info(f"轨迹已写入 {path}")
