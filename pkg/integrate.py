"""矩阵常微分方程：Riccati 方程逆向 RK4、第二层方程 P1、状态转移矩阵 P2(t,s)、Simpson 积分"""
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from config import TOL_RANK
from linalg import pinv, sym
from utils import ConditioningError, DivergenceError, InputError, logger

# 发散判据
BLOWUP = 1e150
# Ψ(s) 条件数上限
MAX_COND = 1e12


@dataclass(frozen=True)
class MatrixGridFunction:
    """网格上的矩阵函数：节点处精确取值，节点之间三次样条"""
    times: np.ndarray
    values: np.ndarray  # (k, rows, cols)

    def __post_init__(self):
        if self.values.ndim != 3 or len(self.times) != self.values.shape[0]:
            raise InputError(f"节点数 {len(self.times)} 与矩阵数 {self.values.shape} 不一致")

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.values[k]

    @property
    def shape(self):
        return self.values.shape[1:]

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0])

    @cached_property
    def _spline(self):
        return CubicSpline(self.times, self.values, axis=0)

    def at(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.times, t))
        if i < len(self.times) and self.times[i] == t:
            return self.values[i]
        if self.values.size == 0:
            return np.zeros(self.shape)
        return self._spline(t)

    def map(self, fn: Callable[[float, np.ndarray], np.ndarray]) -> "MatrixGridFunction":
        return MatrixGridFunction(self.times, np.stack([fn(t, v) for t, v in zip(self.times, self.values)]))

    def max_norm(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(max(np.linalg.norm(v) for v in self.values))


@dataclass(frozen=True)
class RiccatiSolution:
    P: MatrixGridFunction
    residual_norm: float


# ---------- RK4 ----------
def _check_finite(value: np.ndarray, k: int, t: float, what: str):
    if not np.all(np.isfinite(value)) or np.max(np.abs(value), initial=0.0) > BLOWUP:
        raise DivergenceError(f"{what} 在节点 {k} (t={t:.6g}) 发散", node=k, t=t)


def rk4_backward(rhs, terminal: np.ndarray, nodes: np.ndarray, symmetric: bool = True,
                 what: str = "Riccati") -> np.ndarray:
    """
    从 nodes[-1] 向 nodes[0] 逆向积分 dP/dt = rhs(t, P)，经典四阶 Runge-Kutta
    :param symmetric: 每步之后对称化
    """
    values = np.empty((len(nodes),) + terminal.shape)
    w = np.array(terminal, dtype=float)
    values[-1] = w
    for k in range(len(nodes) - 1, 0, -1):
        t = nodes[k]
        h = nodes[k - 1] - t  # 负步长
        K1 = h * rhs(t, w)
        K2 = h * rhs(t + h / 2, w + K1 / 2)
        K3 = h * rhs(t + h / 2, w + K2 / 2)
        K4 = h * rhs(t + h, w + K3)
        w = w + (K1 + 2 * K2 + 2 * K3 + K4) / 6
        if symmetric:
            w = sym(w)
        _check_finite(w, k - 1, nodes[k - 1], what)
        values[k - 1] = w
    return values


def rk4_forward(rhs, initial: np.ndarray, nodes: np.ndarray, what: str = "ODE") -> np.ndarray:
    values = np.empty((len(nodes),) + np.shape(initial))
    w = np.array(initial, dtype=float)
    values[0] = w
    for k in range(len(nodes) - 1):
        t = nodes[k]
        h = nodes[k + 1] - t
        K1 = h * rhs(t, w)
        K2 = h * rhs(t + h / 2, w + K1 / 2)
        K3 = h * rhs(t + h / 2, w + K2 / 2)
        K4 = h * rhs(t + h, w + K3)
        w = w + (K1 + 2 * K2 + 2 * K3 + K4) / 6
        _check_finite(w, k + 1, nodes[k + 1], what)
        values[k + 1] = w
    return values


# ---------- 第一层 Riccati ----------
def _r_pinv(p, rank_tol: float):
    # 常值 R 只做一次伪逆
    if p.R.kind == "constant":
        fixed = pinv(p.R.value, rank_tol).pinv
        return lambda t: fixed
    return lambda t: pinv(p.R(t), rank_tol).pinv


def regular_riccati_rhs(p, rank_tol: float = TOL_RANK):
    """dP/dt = -(AᵀP + PA + Q - Γ0ᵀΥ0†Γ0)，Υ0 = R，Γ0 = BᵀP"""
    r_pinv = _r_pinv(p, rank_tol)

    def rhs(t, P):
        A, B, Q, _ = p.mats(t)
        gamma0 = B.T @ P
        return -(A.T @ P + P @ A + Q - gamma0.T @ r_pinv(t) @ gamma0)

    return rhs


def _central_residual(grid_fn: MatrixGridFunction, rhs) -> float:
    times, values = grid_fn.times, grid_fn.values
    if len(times) < 3:
        return 0.0
    worst = 0.0
    for k in range(1, len(times) - 1):
        derivative = (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1])
        worst = max(worst, float(np.linalg.norm(derivative - rhs(times[k], values[k]))))
    return worst


def riccati_residual(p, grid_fn: MatrixGridFunction, rank_tol: float = TOL_RANK) -> float:
    """中心差分残差：Ṡ + SA + AᵀS - SBR†BᵀS + Q；也用于校验 S = P + P1"""
    return _central_residual(grid_fn, regular_riccati_rhs(p, rank_tol))


def combined_riccati_residual(p, P: MatrixGridFunction, P1: MatrixGridFunction, rank_tol: float = TOL_RANK) -> float:
    """S = P + P1 仍满足第一层 Riccati 方程"""
    return riccati_residual(p, MatrixGridFunction(P.times, P.values + P1.values), rank_tol)


def integrate_regular_riccati(p, rank_tol: float = TOL_RANK) -> RiccatiSolution:
    nodes = p.grid.nodes
    rhs = regular_riccati_rhs(p, rank_tol)
    values = rk4_backward(rhs, sym(p.H), nodes, what="Riccati P")
    values[-1] = p.H
    P = MatrixGridFunction(nodes, values)
    residual = _central_residual(P, rhs)
    logger.info(f"第一层 Riccati 完成: P(t0) 范数 {np.linalg.norm(values[0]):.6g}, 残差 {residual:.3e}")
    return RiccatiSolution(P, residual)


# ---------- 第二层 P1 ----------
def p1_rhs(reduced):
    """dP1/dt = -(P1A0 + A0ᵀP1 + P1D0P1)；Υ1 ≡ 0，Γ1ᵀΥ1†Γ1 项恒为零"""
    def rhs(t, P1):
        A0 = reduced.a0.at(t)
        D0 = reduced.d0.at(t)
        return -(P1 @ A0 + A0.T @ P1 + P1 @ D0 @ P1)

    return rhs


def integrate_p1(reduced, p1_terminal) -> RiccatiSolution:
    p1_terminal = np.asarray(p1_terminal, dtype=float)
    n = reduced.a0.shape[0]
    if p1_terminal.shape != (n, n):
        raise InputError(f"P1(T) 的形状应为 {(n, n)}，实际 {p1_terminal.shape}")
    if np.max(np.abs(p1_terminal - p1_terminal.T), initial=0.0) > 1e-10 * (1 + np.max(np.abs(p1_terminal))):
        raise InputError("P1(T) 必须对称")
    nodes = reduced.a0.times
    rhs = p1_rhs(reduced)
    values = rk4_backward(rhs, sym(p1_terminal), nodes, what="第二层 P1")
    values[-1] = p1_terminal
    P1 = MatrixGridFunction(nodes, values)
    residual = _central_residual(P1, rhs)
    logger.info(f"第二层 P1 完成: P1(t0) 范数 {np.linalg.norm(values[0]):.6g}, 残差 {residual:.3e}")
    return RiccatiSolution(P1, residual)


# ---------- 状态转移矩阵 ----------
def fundamental_solution(reduced) -> MatrixGridFunction:
    """Ψ̇ = -A0ᵀΨ, Ψ(t0) = I"""
    nodes = reduced.a0.times
    n = reduced.a0.shape[0]
    values = rk4_forward(lambda t, psi: -reduced.a0.at(t).T @ psi, np.eye(n), nodes, what="Ψ")
    return MatrixGridFunction(nodes, values)


def transition_from(psi: MatrixGridFunction, t_ref: float) -> MatrixGridFunction:
    nodes = psi.times
    matches = np.flatnonzero(np.isclose(nodes, t_ref, rtol=0.0, atol=1e-12 * (nodes[-1] - nodes[0])))
    if matches.size == 0:
        raise InputError(f"t_ref={t_ref} 不是网格节点")
    ref = psi.values[int(matches[0])]
    out = np.empty_like(psi.values)
    for k, psi_s in enumerate(psi.values):
        cond = np.linalg.cond(psi_s)
        if not np.isfinite(cond) or cond > MAX_COND:
            raise ConditioningError(f"Ψ 在 t={nodes[k]:.6g} 病态 (cond={cond:.3e})")
        # P2(t_ref, s) = Ψ(t_ref) Ψ(s)^{-1}
        out[k] = np.linalg.solve(psi_s.T, ref.T).T
    out[int(matches[0])] = np.eye(ref.shape[0])
    return MatrixGridFunction(nodes, out)


def transition_family(reduced, t_ref: float) -> MatrixGridFunction:
    """s -> P2(t_ref, s)，满足 ∂P2(t,s)/∂t = -A0ᵀ(t)P2(t,s)，P2(t,t) = I"""
    return transition_from(fundamental_solution(reduced), t_ref)


# ---------- 积分 ----------
def quadrature(values: MatrixGridFunction) -> np.ndarray:
    """均匀网格复合 Simpson；区间数为奇数时最后一格用梯形"""
    times, f = values.times, values.values
    if len(times) < 3:
        raise InputError("Simpson 积分至少需要 3 个节点")
    h = (times[-1] - times[0]) / (len(times) - 1)
    if np.max(np.abs(np.diff(times) - h)) > 1e-9 * abs(h):
        raise InputError("Simpson 积分要求均匀网格")
    intervals = len(times) - 1
    even = intervals - intervals % 2
    total = h / 3 * (f[0] + f[even] + 4 * f[1:even:2].sum(axis=0) + 2 * f[2:even:2].sum(axis=0))
    if even < intervals:
        total = total + h / 2 * (f[-2] + f[-1])
    return total
