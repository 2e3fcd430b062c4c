"""暴力校验：分段常值控制下把 LQ 问题直接离散成有限维凸二次规划，用伪逆求最小范数最优解"""
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd
from scipy import sparse

from config import ORACLE_SUBSTEPS, TOL_OPT, TOL_RANK
from model import LQProblem
from utils import InputError, logger

# 离散二次型 Hessian 的半正定容差
PSD_TOL = 1e-10


@dataclass(frozen=True)
class DiscreteLQ:
    N: int
    times: np.ndarray  # 单元边界，N+1 个
    phi: np.ndarray  # (N, n, n)
    gamma: np.ndarray  # (N, n, m)
    stage: np.ndarray  # (N, n+m, n+m)，[x_k; u_k] 上的单元代价
    H: np.ndarray

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    @property
    def m(self) -> int:
        return self.gamma.shape[2]


@dataclass(frozen=True)
class OracleResult:
    optimal_cost: float
    optimal_controls: np.ndarray  # (N, m)
    hessian_min_eigenvalue: float
    attained: bool


@dataclass(frozen=True)
class ComparisonRow:
    N: int
    discrete_cost: float
    gap: float
    below_continuous_plus_tol: bool  # J_discrete <= J_continuous + tol_opt


@dataclass
class ComparisonReport:
    continuous_cost: float
    rows: List[ComparisonRow] = field(default_factory=list)
    tol_opt: float = TOL_OPT

    @property
    def refinement(self) -> List[float]:
        costs = [r.discrete_cost for r in self.rows]
        return [abs(b - a) for a, b in zip(costs, costs[1:])]

    @property
    def monotone(self) -> bool:
        """gap 沿网格加密不增（容许 1e-6 的噪声）"""
        gaps = [r.gap for r in self.rows]
        return all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))

    @property
    def ok(self) -> bool:
        return all(r.below_continuous_plus_tol for r in self.rows)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows],
                            columns=["N", "discrete_cost", "gap", "below_continuous_plus_tol"])

    def as_dict(self) -> dict:
        return {"continuous_cost": self.continuous_cost, "monotone": self.monotone, "tol_opt": self.tol_opt,
                "refinement": self.refinement, "rows": [vars(r) for r in self.rows]}


def _propagate(p: LQProblem, t: float, width: float, substeps: int, start: np.ndarray) -> np.ndarray:
    """RK4 积分 d/dt [Φ Γ] = A[Φ Γ] + [0 B]"""
    h = width / substeps
    n = p.n

    def rhs(s, w):
        out = p.A(s) @ w
        out[:, n:] += p.B(s)
        return out

    w = start
    for i in range(substeps):
        s = t + i * h
        k1 = rhs(s, w)
        k2 = rhs(s + h / 2, w + h / 2 * k1)
        k3 = rhs(s + h / 2, w + h / 2 * k2)
        k4 = rhs(s + h, w + h * k3)
        w = w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return w


def discretize(p: LQProblem, N: int, substeps: int = ORACLE_SUBSTEPS) -> DiscreteLQ:
    """
    零阶保持控制；每个单元分成两个半格分别用 RK4 推进 [Φ Γ]，
    单元代价用起点、中点、终点三点 Simpson
    """
    if int(N) != N or N < 2:
        raise InputError(f"N 必须是不小于 2 的整数，实际 {N}")
    if substeps < 1:
        raise InputError("substeps 必须为正")
    n, m = p.n, p.m
    times = np.linspace(p.grid.t0, p.grid.T, N + 1)
    phi = np.empty((N, n, n))
    gamma = np.empty((N, n, m))
    stage = np.empty((N, n + m, n + m))
    identity = np.hstack([np.eye(n), np.zeros((n, m))])
    selector = np.hstack([np.zeros((m, n)), np.eye(m)])
    for k in range(N):
        t, width = times[k], times[k + 1] - times[k]
        mid = t + width / 2
        m_half = _propagate(p, t, width / 2, substeps, identity)
        m_end = _propagate(p, mid, width / 2, substeps, m_half)
        phi[k], gamma[k] = m_end[:, :n], m_end[:, n:]
        weights = ((identity, t, 1.0), (m_half, mid, 4.0), (m_end, times[k + 1], 1.0))
        cost = sum(w * (M.T @ p.Q(s) @ M + selector.T @ p.R(s) @ selector) for M, s, w in weights)
        stage[k] = 0.5 * (cost + cost.T) * width / 6
    return DiscreteLQ(int(N), times, phi, gamma, stage, np.array(p.H, dtype=float))


def _lift(d: DiscreteLQ):
    """Z = F x0 + G U，Z 依次堆叠 [x_k; u_k]（k < N），再加 x_N"""
    n, m, N = d.n, d.m, d.N
    x_free = np.eye(n)
    x_forced = np.zeros((n, N * m))
    f_rows, g_rows = [], []
    for k in range(N):
        u_forced = np.zeros((m, N * m))
        u_forced[:, k * m:(k + 1) * m] = np.eye(m)
        f_rows += [x_free, np.zeros((m, n))]
        g_rows += [x_forced, u_forced]
        x_free = d.phi[k] @ x_free
        x_forced = d.phi[k] @ x_forced
        x_forced[:, k * m:(k + 1) * m] += d.gamma[k]
    f_rows.append(x_free)
    g_rows.append(x_forced)
    weight = sparse.block_diag(list(d.stage) + [d.H], format="csr")
    return np.vstack(f_rows), np.vstack(g_rows), weight


def solve_discrete(d: DiscreteLQ, x0, tol: float = 1e-8, rank_tol: float = TOL_RANK) -> OracleResult:
    """J(U) = UᵀℋU + 2gᵀU + c，U* = -ℋ†g（最小范数）"""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (d.n,):
        raise InputError(f"x0 长度应为 {d.n}，实际 {x0.shape}")
    F, G, W = _lift(d)
    hessian = G.T @ (W @ G)
    hessian = 0.5 * (hessian + hessian.T)
    g = G.T @ (W @ (F @ x0))

    values, vectors = np.linalg.eigh(hessian)
    scale = max(abs(values[-1]), abs(values[0]), 1.0)
    if values[0] < -PSD_TOL * scale:
        raise InputError(f"离散 Hessian 不是半正定 (最小特征值 {values[0]:.3e})")
    keep = values > rank_tol * scale * len(values)
    coords = vectors.T @ g
    U = -vectors[:, keep] @ (coords[keep] / values[keep])

    # 直接按 ZᵀWZ 计算代价，各项非负，避免 c + gᵀU 的抵消误差
    Z = F @ x0 + G @ U
    cost = float(Z @ (W @ Z))
    attained = bool(np.linalg.norm(hessian @ U + g) <= tol * (1.0 + np.linalg.norm(g)))
    logger.debug(f"离散最优 N={d.N}: J={cost:.12g}, min eig={values[0]:.3e}, attained={attained}")
    return OracleResult(cost, U.reshape(d.N, d.m), float(values[0]), attained)


def compare(p: LQProblem, traj, N_ladder, tol_opt: float = TOL_OPT,
            substeps: int = ORACLE_SUBSTEPS) -> ComparisonReport:
    """逐个 N 比较连续代价与离散最优代价"""
    report = ComparisonReport(traj.cost, tol_opt=tol_opt)
    for N in N_ladder:
        result = solve_discrete(discretize(p, N, substeps), p.x0)
        gap = abs(traj.cost - result.optimal_cost)
        report.rows.append(ComparisonRow(int(N), result.optimal_cost, gap,
                                         bool(result.optimal_cost <= traj.cost + tol_opt)))
        logger.info(f"oracle N={N}: J_discrete={result.optimal_cost:.12g}, gap={gap:.3e}")
    if not report.ok:
        logger.warning(f"离散最优代价低于连续代价超过 {tol_opt}，连续控制可能不是最优")
    return report
