"""控制器综合：正则反馈、第二层终值选取与可解性、开环 Gramian 综合、闭环增益综合、完整控制组装"""
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import orthogonal_procrustes

from config import EIG_OVERLAP, TOL_GAMMA, TOL_RANGE, TOL_RANK
from integrate import MatrixGridFunction, RiccatiSolution, fundamental_solution, quadrature, rk4_forward, transition_from
from linalg import NoSolution, pinv, range_included, solve_linear_matrix_eq, sym
from reduce import ReducedSystem, classify
from utils import MisuseError, logger

REGULAR_FEEDBACK = "regular-feedback"
IRREGULAR_OPEN_LOOP = "irregular-open-loop"
IRREGULAR_CLOSED_LOOP = "irregular-closed-loop"


@dataclass(frozen=True)
class LayerTwoSolution:
    p1_terminal: np.ndarray
    P1: MatrixGridFunction
    gamma1: np.ndarray  # 每个节点的 ||Γ1(t)||
    gamma1_max: float
    solvable: bool


@dataclass(frozen=True)
class NoGain:
    reason: str
    node: int = -1
    t: float = float("nan")

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Unsupported:
    reason: str
    node: int = -1

    def __bool__(self):
        return False


@dataclass(frozen=True)
class NotOpenLoopSolvable:
    reason: str
    gramian: Optional[np.ndarray] = None

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Controller:
    """
    综合得到的控制器。仿真只用全输入坐标（m 维）下的量，与 T0 的基选取无关：
      feedback     m x n 反馈增益；singular_at_T 时存的是 (t-T)·增益，且不含终端节点
      feedforward  m x 1 时间函数控制（开环）
    闭环非正则时 basis 为最后一个内部节点的 𝒯1，前 basis_rank 列张成 P1 的值域
    """
    kind: str
    P: MatrixGridFunction
    m: int
    P1: Optional[MatrixGridFunction] = None
    feedback: Optional[MatrixGridFunction] = None
    feedforward: Optional[MatrixGridFunction] = None
    singular_at_T: bool = False
    K0: Optional[MatrixGridFunction] = None
    u1_profile: Optional[MatrixGridFunction] = None
    zeta: Optional[np.ndarray] = None
    gramian: Optional[np.ndarray] = None
    x_nominal: Optional[np.ndarray] = None
    K1: Optional[MatrixGridFunction] = None
    basis: Optional[np.ndarray] = None
    basis_rank: int = 0
    path: str = ""

    @property
    def T(self) -> float:
        return float(self.P.times[-1])

    @property
    def times(self) -> np.ndarray:
        return self.P.times

    def feedback_gain(self, t: float) -> np.ndarray:
        if self.feedback is None:
            return np.zeros((self.m, self.P.shape[0]))
        if self.singular_at_T:
            return self.feedback.at(t) / (t - self.T)
        return self.feedback.at(t)

    def feedforward_at(self, t: float) -> np.ndarray:
        if self.feedforward is None:
            return np.zeros(self.m)
        return self.feedforward.at(t)[:, 0]

    def control(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.feedback_gain(t) @ x + self.feedforward_at(t)


# ---------- 正则情形 ----------
def solve_regular(p, P: RiccatiSolution, classification=None, tol: float = TOL_RANGE,
                  rank_tol: float = TOL_RANK) -> Controller:
    """K0(t) = -Υ0†(t)Γ0(t)，自由项 z 取零，Θ ≡ 0"""
    classification = classification or classify(p, P, tol, rank_tol)
    if not classification.regular:
        raise MisuseError("solve_regular 只能用于正则问题，当前分类为 Irregular")
    nodes = p.grid.nodes
    gains = np.stack([-pinv(p.R(t), rank_tol).pinv @ p.B(t).T @ P.P[k] for k, t in enumerate(nodes)])
    K0 = MatrixGridFunction(nodes, gains)
    logger.info(f"正则反馈综合完成: K0(t0)={np.array2string(gains[0], precision=6)}")
    return Controller(kind=REGULAR_FEEDBACK, P=P.P, m=p.m, feedback=K0, K0=K0, path="regular")


# ---------- 第二层 ----------
def _symmetric_min_norm(l: np.ndarray, n: np.ndarray, tol: float, rank_tol: float) -> Union[np.ndarray, NoSolution]:
    # 对称未知量向量化：X = Σ s_ij E_ij，E_ij 取正交归一的对称基
    size = l.shape[1]
    basis = []
    for i in range(size):
        for j in range(i, size):
            e = np.zeros((size, size))
            e[i, j] = e[j, i] = 1.0 if i == j else np.sqrt(0.5)
            basis.append(e)
    system = np.stack([(l @ e).reshape(-1) for e in basis], axis=1)
    coeffs = pinv(system, rank_tol).pinv @ n.reshape(-1)
    x = np.einsum("k,kij->ij", coeffs, np.stack(basis))
    if np.linalg.norm(l @ x - n) > tol * (1.0 + np.linalg.norm(n)):
        return NoSolution("不存在满足 B0ᵀ(T)X = -C0(T) 的对称解")
    return x


def select_p1_terminal(reduced: ReducedSystem, tol: float = TOL_RANGE,
                       rank_tol: float = TOL_RANK) -> Union[np.ndarray, NoSolution]:
    """
    选取 P1(T)：B0ᵀ(T)X = -C0(T) 的最小范数对称解
    :return: n x n 对称矩阵，或 NoSolution
    """
    l = reduced.b0[-1].T
    n = -reduced.c0[-1]
    size = reduced.a0.shape[0]
    x = solve_linear_matrix_eq(l, np.eye(size), n, tol, rank_tol)
    if isinstance(x, NoSolution):
        logger.warning(f"终值方程无解: {x.reason}")
        return x
    x_sym = sym(x)
    if np.linalg.norm(l @ x_sym - n) <= tol * (1.0 + np.linalg.norm(n)):
        logger.info(f"P1(T) 选取完成: {np.array2string(x_sym, precision=6)}")
        return x_sym
    logger.debug("对称化破坏了终值方程，改用对称约束最小范数解")
    x_sym = _symmetric_min_norm(l, n, tol, rank_tol)
    if isinstance(x_sym, NoSolution):
        logger.warning(f"终值方程无对称解: {x_sym.reason}")
    return x_sym


def check_solvability(reduced: ReducedSystem, P1: RiccatiSolution, tol_gamma: float = TOL_GAMMA) -> LayerTwoSolution:
    """Γ1(t) = C0(t) + B0ᵀ(t)P1(t) 是否在全时域为零"""
    gamma1 = np.array([np.linalg.norm(reduced.c0[k] + reduced.b0[k].T @ P1.P[k]) for k in range(len(P1.P))])
    gamma1_max = float(gamma1.max(initial=0.0))
    solvable = gamma1_max <= tol_gamma * (1.0 + P1.P.max_norm())
    if solvable:
        logger.info(f"第二层条件成立: gamma1_max={gamma1_max:.3e}")
    else:
        worst = int(np.argmax(gamma1))
        logger.warning(f"第二层条件不成立: gamma1_max={gamma1_max:.6g} (t={P1.P.times[worst]:.6g})，"
                       f"按最小范数终值判定不可解")
    return LayerTwoSolution(P1.P[-1], P1.P, gamma1, gamma1_max, bool(solvable))


# ---------- 完整控制 ----------
def layer_one_gain(reduced: ReducedSystem, P1: MatrixGridFunction, t: float) -> np.ndarray:
    """-Υ0†(Γ0 + BᵀP1)：由第一层平衡条件确定的那部分反馈"""
    return -reduced.upsilon0_pinv.at(t) @ (reduced.gamma0.at(t) + reduced.b.at(t).T @ P1.at(t))


def assemble_full_control(reduced: ReducedSystem, l2: LayerTwoSolution,
                          u1_at: Callable[[float, np.ndarray], np.ndarray]) -> Callable[[float, np.ndarray], np.ndarray]:
    """u(t,x) = -Υ0†(t)(Γ0(t)x + Bᵀ(t)Θ(t)) + G0(t)u1，Θ = P1x"""
    if not l2.solvable:
        raise MisuseError("第二层条件不成立，不能组装控制")

    def control(t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u1 = np.asarray(u1_at(t, x), dtype=float).reshape(-1)
        return layer_one_gain(reduced, l2.P1, t) @ x + reduced.g0.at(t) @ u1

    return control


# ---------- 开环 ----------
def open_loop(p, reduced: ReducedSystem, l2: LayerTwoSolution, tol: float = TOL_RANGE,
              rank_tol: float = TOL_RANK) -> Union[Controller, NotOpenLoopSolvable]:
    """
    G1[t0,T] = ∫ P2(t0,s)C0ᵀC0P2ᵀ(t0,s) ds，Range(P1(t0)) ⊆ Range(G1) 时
    ζ = G1†P1(t0)x0，u1(t) = C0(t)P2ᵀ(t0,t)ζ
    """
    if not l2.solvable:
        raise MisuseError("第二层条件不成立，开环综合无意义")
    nodes = reduced.times
    P2 = transition_from(fundamental_solution(reduced), nodes[0])

    # 逐节点顺序累加，保证结果可复现
    integrand = MatrixGridFunction(nodes, np.stack([
        P2[k] @ reduced.c0[k].T @ reduced.c0[k] @ P2[k].T for k in range(len(nodes))]))
    gramian = sym(quadrature(integrand))
    p1_t0 = l2.P1[0]
    if not range_included(p1_t0, gramian, tol, rank_tol):
        logger.warning("Range(P1(t0)) ⊄ Range(G1)，开环不可解")
        return NotOpenLoopSolvable("Range(P1(t0)) ⊄ Range(G1[t0,T])", gramian)

    zeta = pinv(gramian, rank_tol).pinv @ p1_t0 @ p.x0
    u1 = np.stack([(reduced.c0[k] @ P2[k].T @ zeta)[:, None] for k in range(len(nodes))])
    u1_profile = MatrixGridFunction(nodes, u1)

    # 名义轨迹 ẋ = (A0 + D0P1)x + B0u1，Θ = P1x 沿它取值
    closed = MatrixGridFunction(nodes, reduced.a0.values + reduced.d0.values @ l2.P1.values)
    drive = MatrixGridFunction(nodes, reduced.b0.values @ u1)
    x_nominal = rk4_forward(lambda t, x: closed.at(t) @ x + drive.at(t)[:, 0], p.x0, nodes, what="名义轨迹")

    control = assemble_full_control(reduced, l2, lambda t, x: u1_profile.at(t))
    u_full = np.stack([control(t, x_nominal[k])[:, None] for k, t in enumerate(nodes)])
    logger.info(f"开环综合完成: G1={np.array2string(gramian, precision=6)}, ζ={np.array2string(zeta, precision=6)}")
    return Controller(kind=IRREGULAR_OPEN_LOOP, P=reduced.P, m=p.m,
                      P1=l2.P1, feedforward=MatrixGridFunction(nodes, u_full), u1_profile=u1_profile,
                      zeta=zeta, gramian=gramian, x_nominal=x_nominal, path="open-loop")


# ---------- 闭环 ----------
def _closed_loop_controller(reduced: ReducedSystem, l2: LayerTwoSolution, scaled_k1: np.ndarray,
                            basis: np.ndarray, rank: int, path: str) -> Controller:
    """scaled_k1[k] = (t_k - T)·K1(t_k)，k 取全部内部节点"""
    nodes = reduced.times
    interior = nodes[:-1]
    T = nodes[-1]
    K1 = MatrixGridFunction(interior, np.stack([x / (t - T) for t, x in zip(interior, scaled_k1)]))
    # (t-T)·u 的反馈：(t-T)·(-Υ0†(Γ0 + BᵀP1)) + G0·(t-T)K1
    scaled = np.stack([(t - T) * layer_one_gain(reduced, l2.P1, t) + reduced.g0[k] @ scaled_k1[k]
                       for k, t in enumerate(interior)])
    logger.info(f"闭环增益综合完成 ({path}): rank(P1)={rank}, K1(t0)={np.array2string(K1[0], precision=6)}")
    return Controller(kind=IRREGULAR_CLOSED_LOOP, P=reduced.P, m=reduced.g0.shape[0], P1=l2.P1,
                      feedback=MatrixGridFunction(interior, scaled), singular_at_T=True, K1=K1,
                      basis=basis, basis_rank=rank, path=path)


def closed_loop_nonsingular(reduced: ReducedSystem, l2: LayerTwoSolution, tol: float = TOL_RANGE,
                            rank_tol: float = TOL_RANK) -> Union[Controller, NoGain]:
    """逐内部节点解 B0(t)K1(t) = I/(t-T) - A0(t) - D0(t)P1(t)"""
    if not l2.solvable:
        raise MisuseError("第二层条件不成立，闭环综合无意义")
    nodes = reduced.times
    T = nodes[-1]
    n = reduced.a0.shape[0]
    scaled = []
    for k, t in enumerate(nodes[:-1]):
        if pinv(l2.P1[k], rank_tol).rank < n:
            logger.warning(f"P1 在 t={t:.6g} 奇异，非奇异闭环路径不适用")
            return NoGain(f"P1 在 t={t:.6g} 奇异", k, float(t))
        # 两边乘以 (t-T)：B0·X = I - (t-T)(A0 + D0P1)，X = (t-T)K1
        rhs = np.eye(n) - (t - T) * (reduced.a0[k] + reduced.d0[k] @ l2.P1[k])
        x = solve_linear_matrix_eq(reduced.b0[k], np.eye(n), rhs, tol, rank_tol)
        if isinstance(x, NoSolution):
            logger.warning(f"闭环增益方程在 t={t:.6g} 无解: {x.reason}")
            return NoGain(x.reason, k, float(t))
        scaled.append(x)
    return _closed_loop_controller(reduced, l2, np.stack(scaled), np.eye(n), n, "closed-loop-nonsingular")


def _sorted_eigenvectors(P1: np.ndarray) -> np.ndarray:
    """P1 的特征向量，按 |λ| 降序排列"""
    values, vectors = np.linalg.eigh(sym(P1))
    order = np.argsort(-np.abs(values), kind="stable")
    return vectors[:, order]


def _track_basis(P1: MatrixGridFunction, rank: int, overlap: float) -> Union[np.ndarray, Unsupported]:
    """
    逐节点特征分解并保持连续：值域块、核块分别用正交 Procrustes 对齐上一节点
    :return: (k, n, n) 的 𝒯1，或 Unsupported
    """
    bases = []
    previous = None
    for k in range(len(P1)):
        current = _sorted_eigenvectors(P1[k])
        if previous is None:
            # 首节点：每列最大分量取正号
            signs = np.sign(current[np.argmax(np.abs(current), axis=0), np.arange(current.shape[1])])
            current = current * np.where(signs == 0, 1.0, signs)
        else:
            blocks = []
            for cols in (slice(0, rank), slice(rank, None)):
                cur, prev = current[:, cols], previous[:, cols]
                if cur.shape[1] == 0:
                    blocks.append(cur)
                    continue
                cosines = np.linalg.svd(prev.T @ cur, compute_uv=False)
                if cosines.min() < overlap:
                    logger.warning(f"特征子空间在节点 {k} 不连续 (最小主角余弦 {cosines.min():.3f})")
                    return Unsupported(f"特征子空间在节点 {k} 不连续", k)
                rotation, _ = orthogonal_procrustes(cur, prev)
                blocks.append(cur @ rotation)
            current = np.hstack(blocks)
        bases.append(current)
        previous = current
    return np.stack(bases)


def closed_loop_singular(reduced: ReducedSystem, l2: LayerTwoSolution, tol: float = TOL_RANGE,
                         rank_tol: float = TOL_RANK,
                         overlap: float = EIG_OVERLAP) -> Union[Controller, NoGain, Unsupported]:
    """
    P1 在 [t0,T) 上秩恒为 r 时的闭环增益。y = 𝒯1ᵀx，要求 y 的前 r 行满足 ẏ1 = y1/(t-T)：
      E = 𝒯1 的前 r 列，EᵀB0·K = Eᵀ/(t-T) - Ėᵀ - Eᵀ(A0 + D0P1)
    """
    if not l2.solvable:
        raise MisuseError("第二层条件不成立，闭环综合无意义")
    nodes = reduced.times
    interior = nodes[:-1]
    T = nodes[-1]
    n = reduced.a0.shape[0]
    ranks = np.array([pinv(l2.P1[k], rank_tol).rank for k in range(len(interior))])
    if np.any(ranks != ranks[0]):
        k = int(np.flatnonzero(ranks != ranks[0])[0])
        logger.warning(f"rank(P1) 在 t={nodes[k]:.6g} 变化")
        return Unsupported(f"rank(P1) 在 t={nodes[k]:.6g} 由 {ranks[0]} 变为 {ranks[k]}", k)
    rank = int(ranks[0])
    if rank == n:
        return closed_loop_nonsingular(reduced, l2, tol, rank_tol)

    k_dim = reduced.k
    if rank == 0:
        # P1 ≡ 0：终端约束自动满足，K = 0
        logger.info("P1 ≡ 0，闭环增益取 K = 0")
        gains = np.stack([layer_one_gain(reduced, l2.P1, t) for t in nodes])
        return Controller(kind=IRREGULAR_CLOSED_LOOP, P=reduced.P, m=reduced.g0.shape[0], P1=l2.P1,
                          feedback=MatrixGridFunction(nodes, gains),
                          K1=MatrixGridFunction(interior, np.zeros((len(interior), k_dim, n))),
                          basis=np.eye(n), basis_rank=0, path="closed-loop-singular")

    interior_p1 = MatrixGridFunction(interior, l2.P1.values[:-1])
    bases = _track_basis(interior_p1, rank, overlap)
    if isinstance(bases, Unsupported):
        return bases
    ranges = bases[:, :, :rank]
    # 中心差分，端点单侧
    ranges_dot = np.gradient(ranges, interior, axis=0) if len(interior) > 1 else np.zeros_like(ranges)

    scaled = []
    for k, t in enumerate(interior):
        e, e_dot = ranges[k], ranges_dot[k]
        lhs = e.T @ reduced.b0[k]
        rhs = e.T - (t - T) * (e_dot.T + e.T @ (reduced.a0[k] + reduced.d0[k] @ l2.P1[k]))
        x = solve_linear_matrix_eq(lhs, np.eye(n), rhs, tol, rank_tol)
        if isinstance(x, NoSolution):
            logger.warning(f"第一块行方程在 t={t:.6g} 无解: {x.reason}")
            return NoGain(x.reason, k, float(t))
        scaled.append(x)
    return _closed_loop_controller(reduced, l2, np.stack(scaled), bases[-1], rank, "closed-loop-singular")
