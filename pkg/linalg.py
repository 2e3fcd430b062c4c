"""稠密矩阵工具：Moore-Penrose 伪逆、值域包含判定、线性矩阵方程 LXM=N、投影分解 T0"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from config import TOL_RANGE, TOL_RANK
from utils import InputError


@dataclass(frozen=True)
class RankedPinv:
    pinv: np.ndarray
    rank: int
    singular_values: np.ndarray


@dataclass(frozen=True)
class ProjectorDecomposition:
    t0_mat: np.ndarray  # 正交矩阵 T0
    upsilon_T0: np.ndarray  # (m-m0) x m，行正交
    g0: np.ndarray  # m x (m-m0)，T0^{-1} 的后 m-m0 列
    m0: int


@dataclass(frozen=True)
class NoSolution:
    reason: str

    def __bool__(self):
        return False


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(value, dtype=float))
    if m.ndim != 2:
        raise InputError(f"{name} 必须是二维矩阵，实际维度 {m.ndim}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} 含有非有限数值")
    return m


def sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def rank_threshold(singular_values: np.ndarray, shape, rank_tol: float) -> float:
    if singular_values.size == 0:
        return 0.0
    return rank_tol * float(singular_values[0]) * max(shape)


def pinv(m, rank_tol: float = TOL_RANK) -> RankedPinv:
    """
    SVD 伪逆，奇异值阈值 = rank_tol * sigma_max * max(rows, cols)
    :param m: 任意形状的有限矩阵
    :param rank_tol: 相对秩阈值
    """
    m = as_matrix(m, "M")
    rows, cols = m.shape
    if m.size == 0:
        return RankedPinv(np.zeros((cols, rows)), 0, np.zeros(0))

    u, s, vh = np.linalg.svd(m, full_matrices=False)
    cutoff = rank_threshold(s, m.shape, rank_tol)
    keep = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    p = (vh.T * s_inv) @ u.T
    return RankedPinv(p, int(np.count_nonzero(keep)), s)


def range_included(n, l, tol: float = TOL_RANGE, rank_tol: float = TOL_RANK) -> bool:
    """Range(N) ⊆ Range(L)  <=>  ||L L† N - N|| <= tol (1 + ||N||)"""
    n = as_matrix(n, "N")
    l = as_matrix(l, "L")
    if n.shape[0] != l.shape[0]:
        raise InputError(f"行数不一致: N {n.shape} vs L {l.shape}")
    if n.size == 0:
        return True
    lp = pinv(l, rank_tol).pinv
    return np.linalg.norm(l @ (lp @ n) - n) <= tol * (1.0 + np.linalg.norm(n))


def solve_linear_matrix_eq(l, m, n, tol: float = TOL_RANGE, rank_tol: float = TOL_RANK,
                           y: Optional[np.ndarray] = None) -> Union[np.ndarray, NoSolution]:
    """
    求解 L X M = N。可解时返回 X = L†NM† + Y - L†LYMM†（默认 Y=0，即最小范数解）
    :return: 解矩阵，或 NoSolution
    """
    l = as_matrix(l, "L")
    m = as_matrix(m, "M")
    n = as_matrix(n, "N")
    if n.shape != (l.shape[0], m.shape[1]):
        raise InputError(f"维度不匹配: L {l.shape}, M {m.shape}, N {n.shape}")

    lp = pinv(l, rank_tol).pinv
    mp = pinv(m, rank_tol).pinv
    scale = tol * (1.0 + np.linalg.norm(n))

    # L L† N M† M = N 拆成列空间与行空间两个条件
    if np.linalg.norm(n @ mp @ m - n) > scale:
        return NoSolution("Range(Nᵀ) ⊄ Range(Mᵀ)")
    if not range_included(n, l, tol, rank_tol):
        return NoSolution("Range(N) ⊄ Range(L)")

    x = lp @ n @ mp
    if y is not None:
        y = as_matrix(y, "Y")
        if y.shape != x.shape:
            raise InputError(f"Y 的形状应为 {x.shape}，实际 {y.shape}")
        x = x + y - lp @ l @ y @ m @ mp

    residual = np.linalg.norm(l @ x @ m - n)
    if residual > scale:
        return NoSolution(f"残差 {residual:.3e} 超过容差")
    return x


def check_symmetric_psd(m: np.ndarray, name: str, tol: float = 1e-10) -> list:
    """返回违规描述列表，空列表表示对称半正定"""
    problems = []
    scale = 1.0 + np.max(np.abs(m), initial=0.0)
    if np.max(np.abs(m - m.T), initial=0.0) > tol * scale:
        problems.append(f"{name} not symmetric")
        return problems
    if m.size and np.linalg.eigvalsh(sym(m))[0] < -tol * scale:
        problems.append(f"{name} not PSD")
    return problems


def _normalize_rows(rows: np.ndarray) -> np.ndarray:
    # 每行最大分量取正号，保证分解可复现
    out = rows.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def projector_decomposition(upsilon0, rank_tol: float = TOL_RANK) -> ProjectorDecomposition:
    """
    构造正交 T0，使 T0 (I - Υ0†Υ0) = [0; Υ_T0]
    T0 的前 m0 行是投影核空间的正交基，后 m-m0 行是投影值域的正交基
    """
    upsilon0 = as_matrix(upsilon0, "Υ0")
    m = upsilon0.shape[0]
    if upsilon0.shape != (m, m):
        raise InputError(f"Υ0 必须是方阵，实际 {upsilon0.shape}")
    problems = check_symmetric_psd(upsilon0, "Υ0")
    if problems:
        raise InputError(", ".join(problems))

    ranked = pinv(upsilon0, rank_tol)
    m0 = ranked.rank
    projector = sym(np.eye(m) - ranked.pinv @ upsilon0)
    # eigh 升序：前 m0 个特征值≈0（核），后 m-m0 个≈1（值域）
    _, vecs = np.linalg.eigh(projector)
    t0_mat = _normalize_rows(vecs.T)
    upsilon_T0 = t0_mat[m0:, :]
    g0 = t0_mat.T[:, m0:]
    return ProjectorDecomposition(t0_mat, upsilon_T0, g0, m0)
