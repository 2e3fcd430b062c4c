"""第一层分析：构造 Υ0、Γ0，判定正则/非正则，生成降阶系统 C0、B0、G0、A0、D0"""
from dataclasses import dataclass
from typing import Dict

import numpy as np

from config import TOL_RANGE, TOL_RANK
from integrate import MatrixGridFunction
from linalg import pinv, projector_decomposition, range_included, sym
from utils import UnsupportedRankVariation, logger

REGULAR = "Regular"
IRREGULAR = "Irregular"


@dataclass(frozen=True)
class Classification:
    verdict: str
    m0: int
    per_node_inclusion: np.ndarray

    @property
    def regular(self) -> bool:
        return self.verdict == REGULAR


@dataclass(frozen=True)
class ReducedSystem:
    upsilon0: MatrixGridFunction  # Υ0 = R, m x m
    upsilon0_pinv: MatrixGridFunction
    gamma0: MatrixGridFunction  # Γ0 = BᵀP, m x n
    upsilon_T0: MatrixGridFunction  # (m-m0) x m
    c0: MatrixGridFunction  # (m-m0) x n
    b0: MatrixGridFunction  # n x (m-m0)
    g0: MatrixGridFunction  # m x (m-m0)
    a0: MatrixGridFunction  # A - BΥ0†Γ0
    d0: MatrixGridFunction  # -BΥ0†Bᵀ
    b: MatrixGridFunction
    P: MatrixGridFunction  # 第一层 Riccati 解
    m0: int

    @property
    def times(self) -> np.ndarray:
        return self.a0.times

    @property
    def k(self) -> int:
        """u1 的维度 m - m0"""
        return self.c0.shape[0]


def _rank_profile(p, rank_tol: float) -> np.ndarray:
    return np.array([pinv(p.R(t), rank_tol).rank for t in p.grid.nodes])


def _require_constant_rank(ranks: np.ndarray, nodes: np.ndarray) -> int:
    if np.any(ranks != ranks[0]):
        k = int(np.flatnonzero(ranks != ranks[0])[0])
        raise UnsupportedRankVariation(
            f"rank(Υ0) 随时间变化: t={nodes[0]:.6g} 处为 {ranks[0]}，t={nodes[k]:.6g} 处为 {ranks[k]}")
    return int(ranks[0])


def classify(p, P, tol: float = TOL_RANGE, rank_tol: float = TOL_RANK) -> Classification:
    """
    逐节点判定 Range(Γ0(t)) ⊆ Range(Υ0(t))
    :param P: 第一层 Riccati 解 (RiccatiSolution)
    """
    nodes = p.grid.nodes
    m0 = _require_constant_rank(_rank_profile(p, rank_tol), nodes)
    inclusion = np.array([range_included(p.B(t).T @ P.P[k], p.R(t), tol, rank_tol)
                          for k, t in enumerate(nodes)])
    verdict = REGULAR if inclusion.all() else IRREGULAR
    if verdict == IRREGULAR:
        first = int(np.flatnonzero(~inclusion)[0])
        logger.info(f"分类结果: {verdict}, m0={m0}，值域包含在 t={nodes[first]:.6g} 处首次失败")
    else:
        logger.info(f"分类结果: {verdict}, m0={m0}")
    return Classification(verdict, m0, inclusion)


def reduce(p, P, rank_tol: float = TOL_RANK) -> ReducedSystem:
    nodes = p.grid.nodes
    grids: Dict[str, list] = {name: [] for name in
                              ("upsilon0", "upsilon0_pinv", "gamma0", "upsilon_T0", "c0", "b0", "g0", "a0", "d0", "b")}
    ranks = []
    for k, t in enumerate(nodes):
        A, B, _, R = p.mats(t)
        gamma0 = B.T @ P.P[k]
        r_pinv = pinv(R, rank_tol).pinv
        dec = projector_decomposition(R, rank_tol)
        ranks.append(dec.m0)
        projector = np.eye(p.m) - r_pinv @ R
        t0_inv = dec.t0_mat.T  # T0 正交
        # [* C0ᵀ] = Γ0ᵀ(I-Υ0†Υ0)T0⁻¹,  [* B0] = B(I-Υ0†Υ0)T0⁻¹
        c0 = (gamma0.T @ projector @ t0_inv)[:, dec.m0:].T
        b0 = (B @ projector @ t0_inv)[:, dec.m0:]
        grids["upsilon0"].append(R)
        grids["upsilon0_pinv"].append(r_pinv)
        grids["gamma0"].append(gamma0)
        grids["upsilon_T0"].append(dec.upsilon_T0)
        grids["c0"].append(c0)
        grids["b0"].append(b0)
        grids["g0"].append(dec.g0)
        grids["a0"].append(A - B @ r_pinv @ gamma0)
        grids["d0"].append(sym(-B @ r_pinv @ B.T))
        grids["b"].append(B)

    m0 = _require_constant_rank(np.array(ranks), nodes)
    fields = {name: MatrixGridFunction(nodes, np.stack(values)) for name, values in grids.items()}
    logger.info(f"降阶系统完成: m0={m0}, u1 维度 {p.m - m0}")
    return ReducedSystem(m0=m0, P=P.P, **fields)


def scaling_invariants(reduced: ReducedSystem) -> Dict[str, np.ndarray]:
    """与 T0 正交基选取无关的乘积 C0ᵀC0、B0B0ᵀ、B0C0、G0G0ᵀ（逐节点）"""
    c0, b0, g0 = reduced.c0.values, reduced.b0.values, reduced.g0.values
    return {
        "c0tc0": np.einsum("kji,kjl->kil", c0, c0),
        "b0b0t": np.einsum("kij,klj->kil", b0, b0),
        "b0c0": np.einsum("kij,kjl->kil", b0, c0),
        "g0g0t": np.einsum("kij,klj->kil", g0, g0),
    }
