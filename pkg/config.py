import os
from dataclasses import dataclass

from dotenv import load_dotenv

# 加载 .env 文件（如果存在）
load_dotenv()

# ---------- 全局配置 ----------
GRID_STEPS = int(os.getenv("LQ_GRID_STEPS", "1000"))
OUTPUT_DIR = os.getenv("LQ_OUTPUT_DIR", "output")

# 数值容差
TOL_RANK = float(os.getenv("LQ_TOL_RANK", "1e-9"))  # 相对奇异值阈值
TOL_GAMMA = float(os.getenv("LQ_TOL_GAMMA", "1e-6"))
TOL_RANGE = float(os.getenv("LQ_TOL_RANGE", "1e-8"))
TOL_OPT = float(os.getenv("LQ_TOL_OPT", "1e-4"))

# 闭环奇异情形：特征子空间跟踪阈值
EIG_OVERLAP = float(os.getenv("LQ_EIG_OVERLAP", "0.9"))

# 离散化校验（oracle）配置
ORACLE_LADDER = [int(n) for n in os.getenv("LQ_ORACLE_LADDER", "50,100,200").split(",") if n.strip()]
ORACLE_SUBSTEPS = int(os.getenv("LQ_ORACLE_SUBSTEPS", "4"))

# 日志配置
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")


@dataclass(frozen=True)
class Tolerances:
    rank: float = TOL_RANK
    gamma: float = TOL_GAMMA
    range: float = TOL_RANGE
    opt: float = TOL_OPT
    overlap: float = EIG_OVERLAP

    def as_dict(self) -> dict:
        return {"rank": self.rank, "gamma": self.gamma, "range": self.range,
                "opt": self.opt, "overlap": self.overlap}
