import os
import json
import logging

import pandas as pd

from config import LOG_LEVEL


# 初始化日志
def setup_logger():
    logging.basicConfig(
        level=LOG_LEVEL,
        format="%(asctime)s [%(levelname)s] %(message)s"
    )
    return logging.getLogger("lq-irregular")

logger = setup_logger()


# ---------- 异常 ----------
class LQError(Exception):
    """所有求解流程异常的基类"""


class InputError(LQError, ValueError):
    """输入数据不合法（维度、对称性、半正定性、文件格式）"""


class UnsupportedRankVariation(InputError):
    """rank(Υ0(t)) 在时域上不恒定"""


class MisuseError(LQError):
    """在错误的分类下调用了综合函数"""


class NumericalError(LQError, ArithmeticError):
    """数值失败：发散或病态"""


class DivergenceError(NumericalError):
    def __init__(self, message: str, node: int = -1, t: float = float("nan")):
        super().__init__(message)
        self.node = node
        self.t = t


class ConditioningError(NumericalError):
    pass


# ---------- 文件操作 ----------
def ensure_dirs(path: str):
    if path:
        os.makedirs(path, exist_ok=True)


def write_atomic_csv(path: str, df: pd.DataFrame):
    tmp = f"{path}.tmp"
    df.to_csv(tmp, index=False, encoding="utf-8", float_format="%.17g")
    os.replace(tmp, path)


def write_atomic_text(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def write_atomic_json(path: str, data):
    write_atomic_text(path, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def read_json(path: str):
    """读取 UTF-8 JSON 文件，格式错误统一转成 InputError"""
    if not os.path.exists(path):
        raise InputError(f"{path} not found")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"无法解析 JSON 文件 {path}: {e}") from e


def fmt(x: float) -> str:
    """17 位有效数字，保证报告逐字节可复现"""
    return format(float(x), ".17g")
