"""
统一日志系统

控制台彩色输出 + 可选的轮转文件日志，格式:
    [时间] [级别] [run_id] [模块名:行号] 消息内容

- DEBUG: 灰色（逐步/逐层细节）
- INFO: 蓝色（运行开始、结束、汇总）
- WARNING: 黄色（回滚、异常剔除、趋势检查未通过）
- ERROR: 红色（单元失败，附带堆栈）

run_id 通过 contextvars 注入，并行执行多个实验单元时可以区分日志来源。
日志永远不写入指标文件，指标文件的字节内容与日志级别无关。
"""

import contextvars
import logging
import os
import sys
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from typing import Iterator, Optional

# 当前实验单元标识，未设置时显示 "-"
_current_run_id: contextvars.ContextVar[str] = contextvars.ContextVar(
    "edit_sim_run_id", default="-"
)

LOG_LEVEL_ENV = "EDIT_SIM_LOG_LEVEL"

DEFAULT_FORMAT = "[%(asctime)s] [%(levelname)s] [%(run_id)s] [%(name)s:%(lineno)d] %(message)s"
DEFAULT_DATEFMT = "%Y-%m-%d %H:%M:%S"


class ColorCodes:
    """ANSI 颜色代码"""

    RESET = "\033[0m"
    GRAY = "\033[90m"
    CYAN = "\033[36m"
    MAGENTA = "\033[35m"
    BRIGHT_RED = "\033[91m"
    BRIGHT_YELLOW = "\033[93m"
    BRIGHT_BLUE = "\033[94m"
    BOLD = "\033[1m"


class ColoredFormatter(logging.Formatter):
    """彩色日志格式化器"""

    LEVEL_COLORS = {
        logging.DEBUG: ColorCodes.GRAY,
        logging.INFO: ColorCodes.BRIGHT_BLUE,
        logging.WARNING: ColorCodes.BRIGHT_YELLOW,
        logging.ERROR: ColorCodes.BRIGHT_RED,
        logging.CRITICAL: ColorCodes.BOLD + ColorCodes.BRIGHT_RED,
    }

    def __init__(
        self,
        fmt: Optional[str] = None,
        datefmt: Optional[str] = None,
        use_colors: bool = True,
    ):
        super().__init__(fmt or DEFAULT_FORMAT, datefmt or DEFAULT_DATEFMT)
        self.use_colors = use_colors and self._supports_color()

    @staticmethod
    def _supports_color() -> bool:
        """检测终端是否支持颜色"""
        if os.environ.get("NO_COLOR"):
            return False
        return hasattr(sys.stderr, "isatty") and sys.stderr.isatty()

    def format(self, record: logging.LogRecord) -> str:
        if not hasattr(record, "run_id"):
            record.run_id = _current_run_id.get()
        if not self.use_colors:
            return super().format(record)

        color = self.LEVEL_COLORS.get(record.levelno, ColorCodes.RESET)
        original_format = self._style._fmt
        self._style._fmt = (
            f"[{ColorCodes.GRAY}%(asctime)s{ColorCodes.RESET}] "
            f"[{color}%(levelname)s{ColorCodes.RESET}] "
            f"[{ColorCodes.MAGENTA}%(run_id)s{ColorCodes.RESET}] "
            f"[{ColorCodes.CYAN}%(name)s{ColorCodes.RESET}:%(lineno)d] "
            f"{color}%(message)s{ColorCodes.RESET}"
        )
        try:
            return super().format(record)
        finally:
            self._style._fmt = original_format


class RunContextFilter(logging.Filter):
    """把当前 run_id 写入日志记录"""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = _current_run_id.get()
        return True


@contextmanager
def run_context(run_id: str) -> Iterator[None]:
    """
    在上下文内为日志附加 run_id

    示例:
        >>> with run_context("edit-lag4.5-s0"):
        ...     logger.info("开始运行")
    """
    token = _current_run_id.set(run_id)
    try:
        yield
    finally:
        _current_run_id.reset(token)


def level_from_env(default: int = logging.INFO) -> int:
    """读取 EDIT_SIM_LOG_LEVEL，非法值回退到默认级别"""
    raw = os.environ.get(LOG_LEVEL_ENV, "").strip().upper()
    if not raw:
        return default
    level = logging.getLevelName(raw)
    return level if isinstance(level, int) else default


def setup_logger(
    name: Optional[str] = None,
    level: int = logging.INFO,
    use_colors: bool = True,
    log_file: Optional[str] = None,
    file_level: int = logging.DEBUG,
    max_bytes: int = 10 * 1024 * 1024,  # 默认 10MB
    backup_count: int = 5,
) -> logging.Logger:
    """
    设置并返回配置好的日志器

    Args:
        name: 日志器名称，None 表示根日志器
        level: 控制台日志级别
        use_colors: 是否使用彩色输出
        log_file: 日志文件路径（可选，启用轮转）
        file_level: 文件日志级别
        max_bytes: 单个日志文件最大字节数
        backup_count: 保留的旧日志文件数量

    Returns:
        配置好的 Logger 实例
    """
    logger = logging.getLogger(name)

    # 避免重复配置
    if logger.handlers:
        return logger

    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(ColoredFormatter(use_colors=use_colors))
    console_handler.addFilter(RunContextFilter())
    logger.addHandler(console_handler)

    if log_file:
        try:
            log_dir = os.path.dirname(log_file)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = RotatingFileHandler(
                log_file, maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8"
            )
            file_handler.setLevel(file_level)
            # 文件日志不使用颜色
            file_handler.setFormatter(ColoredFormatter(use_colors=False))
            file_handler.addFilter(RunContextFilter())
            logger.addHandler(file_handler)
        except OSError as e:
            logger.warning(f"无法创建日志文件 {log_file}: {e}")

    return logger


def get_logger(name: str) -> logging.Logger:
    """获取日志器（便捷函数）"""
    return logging.getLogger(name)


def configure_root_logger(
    level: int = logging.INFO,
    use_colors: bool = True,
    log_file: Optional[str] = None,
    max_bytes: int = 10 * 1024 * 1024,
    backup_count: int = 5,
) -> None:
    """
    配置根日志器（影响所有模块的日志）

    EDIT_SIM_LOG_LEVEL 环境变量优先于 level 参数。
    """
    root_logger = logging.getLogger()
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    setup_logger(
        name=None,
        level=level_from_env(level),
        use_colors=use_colors,
        log_file=log_file,
        max_bytes=max_bytes,
        backup_count=backup_count,
    )


__all__ = [
    "setup_logger",
    "get_logger",
    "configure_root_logger",
    "run_context",
    "level_from_env",
    "ColoredFormatter",
    "RunContextFilter",
    "ColorCodes",
]
