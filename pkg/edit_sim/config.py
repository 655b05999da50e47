"""
实验配置模块

单个 JSON 文档描述一次实验，由 pydantic 模型逐块校验，未知字段一律拒绝。
校验失败统一转换为 ConfigError，消息中带出错字段的点分路径（如 "mesh.M"）。

配置块:
- task: 任务（含目标损坏计划）
- mesh: 设备网格
- protocol: 协议名、同步参数、消融开关
- inner / outer / schedule: 优化器与学习率调度
- timing: 成本模型、扰动注入、同步策略
- matrix / sweep / elastic: 实验矩阵、学习率扫描、弹性链式运行
- output: 输出目录
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

# 消融预设名 -> (异常剔除, 加权平均, 梯度裁剪)
ABLATION_PRESETS: Dict[str, Tuple[bool, bool, bool]] = {
    "full": (True, True, True),
    "w/o AE": (False, True, True),
    "w/o WA": (True, False, True),
    "w/o GC": (True, True, False),
    "w/o ALL": (False, False, False),
}

PROTOCOL_NAMES = ("baseline", "post_local_sgd", "diloco", "edit", "a_edit")


class StrictModel(BaseModel):
    """拒绝未知字段的基类"""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class CorruptionConfig(StrictModel):
    """目标损坏计划（用于制造损失尖峰）"""

    workers: List[int] = Field(default_factory=list)
    factor: float = Field(default=1.0, gt=0)
    start_round: int = Field(default=0, ge=0)
    every: int = Field(default=1, ge=1)


class TaskConfig(StrictModel):
    """任务配置"""

    kind: Literal["quadratic", "mlp"] = "quadratic"
    # quadratic 维度与条件数
    n: int = Field(default=32, ge=2)
    cond: float = Field(default=10.0, ge=1)
    num_layers: int = Field(default=4, ge=1)
    # mlp 各层宽度（含输入、输出）
    mlp_dims: List[int] = Field(default_factory=lambda: [8, 16, 16, 16, 4])
    # 截断高斯噪声
    noise_std: float = Field(default=0.1, ge=0)
    noise_clip: float = Field(default=1.0, gt=0)
    # quadratic 的 Huber 半径与初始化半径
    domain_radius: float = Field(default=100.0, gt=0)
    init_radius: float = Field(default=1.0, ge=0)
    # mlp 验证集大小
    val_size: int = Field(default=256, ge=1)
    # 问题实例种子，为空时跟随运行种子
    seed: Optional[int] = None
    corruption: CorruptionConfig = Field(default_factory=CorruptionConfig)


class MeshConfig(StrictModel):
    """M 行（同步组）× N 列（分片组）"""

    M: int = Field(default=1, ge=1)
    N: int = Field(default=4, ge=1)


class SyncSettings(StrictModel):
    """同步参数"""

    tau: int = Field(default=128, ge=1)
    t_warm: int = Field(default=0, ge=0)
    delta: float = Field(default=3.0, gt=0)
    alpha: float = Field(default=0.02, gt=0, le=1)
    phi: float = Field(default=10.0, gt=0)
    eps: float = Field(default=1e-6, gt=0)
    ema_warmup_rounds: int = Field(default=10, ge=0)


class AblationConfig(StrictModel):
    """惩罚组件开关；preset 优先于单独开关"""

    preset: Optional[str] = None
    anomaly_elimination: bool = True
    weighted_averaging: bool = True
    gradient_clip: bool = True

    @model_validator(mode="after")
    def _apply_preset(self) -> "AblationConfig":
        if self.preset is None:
            return self
        if self.preset not in ABLATION_PRESETS:
            raise ValueError(f"未知消融预设 {self.preset!r}，可选 {sorted(ABLATION_PRESETS)}")
        ae, wa, gc = ABLATION_PRESETS[self.preset]
        # 绕开 validate_assignment 以免递归
        object.__setattr__(self, "anomaly_elimination", ae)
        object.__setattr__(self, "weighted_averaging", wa)
        object.__setattr__(self, "gradient_clip", gc)
        return self


class ProtocolConfig(StrictModel):
    name: Literal["baseline", "post_local_sgd", "diloco", "edit", "a_edit"] = "edit"
    sync: SyncSettings = Field(default_factory=SyncSettings)
    ablation: AblationConfig = Field(default_factory=AblationConfig)


class InnerOptimizerConfig(StrictModel):
    kind: Literal["sgd", "adamw"] = "adamw"
    lr: float = Field(default=1.5e-4, gt=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)


class OuterOptimizerConfig(StrictModel):
    kind: Literal["sgd", "nesterov"] = "nesterov"
    lr: float = Field(default=0.8, gt=0)
    momentum: float = Field(default=0.85, ge=0, lt=1)


class ScheduleConfig(StrictModel):
    kind: Literal["constant", "cosine", "inv_sqrt"] = "cosine"
    warmup_steps: int = Field(default=0, ge=0)
    min_lr_ratio: float = Field(default=0.1, gt=0, le=1)


class CostModelConfig(StrictModel):
    """alpha-beta 成本模型（秒、秒/字节）"""

    compute_time_per_param: float = Field(default=1.9e-10, ge=0)
    intra_alpha: float = Field(default=1e-5, ge=0)
    intra_beta: float = Field(default=1.0 / 200e9, ge=0)
    inter_alpha: float = Field(default=5e-5, ge=0)
    inter_beta: float = Field(default=1.74e-11, ge=0)
    overlap: Literal["none", "prefetch"] = "prefetch"
    offload_penalty: float = Field(default=0.0, ge=0)


class InjectorConfig(StrictModel):
    kind: Literal["none", "random_straggler", "consistent_straggler", "limited_bandwidth"] = "none"
    lag_seconds: float = Field(default=0.0, ge=0)
    repeat_factor: float = Field(default=1.0, ge=1)
    # consistent_straggler 的目标节点
    target_workers: List[int] = Field(default_factory=lambda: [0])
    # 节点计算时间倍率，用于构造异构节点
    compute_scale: Dict[int, float] = Field(default_factory=dict)


class PolicyConfig(StrictModel):
    kind: Literal["step", "time"] = "step"
    tau_time: float = Field(default=600.0, gt=0)


class PlanConfig(StrictModel):
    """纯计时场景的模型规模（不跑数值）"""

    layers: int = Field(default=32, ge=1)
    params_per_layer: float = Field(default=2.1875e8, gt=0)
    M: int = Field(default=8, ge=1)
    N: int = Field(default=8, ge=1)
    # 每节点每步样本数
    batch_size: int = Field(default=1, ge=1)


class TimingConfig(StrictModel):
    enabled: bool = False
    cost: CostModelConfig = Field(default_factory=CostModelConfig)
    injector: InjectorConfig = Field(default_factory=InjectorConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    plan: Optional[PlanConfig] = None


class ScenarioConfig(StrictModel):
    """实验矩阵中的一个扰动场景"""

    name: str
    injector: InjectorConfig = Field(default_factory=InjectorConfig)


class MatrixConfig(StrictModel):
    # 为空时只跑 protocol.name
    protocols: List[Literal["baseline", "post_local_sgd", "diloco", "edit", "a_edit"]] = Field(default_factory=list)
    # 为空时使用 timing.injector 作为唯一场景
    scenarios: List[ScenarioConfig] = Field(default_factory=list)


class SweepConfig(StrictModel):
    lr_grid: List[float] = Field(default_factory=lambda: [3e-5, 6e-5, 1.5e-4, 3e-4, 6e-4])
    worker_counts: List[int] = Field(default_factory=lambda: [1, 2, 4])
    protocols: List[Literal["baseline", "post_local_sgd", "diloco", "edit", "a_edit"]] = Field(
        default_factory=lambda: ["baseline", "edit"]
    )

    @model_validator(mode="after")
    def _check_grid(self) -> "SweepConfig":
        if self.lr_grid != sorted(self.lr_grid):
            raise ValueError("lr_grid 必须升序")
        if any(k < 1 for k in self.worker_counts):
            raise ValueError("worker_counts 必须 >= 1")
        return self


class ElasticPhase(StrictModel):
    workers: int = Field(ge=1)
    # 本阶段内层步数，按 τ 向上取整为轮数
    steps: int = Field(ge=1)


class ElasticConfig(StrictModel):
    phases: List[ElasticPhase] = Field(default_factory=list)


class OutputConfig(StrictModel):
    dir: str = "runs"
    summary_name: str = "summary.csv"


class ExperimentConfig(StrictModel):
    """实验完整配置"""

    name: str = "experiment"
    task: TaskConfig = Field(default_factory=TaskConfig)
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    inner: InnerOptimizerConfig = Field(default_factory=InnerOptimizerConfig)
    outer: OuterOptimizerConfig = Field(default_factory=OuterOptimizerConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    # 外层轮数 T
    rounds: int = Field(default=100, ge=1)
    # 每节点批大小
    batch_size: int = Field(default=8, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    timing: TimingConfig = Field(default_factory=TimingConfig)
    matrix: MatrixConfig = Field(default_factory=MatrixConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    elastic: ElasticConfig = Field(default_factory=ElasticConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """校验字典；失败时抛出带字段路径的 ConfigError"""
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise _to_config_error(e) from None

    @classmethod
    def load(cls, config_path: Union[str, Path]) -> "ExperimentConfig":
        """从 JSON 文件加载配置"""
        path = Path(config_path)
        logger.debug(f"加载配置文件: {path}")
        if not path.exists():
            raise ConfigError(f"配置文件不存在: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"JSON 解析失败: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("配置文件顶层必须是对象")
        return cls.from_dict(data)

    def save(self, config_path: Union[str, Path]) -> bool:
        """保存配置到 JSON 文件"""
        path = Path(config_path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self.model_dump(mode="json"), f, indent=2, ensure_ascii=False, sort_keys=True)
            logger.debug(f"配置已保存: {path}")
            return True
        except OSError as e:
            logger.error(f"保存配置失败: {e}")
            return False

    def with_overrides(
        self,
        seed: Optional[int] = None,
        protocol: Optional[str] = None,
        out: Optional[str] = None,
    ) -> "ExperimentConfig":
        """应用命令行覆盖，返回新配置"""
        data = self.model_dump(mode="json")
        if seed is not None:
            data["seeds"] = [seed]
        if protocol is not None:
            data["protocol"]["name"] = protocol
            data["matrix"]["protocols"] = []
        if out is not None:
            data["output"]["dir"] = out
        return ExperimentConfig.from_dict(data)

    def protocols(self) -> List[str]:
        return list(self.matrix.protocols) or [self.protocol.name]

    def scenarios(self) -> List[ScenarioConfig]:
        if self.matrix.scenarios:
            return list(self.matrix.scenarios)
        return [ScenarioConfig(name="default", injector=self.timing.injector)]


def _to_config_error(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    path = ".".join(str(part) for part in first.get("loc", ()))
    return ConfigError(first.get("msg", "非法值"), path or None)


def load_config(config_path: Union[str, Path]) -> ExperimentConfig:
    """加载配置（便捷函数）"""
    return ExperimentConfig.load(config_path)


def save_config(config: ExperimentConfig, config_path: Union[str, Path]) -> bool:
    """保存配置（便捷函数）"""
    return config.save(config_path)
