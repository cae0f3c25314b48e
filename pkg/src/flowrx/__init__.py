"""Priority-aware receive path for embedded IP stacks: library and simulator."""

from .buffer_pool import BdRing
from .classifier import SocketTable, classify
from .engine import (IsrPath, MetricsStore, Mode, SimConfig, Simulator, TaskDescriptor,
                     FlowConfig, run, run_baseline)
from .flow_queues import EnqueueOutcome, FlowQueueSet
from .model import CostModel, FlowKey, FrameSpec, Packet, build_frame, decode_headers
from .rate_limiter import DeferrableServer, demand_bound
from .workload import Burst, ConstantRate, Poisson, WorkloadEntry, WorkloadSpec, generate

__version__ = "0.1.0"

__all__ = ["BdRing", "SocketTable", "classify", "IsrPath", "MetricsStore", "Mode", "SimConfig",
           "Simulator", "TaskDescriptor", "FlowConfig", "run", "run_baseline", "EnqueueOutcome",
           "FlowQueueSet", "CostModel", "FlowKey", "FrameSpec", "Packet", "build_frame",
           "decode_headers", "DeferrableServer", "demand_bound", "Burst", "ConstantRate", "Poisson",
           "WorkloadEntry", "WorkloadSpec", "generate", "__version__"]
