"""Random multi-flow simulator configurations shared by engine and acceptance tests."""

import dataclasses
import random

from flowrx.engine import BUSY, MEASUREMENT, FlowConfig, SimConfig, TaskDescriptor
from flowrx.model import MS, US, FrameSpec
from flowrx.workload import Burst, ConstantRate, Poisson, WorkloadEntry, WorkloadSpec


def random_config(seed, until=40 * MS, **over):
    rng = random.Random(seed)
    fl, entries = [], []
    for i in range(rng.randint(1, 4)):
        lim = rng.choice([None, (1, MS), (3, 2 * MS)])
        fl.append(FlowConfig(f"f{i}", rng.choice(["udp", "tcp"]), 100 + i, rng.randrange(1, 15),
                             *(lim or (None, None)), receiver_cost=rng.choice([0, 0, 5 * US])))
        pat = rng.choice([ConstantRate(rng.choice([500, 5000, 50_000, 300_000])),
                          Poisson(rng.choice([2000, 40_000, 200_000]), seed=seed + i),
                          Burst(rng.randint(10, 400), rng.choice([1 * US, 3 * US, 20 * US]),
                                start=rng.randrange(0, until // 2))])
        entries.append(WorkloadEntry(FrameSpec(fl[-1].protocol, fl[-1].port), pat, name=f"w{i}"))
    if rng.random() < 0.5:
        entries.append(WorkloadEntry(FrameSpec("icmp"), ConstantRate(1000), name="ping"))
    if rng.random() < 0.3:
        entries.append(WorkloadEntry(FrameSpec("udp", 9, fragment_flag=True), ConstantRate(2000),
                                     name="frag"))
    tasks = [TaskDescriptor("m", rng.randrange(0, 16), MEASUREMENT)]
    if rng.random() < 0.3:
        tasks.append(TaskDescriptor("hog", rng.randrange(0, 16), BUSY))
    cfg = SimConfig(flows=fl, tasks=tasks, workload=WorkloadSpec(tuple(entries)), until=until,
                    seed=seed, ring_size=rng.choice([8, 16, 64]),
                    recycle_threshold=rng.choice([0.25, 0.5, 0.75]),
                    global_limit=rng.choice([None, None, (7, MS), (3, 2 * MS)]),
                    shortcircuit=rng.random() < 0.8, eager_cache=rng.random() < 0.2,
                    system=rng.choice(["modified"] * 4 + ["baseline"]))
    return dataclasses.replace(cfg, **over)
