#!/usr/bin/env python3
"""Fault-injection sweep on the simulated provider.

Crosses acquire/provision/run/release failure probabilities over
{0, 0.3, 1.0}, runs seeded executions under a simulated clock advanced
past every deadline, and audits the clean-state guarantee: every
execution terminal, and the only unreleased handles belong to executions
that ended in FAILED_ON_RELEASING.

Usage: python3 scripts/fault_sweep.py [--executions 1000] [--seed 7]
"""

import argparse
import collections
import itertools
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from cwb.config import ServerConfig
from cwb.model import validate_definition
from cwb.orchestrator import Engine
from cwb.store import Store


def definition():
    return {
        "name": "sweep probe", "timeout_minutes": 30, "release_grace_minutes": 5,
        "vms": [{"role": "driver", "provider": "simulated", "region": "sim",
                 "instance_type": "sim.small", "image": "sim", "extra_resources": {}}],
        "provisioning": [{"role": "driver", "recipe": "fio-benchmark@0.3.0",
                          "attributes": {"fio": {"config": {"size": "1m"}}}}],
        "metrics": [{"name": "cpu_model", "scale": "nominal", "unit": None},
                    {"name": "seq_write_bandwidth_kbps", "scale": "ratio", "unit": "KB/s"}],
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--executions", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    probs = (0.0, 0.3, 1.0)
    combos = list(itertools.product(probs, repeat=4))
    base, extra = divmod(args.executions, len(combos))
    by_status = collections.Counter()
    total = terminal = leaked = failed_releasing = 0
    started = time.monotonic()

    for i, (p_acquire, p_provision, p_run, p_release) in enumerate(combos):
        config = ServerConfig(clock="simulated", providers={"simulated": {
            "seed": args.seed * 1000 + i,
            "acquire_failure_prob": p_acquire,
            "provision_failure_prob": p_provision,
            "run_failure_prob": p_run,
            "release_failure_prob": p_release,
            "acquire_latency": [1, 5]}})
        engine = Engine(Store(":memory:"), config)
        bench = engine.store.save_benchmark(
            validate_definition(definition()), engine.kernel.clock.now())
        for _ in range(base + (1 if i < extra else 0)):
            engine.trigger(bench.id)
        engine.kernel.run_to_quiescence()

        executions = engine.store.list_executions()
        total += len(executions)
        terminal += sum(e.terminal for e in executions)
        failed = {e.id for e in executions if e.state == "FAILED_ON_RELEASING"}
        failed_releasing += len(failed)
        audit = engine.leaked_resources()
        leaked += len(audit)
        assert {h.execution_id for h in audit} == failed, "clean-state guarantee violated"
        for e in executions:
            by_status[engine.displayed_status_of(e.id)] += 1
        engine.store.close()

    print(f"{total} executions in {time.monotonic() - started:.1f}s")
    print(f"terminal: {terminal}/{total}")
    print(f"leaked handles: {leaked} (all owned by the {failed_releasing} "
          f"FAILED_ON_RELEASING executions)")
    for status, count in by_status.most_common():
        print(f"  {status:<26} {count}")


if __name__ == "__main__":
    main()
