#!/usr/bin/env python3
"""Run the bundled sequential-write benchmark on the local driver, end to end.

Starts a real HTTP server on a free port, triggers N executions, waits for
them to finish, then prints the per-execution summaries and the variability
row across executions.

Usage: python3 scripts/run_local_benchmark.py [--runs 2] [--size 64m] [--rate-kbps 4096]
"""

import argparse
import socket
import sys
import tempfile
import threading
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import uvicorn

from cwb.config import ServerConfig
from cwb.gateway import build_engine, create_app
from cwb.model import validate_definition
from cwb.results import InsufficientData


def definition(size, rate_kbps):
    return {
        "name": f"fio sequential write ({size})",
        "timeout_minutes": 30,
        "release_grace_minutes": 5,
        "vms": [{"role": "driver", "provider": "local", "region": "local",
                 "instance_type": "sandbox", "image": "host", "extra_resources": {}}],
        "provisioning": [{"role": "driver", "recipe": "fio-benchmark@0.3.0",
                          "attributes": {"fio": {"config": {
                              "size": size, "refill_buffers": "1",
                              "rate_limit_kbps": rate_kbps}}}}],
        "metrics": [{"name": "cpu_model", "scale": "nominal", "unit": None},
                    {"name": "seq_write_bandwidth_kbps", "scale": "ratio", "unit": "KB/s"}],
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--runs", type=int, default=2)
    parser.add_argument("--size", default="64m")
    parser.add_argument("--rate-kbps", type=int, default=4096)
    args = parser.parse_args()

    workdir = Path(tempfile.mkdtemp(prefix="cwb-local-run-"))
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()

    config = ServerConfig(clock="real", host="127.0.0.1", port=port,
                          store_path=str(workdir / "cwb.sqlite"),
                          providers={"local": {"root": str(workdir / "vms")},
                                     "simulated": {}},
                          scheduler_tick_s=3600)
    engine = build_engine(config)
    engine.start()
    server = uvicorn.Server(uvicorn.Config(create_app(engine), host="127.0.0.1",
                                           port=port, log_level="error"))
    threading.Thread(target=server.run, daemon=True).start()
    time.sleep(0.5)

    bench = engine.store.save_benchmark(
        validate_definition(definition(args.size, args.rate_kbps)), time.time())
    print(f"server on :{port}, benchmark {bench.id}, {args.runs} run(s) of {args.size}")

    for run in range(args.runs):
        execution = engine.trigger(bench.id)
        started = time.monotonic()
        while not engine.store.get_execution(execution.id).terminal:
            time.sleep(0.5)
        snap = engine.store.get_execution(execution.id)
        bandwidth = [o["value_num"] for o in
                     engine.store.observations_for(execution.id, "seq_write_bandwidth_kbps")]
        cpu = engine.store.observations_for(execution.id, "cpu_model")
        mean = sum(bandwidth) / len(bandwidth) if bandwidth else 0.0
        print(f"  run {run + 1}: {engine.displayed_status_of(execution.id)} "
              f"in {time.monotonic() - started:.1f}s, {len(bandwidth)} samples, "
              f"mean {mean:.0f} KB/s, cpu: {cpu[0]['value_text'] if cpu else '?'}")

    try:
        row = engine.results.variability_summary(
            engine.store.get_benchmark(bench.id), "seq_write_bandwidth_kbps")
        print(f"variability: {row.rendered()}  "
              f"(across {row.across_cv_pct:.2f}%, within "
              f"{row.within_cv_min_pct:.2f}-{row.within_cv_max_pct:.2f}%, n={row.executions})")
    except InsufficientData as exc:
        print(f"variability: {exc}")
    print(f"leaked resources: {engine.leaked_resources() or 'none'}")
    server.should_exit = True
    engine.stop()


if __name__ == "__main__":
    main()
