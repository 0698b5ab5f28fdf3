"""Sequential-write disk workload used by the bundled benchmark.

Writes a file in fixed-size blocks (4 KiB by default), flushing after
every block, optionally refilling the buffer with fresh random bytes per
block to defeat compression, and optionally capped to a target rate.
A bandwidth log gets one sample per elapsed interval: offset since start
in milliseconds and the observed KB/s since the previous sample.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

FSYNC_EVERY_BLOCKS = 1024  # full durability sync every 4 MiB at 4 KiB blocks


def cpu_model() -> str:
    fields = {}
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                key, _, value = line.partition(":")
                fields.setdefault(key.strip().lower(), value.strip())
    except OSError:
        pass
    name = fields.get("model name", "")
    if name and name != "unknown":
        return name
    # stripped-down kernels leave model name blank; compose something usable
    vendor = fields.get("vendor_id", "")
    family = fields.get("cpu family", "")
    model = fields.get("model", "")
    if vendor:
        return " ".join(p for p in (vendor, f"family {family}" if family else "",
                                    f"model {model}" if model else "") if p)
    import platform

    return platform.processor() or platform.machine() or "unknown"


def seq_write(doc: dict, root: str | Path, now=time.monotonic, sleep=time.sleep) -> dict:
    """Run the workload described by a runner document, relative to root.

    Returns a summary dict; the bandwidth log is written incrementally so
    a crashed run still leaves a usable partial log.
    """
    root = Path(root)
    size = int(doc["size_bytes"])
    block_bytes = int(doc.get("block_bytes", 4096))
    refill = bool(doc.get("refill_buffers", False))
    flush_each = bool(doc.get("flush_each_block", True))
    rate_kbps = int(doc.get("rate_limit_kbps", 0))
    interval_s = int(doc.get("sample_interval_ms", 500)) / 1000.0

    out_path = root / doc.get("output_file", "cwb/data/seqwrite.bin")
    log_path = root / doc.get("log_path", "cwb/results/bandwidth.log")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    block = os.urandom(block_bytes)
    written = 0
    samples = 0
    start = now()
    last_sample_t = start
    last_sample_bytes = 0
    blocks_since_sync = 0

    with out_path.open("wb") as out, log_path.open("w") as log:
        while written < size:
            if refill:
                block = os.urandom(block_bytes)
            out.write(block[: min(block_bytes, size - written)])
            written += min(block_bytes, size - written)
            if flush_each:
                out.flush()
            blocks_since_sync += 1
            if blocks_since_sync >= FSYNC_EVERY_BLOCKS:
                os.fsync(out.fileno())
                blocks_since_sync = 0
            if rate_kbps > 0:
                expected = written / (rate_kbps * 1024.0)
                ahead = expected - (now() - start)
                if ahead > 0:
                    sleep(ahead)
            t = now()
            if t - last_sample_t >= interval_s:
                delta_bytes = written - last_sample_bytes
                kbps = delta_bytes / 1024.0 / (t - last_sample_t)
                offset_ms = int(round((t - start) * 1000))
                log.write(f"{offset_ms},{kbps:.3f}\n")
                log.flush()
                samples += 1
                last_sample_t = t
                last_sample_bytes = written
        out.flush()
        os.fsync(out.fileno())

    return {"bytes": written, "samples": samples, "duration_s": now() - start}


def read_bandwidth_log(root: str | Path, doc: dict) -> list[tuple[int, float]]:
    log_path = Path(root) / doc.get("log_path", "cwb/results/bandwidth.log")
    rows: list[tuple[int, float]] = []
    if not log_path.exists():
        return rows
    for line in log_path.read_text().splitlines():
        if not line.strip():
            continue
        offset_text, _, value_text = line.partition(",")
        rows.append((int(offset_text), float(value_text)))
    return rows
