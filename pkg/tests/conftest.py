import pytest

from cwb.config import ServerConfig
from cwb.model import validate_definition
from cwb.orchestrator import Engine
from cwb.store import Store


def fio_definition_doc(provider="simulated", size="1m", schedule=None, timeout=60,
                       grace=5, extra_resources=None, rate_limit_kbps=0,
                       instance_type="m1.small"):
    """Definition exercising the bundled sequential-write benchmark."""
    return {
        "name": "fio sequential write",
        "timeout_minutes": timeout,
        "release_grace_minutes": grace,
        "schedule": schedule,
        "vms": [{
            "role": "driver",
            "provider": provider,
            "region": "eu-west-1",
            "instance_type": instance_type,
            "image": "ubuntu-14.04",
            "extra_resources": extra_resources or {},
        }],
        "provisioning": [{
            "role": "driver",
            "recipe": "fio-benchmark@0.3.0",
            "attributes": {"fio": {"config": {
                "size": size,
                "refill_buffers": "1",
                "rate_limit_kbps": rate_limit_kbps,
            }}},
        }],
        "metrics": [
            {"name": "cpu_model", "scale": "nominal", "unit": None},
            {"name": "seq_write_bandwidth_kbps", "scale": "ratio", "unit": "KB/s"},
        ],
    }


def sim_engine(plan=None, max_preparing=4, max_postprocessing=4, local_root=None,
               tick_s=30.0):
    """Engine on a simulated clock with an in-memory store."""
    providers = {"simulated": plan or {"seed": 42, "acquire_latency": [2, 2]}}
    if local_root:
        providers["local"] = {"root": str(local_root)}
    config = ServerConfig(clock="simulated", providers=providers,
                          max_preparing=max_preparing, max_postprocessing=max_postprocessing,
                          scheduler_tick_s=tick_s)
    store = Store(":memory:")
    return Engine(store, config)


def save_benchmark(engine, doc):
    definition = validate_definition(doc, engine.registry.ids())
    return engine.store.save_benchmark(definition, engine.kernel.clock.now())


@pytest.fixture
def engine():
    return sim_engine()


@pytest.fixture
def fio_doc():
    return fio_definition_doc()
