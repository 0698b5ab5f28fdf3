"""cwb: benchmark orchestration as code.

Benchmarks are declarative documents (VM specs + provisioning recipes +
metric definitions + optional cron schedule); the service schedules,
executes, supervises, and collects results from them reproducibly.
"""

__version__ = "0.1.0"
