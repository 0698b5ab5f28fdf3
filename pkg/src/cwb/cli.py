"""Operator CLI: everything the web UI can do, headless.

`cwb serve` runs the service; every other subcommand is an HTTP client
against a running server. All output is available as human tables or raw
JSON (--json); errors exit non-zero with a JSON object on stderr.
"""

from __future__ import annotations

import json
import sys
import time

import click
import requests


class ApiError(click.ClickException):
    def __init__(self, status: int, payload: dict):
        self.status = status
        self.payload = payload
        super().__init__(json.dumps({"status": status, **payload}))

    def show(self, file=None):
        print(self.format_message(), file=sys.stderr)


class Client:
    def __init__(self, server: str, token: str):
        self.server = server.rstrip("/")
        self.session = requests.Session()
        self.session.headers["Authorization"] = f"Bearer {token}"

    def call(self, method: str, path: str, **kwargs):
        response = self.session.request(method, f"{self.server}{path}", timeout=60, **kwargs)
        if response.status_code >= 400:
            try:
                payload = response.json()
            except ValueError:
                payload = {"detail": response.text[:500]}
            raise ApiError(response.status_code, payload)
        if "text/csv" in response.headers.get("content-type", ""):
            return response.text
        return response.json() if response.content else {}


def _table(rows: list[dict], columns: list[str]) -> str:
    if not rows:
        return "(none)"
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns}
    header = "  ".join(c.upper().ljust(widths[c]) for c in columns)
    lines = [header]
    for row in rows:
        lines.append("  ".join(str(row.get(c, "")).ljust(widths[c]) for c in columns))
    return "\n".join(lines)


def _emit(ctx, data, table=None):
    if ctx.obj["json"] or table is None:
        click.echo(json.dumps(data, indent=2, sort_keys=True))
    else:
        click.echo(table)


@click.group()
@click.option("--server", envvar="CWB_SERVER", default="http://127.0.0.1:8070",
              help="server base URL")
@click.option("--token", envvar="CWB_TOKEN", default="cwb-operator-token",
              help="operator API token")
@click.option("--json", "json_out", is_flag=True, help="print raw JSON")
@click.pass_context
def main(ctx, server, token, json_out):
    ctx.ensure_object(dict)
    ctx.obj.update(client=Client(server, token), json=json_out)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="server config file (JSON)")
def serve(config_path):
    """Run the benchmark service in the foreground."""
    from .config import load_config
    from .gateway import serve as _serve

    _serve(load_config(config_path))


# -- benchmark ------------------------------------------------------------

@main.group()
def benchmark():
    """Manage benchmark definitions."""


@benchmark.command("create")
@click.option("-f", "--file", "path", required=True, type=click.Path(exists=True))
@click.pass_context
def benchmark_create(ctx, path):
    doc = json.loads(open(path).read())
    created = ctx.obj["client"].call("POST", "/api/benchmarks", json=doc)
    _emit(ctx, created, f"created benchmark {created['id']}")


@benchmark.command("list")
@click.pass_context
def benchmark_list(ctx):
    rows = ctx.obj["client"].call("GET", "/api/benchmarks")
    _emit(ctx, rows, _table(rows, ["id", "name", "active", "schedule", "timeout_minutes"]))


@benchmark.command("show")
@click.argument("benchmark_id")
@click.pass_context
def benchmark_show(ctx, benchmark_id):
    data = ctx.obj["client"].call("GET", f"/api/benchmarks/{benchmark_id}")
    _emit(ctx, data)


@benchmark.command("clone")
@click.argument("benchmark_id")
@click.option("--set", "overrides", multiple=True, metavar="PATH=VALUE",
              help="override a document path, e.g. vms.0.instance_type=m3.medium")
@click.option("-f", "--file", "path", type=click.Path(exists=True), default=None,
              help="JSON file with an overrides object")
@click.pass_context
def benchmark_clone(ctx, benchmark_id, overrides, path):
    doc = json.loads(open(path).read()) if path else {}
    for item in overrides:
        key, _, raw = item.partition("=")
        try:
            doc[key] = json.loads(raw)
        except ValueError:
            doc[key] = raw
    created = ctx.obj["client"].call("POST", f"/api/benchmarks/{benchmark_id}/clone",
                                     json={"overrides": doc})
    _emit(ctx, created, f"created clone {created['id']} ({created['name']})")


@benchmark.command("set-active")
@click.argument("benchmark_id")
@click.argument("active", type=click.Choice(["on", "off"]))
@click.pass_context
def benchmark_set_active(ctx, benchmark_id, active):
    data = ctx.obj["client"].call("PATCH", f"/api/benchmarks/{benchmark_id}",
                                  json={"active": active == "on"})
    _emit(ctx, data, f"benchmark {benchmark_id} active={data['active']}")


# -- exec ----------------------------------------------------------------------

@main.group(name="exec")
def exec_group():
    """Trigger and inspect executions."""


@exec_group.command("trigger")
@click.argument("benchmark_id")
@click.pass_context
def exec_trigger(ctx, benchmark_id):
    data = ctx.obj["client"].call("POST", f"/api/benchmarks/{benchmark_id}/executions")
    _emit(ctx, data, f"execution {data['id']} -> {data['displayed_status']}")


@exec_group.command("list")
@click.option("--state", default=None)
@click.option("--benchmark", default=None)
@click.pass_context
def exec_list(ctx, state, benchmark):
    params = {k: v for k, v in (("state", state), ("benchmark", benchmark)) if v}
    rows = ctx.obj["client"].call("GET", "/api/executions", params=params)
    _emit(ctx, rows, _table(rows, ["id", "benchmark_id", "displayed_status",
                                   "trigger_cause", "dev_mode", "terminal"]))


@exec_group.command("show")
@click.argument("execution_id")
@click.pass_context
def exec_show(ctx, execution_id):
    data = ctx.obj["client"].call("GET", f"/api/executions/{execution_id}")
    if ctx.obj["json"]:
        _emit(ctx, data)
        return
    lines = [f"{data['id']}  {data['displayed_status']}  (machine state {data['state']})",
             f"benchmark={data['benchmark_id']} cause={data['trigger_cause']} "
             f"dev_mode={data['dev_mode']} terminal={data['terminal']}",
             "events:"]
    lines += [f"  {e['seq']:>3} {e['at']:.3f} {e['event']}" + (f" ({e['note']})" if e["note"] else "")
              for e in data["events"]]
    lines.append("resources:")
    lines += [f"  {r['id']} {r['kind']} role={r['role']} {r['status']}" for r in data["resources"]]
    click.echo("\n".join(lines))


@exec_group.command("logs")
@click.argument("execution_id")
@click.option("--after", type=int, default=0)
@click.option("--follow", is_flag=True)
@click.pass_context
def exec_logs(ctx, execution_id, after, follow):
    cursor = after
    while True:
        data = ctx.obj["client"].call("GET", f"/api/executions/{execution_id}/log",
                                      params={"after": cursor})
        for line in data["lines"]:
            click.echo(f"{line['at']:.3f} {line['line']}")
        cursor = data["next_cursor"]
        if not follow:
            break
        detail = ctx.obj["client"].call("GET", f"/api/executions/{execution_id}")
        if detail["terminal"]:
            break
        time.sleep(2)


@exec_group.command("dev-mode")
@click.argument("execution_id")
@click.argument("toggle", type=click.Choice(["on", "off"]))
@click.pass_context
def exec_dev_mode(ctx, execution_id, toggle):
    method = "POST" if toggle == "on" else "DELETE"
    data = ctx.obj["client"].call(method, f"/api/executions/{execution_id}/dev_mode")
    _emit(ctx, data, f"execution {execution_id} dev_mode={data['dev_mode']}")


@exec_group.command("reprovision")
@click.argument("execution_id")
@click.pass_context
def exec_reprovision(ctx, execution_id):
    data = ctx.obj["client"].call("POST", f"/api/executions/{execution_id}/reprovision")
    _emit(ctx, data, f"execution {execution_id} -> {data['execution']['displayed_status']}")


@exec_group.command("release")
@click.argument("execution_id")
@click.pass_context
def exec_release(ctx, execution_id):
    data = ctx.obj["client"].call("POST", f"/api/executions/{execution_id}/release")
    _emit(ctx, data, f"execution {execution_id} -> {data['displayed_status']}")


# -- stats -------------------------------------------------------------------------

@main.group()
def stats():
    """Variability statistics."""


@stats.command("variability")
@click.argument("benchmark_id")
@click.argument("metric")
@click.pass_context
def stats_variability(ctx, benchmark_id, metric):
    data = ctx.obj["client"].call(
        "GET", f"/api/benchmarks/{benchmark_id}/metrics/{metric}/variability")
    _emit(ctx, data, f"{data['group']}: {data['rendered']}  "
                     f"[across={data['across_cv_pct']:.2f}% "
                     f"within={data['within_cv_min_pct']:.2f}-{data['within_cv_max_pct']:.2f}% "
                     f"n={data['executions']}]")


# -- recipes ----------------------------------------------------------------------------

@main.group()
def recipes():
    """Provisioning recipe registry."""


@recipes.command("list")
@click.pass_context
def recipes_list(ctx):
    rows = ctx.obj["client"].call("GET", "/api/recipes")
    _emit(ctx, rows, _table(rows, ["name", "version"]))


@recipes.command("show")
@click.argument("name")
@click.argument("version")
@click.pass_context
def recipes_show(ctx, name, version):
    _emit(ctx, ctx.obj["client"].call("GET", f"/api/recipes/{name}/{version}"))


@recipes.command("add")
@click.option("-f", "--file", "path", required=True, type=click.Path(exists=True))
@click.pass_context
def recipes_add(ctx, path):
    doc = json.loads(open(path).read())
    data = ctx.obj["client"].call("POST", "/api/recipes", json=doc)
    _emit(ctx, data, f"recipe {data['name']}@{data['version']} stored")


if __name__ == "__main__":
    main()
