import pytest
from fastapi.testclient import TestClient

from cwb.gateway import create_app

from conftest import fio_definition_doc, sim_engine

OPERATOR = {"Authorization": "Bearer cwb-operator-token"}


@pytest.fixture
def client():
    engine = sim_engine(plan={"seed": 42, "acquire_latency": [1, 1], "drop_prob": 0.0})
    app = create_app(engine)
    with TestClient(app) as c:
        c.engine = engine
        yield c


def create_benchmark(client, doc=None):
    response = client.post("/api/benchmarks", json=doc or fio_definition_doc(size="1m"),
                           headers=OPERATOR)
    assert response.status_code == 201, response.text
    return response.json()


def run_to_finished(client, benchmark_id):
    response = client.post(f"/api/benchmarks/{benchmark_id}/executions", headers=OPERATOR)
    assert response.status_code == 201
    execution = response.json()
    client.engine.kernel.run_to_quiescence()
    return execution["id"]


class TestHealthAndAuth:
    def test_health_ok(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"

    def test_operator_endpoints_require_token(self, client):
        assert client.get("/api/benchmarks").status_code == 401
        assert client.post("/api/benchmarks", json={}).status_code == 401

    def test_agent_endpoints_require_token(self, client):
        assert client.put("/agent/executions/e-1/state", json={"event": "x"}).status_code == 401


class TestBenchmarkApi:
    def test_create_and_get(self, client):
        created = create_benchmark(client)
        assert created["id"].startswith("b-")
        got = client.get(f"/api/benchmarks/{created['id']}", headers=OPERATOR).json()
        assert got["name"] == "fio sequential write"
        assert got["vms"][0]["instance_type"] == "m1.small"

    def test_invalid_doc_gets_violations(self, client):
        doc = fio_definition_doc()
        doc["vms"] = []
        response = client.post("/api/benchmarks", json=doc, headers=OPERATOR)
        assert response.status_code == 422
        codes = {v["code"] for v in response.json()["violations"]}
        assert "MissingField" in codes

    def test_defaults_filled_from_config(self, client):
        doc = fio_definition_doc()
        del doc["timeout_minutes"]
        created = create_benchmark(client, doc)
        assert created["timeout_minutes"] == 360

    def test_missing_benchmark_404(self, client):
        assert client.get("/api/benchmarks/b-99999999", headers=OPERATOR).status_code == 404

    def test_clone_endpoint(self, client):
        created = create_benchmark(client)
        response = client.post(f"/api/benchmarks/{created['id']}/clone",
                               json={"overrides": {"vms.0.instance_type": "m3.medium"}},
                               headers=OPERATOR)
        assert response.status_code == 201
        clone = response.json()
        assert clone["id"] != created["id"]
        assert clone["vms"][0]["instance_type"] == "m3.medium"
        assert clone["name"] == created["name"] + " (copy)"

    def test_clone_bad_path_422(self, client):
        created = create_benchmark(client)
        response = client.post(f"/api/benchmarks/{created['id']}/clone",
                               json={"overrides": {"bogus.path": 1}}, headers=OPERATOR)
        assert response.status_code == 422

    def test_deactivated_benchmark_cannot_trigger(self, client):
        created = create_benchmark(client)
        patched = client.patch(f"/api/benchmarks/{created['id']}",
                               json={"active": False}, headers=OPERATOR)
        assert patched.json()["active"] is False
        response = client.post(f"/api/benchmarks/{created['id']}/executions", headers=OPERATOR)
        assert response.status_code == 409


class TestExecutionApi:
    def test_trigger_and_detail_view(self, client):
        created = create_benchmark(client)
        response = client.post(f"/api/benchmarks/{created['id']}/executions", headers=OPERATOR)
        assert response.status_code == 201
        execution = response.json()
        assert execution["trigger_cause"] == "manual"
        assert execution["events"][0]["event"] == "created"
        assert "allowed_actions" in execution and "allowed_events" in execution

    def test_state_filter(self, client):
        created = create_benchmark(client)
        run_to_finished(client, created["id"])
        finished = client.get("/api/executions", params={"state": "FINISHED"},
                              headers=OPERATOR).json()
        assert len(finished) == 1
        empty = client.get("/api/executions", params={"state": "RUNNING"},
                           headers=OPERATOR).json()
        assert empty == []

    def test_store_api_consistency(self, client):
        # displayed status via API equals recomputation from the persisted log
        from cwb.statemachine import ExecutionEvent, displayed_status

        created = create_benchmark(client)
        execution_id = run_to_finished(client, created["id"])
        detail = client.get(f"/api/executions/{execution_id}", headers=OPERATOR).json()
        log = [ExecutionEvent(e["event"]) for e in detail["events"]]
        assert detail["displayed_status"] == displayed_status(log)

    def test_log_cursor_monotone(self, client):
        created = create_benchmark(client)
        execution_id = run_to_finished(client, created["id"])
        first = client.get(f"/api/executions/{execution_id}/log",
                           params={"after": 0, "limit": 3}, headers=OPERATOR).json()
        assert len(first["lines"]) == 3
        second = client.get(f"/api/executions/{execution_id}/log",
                            params={"after": first["next_cursor"]}, headers=OPERATOR).json()
        seqs = [l["seq"] for l in first["lines"]] + [l["seq"] for l in second["lines"]]
        assert seqs == sorted(set(seqs))  # no overlap, no reordering

    def test_dev_mode_endpoints(self, client):
        engine = client.engine
        plan_engine = sim_engine(plan={"seed": 9, "provision_failure_prob": 1.0,
                                       "acquire_latency": [1, 1]})
        app_client = TestClient(create_app(plan_engine))
        created = app_client.post("/api/benchmarks", json=fio_definition_doc(size="1m"),
                                  headers=OPERATOR).json()
        execution = app_client.post(f"/api/benchmarks/{created['id']}/executions",
                                    headers=OPERATOR).json()
        plan_engine.kernel.advance(2)
        response = app_client.post(f"/api/executions/{execution['id']}/dev_mode",
                                   headers=OPERATOR)
        assert response.status_code == 200 and response.json()["dev_mode"] is True
        response = app_client.post(f"/api/executions/{execution['id']}/reprovision",
                                   headers=OPERATOR)
        assert response.status_code == 200
        plan_engine.kernel.run_to_quiescence()
        detail = app_client.get(f"/api/executions/{execution['id']}", headers=OPERATOR).json()
        assert detail["state"] == "FINISHED"
        assert detail["displayed_status"] == "FAILED ON PREPARING"

    def test_release_endpoint(self, client):
        plan_engine = sim_engine(plan={"seed": 10, "provision_failure_prob": 1.0,
                                       "acquire_latency": [1, 1]})
        app_client = TestClient(create_app(plan_engine))
        created = app_client.post("/api/benchmarks", json=fio_definition_doc(),
                                  headers=OPERATOR).json()
        execution = app_client.post(f"/api/benchmarks/{created['id']}/executions",
                                    headers=OPERATOR).json()
        plan_engine.kernel.advance(2)
        response = app_client.post(f"/api/executions/{execution['id']}/release",
                                   headers=OPERATOR)
        assert response.status_code == 200
        assert response.json()["terminal"] is True


class TestAgentApi:
    def _running_execution(self, client):
        created = create_benchmark(client, fio_definition_doc(size="1g"))
        execution = client.post(f"/api/benchmarks/{created['id']}/executions",
                                headers=OPERATOR).json()
        client.engine.kernel.advance(3)
        detail = client.get(f"/api/executions/{execution['id']}", headers=OPERATOR).json()
        assert detail["state"] == "RUNNING"
        token = client.engine.store.execution_token(execution["id"])
        return execution["id"], token

    def test_state_update_advances(self, client):
        execution_id, token = self._running_execution(client)
        response = client.put(f"/agent/executions/{execution_id}/state",
                              json={"event": "finished_running"},
                              headers={"Authorization": f"Bearer {token}"})
        assert response.status_code == 200
        body = response.json()
        assert body["duplicate"] is False
        assert body["state"] in ("POSTPROCESSING", "WAITING_FOR_START_POSTPROCESSING")

    def test_wrong_token_401(self, client):
        execution_id, _ = self._running_execution(client)
        response = client.put(f"/agent/executions/{execution_id}/state",
                              json={"event": "finished_running"},
                              headers={"Authorization": "Bearer wrong"})
        assert response.status_code == 401

    def test_event_on_terminal_409(self, client):
        created = create_benchmark(client)
        execution_id = run_to_finished(client, created["id"])
        token = client.engine.store.execution_token(execution_id)
        response = client.put(f"/agent/executions/{execution_id}/state",
                              json={"event": "started_running"},
                              headers={"Authorization": f"Bearer {token}"})
        assert response.status_code == 409

    def test_duplicate_notification_acked(self, client):
        execution_id, token = self._running_execution(client)
        headers = {"Authorization": f"Bearer {token}"}
        client.put(f"/agent/executions/{execution_id}/state",
                   json={"event": "finished_running"}, headers=headers)
        response = client.put(f"/agent/executions/{execution_id}/state",
                              json={"event": "finished_running"}, headers=headers)
        assert response.status_code == 200
        assert response.json()["duplicate"] is True

    def test_metric_submission_and_unknown_metric(self, client):
        execution_id, token = self._running_execution(client)
        headers = {"Authorization": f"Bearer {token}"}
        ok = client.post(f"/agent/executions/{execution_id}/metrics",
                         json={"metric": "seq_write_bandwidth_kbps", "value": 3500.0,
                               "offset_ms": 500}, headers=headers)
        assert ok.status_code == 200
        bad = client.post(f"/agent/executions/{execution_id}/metrics",
                          json={"metric": "iops", "value": 1.0}, headers=headers)
        assert bad.status_code == 422
        assert "UnknownMetric" in bad.json()["error"]

    def test_csv_submission(self, client):
        execution_id, token = self._running_execution(client)
        payload = "metric,value,offset_ms\nseq_write_bandwidth_kbps,3500.0,500\n"
        response = client.post(
            f"/agent/executions/{execution_id}/metrics/csv?batch_id=b1",
            content=payload.encode(),
            headers={"Authorization": f"Bearer {token}", "Content-Type": "text/csv"})
        assert response.status_code == 200
        assert response.json()["recorded"] == 1
        again = client.post(
            f"/agent/executions/{execution_id}/metrics/csv?batch_id=b1",
            content=payload.encode(),
            headers={"Authorization": f"Bearer {token}", "Content-Type": "text/csv"})
        assert again.json()["recorded"] == 1

    def test_csv_row_error_atomic(self, client):
        execution_id, token = self._running_execution(client)
        payload = ("metric,value,offset_ms\n"
                   "seq_write_bandwidth_kbps,1.0,500\n"
                   "nope,1.0,1000\n")
        response = client.post(
            f"/agent/executions/{execution_id}/metrics/csv",
            content=payload.encode(),
            headers={"Authorization": f"Bearer {token}", "Content-Type": "text/csv"})
        assert response.status_code == 422
        assert client.engine.store.observation_count(execution_id) == 0


class TestStatsApi:
    def test_variability_endpoint(self, client):
        created = create_benchmark(client, fio_definition_doc(size="4m"))
        run_to_finished(client, created["id"])
        run_to_finished(client, created["id"])
        response = client.get(
            f"/api/benchmarks/{created['id']}/metrics/seq_write_bandwidth_kbps/variability",
            headers=OPERATOR)
        assert response.status_code == 200
        body = response.json()
        assert "rendered" in body and body["executions"] == 2
        assert body["rendered"].endswith("%)")

    def test_nominal_metric_unsupported_422(self, client):
        created = create_benchmark(client)
        run_to_finished(client, created["id"])
        run_to_finished(client, created["id"])
        response = client.get(
            f"/api/benchmarks/{created['id']}/metrics/cpu_model/variability", headers=OPERATOR)
        assert response.status_code == 422

    def test_export_csv(self, client):
        created = create_benchmark(client)
        execution_id = run_to_finished(client, created["id"])
        response = client.get(f"/api/executions/{execution_id}/metrics.csv", headers=OPERATOR)
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/csv")
        assert response.text.startswith("metric,value,offset_ms\n")


class TestRecipesApi:
    def test_bundled_recipe_listed(self, client):
        rows = client.get("/api/recipes", headers=OPERATOR).json()
        assert {"name": "fio-benchmark", "version": "0.3.0"} in rows

    def test_get_and_add(self, client):
        doc = client.get("/api/recipes/fio-benchmark/0.3.0", headers=OPERATOR).json()
        assert doc["steps"][0]["kind"] == "install_package"
        new = {"name": "noop", "version": "1.0.0",
               "steps": [{"kind": "write_file", "path": "/cwb/x", "content": "1"}]}
        response = client.post("/api/recipes", json=new, headers=OPERATOR)
        assert response.status_code == 201
        assert client.get("/api/recipes/noop/1.0.0", headers=OPERATOR).status_code == 200

    def test_bad_recipe_rejected(self, client):
        response = client.post("/api/recipes", json={"name": "x"}, headers=OPERATOR)
        assert response.status_code == 422
