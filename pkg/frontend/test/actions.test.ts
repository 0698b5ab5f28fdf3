import { describe, expect, it } from "vitest";
import { actionButtons, statusBadgeClass } from "../src/actions.js";
import type { AllowedActions, ExecutionDetail } from "../src/types.js";

function detailWith(actions: AllowedActions, status: string, state: string): ExecutionDetail {
  return {
    id: "e-1", benchmark_id: "b-1", state, displayed_status: status,
    trigger_cause: "manual", created_at: 0, deadline_at: 3600,
    dev_mode: actions.exit_dev_mode, terminal: status === "FINISHED",
    events: [], resources: [], allowed_actions: actions, allowed_events: [],
    observation_count: 0,
  };
}

describe("action affordances", () => {
  // button enablement mirrors the server-reported allowed actions exactly
  it("RUNNING: only enter_dev_mode enabled", () => {
    const detail = detailWith({
      trigger: false, enter_dev_mode: true, exit_dev_mode: false,
      reprovision: false, release_now: false,
    }, "RUNNING", "RUNNING");
    const enabled = actionButtons(detail).filter((b) => b.enabled).map((b) => b.id);
    expect(enabled).toEqual(["enter_dev_mode"]);
  });

  it("FAILED_ON_PREPARING in dev mode: exit, reprovision, release enabled", () => {
    const detail = detailWith({
      trigger: false, enter_dev_mode: false, exit_dev_mode: true,
      reprovision: true, release_now: true,
    }, "FAILED ON PREPARING", "FAILED_ON_PREPARING");
    const enabled = actionButtons(detail).filter((b) => b.enabled).map((b) => b.id);
    expect(enabled).toEqual(["exit_dev_mode", "reprovision", "release_now"]);
  });

  it("FINISHED: everything disabled", () => {
    const detail = detailWith({
      trigger: false, enter_dev_mode: false, exit_dev_mode: false,
      reprovision: false, release_now: false,
    }, "FINISHED", "FINISHED");
    expect(actionButtons(detail).every((b) => !b.enabled)).toBe(true);
  });

  it("never invents affordances the server did not grant", () => {
    const none: AllowedActions = {
      trigger: false, enter_dev_mode: false, exit_dev_mode: false,
      reprovision: false, release_now: false,
    };
    for (const status of ["RUNNING", "PREPARING", "FAILED ON RUNNING", "FINISHED"]) {
      const buttons = actionButtons(detailWith(none, status, status.replace(/ /g, "_")));
      expect(buttons.some((b) => b.enabled)).toBe(false);
    }
  });
});

describe("status badge", () => {
  it("first-failure states render as failures regardless of cleanup", () => {
    expect(statusBadgeClass("FAILED ON PREPARING")).toBe("badge-failed");
    expect(statusBadgeClass("FAILED ON RELEASING")).toBe("badge-failed");
    expect(statusBadgeClass("FINISHED")).toBe("badge-finished");
    expect(statusBadgeClass("RUNNING")).toBe("badge-running");
    expect(statusBadgeClass("WAITING FOR START PREPARING")).toBe("badge-pending");
  });
});
