import type { AllowedActions, ExecutionDetail } from "./types.js";

export interface ActionButton {
  id: keyof AllowedActions;
  label: string;
  enabled: boolean;
}

const LABELS: [keyof AllowedActions, string][] = [
  ["enter_dev_mode", "Enter dev mode"],
  ["exit_dev_mode", "Exit dev mode"],
  ["reprovision", "Reprovision"],
  ["release_now", "Release now"],
];

/** Buttons mirror the server-reported affordances exactly; the client
 * never guesses from the state name. */
export function actionButtons(detail: ExecutionDetail): ActionButton[] {
  return LABELS.map(([id, label]) => ({ id, label, enabled: detail.allowed_actions[id] }));
}

export function statusBadgeClass(displayedStatus: string): string {
  if (displayedStatus === "FINISHED") return "badge-finished";
  if (displayedStatus.startsWith("FAILED")) return "badge-failed";
  if (displayedStatus === "RUNNING") return "badge-running";
  return "badge-pending";
}
