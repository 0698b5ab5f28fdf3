/** Payload shapes mirrored from the server API. The UI never derives
 * state itself: displayed_status and allowed_actions come verbatim. */

export interface BenchmarkSummary {
  id: string;
  name: string;
  active: boolean;
  schedule: string | null;
  timeout_minutes: number;
  release_grace_minutes: number;
  vms: { role: string; provider: string; instance_type: string }[];
  metrics: { name: string; scale: string; unit: string | null }[];
}

export interface EventEntry {
  seq: number;
  at: number;
  event: string;
  note: string;
}

export interface ResourceEntry {
  id: string;
  provider: string;
  role: string;
  kind: string;
  status: string;
}

export interface AllowedActions {
  trigger: boolean;
  enter_dev_mode: boolean;
  exit_dev_mode: boolean;
  reprovision: boolean;
  release_now: boolean;
}

export interface ExecutionSummary {
  id: string;
  benchmark_id: string;
  state: string;
  displayed_status: string;
  trigger_cause: string;
  created_at: number;
  deadline_at: number;
  dev_mode: boolean;
  terminal: boolean;
}

export interface ExecutionDetail extends ExecutionSummary {
  events: EventEntry[];
  resources: ResourceEntry[];
  allowed_actions: AllowedActions;
  allowed_events: string[];
  observation_count: number;
}

export interface LogLine {
  seq: number;
  at: number;
  line: string;
}

export interface LogPage {
  lines: LogLine[];
  next_cursor: number;
}

export interface Observation {
  metric: string;
  value: number | string;
  offset_ms: number | null;
  recorded_at: number;
}

export interface VariabilityRow {
  group: string;
  across_cv_pct: number;
  within_cv_min_pct: number;
  within_cv_max_pct: number;
  executions: number;
  rendered: string;
}
