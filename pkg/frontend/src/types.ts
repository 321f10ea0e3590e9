// Wire shapes served by the scoreboard HTTP API. Field names mirror the JSON
// documents verbatim, so everything here is snake_case.

export interface MetricDimension {
  id: string;
  direction: "minimize" | "maximize";
  unit: string;
}

export interface TournamentDoc {
  uid: string;
  title: string;
  space: MetricDimension[];
  opens_at: string;
  closes_at: string;
  status: string;
}

export interface DispersionDoc {
  min: number;
  max: number;
  iqr: number;
}

export interface DependencyRefDoc {
  kind: string;
  uid?: string;
  tags?: string[];
  version?: string;
  optional?: boolean;
}

export interface WorkflowDoc {
  uid: string;
  program_ref: DependencyRefDoc;
  model_ref: DependencyRefDoc;
  dataset_ref: DependencyRefDoc | null;
  parameters: Record<string, unknown>;
  repetitions: number;
}

export interface PlatformDoc {
  cpu: string;
  accelerator: string;
  os_family: string;
  ram_bytes: number;
  price_usd: number | null;
  labels: string[];
}

export interface EnvironmentDoc {
  os_name: string;
  os_version: string;
  kernel_version: string;
  hostname_hash: string;
  dependency_versions: Record<string, string>;
  timestamp_utc: string;
  platform: PlatformDoc;
}

export interface BoardPoint {
  uid: string;
  status: string;
  submitted_at: string;
  /** Value of the view's x dimension, duplicated from metrics for convenience. */
  x: number;
  y: number;
  metrics: Record<string, number>;
  dispersion: Record<string, DispersionDoc>;
  environment: EnvironmentDoc;
  workflow: WorkflowDoc;
  /** Frontier membership as judged by the service for this exact view. */
  on_frontier: boolean;
  distance: number;
}

export interface BoardView {
  tournament_uid: string;
  dim_x: string;
  dim_y: string;
  filters: Record<string, string>;
  include_pending: boolean;
  generated_at: string;
  points: BoardPoint[];
}

export interface ErrorBody {
  code: string;
  message: string;
  field?: string;
}
