// Request/response shapes of the job service. Field names and bounds mirror
// the server's schemas; keep the two in sync when either side changes.

export type JobKind = "train" | "edit" | "score";
export type JobState = "QUEUED" | "RUNNING" | "DONE" | "FAILED";
export type EditMode = "text-full" | "text-roi" | "roi-content";
export type SigmaMode = "auto" | "deterministic" | "ancestral";

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface EditJobRequest {
  checkpoint: string;
  mode: EditMode;
  prompt?: string | null;
  use_pe?: boolean;
  variant_count?: number;
  source_rect?: Rect | null;
  dest_rects?: Rect[];
  eta?: number;
  momentum?: number;
  seed?: number;
  scales?: number[] | null;
  sigma_mode?: SigmaMode;
  embedder?: string;
}

export interface TrainJobRequest {
  name: string;
  epochs?: number;
  batch_size?: number;
  lr?: number;
  loss?: "l1" | "l2";
  seed?: number;
  channels?: number;
  blocks?: number;
  embed_dim?: number;
  t0?: number;
  ts?: number | null;
  beta_min?: number;
  beta_max?: number;
  factor?: number;
  min_dim?: number;
}

export interface ScoreJobRequest {
  prompt: string;
  embedder?: string;
  omega?: number;
}

export interface JobInfo {
  id: string;
  kind: JobKind;
  state: JobState;
  progress: number;
  error: string | null;
  result_available: boolean;
  created_at: number;
  updated_at: number;
}

export interface CheckpointInfo {
  name: string;
  step: number | null;
  height: number | null;
  width: number | null;
}

export interface VariantsResponse {
  prompt: string;
  variants: string[];
}

export interface FieldError {
  field: string;
  message: string;
}
