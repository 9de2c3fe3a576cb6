import type { EditJobRequest, FieldError, Rect, ScoreJobRequest, TrainJobRequest } from "./types";

// Client-side mirror of the server's submit-time validation. Field names
// match what the service reports (nested fields dotted, list indices
// inline, e.g. "dest_rects.0.w") so inline error rendering works the same
// whether the check ran here or on the server.
//
// Shape of the result mirrors the server too: schema-level problems are
// batched, and the follow-up checks (prompt, checkpoint name, mask) only
// surface once the schema is clean, first one wins.

const EDIT_MODES = ["text-full", "text-roi", "roi-content"] as const;
const SIGMA_MODES = ["auto", "deterministic", "ancestral"] as const;
const LOSSES = ["l1", "l2"] as const;
const NAME_PATTERN = /^[A-Za-z0-9._-]+$/;

function err(field: string, message: string): FieldError {
  return { field, message };
}

function checkInt(out: FieldError[], field: string, value: unknown, min?: number): void {
  if (value === undefined) return;
  if (typeof value !== "number" || !Number.isInteger(value)) {
    out.push(err(field, "must be an integer"));
  } else if (min !== undefined && value < min) {
    out.push(err(field, `must be >= ${min}`));
  }
}

function checkRect(out: FieldError[], prefix: string, rect: Rect): void {
  checkInt(out, `${prefix}.x`, rect.x, 0);
  checkInt(out, `${prefix}.y`, rect.y, 0);
  checkInt(out, `${prefix}.w`, rect.w, 1);
  checkInt(out, `${prefix}.h`, rect.h, 1);
}

export function validateEdit(req: EditJobRequest, hasMask: boolean): FieldError[] {
  const schema: FieldError[] = [];
  if (typeof req.checkpoint !== "string" || req.checkpoint.length < 1) {
    schema.push(err("checkpoint", "checkpoint name is required"));
  }
  if (!EDIT_MODES.includes(req.mode)) {
    schema.push(err("mode", `must be one of ${EDIT_MODES.join(", ")}`));
  }
  checkInt(schema, "variant_count", req.variant_count, 1);
  if (req.source_rect) checkRect(schema, "source_rect", req.source_rect);
  req.dest_rects?.forEach((rect, i) => checkRect(schema, `dest_rects.${i}`, rect));
  if (req.eta !== undefined && (typeof req.eta !== "number" || req.eta < 0 || req.eta > 1)) {
    schema.push(err("eta", "must be between 0 and 1"));
  }
  if (
    req.momentum !== undefined &&
    (typeof req.momentum !== "number" || req.momentum < 0 || req.momentum > 1)
  ) {
    schema.push(err("momentum", "must be between 0 and 1"));
  }
  checkInt(schema, "seed", req.seed);
  if (req.scales != null) {
    req.scales.forEach((s, i) => checkInt(schema, `scales.${i}`, s));
  }
  if (req.sigma_mode !== undefined && !SIGMA_MODES.includes(req.sigma_mode)) {
    schema.push(err("sigma_mode", `must be one of ${SIGMA_MODES.join(", ")}`));
  }
  if (schema.length) return schema;

  if (
    (req.mode === "text-full" || req.mode === "text-roi") &&
    !(req.prompt && req.prompt.trim())
  ) {
    return [err("prompt", `${req.mode} requires a prompt`)];
  }
  if (req.checkpoint.includes("/") || req.checkpoint.includes("\\") || req.checkpoint.includes("..")) {
    return [err("checkpoint", "checkpoint name must not contain path separators")];
  }
  if (req.mode === "text-roi" && !hasMask) {
    return [err("mask", "text-roi requires a mask upload")];
  }
  return [];
}

export function validateTrain(req: TrainJobRequest, hasImage: boolean): FieldError[] {
  const schema: FieldError[] = [];
  if (typeof req.name !== "string" || req.name.length < 1 || req.name.length > 80) {
    schema.push(err("name", "name must be 1-80 characters"));
  } else if (!NAME_PATTERN.test(req.name)) {
    schema.push(err("name", "name may use letters, digits, dot, underscore, dash"));
  }
  checkInt(schema, "epochs", req.epochs, 1);
  checkInt(schema, "batch_size", req.batch_size, 1);
  if (req.lr !== undefined && (typeof req.lr !== "number" || req.lr <= 0)) {
    schema.push(err("lr", "must be > 0"));
  }
  if (req.loss !== undefined && !LOSSES.includes(req.loss)) {
    schema.push(err("loss", `must be one of ${LOSSES.join(", ")}`));
  }
  checkInt(schema, "seed", req.seed);
  checkInt(schema, "channels", req.channels, 1);
  checkInt(schema, "blocks", req.blocks, 1);
  checkInt(schema, "embed_dim", req.embed_dim, 2);
  if (
    req.embed_dim !== undefined &&
    typeof req.embed_dim === "number" &&
    Number.isInteger(req.embed_dim) &&
    req.embed_dim % 2
  ) {
    schema.push(err("embed_dim", "embed_dim must be even"));
  }
  checkInt(schema, "t0", req.t0, 1);
  if (req.ts != null) checkInt(schema, "ts", req.ts, 1);
  for (const field of ["beta_min", "beta_max"] as const) {
    const v = req[field];
    if (v !== undefined && (typeof v !== "number" || v <= 0 || v >= 1)) {
      schema.push(err(field, "must be strictly between 0 and 1"));
    }
  }
  if (req.factor !== undefined && (typeof req.factor !== "number" || req.factor <= 1)) {
    schema.push(err("factor", "must be > 1"));
  }
  checkInt(schema, "min_dim", req.min_dim, 4);
  if (schema.length) return schema;

  if (!hasImage) {
    return [err("image", "training image upload is required")];
  }
  return [];
}

export function validateScore(req: ScoreJobRequest, imageCount: number): FieldError[] {
  const schema: FieldError[] = [];
  if (typeof req.prompt !== "string" || req.prompt.length < 1) {
    schema.push(err("prompt", "prompt is required"));
  }
  if (req.omega !== undefined && (typeof req.omega !== "number" || req.omega <= 0)) {
    schema.push(err("omega", "must be > 0"));
  }
  if (schema.length) return schema;

  if (imageCount < 1) {
    return [err("images", "at least one image upload is required")];
  }
  return [];
}
