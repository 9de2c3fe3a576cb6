import type {
  CheckpointInfo,
  EditJobRequest,
  FieldError,
  JobInfo,
  ScoreJobRequest,
  TrainJobRequest,
  VariantsResponse,
} from "./types";

/** Error raised for any non-2xx response, carrying the server's field errors. */
export class ApiError extends Error {
  readonly status: number;
  readonly errors: FieldError[];

  constructor(status: number, errors: FieldError[]) {
    super(errors.map((e) => `${e.field}: ${e.message}`).join("; ") || `HTTP ${status}`);
    this.name = "ApiError";
    this.status = status;
    this.errors = errors;
  }

  /** Message for one field, or undefined if the server did not flag it. */
  forField(field: string): string | undefined {
    return this.errors.find((e) => e.field === field || e.field.startsWith(field + "."))?.message;
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let errors: FieldError[] = [];
  try {
    const body = await resp.json();
    if (Array.isArray(body?.errors)) {
      errors = body.errors.filter(
        (e: unknown): e is FieldError =>
          typeof e === "object" && e !== null && "field" in e && "message" in e,
      );
    }
  } catch {
    // non-JSON body; fall through with the bare status
  }
  throw new ApiError(resp.status, errors);
}

export interface ResultPayload {
  bytes: Uint8Array;
  contentType: string;
}

/**
 * Thin client for the editing job service. Every method maps to one
 * endpoint; submit calls send a multipart form with a JSON "request" part
 * plus any file uploads, mirroring what the CLI sends.
 */
export class ServiceClient {
  readonly baseUrl: string;

  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async postMultipart(path: string, form: FormData): Promise<JobInfo> {
    const resp = await fetch(this.baseUrl + path, { method: "POST", body: form });
    await raiseForStatus(resp);
    return (await resp.json()) as JobInfo;
  }

  async submitEdit(request: EditJobRequest, mask?: Uint8Array | Blob): Promise<JobInfo> {
    const form = new FormData();
    form.append("request", JSON.stringify(request));
    if (mask) {
      const blob = mask instanceof Blob ? mask : new Blob([toArrayBuffer(mask)], { type: "image/png" });
      form.append("mask", blob, "mask.png");
    }
    return this.postMultipart("/jobs/edit", form);
  }

  async submitTrain(request: TrainJobRequest, image: Uint8Array | Blob): Promise<JobInfo> {
    const form = new FormData();
    form.append("request", JSON.stringify(request));
    const blob = image instanceof Blob ? image : new Blob([toArrayBuffer(image)], { type: "image/png" });
    form.append("image", blob, "image.png");
    return this.postMultipart("/jobs/train", form);
  }

  async submitScore(request: ScoreJobRequest, images: (Uint8Array | Blob)[]): Promise<JobInfo> {
    const form = new FormData();
    form.append("request", JSON.stringify(request));
    images.forEach((img, i) => {
      const blob = img instanceof Blob ? img : new Blob([toArrayBuffer(img)], { type: "image/png" });
      form.append("images", blob, `image-${i}.png`);
    });
    return this.postMultipart("/jobs/score", form);
  }

  async getJob(jobId: string): Promise<JobInfo> {
    const resp = await fetch(`${this.baseUrl}/jobs/${encodeURIComponent(jobId)}`);
    await raiseForStatus(resp);
    return (await resp.json()) as JobInfo;
  }

  async cancelJob(jobId: string): Promise<JobInfo> {
    const resp = await fetch(`${this.baseUrl}/jobs/${encodeURIComponent(jobId)}`, {
      method: "DELETE",
    });
    await raiseForStatus(resp);
    return (await resp.json()) as JobInfo;
  }

  async resultBytes(jobId: string): Promise<ResultPayload> {
    const resp = await fetch(`${this.baseUrl}/jobs/${encodeURIComponent(jobId)}/result`);
    await raiseForStatus(resp);
    const buf = await resp.arrayBuffer();
    return {
      bytes: new Uint8Array(buf),
      contentType: resp.headers.get("content-type") ?? "application/octet-stream",
    };
  }

  async listCheckpoints(): Promise<CheckpointInfo[]> {
    const resp = await fetch(`${this.baseUrl}/checkpoints`);
    await raiseForStatus(resp);
    const body = (await resp.json()) as { checkpoints: CheckpointInfo[] };
    return body.checkpoints;
  }

  async variants(prompt: string, k = 5): Promise<VariantsResponse> {
    const resp = await fetch(`${this.baseUrl}/variants`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ prompt, k }),
    });
    await raiseForStatus(resp);
    return (await resp.json()) as VariantsResponse;
  }

  async health(): Promise<boolean> {
    try {
      const resp = await fetch(`${this.baseUrl}/healthz`);
      return resp.ok;
    } catch {
      return false;
    }
  }

  /**
   * Poll a job until it leaves the queue. Resolves with the terminal
   * JobInfo (DONE or FAILED); onUpdate fires for every observed state.
   */
  async pollJob(
    jobId: string,
    onUpdate?: (info: JobInfo) => void,
    intervalMs = 1000,
  ): Promise<JobInfo> {
    for (;;) {
      const info = await this.getJob(jobId);
      onUpdate?.(info);
      if (info.state === "DONE" || info.state === "FAILED") return info;
      await sleep(intervalMs);
    }
  }
}

function toArrayBuffer(bytes: Uint8Array): ArrayBuffer {
  return bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
