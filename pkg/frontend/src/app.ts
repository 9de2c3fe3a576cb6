import { ApiError, ServiceClient } from "./api";
import { diffHeatmap } from "./diff";
import { SessionHistory, type HistoryEntry } from "./history";
import { MaskBuffer } from "./mask";
import type { CheckpointInfo, EditJobRequest, FieldError, Rect } from "./types";
import { validateEdit } from "./validate";

// Single-page controller for the mask-and-edit workflow. All state lives in
// this module; rendering is plain canvas + DOM updates, no framework. The
// page is served from the same origin as the job service (serve --frontend),
// so the client uses relative URLs.

const client = new ServiceClient("");
const history = new SessionHistory();

interface AppState {
  image: ImageBitmap | null;
  imageName: string;
  mask: MaskBuffer | null;
  brushRadius: number;
  erasing: boolean;
  checkpoints: CheckpointInfo[];
  selectedEntry: string | null;
  branchParent: string | null;
  polling: boolean;
  showDiff: boolean;
  beforePixels: ImageData | null;
  afterPixels: ImageData | null;
}

const state: AppState = {
  image: null,
  imageName: "",
  mask: null,
  brushRadius: 12,
  erasing: false,
  checkpoints: [],
  selectedEntry: null,
  branchParent: null,
  polling: false,
  showDiff: false,
  beforePixels: null,
  afterPixels: null,
};

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

const input = (id: string) => $(id) as HTMLInputElement;
const select = (id: string) => $(id) as HTMLSelectElement;

// -- canvas ------------------------------------------------------------

function baseCanvas(): HTMLCanvasElement {
  return $("canvas-image") as HTMLCanvasElement;
}

function overlayCanvas(): HTMLCanvasElement {
  return $("canvas-overlay") as HTMLCanvasElement;
}

function redrawOverlay(): void {
  const canvas = overlayCanvas();
  const ctx = canvas.getContext("2d");
  if (!ctx || !state.mask) return;
  const img = ctx.createImageData(state.mask.width, state.mask.height);
  state.mask.renderOverlay(img.data, [255, 64, 64], 0.45);
  ctx.putImageData(img, 0, 0);
  const pct = (state.mask.coverage() * 100).toFixed(1);
  $("mask-status").textContent = state.mask.isEmpty() ? "mask: empty" : `mask: ${pct}% covered`;
}

function setImage(bitmap: ImageBitmap, name: string): void {
  state.image = bitmap;
  state.imageName = name;
  state.mask = new MaskBuffer(bitmap.width, bitmap.height);
  for (const canvas of [baseCanvas(), overlayCanvas()]) {
    canvas.width = bitmap.width;
    canvas.height = bitmap.height;
  }
  const ctx = baseCanvas().getContext("2d");
  if (ctx) {
    ctx.drawImage(bitmap, 0, 0);
    state.beforePixels = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  }
  $("image-status").textContent = `${name} (${bitmap.width}×${bitmap.height})`;
  redrawOverlay();
  checkDimsAgainstCheckpoint();
}

function canvasPoint(ev: PointerEvent): { x: number; y: number } | null {
  if (!state.mask) return null;
  const rect = overlayCanvas().getBoundingClientRect();
  const x = ((ev.clientX - rect.left) / rect.width) * state.mask.width;
  const y = ((ev.clientY - rect.top) / rect.height) * state.mask.height;
  return { x, y };
}

function wirePainting(): void {
  const canvas = overlayCanvas();
  let down = false;
  canvas.addEventListener("pointerdown", (ev) => {
    if (!state.mask) return;
    down = true;
    canvas.setPointerCapture(ev.pointerId);
    state.mask.beginStroke();
    const p = canvasPoint(ev);
    if (p) state.mask.paint(p.x, p.y, state.brushRadius, state.erasing);
    redrawOverlay();
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!down || !state.mask) return;
    const p = canvasPoint(ev);
    if (p) state.mask.paint(p.x, p.y, state.brushRadius, state.erasing);
    redrawOverlay();
  });
  const finish = () => {
    if (down && state.mask) state.mask.endStroke();
    down = false;
  };
  canvas.addEventListener("pointerup", finish);
  canvas.addEventListener("pointercancel", finish);
}

// -- checkpoints -------------------------------------------------------

async function refreshCheckpoints(): Promise<void> {
  try {
    state.checkpoints = await client.listCheckpoints();
  } catch {
    state.checkpoints = [];
  }
  const sel = select("checkpoint");
  const current = sel.value;
  sel.innerHTML = "";
  for (const ck of state.checkpoints) {
    const opt = document.createElement("option");
    opt.value = ck.name;
    const dims = ck.height && ck.width ? ` ${ck.width}×${ck.height}` : "";
    opt.textContent = ck.name + dims;
    sel.appendChild(opt);
  }
  if (current && state.checkpoints.some((c) => c.name === current)) sel.value = current;
  checkDimsAgainstCheckpoint();
}

function checkDimsAgainstCheckpoint(): void {
  const note = $("dims-note");
  note.textContent = "";
  const ck = state.checkpoints.find((c) => c.name === select("checkpoint").value);
  if (!ck || !state.image || !ck.width || !ck.height) return;
  if (ck.width !== state.image.width || ck.height !== state.image.height) {
    note.textContent = `image is ${state.image.width}×${state.image.height} but checkpoint trained on ${ck.width}×${ck.height}`;
  }
}

// -- form --------------------------------------------------------------

function readRects(prefix: "source" | "dest"): Rect[] {
  const rows = document.querySelectorAll<HTMLElement>(`#${prefix}-rects .rect-row`);
  const rects: Rect[] = [];
  rows.forEach((row) => {
    const get = (cls: string) =>
      Number((row.querySelector(`.${cls}`) as HTMLInputElement).value || "0");
    rects.push({ x: get("rx"), y: get("ry"), w: get("rw"), h: get("rh") });
  });
  return rects;
}

function addRectRow(containerId: string, rect?: Rect): void {
  const container = $(containerId);
  const row = document.createElement("div");
  row.className = "rect-row";
  for (const [cls, label, val] of [
    ["rx", "x", rect?.x ?? 0],
    ["ry", "y", rect?.y ?? 0],
    ["rw", "w", rect?.w ?? 16],
    ["rh", "h", rect?.h ?? 16],
  ] as const) {
    const lab = document.createElement("label");
    lab.textContent = label;
    const field = document.createElement("input");
    field.type = "number";
    field.className = cls;
    field.value = String(val);
    lab.appendChild(field);
    row.appendChild(lab);
  }
  const remove = document.createElement("button");
  remove.type = "button";
  remove.textContent = "×";
  remove.addEventListener("click", () => row.remove());
  row.appendChild(remove);
  container.appendChild(row);
}

function buildRequest(): EditJobRequest {
  const mode = select("mode").value as EditJobRequest["mode"];
  const req: EditJobRequest = {
    checkpoint: select("checkpoint").value,
    mode,
    eta: Number(input("eta").value),
    momentum: Number(input("momentum").value),
    seed: Number(input("seed").value || "0"),
    sigma_mode: select("sigma-mode").value as EditJobRequest["sigma_mode"],
  };
  const prompt = input("prompt").value;
  if (prompt) req.prompt = prompt;
  if (input("use-pe").checked) {
    req.use_pe = true;
    req.variant_count = Number(input("variant-count").value || "5");
  }
  if (mode === "roi-content") {
    const src = readRects("source");
    if (src.length) req.source_rect = src[0];
    const dest = readRects("dest");
    if (dest.length) req.dest_rects = dest;
  }
  return req;
}

function modeChanged(): void {
  const mode = select("mode").value;
  $("prompt-section").classList.toggle("hidden", mode === "roi-content");
  $("rects-section").classList.toggle("hidden", mode !== "roi-content");
}

// -- errors ------------------------------------------------------------

function clearFieldErrors(): void {
  document.querySelectorAll(".field-error").forEach((el) => {
    el.textContent = "";
  });
  $("submit-error").textContent = "";
}

function showFieldErrors(errors: FieldError[]): void {
  clearFieldErrors();
  const leftovers: string[] = [];
  for (const e of errors) {
    // nested names like source_rect.x land on the section for that group
    const anchor = e.field.split(".")[0];
    const slot = document.querySelector<HTMLElement>(`[data-error-for="${anchor}"]`);
    if (slot) {
      slot.textContent = slot.textContent
        ? `${slot.textContent}; ${e.field}: ${e.message}`
        : `${e.field}: ${e.message}`;
    } else {
      leftovers.push(`${e.field}: ${e.message}`);
    }
  }
  if (leftovers.length) $("submit-error").textContent = leftovers.join("; ");
}

// -- variants preview --------------------------------------------------

async function previewVariants(): Promise<void> {
  const prompt = input("prompt").value.trim();
  const list = $("variant-list");
  list.innerHTML = "";
  if (!prompt) {
    showFieldErrors([{ field: "prompt", message: "enter a prompt to preview variants" }]);
    return;
  }
  clearFieldErrors();
  try {
    const k = Number(input("variant-count").value || "5");
    const resp = await client.variants(prompt, k);
    for (const v of resp.variants) {
      const li = document.createElement("li");
      li.textContent = v;
      list.appendChild(li);
    }
  } catch (err) {
    if (err instanceof ApiError) showFieldErrors(err.errors);
    else $("submit-error").textContent = String(err);
  }
}

// -- submit and poll ---------------------------------------------------

async function submitEdit(): Promise<void> {
  if (state.polling) return;
  clearFieldErrors();
  const req = buildRequest();
  const mode = req.mode;
  const wantsMask = mode === "text-roi" || mode === "roi-content";
  let maskPng: Uint8Array | null = null;
  if (wantsMask && state.mask) {
    if (state.mask.isEmpty()) {
      const go = window.confirm(
        "The mask has no strokes. Submit with an empty mask anyway?",
      );
      if (!go) return;
    }
    maskPng = state.mask.exportPng();
  }

  const problems = validateEdit(req, maskPng !== null);
  if (problems.length) {
    showFieldErrors(problems);
    return;
  }

  const entry = history.add(req, maskPng, state.branchParent);
  state.branchParent = null;
  renderHistory();

  state.polling = true;
  setProgress(0, "submitting");
  try {
    const info = await client.submitEdit(req, maskPng ?? undefined);
    entry.jobId = info.id;
    entry.state = "running";
    renderHistory();
    const done = await client.pollJob(info.id, (update) => {
      setProgress(update.progress, update.state.toLowerCase());
    });
    if (done.state === "DONE") {
      const payload = await client.resultBytes(done.id);
      entry.resultBytes = payload.bytes;
      entry.state = "done";
      await showResult(entry);
    } else {
      entry.state = "failed";
      entry.error = done.error ?? "job failed";
      $("submit-error").textContent = entry.error;
    }
  } catch (err) {
    entry.state = "failed";
    if (err instanceof ApiError) {
      entry.error = err.message;
      showFieldErrors(err.errors);
    } else {
      entry.error = String(err);
      $("submit-error").textContent = entry.error;
    }
  } finally {
    state.polling = false;
    setProgress(entry.state === "done" ? 1 : 0, entry.state);
    renderHistory();
  }
}

function setProgress(fraction: number, label: string): void {
  const bar = $("progress-bar");
  bar.style.width = `${Math.round(fraction * 100)}%`;
  $("progress-label").textContent = label;
}

// -- results -----------------------------------------------------------

async function showResult(entry: HistoryEntry): Promise<void> {
  if (!entry.resultBytes) return;
  state.selectedEntry = entry.id;
  const blob = new Blob([entry.resultBytes.slice().buffer as ArrayBuffer], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  const after = $("canvas-after") as HTMLCanvasElement;
  after.width = bitmap.width;
  after.height = bitmap.height;
  const actx = after.getContext("2d");
  if (actx) {
    actx.drawImage(bitmap, 0, 0);
    state.afterPixels = actx.getImageData(0, 0, bitmap.width, bitmap.height);
  }
  const before = $("canvas-before") as HTMLCanvasElement;
  if (state.image) {
    before.width = state.image.width;
    before.height = state.image.height;
    before.getContext("2d")?.drawImage(state.image, 0, 0);
  }
  $("results").classList.remove("hidden");
  state.showDiff = false;
  renderAfter();
  renderHistory();
}

function renderAfter(): void {
  const after = $("canvas-after") as HTMLCanvasElement;
  const ctx = after.getContext("2d");
  if (!ctx || !state.afterPixels) return;
  if (state.showDiff && state.beforePixels && state.beforePixels.data.length === state.afterPixels.data.length) {
    const img = ctx.createImageData(after.width, after.height);
    diffHeatmap(state.beforePixels.data, state.afterPixels.data, img.data);
    ctx.putImageData(img, 0, 0);
    $("after-title").textContent = "difference";
  } else {
    ctx.putImageData(state.afterPixels, 0, 0);
    $("after-title").textContent = "after";
  }
}

// -- history -----------------------------------------------------------

function renderHistory(): void {
  const list = $("history-list");
  list.innerHTML = "";
  for (const entry of history.entries) {
    const li = document.createElement("li");
    li.style.marginLeft = `${history.depth(entry.id) * 16}px`;
    li.className = entry.id === state.selectedEntry ? "selected" : "";
    const label = document.createElement("span");
    label.textContent = `${entry.label} [${entry.state}]`;
    li.appendChild(label);
    if (entry.state === "done") {
      const view = document.createElement("button");
      view.type = "button";
      view.textContent = "view";
      view.addEventListener("click", () => void showResult(entry));
      li.appendChild(view);
    }
    const branch = document.createElement("button");
    branch.type = "button";
    branch.textContent = "branch";
    branch.addEventListener("click", () => loadBranch(entry.id));
    li.appendChild(branch);
    list.appendChild(li);
  }
}

function loadBranch(id: string): void {
  const { request, maskPng, parentId } = history.branchFrom(id);
  state.branchParent = parentId;
  select("mode").value = request.mode;
  input("prompt").value = request.prompt ?? "";
  input("use-pe").checked = Boolean(request.use_pe);
  input("variant-count").value = String(request.variant_count ?? 5);
  input("eta").value = String(request.eta ?? 0.3);
  input("momentum").value = String(request.momentum ?? 0.05);
  input("seed").value = String(request.seed ?? 0);
  select("sigma-mode").value = request.sigma_mode ?? "auto";
  if (state.checkpoints.some((c) => c.name === request.checkpoint)) {
    select("checkpoint").value = request.checkpoint;
  }
  $("source-rects").innerHTML = "";
  if (request.source_rect) addRectRow("source-rects", request.source_rect);
  $("dest-rects").innerHTML = "";
  for (const rect of request.dest_rects ?? []) addRectRow("dest-rects", rect);
  if (maskPng && state.image) {
    const restored = MaskBuffer.fromPng(maskPng);
    if (restored.width === state.image.width && restored.height === state.image.height) {
      state.mask = restored;
      redrawOverlay();
    }
  }
  modeChanged();
}

// -- mask import/export ------------------------------------------------

function exportMask(): void {
  if (!state.mask) return;
  if (state.mask.isEmpty()) {
    const go = window.confirm("The mask has no strokes. Export an empty mask anyway?");
    if (!go) return;
  }
  const png = state.mask.exportPng();
  const blob = new Blob([png.slice().buffer as ArrayBuffer], { type: "image/png" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "mask.png";
  a.click();
  URL.revokeObjectURL(a.href);
}

async function importMask(file: File): Promise<void> {
  const bytes = new Uint8Array(await file.arrayBuffer());
  try {
    const restored = MaskBuffer.fromPng(bytes);
    if (state.image && (restored.width !== state.image.width || restored.height !== state.image.height)) {
      showFieldErrors([
        {
          field: "mask",
          message: `mask is ${restored.width}×${restored.height} but image is ${state.image.width}×${state.image.height}`,
        },
      ]);
      return;
    }
    state.mask = restored;
    redrawOverlay();
  } catch {
    // not one of ours; let the browser decode it and threshold the result
    const bitmap = await createImageBitmap(new Blob([bytes.slice().buffer as ArrayBuffer]));
    const scratch = document.createElement("canvas");
    scratch.width = bitmap.width;
    scratch.height = bitmap.height;
    const ctx = scratch.getContext("2d");
    if (!ctx) return;
    ctx.drawImage(bitmap, 0, 0);
    const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
    const restored = new MaskBuffer(bitmap.width, bitmap.height);
    for (let i = 0; i < restored.data.length; i++) {
      restored.data[i] = data[i * 4] >= 128 ? 255 : 0;
    }
    state.mask = restored;
    redrawOverlay();
  }
}

// -- boot --------------------------------------------------------------

function wire(): void {
  input("image-file").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const bitmap = await createImageBitmap(file);
    setImage(bitmap, file.name);
  });
  input("mask-file").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void importMask(file);
  });
  input("brush-radius").addEventListener("input", () => {
    state.brushRadius = Number(input("brush-radius").value);
    $("brush-label").textContent = `${state.brushRadius}px`;
  });
  input("erase-toggle").addEventListener("change", () => {
    state.erasing = input("erase-toggle").checked;
  });
  $("undo-btn").addEventListener("click", () => {
    state.mask?.undo();
    redrawOverlay();
  });
  $("clear-btn").addEventListener("click", () => {
    state.mask?.clear();
    redrawOverlay();
  });
  $("fill-btn").addEventListener("click", () => {
    state.mask?.fillAll();
    redrawOverlay();
  });
  $("export-mask-btn").addEventListener("click", exportMask);
  $("refresh-checkpoints").addEventListener("click", () => void refreshCheckpoints());
  select("checkpoint").addEventListener("change", checkDimsAgainstCheckpoint);
  select("mode").addEventListener("change", modeChanged);
  $("preview-variants").addEventListener("click", () => void previewVariants());
  $("add-source-rect").addEventListener("click", () => {
    if (!$("source-rects").querySelector(".rect-row")) addRectRow("source-rects");
  });
  $("add-dest-rect").addEventListener("click", () => addRectRow("dest-rects"));
  $("submit-btn").addEventListener("click", () => void submitEdit());
  $("diff-toggle").addEventListener("click", () => {
    state.showDiff = !state.showDiff;
    renderAfter();
  });
  wirePainting();
  modeChanged();

  void (async () => {
    const ok = await client.health();
    $("service-status").textContent = ok ? "service: up" : "service: unreachable";
    $("service-status").className = ok ? "status-ok" : "status-bad";
    if (ok) await refreshCheckpoints();
  })();
}

if (typeof document !== "undefined") {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", wire);
  } else {
    wire();
  }
}
