import { decodeGray8, encodeGray8 } from "./png";

/**
 * Binary mask layer over a fixed-size image.
 *
 * Pixels are strictly 0 or 255, matching what the edit endpoint expects from
 * an uploaded mask file. The buffer knows nothing about the DOM; app code
 * feeds it pointer positions and blits `data` into a canvas for display.
 */
export class MaskBuffer {
  readonly width: number;
  readonly height: number;
  /** Row-major, values in {0, 255}. */
  data: Uint8Array;

  private undoStack: Uint8Array[] = [];
  private strokeOpen = false;
  private lastPoint: { x: number; y: number } | null = null;

  constructor(width: number, height: number) {
    if (width < 1 || height < 1) {
      throw new Error(`mask dims must be positive, got ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
  }

  isEmpty(): boolean {
    return !this.data.some((v) => v !== 0);
  }

  /** Fraction of pixels set, for the status line. */
  coverage(): number {
    let n = 0;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i]) n++;
    }
    return n / this.data.length;
  }

  /** Snapshot current state so the stroke about to start can be undone. */
  beginStroke(): void {
    if (this.strokeOpen) return;
    this.undoStack.push(this.data.slice());
    if (this.undoStack.length > 64) this.undoStack.shift();
    this.strokeOpen = true;
    this.lastPoint = null;
  }

  endStroke(): void {
    this.strokeOpen = false;
    this.lastPoint = null;
  }

  /**
   * Stamp the brush at (x, y), connecting from the previous point of this
   * stroke so fast pointer moves leave a solid line instead of dots.
   */
  paint(x: number, y: number, radius: number, erase = false): void {
    const value = erase ? 0 : 255;
    if (this.lastPoint && this.strokeOpen) {
      const { x: px, y: py } = this.lastPoint;
      const dist = Math.hypot(x - px, y - py);
      const steps = Math.max(1, Math.ceil(dist / Math.max(1, radius * 0.5)));
      for (let i = 1; i <= steps; i++) {
        const t = i / steps;
        this.stamp(px + (x - px) * t, py + (y - py) * t, radius, value);
      }
    } else {
      this.stamp(x, y, radius, value);
    }
    if (this.strokeOpen) this.lastPoint = { x, y };
  }

  private stamp(cx: number, cy: number, radius: number, value: number): void {
    const r = Math.max(0.5, radius);
    const x0 = Math.max(0, Math.floor(cx - r));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
    const y0 = Math.max(0, Math.floor(cy - r));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
    const r2 = r * r;
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x + 0.5 - cx;
        const dy = y + 0.5 - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = value;
        }
      }
    }
  }

  fillAll(): void {
    this.undoStack.push(this.data.slice());
    this.data.fill(255);
  }

  clear(): void {
    this.undoStack.push(this.data.slice());
    this.data.fill(0);
  }

  /** Revert the most recent stroke or fill/clear. Returns false if nothing to undo. */
  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.data = prev;
    this.strokeOpen = false;
    this.lastPoint = null;
    return true;
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  /** Encode as a single-channel PNG whose pixels are exactly {0, 255}. */
  exportPng(): Uint8Array {
    return encodeGray8(this.width, this.height, this.data);
  }

  /**
   * Rebuild a buffer from a previously exported mask. Gray values are
   * normalized with a midpoint threshold so a re-saved file still loads.
   */
  static fromPng(bytes: Uint8Array): MaskBuffer {
    const img = decodeGray8(bytes);
    const mask = new MaskBuffer(img.width, img.height);
    for (let i = 0; i < img.pixels.length; i++) {
      mask.data[i] = img.pixels[i] >= 128 ? 255 : 0;
    }
    return mask;
  }

  /**
   * Write the mask into an RGBA pixel array as a translucent overlay color.
   * `rgba` must be width*height*4 bytes; unmasked pixels are left untouched.
   */
  renderOverlay(rgba: Uint8ClampedArray, color: [number, number, number], alpha: number): void {
    if (rgba.length !== this.width * this.height * 4) {
      throw new Error("overlay target size mismatch");
    }
    const a = Math.round(alpha * 255);
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i]) {
        rgba[i * 4] = color[0];
        rgba[i * 4 + 1] = color[1];
        rgba[i * 4 + 2] = color[2];
        rgba[i * 4 + 3] = a;
      } else {
        rgba[i * 4 + 3] = 0;
      }
    }
  }
}
