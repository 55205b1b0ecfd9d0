/** Browser entry point: wires the canvas viewer, point placement, and the
 * segmentation service together. */

import { ServiceClient } from "./api.js";
import type { Axis, Dims } from "./coords.js";
import {
  extractSlice,
  planeToScreen,
  planeToVoxel,
  screenToPlane,
  sliceCount,
  sliceShape,
  voxelToPlane,
} from "./coords.js";
import { rleDecode } from "./rle.js";
import type { ViewState } from "./state.js";
import {
  RequestQueue,
  clearPoints,
  initialState,
  placePoint,
  setAxis,
  stepSlice,
  toSegmentPoints,
  toggleLabel,
  undoPoint,
} from "./state.js";

const CANVAS_SIZE = 512;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export class App {
  private state!: ViewState;
  private dims!: Dims;
  private mask: Uint8Array | null = null;
  private queue = new RequestQueue();
  private sliceImage: HTMLImageElement = new Image();

  constructor(
    private client: ServiceClient,
    private volumeId: string,
    private canvas: HTMLCanvasElement,
    private status: HTMLElement,
    private dice: HTMLElement,
    private banner: HTMLElement
  ) {}

  async start(): Promise<void> {
    const info = await this.client.volumeInfo(this.volumeId);
    this.dims = { d: info.dims[0], h: info.dims[1], w: info.dims[2] };
    this.state = initialState(this.dims);
    this.canvas.width = CANVAS_SIZE;
    this.canvas.height = CANVAS_SIZE;
    this.bindEvents();
    await this.loadSlice();
  }

  private bindEvents(): void {
    this.canvas.addEventListener("click", (ev) => {
      const rect = this.canvas.getBoundingClientRect();
      void this.handleClick(ev.clientX - rect.left, ev.clientY - rect.top);
    });
    window.addEventListener("keydown", (ev) => {
      void this.handleKey(ev.key);
    });
  }

  async handleClick(px: number, py: number): Promise<void> {
    const { rows, cols } = sliceShape(this.dims, this.state.axis);
    const cell = screenToPlane(px, py, this.canvas.width, this.canvas.height, rows, cols);
    if (!cell) return;
    const voxel = planeToVoxel(this.state.axis, this.state.index, cell.row, cell.col);
    this.state = placePoint(this.state, voxel);
    this.render();
    await this.requestSegmentation();
  }

  async handleKey(key: string): Promise<void> {
    switch (key) {
      case "ArrowUp":
        this.state = stepSlice(this.state, this.dims, 1);
        await this.loadSlice();
        break;
      case "ArrowDown":
        this.state = stepSlice(this.state, this.dims, -1);
        await this.loadSlice();
        break;
      case "t":
        this.state = toggleLabel(this.state);
        this.render();
        break;
      case "u":
        this.state = undoPoint(this.state);
        this.render();
        await this.requestSegmentation();
        break;
      case "c":
        this.state = clearPoints(this.state);
        this.mask = null;
        this.render();
        break;
      case "1":
      case "2":
      case "3": {
        const axis = (Number(key) - 1) as Axis;
        this.state = setAxis(this.state, this.dims, axis);
        await this.loadSlice();
        break;
      }
    }
  }

  private async requestSegmentation(): Promise<void> {
    if (this.state.points.length === 0) {
      this.mask = null;
      this.state = { ...this.state, result: null };
      this.render();
      return;
    }
    const points = toSegmentPoints(this.state.points);
    await this.queue.submit(async () => {
      this.state = { ...this.state, busy: true, error: null };
      this.render();
      try {
        const resp = await this.client.segment(this.volumeId, points);
        this.mask = rleDecode(resp.mask_rle);
        this.state = { ...this.state, result: resp, busy: false };
      } catch (err) {
        this.state = {
          ...this.state,
          error: err instanceof Error ? err.message : String(err),
          busy: false,
        };
      }
      this.render();
    });
  }

  private async loadSlice(): Promise<void> {
    const url = this.client.sliceUrl(this.volumeId, this.state.axis, this.state.index);
    await new Promise<void>((resolve, reject) => {
      this.sliceImage = new Image();
      this.sliceImage.onload = () => resolve();
      this.sliceImage.onerror = () => reject(new Error(`failed to load ${url}`));
      this.sliceImage.src = url;
    });
    this.render();
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.sliceImage.complete && this.sliceImage.naturalWidth > 0) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(this.sliceImage, 0, 0, this.canvas.width, this.canvas.height);
    }
    this.drawMaskOverlay(ctx);
    this.drawPoints(ctx);
    this.updateText();
  }

  private drawMaskOverlay(ctx: CanvasRenderingContext2D): void {
    if (!this.mask) return;
    const { rows, cols } = sliceShape(this.dims, this.state.axis);
    const plane = extractSlice(this.mask, this.dims, this.state.axis, this.state.index);
    const cellW = this.canvas.width / cols;
    const cellH = this.canvas.height / rows;
    ctx.fillStyle = "rgba(255, 80, 80, 0.45)";
    for (let r = 0; r < rows; r++) {
      for (let c = 0; c < cols; c++) {
        if (plane[r * cols + c]) {
          ctx.fillRect(c * cellW, r * cellH, cellW + 0.5, cellH + 0.5);
        }
      }
    }
  }

  private drawPoints(ctx: CanvasRenderingContext2D): void {
    const { rows, cols } = sliceShape(this.dims, this.state.axis);
    for (const p of this.state.points) {
      const plane = voxelToPlane(this.state.axis, p);
      if (plane.index !== this.state.index) continue;
      const { px, py } = planeToScreen(
        plane.row,
        plane.col,
        this.canvas.width,
        this.canvas.height,
        rows,
        cols
      );
      ctx.beginPath();
      ctx.arc(px, py, 5, 0, 2 * Math.PI);
      ctx.fillStyle = p.label === "foreground" ? "#2ecc40" : "#0074d9";
      ctx.fill();
      ctx.strokeStyle = "white";
      ctx.stroke();
    }
  }

  private updateText(): void {
    const s = this.state;
    const n = sliceCount(this.dims, s.axis);
    const parts = [
      `axis ${s.axis}, slice ${s.index + 1}/${n}`,
      `label: ${s.activeLabel}`,
      `${s.points.length} point(s)`,
    ];
    if (s.busy) parts.push("segmenting…");
    if (s.error) parts.push(`error: ${s.error}`);
    this.status.textContent = parts.join(" · ");
    this.status.classList.toggle("error", s.error !== null);

    if (s.result && typeof s.result.dice === "number") {
      this.dice.textContent = `Dice vs reference: ${s.result.dice.toFixed(4)}`;
    } else {
      this.dice.textContent = "";
    }

    const noLesion = s.result !== null && s.result.voxel_count === 0;
    this.banner.hidden = !noLesion;
  }
}

export async function main(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const volumeId = params.get("volume");
  const status = byId<HTMLElement>("status");
  if (!volumeId) {
    status.textContent = "Add ?volume=<id> to the URL after uploading a volume.";
    return;
  }
  const app = new App(
    new ServiceClient(""),
    volumeId,
    byId<HTMLCanvasElement>("viewer"),
    status,
    byId<HTMLElement>("dice"),
    byId<HTMLElement>("banner")
  );
  await app.start();
}

if (typeof document !== "undefined" && document.getElementById("viewer")) {
  void main();
}
