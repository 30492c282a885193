/** DOM wiring: orbit interaction, frame display, picking, edit panel. */

import { ServiceClient, buildRenderRequest, type Meta, type RenderRequestJson } from "./api.js";
import {
  DEFAULT_ORBIT,
  dragUpdate,
  radiusBoundsFromScene,
  wheelUpdate,
  type OrbitState,
  type RadiusBounds,
} from "./camera.js";
import { activeEdit, makeEdit, sphereSelectorAt, toggleEdit, type StoredEdit } from "./edits.js";
import { FrameScheduler } from "./scheduler.js";

const RESOLUTION = 384;
const PICK_RADIUS = 0.15;

export class Viewer {
  private orbit: OrbitState = { ...DEFAULT_ORBIT };
  private edits: StoredEdit[] = [];
  private bounds: RadiusBounds = { min: 0.5, max: 20 };
  private scheduler: FrameScheduler<RenderRequestJson, Blob>;
  private lastUrl: string | null = null;
  private lastRequest: RenderRequestJson | null = null;
  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(
    private client: ServiceClient,
    private frame: HTMLImageElement,
    private status: HTMLElement,
    private overlay: HTMLElement,
    private editPanel: HTMLElement,
  ) {
    this.scheduler = new FrameScheduler({
      send: (req) => {
        const t0 = performance.now();
        return this.client.render(req).then((blob) => {
          this.status.textContent = `ok · ${Math.round(performance.now() - t0)} ms`;
          this.status.className = "ok";
          return blob;
        });
      },
      onFrame: (blob, req) => this.showFrame(blob, req),
      onError: () => {
        // keep the stale frame visible, but say so
        this.status.textContent = "request failed — frame is stale";
        this.status.className = "stale";
      },
    });
  }

  async start(): Promise<void> {
    const meta: Meta = await this.client.meta();
    this.bounds = radiusBoundsFromScene(meta.bounds_min, meta.bounds_max);
    this.orbit.radius = Math.min(Math.max(this.orbit.radius, this.bounds.min), this.bounds.max);
    this.attachHandlers();
    this.requestFrame();
  }

  private requestFrame(): void {
    this.scheduler.request(
      buildRenderRequest(this.orbit, RESOLUTION, RESOLUTION, activeEdit(this.edits)),
    );
  }

  private showFrame(blob: Blob, req: RenderRequestJson): void {
    if (this.lastUrl !== null) URL.revokeObjectURL(this.lastUrl);
    this.lastUrl = URL.createObjectURL(blob);
    this.frame.src = this.lastUrl;
    this.lastRequest = req;
    this.overlay.textContent = JSON.stringify(req, null, 2);
  }

  private attachHandlers(): void {
    const el = this.frame;
    el.addEventListener("pointerdown", (ev) => {
      this.dragging = true;
      this.lastX = ev.clientX;
      this.lastY = ev.clientY;
      el.setPointerCapture(ev.pointerId);
    });
    el.addEventListener("pointermove", (ev) => {
      if (!this.dragging) return;
      this.orbit = dragUpdate(
        this.orbit,
        ev.clientX - this.lastX,
        ev.clientY - this.lastY,
        el.clientWidth,
        el.clientHeight,
      );
      this.lastX = ev.clientX;
      this.lastY = ev.clientY;
      this.requestFrame();
    });
    el.addEventListener("pointerup", (ev) => {
      this.dragging = false;
      el.releasePointerCapture(ev.pointerId);
    });
    el.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.orbit = wheelUpdate(this.orbit, ev.deltaY, this.bounds);
      this.requestFrame();
    });
    el.addEventListener("dblclick", (ev) => {
      void this.pickAt(ev);
    });
  }

  private async pickAt(ev: MouseEvent): Promise<void> {
    const rect = this.frame.getBoundingClientRect();
    const col = Math.floor(((ev.clientX - rect.left) / rect.width) * RESOLUTION);
    const row = Math.floor(((ev.clientY - rect.top) / rect.height) * RESOLUTION);
    try {
      const picked = await this.client.pickFeature(this.orbit, RESOLUTION, RESOLUTION, [row, col]);
      if (picked === null) {
        this.status.textContent = "no surface here";
        this.status.className = "notice";
        return;
      }
      const edit = makeEdit(
        `picked @ [${picked.point.map((v) => v.toFixed(2)).join(", ")}]`,
        sphereSelectorAt(picked.point, PICK_RADIUS),
        picked.feature,
      );
      this.edits = [...this.edits, edit];
      this.renderEditPanel();
      this.requestFrame();
    } catch {
      this.status.textContent = "pick failed";
      this.status.className = "stale";
    }
  }

  private renderEditPanel(): void {
    this.editPanel.textContent = "";
    for (const edit of this.edits) {
      const row = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = edit.enabled;
      box.addEventListener("change", () => {
        this.edits = toggleEdit(this.edits, edit.id);
        this.requestFrame();
      });
      row.appendChild(box);
      row.appendChild(document.createTextNode(` ${edit.label}`));
      this.editPanel.appendChild(row);
    }
  }

  /** The request that produced the currently displayed frame. */
  get displayedRequest(): RenderRequestJson | null {
    return this.lastRequest;
  }
}
