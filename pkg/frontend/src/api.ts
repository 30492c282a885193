/** Typed client for the render service (/meta, /render, /pick-feature). */

import { z } from "zod";
import type { OrbitState } from "./camera.js";

export const MetaSchema = z.object({
  v: z.literal(1),
  n_vertices: z.number().int().positive(),
  n_faces: z.number().int().positive(),
  bounds_min: z.array(z.number()).length(3),
  bounds_max: z.array(z.number()).length(3),
  feature_dim: z.number().int().positive(),
  encoding: z.string(),
  activation: z.string(),
  max_resolution: z.number().int().positive(),
  feature_presets: z.record(z.array(z.number())),
});
export type Meta = z.infer<typeof MetaSchema>;

export const PickResponseSchema = z.object({
  v: z.literal(1),
  feature: z.array(z.number()),
  point: z.array(z.number()).length(3),
});
export type PickResponse = z.infer<typeof PickResponseSchema>;

export interface SelectorJson {
  kind: "sphere" | "halfspace";
  center?: number[];
  radius?: number;
  point?: number[];
  normal?: number[];
}

export interface EditJson {
  selector: SelectorJson;
  replacement: number[];
  blend: number;
}

export interface RenderRequestJson {
  v: 1;
  orbit: {
    azimuth_deg: number;
    elevation_deg: number;
    radius: number;
    target: number[];
  };
  width: number;
  height: number;
  edit?: EditJson;
}

export function buildRenderRequest(
  orbit: OrbitState,
  width: number,
  height: number,
  edit?: EditJson,
): RenderRequestJson {
  const req: RenderRequestJson = {
    v: 1,
    orbit: {
      azimuth_deg: orbit.azimuthDeg,
      elevation_deg: orbit.elevationDeg,
      radius: orbit.radius,
      target: [...orbit.target],
    },
    width,
    height,
  };
  if (edit !== undefined) req.edit = edit;
  return req;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: unknown,
  ) {
    super(`service returned ${status}`);
  }
}

export class ServiceClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  async meta(): Promise<Meta> {
    const res = await this.fetchFn(`${this.baseUrl}/meta`);
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return MetaSchema.parse(await res.json());
  }

  /** Returns the rendered frame as a PNG blob. */
  async render(req: RenderRequestJson): Promise<Blob> {
    const res = await this.fetchFn(`${this.baseUrl}/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!res.ok) throw new ApiError(res.status, await res.json().catch(() => null));
    return res.blob();
  }

  async pickFeature(
    orbit: OrbitState,
    width: number,
    height: number,
    pixel: [number, number],
  ): Promise<PickResponse | null> {
    const req = { ...buildRenderRequest(orbit, width, height), pixel };
    const res = await this.fetchFn(`${this.baseUrl}/pick-feature`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    if (res.status === 404) return null; // background pixel
    if (!res.ok) throw new ApiError(res.status, await res.json().catch(() => null));
    return PickResponseSchema.parse(await res.json());
  }
}
