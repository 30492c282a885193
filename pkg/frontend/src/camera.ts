/** Orbit camera state and pointer-to-camera mappings. */

export interface OrbitState {
  azimuthDeg: number;
  elevationDeg: number;
  radius: number;
  target: [number, number, number];
}

export interface RadiusBounds {
  min: number;
  max: number;
}

export const DEFAULT_ORBIT: OrbitState = {
  azimuthDeg: 30,
  elevationDeg: 15,
  radius: 3,
  target: [0, 0, 0],
};

/** Wrap into [0, 360). */
export function wrapAzimuth(deg: number): number {
  const a = deg % 360;
  return a < 0 ? a + 360 : a;
}

/** Keep the camera off the poles so the up vector stays stable. */
export function clampElevation(deg: number): number {
  return Math.min(89, Math.max(-89, deg));
}

/**
 * Map a pointer drag to orbit angles: dragging across the full canvas width
 * sweeps a full 360° turn; the full height sweeps 180° of elevation.
 */
export function dragUpdate(
  state: OrbitState,
  dxPx: number,
  dyPx: number,
  canvasWidth: number,
  canvasHeight: number,
): OrbitState {
  return {
    ...state,
    azimuthDeg: wrapAzimuth(state.azimuthDeg + (dxPx / canvasWidth) * 360),
    elevationDeg: clampElevation(state.elevationDeg + (dyPx / canvasHeight) * 180),
  };
}

/** Wheel zoom: exponential in scroll distance, clamped to the scene bounds. */
export function wheelUpdate(
  state: OrbitState,
  deltaY: number,
  bounds: RadiusBounds,
): OrbitState {
  const radius = state.radius * Math.exp(deltaY * 0.001);
  return {
    ...state,
    radius: Math.min(bounds.max, Math.max(bounds.min, radius)),
  };
}

/** Sensible zoom range from the model's bounding box (from /meta). */
export function radiusBoundsFromScene(
  boundsMin: number[],
  boundsMax: number[],
): RadiusBounds {
  let extent = 0;
  for (let i = 0; i < 3; i++) extent = Math.max(extent, boundsMax[i] - boundsMin[i]);
  return { min: Math.max(extent * 0.75, 0.01), max: extent * 10 };
}
