/** Material-edit list: picked features turned into render-request edits. */

import type { EditJson, SelectorJson } from "./api.js";

export interface StoredEdit {
  id: number;
  label: string;
  selector: SelectorJson;
  replacement: number[];
  blend: number;
  enabled: boolean;
}

let nextId = 1;

export function makeEdit(
  label: string,
  selector: SelectorJson,
  replacement: number[],
  blend = 1,
): StoredEdit {
  return { id: nextId++, label, selector, replacement, blend, enabled: true };
}

/** Selector around a picked surface point: a small sphere region. */
export function sphereSelectorAt(point: number[], radius: number): SelectorJson {
  return { kind: "sphere", center: [...point], radius };
}

export function toggleEdit(edits: StoredEdit[], id: number): StoredEdit[] {
  return edits.map((e) => (e.id === id ? { ...e, enabled: !e.enabled } : e));
}

export function setBlend(edits: StoredEdit[], id: number, blend: number): StoredEdit[] {
  return edits.map((e) => (e.id === id ? { ...e, blend } : e));
}

export function removeEdit(edits: StoredEdit[], id: number): StoredEdit[] {
  return edits.filter((e) => e.id !== id);
}

/**
 * The render request carries a single edit; the most recently added enabled
 * edit wins. With nothing enabled the request is the unedited baseline, so
 * toggling an edit off restores the original frame byte-for-byte (the
 * service is deterministic).
 */
export function activeEdit(edits: StoredEdit[]): EditJson | undefined {
  for (let i = edits.length - 1; i >= 0; i--) {
    const e = edits[i];
    if (e.enabled) {
      return { selector: e.selector, replacement: e.replacement, blend: e.blend };
    }
  }
  return undefined;
}
