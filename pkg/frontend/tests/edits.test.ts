import { describe, expect, it } from "vitest";
import { buildRenderRequest } from "../src/api.js";
import { DEFAULT_ORBIT } from "../src/camera.js";
import {
  activeEdit,
  makeEdit,
  removeEdit,
  setBlend,
  sphereSelectorAt,
  toggleEdit,
} from "../src/edits.js";

const FEATURE = [0.1, -0.2, 0.3];

describe("edit list", () => {
  it("the most recently added enabled edit is active", () => {
    const a = makeEdit("a", sphereSelectorAt([0, 0, 0], 0.1), FEATURE);
    const b = makeEdit("b", sphereSelectorAt([1, 0, 0], 0.2), FEATURE, 0.5);
    const active = activeEdit([a, b]);
    expect(active?.selector.center).toEqual([1, 0, 0]);
    expect(active?.blend).toBe(0.5);
  });

  it("toggling every edit off restores the baseline request exactly", () => {
    const baseline = buildRenderRequest(DEFAULT_ORBIT, 256, 256);
    const edit = makeEdit("only", sphereSelectorAt([0, 0, 0.5], 0.15), FEATURE);
    let edits = [edit];

    const withEdit = buildRenderRequest(DEFAULT_ORBIT, 256, 256, activeEdit(edits));
    expect(withEdit).not.toEqual(baseline);
    expect(withEdit.edit?.replacement).toEqual(FEATURE);

    edits = toggleEdit(edits, edit.id);
    const restored = buildRenderRequest(DEFAULT_ORBIT, 256, 256, activeEdit(edits));
    expect(restored).toEqual(baseline);
    expect("edit" in restored).toBe(false);

    edits = toggleEdit(edits, edit.id); // back on
    expect(buildRenderRequest(DEFAULT_ORBIT, 256, 256, activeEdit(edits))).toEqual(withEdit);
  });

  it("falls back to an earlier enabled edit when the last is disabled", () => {
    const a = makeEdit("a", sphereSelectorAt([0, 0, 0], 0.1), FEATURE);
    const b = makeEdit("b", sphereSelectorAt([1, 0, 0], 0.2), FEATURE);
    const edits = toggleEdit([a, b], b.id);
    expect(activeEdit(edits)?.selector.center).toEqual([0, 0, 0]);
  });

  it("setBlend and removeEdit are immutable updates", () => {
    const a = makeEdit("a", sphereSelectorAt([0, 0, 0], 0.1), FEATURE);
    const edits = [a];
    const blended = setBlend(edits, a.id, 0.25);
    expect(blended[0].blend).toBe(0.25);
    expect(edits[0].blend).toBe(1);
    expect(removeEdit(edits, a.id)).toEqual([]);
    expect(edits).toHaveLength(1);
  });

  it("picked selector copies the point rather than aliasing it", () => {
    const point = [0.1, 0.2, 0.3];
    const sel = sphereSelectorAt(point, 0.1);
    point[0] = 99;
    expect(sel.center?.[0]).toBe(0.1);
  });
});
