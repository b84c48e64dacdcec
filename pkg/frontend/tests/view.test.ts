import { describe, expect, it } from "vitest";

import { Viewport, clampFrame, initialViewState } from "../src/view.js";

describe("Viewport", () => {
  it("letterboxes a wide image inside a square canvas", () => {
    const vp = new Viewport(128, 64, 640, 640);
    expect(vp.scale).toBe(5);
    expect(vp.offsetX).toBe(0);
    expect(vp.offsetY).toBe((640 - 64 * 5) / 2);
  });

  it("round-trips display and image coordinates exactly", () => {
    const vp = new Viewport(64, 64, 640, 480);
    for (const pt of [[0, 0], [10.5, 20.25], [63, 63]] as Array<[number, number]>) {
      const [dx, dy] = vp.imageToDisplay(pt[0], pt[1]);
      const back = vp.displayToImage(dx, dy);
      expect(back).not.toBeNull();
      expect(back![0]).toBeCloseTo(pt[0], 10);
      expect(back![1]).toBeCloseTo(pt[1], 10);
    }
  });

  it("rejects points outside the image area", () => {
    const vp = new Viewport(64, 64, 640, 480);
    expect(vp.displayToImage(1, 1)).toBeNull(); // in the letterbox margin
    expect(vp.displayToImage(10_000, 240)).toBeNull();
  });

  it("tracks canvas resizes", () => {
    const vp = new Viewport(64, 64, 640, 640);
    const before = vp.scale;
    vp.resize(320, 320);
    expect(vp.scale).toBe(before / 2);
  });

  it("stays inert with no image", () => {
    const vp = new Viewport(0, 0, 640, 640);
    expect(vp.scale).toBe(1);
    expect(vp.displayToImage(5, 5)).toBeNull();
  });
});

describe("view state", () => {
  it("clamps frame indices to the sequence", () => {
    const state = initialViewState();
    state.frameCount = 10;
    expect(clampFrame(state, -3)).toBe(0);
    expect(clampFrame(state, 4)).toBe(4);
    expect(clampFrame(state, 99)).toBe(9);
  });

  it("starts idle without a session", () => {
    const state = initialViewState();
    expect(state.sessionId).toBeNull();
    expect(state.polarity).toBe("positive");
    expect(state.opacity).toBe(0.5);
  });
});
