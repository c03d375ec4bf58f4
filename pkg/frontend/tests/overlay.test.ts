import { describe, expect, it } from "vitest";

import { colorForClass, fitScale, labelText, renderView } from "../src/overlay.js";
import type { Painter } from "../src/overlay.js";
import { annotatedFilename, buildAnnotatedCanvas } from "../src/save.js";
import type { Detection, LoadedImage } from "../src/types.js";

export interface Op {
  kind: string;
  args: unknown[];
}

export function recordingPainter(ops: Op[]): Painter {
  return {
    clear: (...args) => ops.push({ kind: "clear", args }),
    drawImage: (...args) => ops.push({ kind: "drawImage", args }),
    strokeRect: (...args) => ops.push({ kind: "strokeRect", args }),
    fillLabel: (...args) => ops.push({ kind: "fillLabel", args }),
  };
}

const image: LoadedImage = { source: null, width: 100, height: 50, name: "x.png" };

function det(classId: number, confidence: number): Detection {
  return {
    class_id: classId,
    class_name: `c${classId}`,
    confidence,
    box: { x1: 10, y1: 10, x2: 30, y2: 20 },
  };
}

describe("renderView", () => {
  it("draws the image then one rect and one label per detection", () => {
    const ops: Op[] = [];
    renderView(recordingPainter(ops), image, [det(0, 0.9), det(1, 0.7)], ["#111111", "#222222"], 1);
    expect(ops.map((o) => o.kind)).toEqual([
      "clear",
      "drawImage",
      "strokeRect",
      "fillLabel",
      "strokeRect",
      "fillLabel",
    ]);
    expect(ops[2].args).toEqual([10, 10, 20, 10, "#111111"]);
    expect(ops[4].args[4]).toBe("#222222");
  });

  it("scales boxes by the view scale", () => {
    const ops: Op[] = [];
    renderView(recordingPainter(ops), image, [det(0, 0.9)], ["#111111"], 0.5);
    expect(ops[1].args).toEqual([null, 50, 25]);
    expect(ops[2].args).toEqual([5, 5, 10, 5, "#111111"]);
  });
});

describe("labelText", () => {
  it("renders name plus two-decimal confidence", () => {
    expect(labelText(det(0, 0.8712))).toBe("c0 0.87");
    expect(labelText(det(1, 1.0))).toBe("c1 1.00");
  });
});

describe("fitScale", () => {
  it("fits within the viewport without upscaling", () => {
    expect(fitScale(200, 100, 100, 100)).toBe(0.5);
    expect(fitScale(50, 50, 100, 100)).toBe(1);
    expect(fitScale(100, 400, 200, 100)).toBe(0.25);
  });
});

describe("colorForClass", () => {
  it("wraps around the palette", () => {
    expect(colorForClass(0, ["#a", "#b"])).toBe("#a");
    expect(colorForClass(3, ["#a", "#b"])).toBe("#b");
    expect(colorForClass(5, [])).toBeTruthy();
  });
});

describe("buildAnnotatedCanvas", () => {
  it("sizes the canvas to the image's native dimensions", () => {
    const ops: Op[] = [];
    const canvas = buildAnnotatedCanvas(document, image, [det(0, 0.9)], ["#111111"], () =>
      recordingPainter(ops),
    );
    expect(canvas.width).toBe(100);
    expect(canvas.height).toBe(50);
    // overlays render at scale 1 on the saved canvas
    expect(ops[2].args).toEqual([10, 10, 20, 10, "#111111"]);
  });

  it("hidden classes are simply absent from the draw list", () => {
    const ops: Op[] = [];
    buildAnnotatedCanvas(document, image, [], ["#111111"], () => recordingPainter(ops));
    expect(ops.map((o) => o.kind)).toEqual(["clear", "drawImage"]);
  });
});

describe("annotatedFilename", () => {
  it("embeds the original stem and a timestamp", () => {
    const when = new Date("2026-08-09T14:30:05Z");
    expect(annotatedFilename("wrist042.png", when)).toBe("wrist042_20260809T143005.png");
    expect(annotatedFilename("scan.jpeg", when)).toBe("scan_20260809T143005.png");
  });
});
