import type { PainterFactory } from "./overlay.js";
import { canvasPainter, renderView } from "./overlay.js";
import type { Detection, LoadedImage } from "./types.js";

/** Compose the image with the currently visible overlays at the image's
 * native resolution (saved pixels always match the source dimensions). */
export function buildAnnotatedCanvas(
  doc: Document,
  image: LoadedImage,
  detections: Detection[],
  colors: string[],
  painterFactory: PainterFactory = canvasPainter,
): HTMLCanvasElement {
  const canvas = doc.createElement("canvas");
  canvas.width = image.width;
  canvas.height = image.height;
  renderView(painterFactory(canvas), image, detections, colors, 1.0);
  return canvas;
}

/** `wrist042.png` saved at 2024-05-01 12:30:05 -> `wrist042_20240501T123005.png` */
export function annotatedFilename(imageName: string, when: Date): string {
  const stem = imageName.replace(/\.[^.]+$/, "") || "image";
  const stamp = when
    .toISOString()
    .replace(/[-:]/g, "")
    .replace(/\.\d+Z$/, "");
  return `${stem}_${stamp}.png`;
}

export function downloadCanvasPng(
  doc: Document,
  canvas: HTMLCanvasElement,
  filename: string,
): Promise<void> {
  return new Promise((resolve, reject) => {
    canvas.toBlob((blob) => {
      if (!blob) {
        reject(new Error("canvas produced no image data"));
        return;
      }
      const url = URL.createObjectURL(blob);
      const anchor = doc.createElement("a");
      anchor.href = url;
      anchor.download = filename;
      doc.body.appendChild(anchor);
      anchor.click();
      anchor.remove();
      URL.revokeObjectURL(url);
      resolve();
    }, "image/png");
  });
}
