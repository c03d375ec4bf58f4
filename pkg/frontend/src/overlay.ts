import type { Detection, LoadedImage } from "./types.js";

/** The few drawing operations the viewer needs. Tests substitute a
 * recording implementation; the browser uses canvasPainter below. */
export interface Painter {
  clear(width: number, height: number): void;
  drawImage(source: CanvasImageSource | null, width: number, height: number): void;
  strokeRect(x: number, y: number, w: number, h: number, color: string): void;
  fillLabel(x: number, y: number, text: string, color: string): void;
}

export type PainterFactory = (canvas: HTMLCanvasElement) => Painter;

const LABEL_FONT = "12px system-ui, sans-serif";
const LABEL_PAD = 3;
const LABEL_HEIGHT = 16;

export function canvasPainter(canvas: HTMLCanvasElement): Painter {
  const ctx = canvas.getContext("2d");
  return {
    clear(width, height) {
      if (!ctx) return;
      ctx.clearRect(0, 0, width, height);
    },
    drawImage(source, width, height) {
      if (!ctx || !source) return;
      ctx.drawImage(source, 0, 0, width, height);
    },
    strokeRect(x, y, w, h, color) {
      if (!ctx) return;
      ctx.strokeStyle = color;
      ctx.lineWidth = 2;
      ctx.strokeRect(x, y, w, h);
    },
    fillLabel(x, y, text, color) {
      if (!ctx) return;
      ctx.font = LABEL_FONT;
      const width = ctx.measureText(text).width + 2 * LABEL_PAD;
      const top = Math.max(0, y - LABEL_HEIGHT);
      ctx.fillStyle = color;
      ctx.fillRect(x, top, width, LABEL_HEIGHT);
      ctx.fillStyle = "#ffffff";
      ctx.fillText(text, x + LABEL_PAD, top + LABEL_HEIGHT - 4);
    },
  };
}

export function labelText(det: Detection): string {
  return `${det.class_name} ${det.confidence.toFixed(2)}`;
}

/** Scale that fits the image into the viewport without upscaling. */
export function fitScale(imgW: number, imgH: number, maxW: number, maxH: number): number {
  if (imgW <= 0 || imgH <= 0) return 1;
  return Math.min(maxW / imgW, maxH / imgH, 1);
}

export function colorForClass(classId: number, colors: string[]): string {
  if (colors.length === 0) return "#e6194b";
  return colors[classId % colors.length];
}

/** Draw the image and the given detections at `scale` (canvas px per
 * image px). The caller picks the detections (visibility filtering) and
 * must have sized the canvas to scale * image dims. */
export function renderView(
  painter: Painter,
  image: LoadedImage,
  detections: Detection[],
  colors: string[],
  scale: number,
): void {
  const width = Math.round(image.width * scale);
  const height = Math.round(image.height * scale);
  painter.clear(width, height);
  painter.drawImage(image.source, width, height);
  for (const det of detections) {
    const color = colorForClass(det.class_id, colors);
    const x = det.box.x1 * scale;
    const y = det.box.y1 * scale;
    painter.strokeRect(x, y, (det.box.x2 - det.box.x1) * scale, (det.box.y2 - det.box.y1) * scale, color);
    painter.fillLabel(x, y, labelText(det), color);
  }
}
