/** Wire types of the prediction service (docs/schemas in the repo root). */

export interface ApiModel {
  id: string;
  input_size: number;
  class_names: string[];
  class_colors: string[];
}

export interface BoxPx {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface Detection {
  class_id: number;
  class_name: string;
  confidence: number;
  box: BoxPx;
}

export interface TimingMs {
  preprocess: number;
  inference: number;
  postprocess: number;
  total: number;
}

export interface PredictResponse {
  model: string;
  width: number;
  height: number;
  conf: number;
  iou: number;
  detections: Detection[];
  timing_ms: TimingMs;
}

/** A decoded client-side image; `source` is whatever drawImage accepts. */
export interface LoadedImage {
  source: CanvasImageSource | null;
  width: number;
  height: number;
  name: string;
}
