import type { Detection, LoadedImage, PredictResponse } from "./types.js";

/** What the viewer is showing. Rendered boxes are always
 * `response.detections` filtered by (confidence >= sliderConf) and the
 * per-class visibility toggles; the server-applied `response.conf` is the
 * floor below which a fresh request is needed. */
export interface ViewState {
  image: LoadedImage | null;
  response: PredictResponse | null;
  sliderConf: number;
  classVisibility: Map<number, boolean>;
  modelId: string | null;
}

export function initialState(sliderConf = 0.25): ViewState {
  return {
    image: null,
    response: null,
    sliderConf,
    classVisibility: new Map(),
    modelId: null,
  };
}

/** Loading an image clears previous detections (stale overlays never
 * outlive the image they were computed on). */
export function openImage(state: ViewState, image: LoadedImage): ViewState {
  return { ...state, image, response: null };
}

export function setResponse(state: ViewState, response: PredictResponse): ViewState {
  const visibility = new Map(state.classVisibility);
  for (const d of response.detections) {
    if (!visibility.has(d.class_id)) visibility.set(d.class_id, true);
  }
  return { ...state, response, classVisibility: visibility };
}

export function toggleClass(state: ViewState, classId: number, visible: boolean): ViewState {
  const visibility = new Map(state.classVisibility);
  visibility.set(classId, visible);
  return { ...state, classVisibility: visibility };
}

/** Pure overlay filter: same response + same slider/toggles always yields
 * the identical set. */
export function visibleDetections(state: ViewState): Detection[] {
  if (!state.response) return [];
  return state.response.detections.filter(
    (d) =>
      d.confidence >= state.sliderConf &&
      state.classVisibility.get(d.class_id) !== false,
  );
}

export type SliderAction = "none" | "refilter" | "request";

/** Moving the slider at or above the server-applied floor is a pure
 * client-side refilter; moving below the floor needs a new request at the
 * lower floor. Without a response there is nothing to do. */
export function sliderAction(state: ViewState, newValue: number): SliderAction {
  if (!state.response) return "none";
  return newValue >= state.response.conf ? "refilter" : "request";
}
