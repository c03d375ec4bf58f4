import { ApiError, fetchModels, predictImage } from "./api.js";
import { canvasPainter, fitScale, renderView } from "./overlay.js";
import type { PainterFactory } from "./overlay.js";
import { annotatedFilename, buildAnnotatedCanvas, downloadCanvasPng } from "./save.js";
import {
  initialState,
  openImage,
  setResponse,
  sliderAction,
  toggleClass,
  visibleDetections,
} from "./state.js";
import type { ViewState } from "./state.js";
import type { ApiModel, LoadedImage } from "./types.js";

// matches the service's default; configurable per deployment
const DEFAULT_MAX_UPLOAD = 16 * 1024 * 1024;
const DEFAULT_VIEWPORT = { width: 960, height: 640 };
const ACCEPTED_TYPES = new Set(["image/png", "image/jpeg"]);

export interface AppOptions {
  apiBase?: string;
  fetchFn?: typeof fetch;
  imageLoader?: (file: File) => Promise<LoadedImage>;
  painterFactory?: PainterFactory;
  maxUploadBytes?: number;
  viewport?: { width: number; height: number };
  now?: () => Date;
}

export interface App {
  /** resolves once the model list has been fetched (or failed) */
  ready: Promise<void>;
  /** resolves when no prediction request is running or queued */
  idle(): Promise<void>;
  state(): ViewState;
}

function browserImageLoader(file: File): Promise<LoadedImage> {
  return new Promise((resolve, reject) => {
    const url = URL.createObjectURL(file);
    const img = new Image();
    img.onload = () =>
      resolve({ source: img, width: img.naturalWidth, height: img.naturalHeight, name: file.name });
    img.onerror = () => {
      URL.revokeObjectURL(url);
      reject(new Error(`cannot decode ${file.name}`));
    };
    img.src = url;
  });
}

function byId<T extends HTMLElement>(doc: Document, id: string): T {
  const el = doc.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

export function initApp(doc: Document, options: AppOptions = {}): App {
  const apiBase = options.apiBase ?? "";
  const fetchFn = options.fetchFn ?? fetch;
  const loadImage = options.imageLoader ?? browserImageLoader;
  const painterFactory = options.painterFactory ?? canvasPainter;
  const maxUpload = options.maxUploadBytes ?? DEFAULT_MAX_UPLOAD;
  const viewport = options.viewport ?? DEFAULT_VIEWPORT;
  const now = options.now ?? (() => new Date());

  const fileInput = byId<HTMLInputElement>(doc, "file-input");
  const modelSelect = byId<HTMLSelectElement>(doc, "model-select");
  const predictBtn = byId<HTMLButtonElement>(doc, "predict-btn");
  const saveBtn = byId<HTMLButtonElement>(doc, "save-btn");
  const slider = byId<HTMLInputElement>(doc, "conf-slider");
  const sliderValue = byId<HTMLSpanElement>(doc, "conf-value");
  const togglesBox = byId<HTMLElement>(doc, "class-toggles");
  const message = byId<HTMLElement>(doc, "message");
  const timing = byId<HTMLElement>(doc, "timing");
  const canvas = byId<HTMLCanvasElement>(doc, "view-canvas");
  const placeholder = byId<HTMLElement>(doc, "placeholder");

  let state: ViewState = initialState(Number(slider.value));
  let models: ApiModel[] = [];
  let pending = false;
  let queuedConf: number | null = null;
  const idleWaiters: (() => void)[] = [];

  const painter = painterFactory(canvas);

  function showMessage(text: string): void {
    message.textContent = text;
    message.hidden = false;
  }

  function clearMessage(): void {
    message.textContent = "";
    message.hidden = true;
  }

  function activeModel(): ApiModel | null {
    return models.find((m) => m.id === state.modelId) ?? null;
  }

  function settleIfIdle(): void {
    if (!pending && queuedConf === null) {
      while (idleWaiters.length) idleWaiters.shift()!();
    }
  }

  function render(): void {
    if (!state.image) {
      placeholder.hidden = false;
      return;
    }
    placeholder.hidden = true;
    const scale = fitScale(state.image.width, state.image.height, viewport.width, viewport.height);
    canvas.width = Math.round(state.image.width * scale);
    canvas.height = Math.round(state.image.height * scale);
    const colors = activeModel()?.class_colors ?? [];
    renderView(painter, state.image, visibleDetections(state), colors, scale);
  }

  function renderToggles(): void {
    const model = activeModel();
    togglesBox.textContent = "";
    if (!model) return;
    model.class_names.forEach((name, classId) => {
      const label = doc.createElement("label");
      const chip = doc.createElement("span");
      chip.className = "chip";
      chip.style.background = model.class_colors[classId] ?? "#888";
      const checkbox = doc.createElement("input");
      checkbox.type = "checkbox";
      checkbox.checked = state.classVisibility.get(classId) !== false;
      checkbox.dataset.classId = String(classId);
      checkbox.addEventListener("change", () => {
        state = toggleClass(state, classId, checkbox.checked);
        render();
      });
      label.append(checkbox, chip, doc.createTextNode(name));
      togglesBox.appendChild(label);
    });
  }

  function renderTiming(): void {
    if (!state.response) {
      timing.hidden = true;
      return;
    }
    const t = state.response.timing_ms;
    timing.textContent =
      `preprocess ${t.preprocess.toFixed(1)} ms · inference ${t.inference.toFixed(1)} ms · ` +
      `postprocess ${t.postprocess.toFixed(1)} ms · total ${t.total.toFixed(1)} ms`;
    timing.hidden = false;
  }

  async function runPrediction(confFloor: number): Promise<void> {
    const model = activeModel();
    const file = fileInput.files?.[0];
    if (!model || !state.image || !file) return;
    pending = true;
    predictBtn.disabled = true;
    try {
      const response = await predictImage(
        apiBase,
        { model: model.id, conf: confFloor, iou: 0.45, body: file },
        fetchFn,
      );
      state = setResponse(state, response);
      clearMessage();
      renderToggles();
      renderTiming();
      render();
      saveBtn.disabled = false;
    } catch (err) {
      showMessage(err instanceof ApiError ? err.message : String(err));
    } finally {
      pending = false;
      predictBtn.disabled = false;
      if (queuedConf !== null) {
        const next = queuedConf;
        queuedConf = null;
        void runPrediction(next);
      } else {
        settleIfIdle();
      }
    }
  }

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    if (!ACCEPTED_TYPES.has(file.type)) {
      showMessage(`unsupported file type ${file.type || "(unknown)"}; use PNG or JPEG`);
      return;
    }
    clearMessage();
    if (file.size > maxUpload) {
      showMessage(
        `warning: ${file.name} is ${file.size} bytes, above the server upload limit ` +
          `of ${maxUpload}; prediction will likely be rejected`,
      );
    }
    void loadImage(file)
      .then((image) => {
        state = openImage(state, image);
        saveBtn.disabled = true;
        predictBtn.disabled = models.length === 0;
        renderTiming();
        render();
      })
      .catch((err) => showMessage(String(err)));
  });

  modelSelect.addEventListener("change", () => {
    state = { ...state, modelId: modelSelect.value };
    renderToggles();
  });

  predictBtn.addEventListener("click", () => {
    if (pending) return;
    void runPrediction(state.sliderConf);
  });

  slider.addEventListener("input", () => {
    const value = Number(slider.value);
    sliderValue.textContent = value.toFixed(2);
    const action = sliderAction(state, value);
    state = { ...state, sliderConf: value };
    if (action === "refilter") {
      render();
    } else if (action === "request") {
      if (pending) {
        queuedConf = value;
      } else {
        void runPrediction(value);
      }
    }
  });

  saveBtn.addEventListener("click", () => {
    if (!state.image || !state.response) return;
    const colors = activeModel()?.class_colors ?? [];
    const annotated = buildAnnotatedCanvas(
      doc,
      state.image,
      visibleDetections(state),
      colors,
      painterFactory,
    );
    void downloadCanvasPng(doc, annotated, annotatedFilename(state.image.name, now())).catch(
      (err) => showMessage(String(err)),
    );
  });

  const ready = fetchModels(apiBase, fetchFn)
    .then((list) => {
      models = list;
      modelSelect.textContent = "";
      for (const m of list) {
        const option = doc.createElement("option");
        option.value = m.id;
        option.textContent = `${m.id} (${m.input_size}px)`;
        modelSelect.appendChild(option);
      }
      modelSelect.disabled = list.length === 0;
      state = { ...state, modelId: list[0]?.id ?? null };
      renderToggles();
      if (state.image) predictBtn.disabled = false;
    })
    .catch((err) => showMessage(`cannot load model list — ${String(err)}`));

  return {
    ready,
    idle() {
      return new Promise<void>((resolve) => {
        if (!pending && queuedConf === null) resolve();
        else idleWaiters.push(resolve);
      });
    },
    state: () => state,
  };
}

// browser entry point; tests drive initApp directly
if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("view-canvas")) {
  initApp(document, { apiBase: "" });
}
