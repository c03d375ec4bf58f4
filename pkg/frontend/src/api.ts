import type { ApiModel, PredictResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    // surfaced verbatim in the UI, with the status
    super(`HTTP ${status}: ${message}`);
  }
}

type FetchFn = typeof fetch;

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") return body.error;
  } catch {
    /* non-JSON error body */
  }
  return response.statusText || "request failed";
}

export async function fetchModels(base: string, fetchFn: FetchFn = fetch): Promise<ApiModel[]> {
  const response = await fetchFn(`${base}/api/models`);
  if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
  return (await response.json()) as ApiModel[];
}

export async function predictImage(
  base: string,
  args: { model: string; conf: number; iou: number; body: Blob },
  fetchFn: FetchFn = fetch,
): Promise<PredictResponse> {
  const query = new URLSearchParams({
    model: args.model,
    conf: String(args.conf),
    iou: String(args.iou),
  });
  // raw bytes rather than the Blob itself: the service accepts a raw body,
  // and ArrayBuffer survives any fetch implementation unchanged
  const body = await blobBytes(args.body);
  const response = await fetchFn(`${base}/api/predict?${query}`, {
    method: "POST",
    headers: { "content-type": args.body.type || "application/octet-stream" },
    body,
  });
  if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
  return (await response.json()) as PredictResponse;
}
