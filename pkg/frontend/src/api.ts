// Typed client for the counting service HTTP API.  Every function takes
// the fetch implementation as an argument so tests can stub the network.

export interface CountResponse {
  count: number;
  rounded_count: number;
  window_counts: number[];
  density_shape: number[];
  elapsed_ms: number;
  model_id: string;
  prompt: string;
  overlay?: string; // base64 PNG
}

export interface HealthResponse {
  status: string;
  model_loaded: boolean;
  requests_served: number;
}

export interface CountOptions {
  windowSide?: number;
  stride?: number;
  returnOverlay?: boolean;
}

/** Error body shape the service guarantees on every non-2xx response. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let code = 'unknown_error';
  let message = `service responded with HTTP ${res.status}`;
  try {
    const body = await res.json();
    if (typeof body.code === 'string') code = body.code;
    if (typeof body.message === 'string') message = body.message;
  } catch {
    // non-JSON error body; keep the generic message
  }
  throw new ApiError(res.status, code, message);
}

/** Strip a data-URL prefix, leaving raw base64 for the JSON API. */
export function dataUrlToBase64(dataUrl: string): string {
  const comma = dataUrl.indexOf(',');
  return comma >= 0 ? dataUrl.slice(comma + 1) : dataUrl;
}

export async function submitCount(
  fetchFn: FetchLike,
  baseUrl: string,
  imageBase64: string,
  description: string,
  options: CountOptions = {},
): Promise<CountResponse> {
  const payload: Record<string, unknown> = {
    image_b64: imageBase64,
    description,
  };
  if (options.windowSide !== undefined) payload.window_side = options.windowSide;
  if (options.stride !== undefined) payload.stride = options.stride;
  if (options.returnOverlay !== undefined) payload.return_overlay = options.returnOverlay;

  const res = await fetchFn(`${baseUrl}/api/count`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify(payload),
  });
  await raiseForStatus(res);
  return (await res.json()) as CountResponse;
}

export async function getHealth(fetchFn: FetchLike, baseUrl: string): Promise<HealthResponse> {
  const res = await fetchFn(`${baseUrl}/api/health`);
  await raiseForStatus(res);
  return (await res.json()) as HealthResponse;
}
