/** Thin typed client for the classification service. All transport
 * failures become OfflineError; HTTP error responses become
 * ServiceError carrying the status and the service's error envelope. */

import type { ClassifyResponse, ErrorEnvelope, HealthResponse, ModelInfo } from "./types.js";

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export class OfflineError extends Error {
  constructor() {
    super("service unreachable");
    this.name = "OfflineError";
  }
}

async function toServiceError(resp: Response): Promise<ServiceError> {
  let code = "unknown";
  let message = `service responded ${resp.status}`;
  try {
    const body = (await resp.json()) as ErrorEnvelope;
    if (body && body.error) {
      code = body.error.code;
      message = body.error.message;
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  return new ServiceError(resp.status, code, message);
}

export interface ClassifierApi {
  classify(image: Blob, filename?: string): Promise<ClassifyResponse>;
  modelInfo(): Promise<ModelInfo>;
  health(): Promise<HealthResponse>;
}

export class ServiceClient implements ClassifierApi {
  constructor(private readonly baseUrl: string = "") {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, init);
    } catch {
      throw new OfflineError();
    }
    if (!resp.ok) {
      throw await toServiceError(resp);
    }
    return resp;
  }

  async classify(image: Blob, filename = "upload.png"): Promise<ClassifyResponse> {
    const form = new FormData();
    form.append("file", image, filename);
    const resp = await this.request("/classify", { method: "POST", body: form });
    return (await resp.json()) as ClassifyResponse;
  }

  async modelInfo(): Promise<ModelInfo> {
    const resp = await this.request("/model/info");
    return (await resp.json()) as ModelInfo;
  }

  async health(): Promise<HealthResponse> {
    const resp = await this.request("/healthz");
    return (await resp.json()) as HealthResponse;
  }
}

/** Human-readable message for anything classify() can throw. The exact
 * wording is part of the UI contract and asserted by tests. */
export function errorMessage(err: unknown): string {
  if (err instanceof OfflineError) {
    return "Service unreachable. Check your connection and try again.";
  }
  if (err instanceof ServiceError) {
    switch (err.status) {
      case 415:
        return "Unsupported image type. Upload a PNG or JPEG photo.";
      case 413:
        return "That image is too large for the service.";
      case 400:
        return "The service could not read that image.";
      case 504:
        return "The service timed out. Try again.";
      default:
        return "The service failed to classify the image. Try again.";
    }
  }
  return "Something went wrong. Try again.";
}
