/** ServiceClient transport behaviour and the error-message contract,
 * with global fetch stubbed out. */

import { afterEach, describe, expect, it, vi } from "vitest";
import { OfflineError, ServiceClient, ServiceError, errorMessage } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: () => Promise.resolve(body),
  } as unknown as Response;
}

function textResponse(status: number): Response {
  return {
    ok: false,
    status,
    json: () => Promise.reject(new SyntaxError("not json")),
  } as unknown as Response;
}

const CLASSIFY_BODY = {
  score: 0.93,
  label: "Ae. albopictus",
  threshold: 0.5,
  model_version: "test-1",
  latency_ms: 4.1,
  warnings: [],
};

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("classify", () => {
  it("posts the image as the multipart file field", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, CLASSIFY_BODY));
    vi.stubGlobal("fetch", fetchMock);

    const client = new ServiceClient();
    const blob = new Blob(["png-bytes"], { type: "image/png" });
    const result = await client.classify(blob, "photo.jpg");

    expect(result).toEqual(CLASSIFY_BODY);
    expect(fetchMock).toHaveBeenCalledTimes(1);
    const [url, init] = fetchMock.mock.calls[0] as [string, RequestInit];
    expect(url).toBe("/classify");
    expect(init.method).toBe("POST");
    expect(init.body).toBeInstanceOf(FormData);
    const file = (init.body as FormData).get("file") as File;
    expect(file).not.toBeNull();
    expect(file.name).toBe("photo.jpg");
  });

  it("defaults the upload filename", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, CLASSIFY_BODY));
    vi.stubGlobal("fetch", fetchMock);

    await new ServiceClient().classify(new Blob(["x"], { type: "image/png" }));
    const [, init] = fetchMock.mock.calls[0] as [string, RequestInit];
    const file = (init.body as FormData).get("file") as File;
    expect(file.name).toBe("upload.png");
  });

  it("prefixes the base URL", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, CLASSIFY_BODY));
    vi.stubGlobal("fetch", fetchMock);

    await new ServiceClient("http://example.test:8000").classify(
      new Blob(["x"], { type: "image/png" }));
    expect(fetchMock.mock.calls[0]?.[0]).toBe("http://example.test:8000/classify");
  });

  it("turns an error envelope into a ServiceError", async () => {
    const envelope = {
      error: { code: "unsupported_media_type", message: "unsupported content type" },
    };
    vi.stubGlobal("fetch", vi.fn().mockResolvedValue(jsonResponse(415, envelope)));

    const err = await new ServiceClient()
      .classify(new Blob(["x"]))
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ServiceError);
    const serviceErr = err as ServiceError;
    expect(serviceErr.status).toBe(415);
    expect(serviceErr.code).toBe("unsupported_media_type");
    expect(serviceErr.message).toBe("unsupported content type");
  });

  it("keeps a generic message when the error body is not JSON", async () => {
    vi.stubGlobal("fetch", vi.fn().mockResolvedValue(textResponse(500)));

    const err = await new ServiceClient()
      .classify(new Blob(["x"]))
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect((err as ServiceError).code).toBe("unknown");
    expect((err as ServiceError).message).toBe("service responded 500");
  });

  it("wraps network failure in OfflineError", async () => {
    vi.stubGlobal("fetch", vi.fn().mockRejectedValue(new TypeError("Failed to fetch")));

    const err = await new ServiceClient()
      .classify(new Blob(["x"]))
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(OfflineError);
  });
});

describe("info routes", () => {
  it("fetches /model/info", async () => {
    const info = { input_shape: [180, 180, 3], class_names: [], threshold: 0.5,
      model_version: "v", layers: [], summary: "" };
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, info));
    vi.stubGlobal("fetch", fetchMock);

    expect(await new ServiceClient().modelInfo()).toEqual(info);
    expect(fetchMock.mock.calls[0]?.[0]).toBe("/model/info");
  });

  it("fetches /healthz", async () => {
    const health = { status: "ok", model_version: "v" };
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, health));
    vi.stubGlobal("fetch", fetchMock);

    expect(await new ServiceClient().health()).toEqual(health);
    expect(fetchMock.mock.calls[0]?.[0]).toBe("/healthz");
  });
});

describe("errorMessage", () => {
  it.each([
    [415, "Unsupported image type. Upload a PNG or JPEG photo."],
    [413, "That image is too large for the service."],
    [400, "The service could not read that image."],
    [504, "The service timed out. Try again."],
    [500, "The service failed to classify the image. Try again."],
    [502, "The service failed to classify the image. Try again."],
  ])("maps status %d", (status, expected) => {
    expect(errorMessage(new ServiceError(status, "c", "m"))).toBe(expected);
  });

  it("maps offline and unknown errors", () => {
    expect(errorMessage(new OfflineError())).toBe(
      "Service unreachable. Check your connection and try again.");
    expect(errorMessage(new RangeError("?"))).toBe("Something went wrong. Try again.");
  });
});
