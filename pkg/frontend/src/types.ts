/** JSON shapes of the classification service. This file is the shared
 * contract; the UI renders these fields verbatim and never re-derives
 * a label from the score. */

export interface ClassifyResponse {
  score: number;
  label: string;
  threshold: number;
  model_version: string;
  latency_ms: number;
  warnings: string[];
}

export interface ModelInfoLayer {
  kind: string;
  output_shape: number[];
  params: number;
}

export interface ModelInfo {
  input_shape: number[];
  class_names: string[];
  threshold: number;
  model_version: string;
  layers: ModelInfoLayer[];
  summary: string;
}

export interface HealthResponse {
  status: string;
  model_version: string;
}

export interface ErrorEnvelope {
  error: { code: string; message: string };
}

/** One entry in the session history (client-side only, gone on reload). */
export interface UiClassification {
  thumbnail: string;
  score: number;
  label: string;
  timestamp: Date;
  modelVersion: string;
}
