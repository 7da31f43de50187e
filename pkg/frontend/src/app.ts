/** The page itself: result card, model info panel, session history.
 *
 * The app is a pure presenter. Labels and scores are echoed from the
 * service JSON; the only client-side arithmetic is the confidence bar,
 * which shows the score when the service labeled the image albopictus
 * and one minus the score when it labeled it aegypti. The label itself
 * is never recomputed from the score.
 */

import { errorMessage, type ClassifierApi } from "./api.js";
import type { ClassifyResponse, ModelInfo, UiClassification } from "./types.js";

const FALLBACK_CLASS_NAMES = ["Ae. aegypti", "Ae. albopictus"];

/** Probability of the species the service named. */
export function confidenceFor(
  result: Pick<ClassifyResponse, "score" | "label">,
  classNames: string[] = FALLBACK_CLASS_NAMES,
): number {
  const albopictus = classNames[1] ?? FALLBACK_CLASS_NAMES[1];
  return result.label === albopictus ? result.score : 1 - result.score;
}

/** 0.93 -> "93%"; one decimal kept when the value needs it. */
export function formatPercent(fraction: number): string {
  const rounded = Math.round(fraction * 1000) / 10;
  const text = Number.isInteger(rounded) ? rounded.toFixed(0) : rounded.toFixed(1);
  return `${text}%`;
}

interface QueuedUpload {
  image: Blob;
  thumbnail: string;
  done: () => void;
}

export class App {
  readonly history: UiClassification[] = [];

  private readonly queue: QueuedUpload[] = [];
  private inFlight = false;
  private info: ModelInfo | null = null;
  private lastFailed: { image: Blob; thumbnail: string } | null = null;

  private readonly resultEl: HTMLElement;
  private readonly errorEl: HTMLElement;
  private readonly infoEl: HTMLElement;
  private readonly historyEl: HTMLOListElement;
  private readonly statusEl: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ClassifierApi,
  ) {
    root.innerHTML = `
      <p class="status" data-state="unknown">checking service…</p>
      <section class="result" hidden></section>
      <section class="error" hidden></section>
      <section class="panel info"><p class="placeholder">model info unavailable</p></section>
      <section class="panel">
        <h2>This session</h2>
        <ol class="history"></ol>
      </section>`;
    this.resultEl = root.querySelector(".result") as HTMLElement;
    this.errorEl = root.querySelector(".error") as HTMLElement;
    this.infoEl = root.querySelector(".info") as HTMLElement;
    this.historyEl = root.querySelector(".history") as HTMLOListElement;
    this.statusEl = root.querySelector(".status") as HTMLElement;
  }

  /** Queue an image for classification. One request is in flight at a
   * time; further uploads wait their turn. Resolves when this image
   * has been classified (or its error rendered). */
  submit(image: Blob, thumbnail: string): Promise<void> {
    return new Promise((resolve) => {
      this.queue.push({ image, thumbnail, done: resolve });
      void this.pump();
    });
  }

  /** Resubmit the upload whose classification last failed. */
  retry(): Promise<void> {
    if (this.lastFailed === null) {
      return Promise.resolve();
    }
    const { image, thumbnail } = this.lastFailed;
    this.lastFailed = null;
    return this.submit(image, thumbnail);
  }

  private async pump(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    this.inFlight = true;
    let item: QueuedUpload | undefined;
    while ((item = this.queue.shift()) !== undefined) {
      try {
        const result = await this.client.classify(item.image);
        this.renderResult(result, item.thumbnail);
      } catch (err) {
        this.lastFailed = { image: item.image, thumbnail: item.thumbnail };
        this.renderError(err);
      }
      item.done();
    }
    this.inFlight = false;
  }

  private renderResult(result: ClassifyResponse, thumbnail: string): void {
    const confidence = confidenceFor(result, this.info?.class_names);
    const percent = formatPercent(confidence);
    this.errorEl.hidden = true;
    this.resultEl.hidden = false;
    this.resultEl.innerHTML = `
      <img class="thumb" alt="uploaded image" src="${thumbnail}">
      <div class="verdict">
        <p class="result-label"></p>
        <div class="bar"><div class="bar-fill" style="width: ${percent}"></div></div>
        <p class="result-percent">${percent} confidence</p>
        <p class="result-score">score <span class="score-value"></span>,
           threshold <span class="threshold-value"></span></p>
        <ul class="warnings"></ul>
      </div>`;
    // textContent assignments keep service-provided strings inert
    (this.resultEl.querySelector(".result-label") as HTMLElement).textContent = result.label;
    (this.resultEl.querySelector(".score-value") as HTMLElement).textContent =
      String(result.score);
    (this.resultEl.querySelector(".threshold-value") as HTMLElement).textContent =
      String(result.threshold);
    const warningsEl = this.resultEl.querySelector(".warnings") as HTMLElement;
    for (const warning of result.warnings) {
      const li = document.createElement("li");
      li.textContent = warning;
      warningsEl.appendChild(li);
    }

    const entry: UiClassification = {
      thumbnail,
      score: result.score,
      label: result.label,
      timestamp: new Date(),
      modelVersion: result.model_version,
    };
    this.history.push(entry);
    this.appendHistoryRow(entry, percent);
  }

  private appendHistoryRow(entry: UiClassification, percent: string): void {
    const li = document.createElement("li");
    const img = document.createElement("img");
    img.src = entry.thumbnail;
    img.alt = "";
    const text = document.createElement("span");
    text.textContent =
      `${entry.label} (${percent}) at ${entry.timestamp.toLocaleTimeString()}` +
      ` — model ${entry.modelVersion}`;
    li.append(img, text);
    this.historyEl.appendChild(li);
  }

  private renderError(err: unknown): void {
    this.resultEl.hidden = true;
    this.errorEl.hidden = false;
    this.errorEl.innerHTML = `
      <p class="error-message"></p>
      <button type="button" class="retry">Retry</button>`;
    (this.errorEl.querySelector(".error-message") as HTMLElement).textContent =
      errorMessage(err);
    (this.errorEl.querySelector(".retry") as HTMLButtonElement).addEventListener(
      "click", () => void this.retry());
  }

  /** Fetch /model/info. On failure the last good panel stays; if there
   * has never been one, the placeholder remains. */
  async refreshInfo(): Promise<void> {
    let info: ModelInfo;
    try {
      info = await this.client.modelInfo();
    } catch {
      return;
    }
    this.info = info;
    const [h, w, c] = info.input_shape;
    this.infoEl.innerHTML = `
      <h2>Model</h2>
      <dl>
        <dt>Species</dt><dd class="info-classes"></dd>
        <dt>Input</dt><dd class="info-input">${h} × ${w} × ${c}</dd>
        <dt>Threshold</dt><dd class="info-threshold"></dd>
        <dt>Version</dt><dd class="info-version"></dd>
        <dt>Layers</dt><dd class="info-layers">${info.layers.length}</dd>
      </dl>`;
    (this.infoEl.querySelector(".info-classes") as HTMLElement).textContent =
      info.class_names.join(", ");
    (this.infoEl.querySelector(".info-threshold") as HTMLElement).textContent =
      String(info.threshold);
    (this.infoEl.querySelector(".info-version") as HTMLElement).textContent =
      info.model_version;
  }

  async checkHealth(): Promise<void> {
    try {
      const health = await this.client.health();
      this.statusEl.dataset.state = "ok";
      this.statusEl.textContent = `service ok (model ${health.model_version})`;
    } catch {
      this.statusEl.dataset.state = "down";
      this.statusEl.textContent = "service unreachable";
    }
  }
}
