/** Browser bootstrap: wires file upload, drag-and-drop, and camera
 * capture to the app. Camera access quietly degrades to file upload
 * when the device has no camera or permission is denied. */

import { ServiceClient } from "./api.js";
import { App } from "./app.js";

function thumbnailUrl(image: Blob): string {
  return URL.createObjectURL(image);
}

function wireUpload(app: App): void {
  const input = document.querySelector("#file-input") as HTMLInputElement;
  input.addEventListener("change", () => {
    const files = input.files;
    if (!files) {
      return;
    }
    for (const file of Array.from(files)) {
      void app.submit(file, thumbnailUrl(file));
    }
    input.value = "";
  });

  const zone = document.querySelector("#drop-zone") as HTMLElement;
  zone.addEventListener("dragover", (ev) => {
    ev.preventDefault();
    zone.classList.add("over");
  });
  zone.addEventListener("dragleave", () => zone.classList.remove("over"));
  zone.addEventListener("drop", (ev) => {
    ev.preventDefault();
    zone.classList.remove("over");
    const files = ev.dataTransfer?.files;
    if (!files) {
      return;
    }
    for (const file of Array.from(files)) {
      if (file.type.startsWith("image/")) {
        void app.submit(file, thumbnailUrl(file));
      }
    }
  });
  zone.addEventListener("click", () => input.click());
}

async function wireCamera(app: App): Promise<void> {
  const button = document.querySelector("#camera-button") as HTMLButtonElement;
  const video = document.querySelector("#camera-preview") as HTMLVideoElement;
  const note = document.querySelector("#camera-note") as HTMLElement;
  if (!navigator.mediaDevices?.getUserMedia) {
    button.hidden = true;
    note.textContent = "No camera available; use file upload.";
    return;
  }

  let stream: MediaStream | null = null;
  button.addEventListener("click", async () => {
    if (stream === null) {
      try {
        stream = await navigator.mediaDevices.getUserMedia({ video: true });
      } catch {
        button.hidden = true;
        note.textContent = "Camera permission denied; use file upload instead.";
        return;
      }
      video.srcObject = stream;
      video.hidden = false;
      await video.play();
      button.textContent = "Capture photo";
      return;
    }
    const canvas = document.createElement("canvas");
    canvas.width = video.videoWidth;
    canvas.height = video.videoHeight;
    const ctx = canvas.getContext("2d");
    if (ctx === null) {
      return;
    }
    ctx.drawImage(video, 0, 0);
    canvas.toBlob((blob) => {
      if (blob !== null) {
        void app.submit(blob, canvas.toDataURL("image/png"));
      }
    }, "image/png");
  });
}

function boot(): void {
  const client = new ServiceClient("");
  const app = new App(document.querySelector("#app") as HTMLElement, client);
  wireUpload(app);
  void wireCamera(app);
  void app.refreshInfo();
  void app.checkHealth();
  const refresh = document.querySelector("#refresh-info") as HTMLButtonElement;
  refresh.addEventListener("click", () => {
    void app.refreshInfo();
    void app.checkHealth();
  });
}

document.addEventListener("DOMContentLoaded", boot);
