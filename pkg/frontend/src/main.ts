// Browser bootstrap: configuration arrives via query parameters (service URL,
// campaign, worker) and the access token via a prompt, never from source.

import { ApiClient } from "./api";
import { AnnotationApp } from "./app";

export function bootstrap(root: HTMLElement, location: Location = window.location): AnnotationApp {
  const params = new URLSearchParams(location.search);
  const baseUrl = params.get("service") ?? "";
  const campaignId = params.get("campaign") ?? "";
  const workerId = params.get("worker") ?? "";
  const token = window.prompt("Access token") ?? "";
  const api = new ApiClient(baseUrl, token);
  const app = new AnnotationApp(root, api, { campaignId, workerId });
  void app.start();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("fairpairs-root")) {
  bootstrap(document.getElementById("fairpairs-root")!);
}
