import type { LabelsDocument, Manifest, Report, SceneListing } from "./types.js";

/** Thin fetch wrapper over the workspace HTTP API. */
export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.baseUrl + path);
    if (!resp.ok) {
      throw new Error(`GET ${path} -> ${resp.status}: ${await resp.text()}`);
    }
    return (await resp.json()) as T;
  }

  listScenes(): Promise<SceneListing> {
    return this.getJson<SceneListing>("/api/scenes");
  }

  segments(sceneId: string): Promise<Manifest> {
    return this.getJson<Manifest>(`/api/scenes/${sceneId}/segments`);
  }

  labels(sceneId: string): Promise<LabelsDocument> {
    return this.getJson<LabelsDocument>(`/api/labels/${sceneId}`);
  }

  report(pairId: string): Promise<Report> {
    return this.getJson<Report>(`/api/reports/${pairId}`);
  }

  imageUrl(sceneId: string): string {
    return `${this.baseUrl}/api/scenes/${sceneId}/image`;
  }

  async postLabels(sceneId: string, doc: LabelsDocument): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/api/labels/${sceneId}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    });
    if (!resp.ok) {
      throw new Error(`POST labels -> ${resp.status}: ${await resp.text()}`);
    }
  }
}
