import type { ApiClient } from "./api.js";
import type { SceneListing } from "./types.js";

/** Scene-pair browser: entry point into labeling and report review. */
export class PairsScreen {
  readonly root: HTMLElement;

  constructor(private api: ApiClient) {
    this.root = document.createElement("section");
    this.root.className = "pairs-screen";
  }

  async load(): Promise<void> {
    let listing: SceneListing;
    try {
      listing = await this.api.listScenes();
    } catch (err) {
      this.root.innerHTML = "";
      const banner = document.createElement("div");
      banner.className = "error-banner";
      banner.textContent = `Cannot reach the workspace API: ${String(err)}`;
      const retry = document.createElement("button");
      retry.textContent = "Retry";
      retry.addEventListener("click", () => void this.load());
      banner.append(retry);
      this.root.append(banner);
      return;
    }
    this.render(listing);
  }

  render(listing: SceneListing): void {
    this.root.innerHTML = "";
    if (listing.pairs.length === 0) {
      const empty = document.createElement("p");
      empty.className = "empty-state";
      empty.textContent =
        "No scene pairs in this workspace. Generate one with `scenewatch synth` " +
        "or register captures in workspace.json.";
      this.root.append(empty);
      return;
    }
    const table = document.createElement("table");
    table.className = "pairs-table";
    table.innerHTML =
      "<thead><tr><th>pair</th><th>reference</th><th>query</th><th></th></tr></thead>";
    const body = document.createElement("tbody");
    for (const pair of listing.pairs) {
      const row = document.createElement("tr");
      row.dataset.pairId = pair.id;
      const badge = pair.has_report
        ? '<span class="badge reviewed">reviewed</span>' : "";
      row.innerHTML =
        `<td>${pair.id} ${badge}</td><td>${pair.reference}</td><td>${pair.query}</td>` +
        `<td><a href="#/label/${pair.id}">label</a> ` +
        `<a href="#/report/${pair.id}">report</a></td>`;
      body.append(row);
    }
    table.append(body);
    this.root.append(table);
  }
}
