import { ApiClient } from "./api.js";
import { LabelerScreen } from "./labeler.js";
import { PairsScreen } from "./pairs.js";
import { ReportScreen } from "./reports.js";

const api = new ApiClient("");
let active: { dispose?: () => void } | null = null;

async function route(): Promise<void> {
  const app = document.getElementById("app");
  if (!app) return;
  active?.dispose?.();
  active = null;
  app.innerHTML = "";

  const hash = window.location.hash || "#/pairs";
  const [, screen, pairId] = hash.split("/");

  if (screen === "label" && pairId) {
    const listing = await api.listScenes();
    const pair = listing.pairs.find((p) => p.id === pairId);
    if (!pair) {
      app.textContent = `unknown pair ${pairId}`;
      return;
    }
    const labeler = new LabelerScreen(api, pair.query, pair.reference);
    active = labeler;
    app.append(labeler.root);
    await labeler.load();
    return;
  }

  if (screen === "report" && pairId) {
    const listing = await api.listScenes();
    const pair = listing.pairs.find((p) => p.id === pairId);
    if (!pair) {
      app.textContent = `unknown pair ${pairId}`;
      return;
    }
    const report = new ReportScreen(api, pair.id, pair.query);
    app.append(report.root);
    await report.load();
    return;
  }

  const pairs = new PairsScreen(api);
  app.append(pairs.root);
  await pairs.load();
}

window.addEventListener("hashchange", () => void route());
window.addEventListener("DOMContentLoaded", () => void route());
