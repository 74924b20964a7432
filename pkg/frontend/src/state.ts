import type { LabelEntry, LabelValue, LabelsDocument } from "./types.js";

/**
 * Local labeling-session state: a cursor over the scene's segments plus
 * unsaved label choices. Choices stay local until an explicit save posts
 * them; previously saved labels pre-populate the session.
 */
export class LabelSession {
  readonly segmentIds: string[];
  private choices = new Map<string, LabelValue>();
  private savedSnapshot = new Map<string, LabelValue>();
  cursor = 0;

  constructor(segmentIds: string[], saved: LabelEntry[] = []) {
    this.segmentIds = [...segmentIds];
    for (const entry of saved) {
      if (this.segmentIds.includes(entry.segment_id)) {
        this.choices.set(entry.segment_id, entry.label);
        this.savedSnapshot.set(entry.segment_id, entry.label);
      }
    }
  }

  get size(): number {
    return this.segmentIds.length;
  }

  get currentSegmentId(): string | null {
    return this.segmentIds[this.cursor] ?? null;
  }

  /** Cursor past the last segment means the pass is complete. */
  get complete(): boolean {
    return this.cursor >= this.segmentIds.length;
  }

  labelOf(segmentId: string): LabelValue | undefined {
    return this.choices.get(segmentId);
  }

  /** Record a choice for the current segment and advance. */
  label(value: LabelValue): void {
    const current = this.currentSegmentId;
    if (current === null) return;
    this.choices.set(current, value);
    this.cursor += 1;
  }

  next(): void {
    this.cursor = Math.min(this.cursor + 1, this.segmentIds.length);
  }

  prev(): void {
    this.cursor = Math.max(this.cursor - 1, 0);
  }

  counts(): { anomaly: number; normal: number; unlabeled: number } {
    let anomaly = 0;
    let normal = 0;
    for (const id of this.segmentIds) {
      const value = this.choices.get(id);
      if (value === "anomaly") anomaly += 1;
      else if (value === "normal") normal += 1;
    }
    return { anomaly, normal, unlabeled: this.segmentIds.length - anomaly - normal };
  }

  get unsaved(): boolean {
    if (this.choices.size !== this.savedSnapshot.size) return true;
    for (const [id, value] of this.choices) {
      if (this.savedSnapshot.get(id) !== value) return true;
    }
    return false;
  }

  markSaved(): void {
    this.savedSnapshot = new Map(this.choices);
  }

  toDocument(sceneId: string, referenceId: string): LabelsDocument {
    const labels: LabelEntry[] = [];
    for (const id of this.segmentIds) {
      const value = this.choices.get(id);
      if (value) labels.push({ segment_id: id, label: value, labeled_by: "label-ui" });
    }
    return {
      schema: "scenewatch-labels/1",
      scene_id: sceneId,
      reference_id: referenceId,
      labels,
    };
  }
}
