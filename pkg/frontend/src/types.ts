/** Wire types mirroring the server's JSON schemas. */

export interface SceneInfo {
  id: string;
  image: string;
  captured_at: string;
  role: "reference" | "query";
}

export interface PairInfo {
  id: string;
  reference: string;
  query: string;
  has_report: boolean;
}

export interface SceneListing {
  schema: string;
  scenes: SceneInfo[];
  pairs: PairInfo[];
}

export interface SegmentEntry {
  id: string;
  bbox: [number, number, number, number];
  area: number;
  center: [number, number];
  rle: number[];
}

export interface Manifest {
  schema: string;
  image: string;
  width: number;
  height: number;
  segments: SegmentEntry[];
}

export type LabelValue = "anomaly" | "normal";

export interface LabelEntry {
  segment_id: string;
  label: LabelValue;
  labeled_by?: string;
  labeled_at?: string;
}

export interface LabelsDocument {
  schema: string;
  scene_id: string;
  reference_id: string;
  labels: LabelEntry[];
}

export interface ReportFeatureValues {
  cosine: number;
  disparity: number;
  area_diff: number;
  low_confidence: boolean;
}

export interface ReportEntry {
  segment_id: string;
  features: ReportFeatureValues;
  probability: number;
  decision: "anomaly" | "normal";
  low_confidence: boolean;
}

export interface Report {
  schema: string;
  query_scene_id: string;
  reference_scene_id: string;
  created_at: string;
  working_scale: number;
  threshold: number;
  entries: ReportEntry[];
}
