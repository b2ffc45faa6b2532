// API payloads mirroring the review-service JSON.

export interface CandidateView {
  index: number;
  text: string;
  generator_role: string;
  backend_id: string;
  reflector_status: "pending" | "pass" | "reject";
  reflector_feedback: string;
  refine_round: number;
  utility_score: number;
  sim_term: number;
  judge_term: number;
  reviewer_decision: "none" | "approve" | "reject" | "edit";
  s_pa: number | null;
  s_sr: number | null;
}

export interface SeriesView {
  station_id: string;
  start_time: string;
  step_seconds: number;
  values: number[][];
  category: string;
  complexity: number;
}

export interface ReviewItem {
  item_id: string;
  status: "pending" | "decided";
  decided_at: string | null;
  series: SeriesView;
  candidates: CandidateView[];
}

export interface QueueResponse {
  pending: string[];
  count: number;
}

export interface StatsResponse {
  decided: number;
  pending: number;
  pass_rate: number | null;
  mean_s_pa: number | null;
  mean_s_sr: number | null;
}

export interface DecisionBody {
  selected_caption_index?: number | null;
  edited_text?: string | null;
  reject_all?: boolean;
  s_pa: number;
  s_sr: number;
  reviewer_id?: string;
}

export const CHANNEL_NAMES = [
  "temperature",
  "pressure",
  "humidity",
  "wind",
  "precipitation",
] as const;

export type ChannelName = (typeof CHANNEL_NAMES)[number];
