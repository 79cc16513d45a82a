/** Shapes served by the local review service API. */

export type ReviewType = "sft" | "pref";
export type ReviewStatus = "pending" | "approved" | "edited" | "rejected" | "failed";
export type DecisionAction = "approve" | "edit" | "reject";

export interface CandidateView {
  text: string;
  source: "student" | "ground_truth";
}

export interface ReviewRecord {
  id: string;
  type: ReviewType;
  status: ReviewStatus;
  prompt: string;
  image_url: string;
  // sft records
  frame_id?: string;
  anatomy_class?: string;
  answer?: string;
  edited_answer?: string | null;
  phase?: string;
  cme_side?: string;
  // pref records
  sft_id?: string;
  accepted?: string;
  rejected?: string;
  candidates?: CandidateView[];
  judge_rationale?: string;
  history?: DecisionHistoryEntry[];
}

export interface DecisionHistoryEntry {
  action: DecisionAction;
  reviewer_id: string;
  timestamp: number;
}

export interface QueueResponse {
  records: ReviewRecord[];
  count: number;
}

export interface DecisionRequest {
  action: DecisionAction;
  edited_text?: string | null;
}

export interface DecisionResponse {
  record: ReviewRecord;
  previous_decisions: number;
}

export interface BlindedAnswer {
  alias: string;
  text: string;
}

export interface BlindedCase {
  case_id: string;
  prompt: string;
  image_url: string | null;
  answers: BlindedAnswer[];
  submitted: boolean;
}

export interface ScorePair {
  accuracy: number;
  conciseness: number;
}

export interface ScoresRequest {
  scores: Record<string, ScorePair>;
  preferred: string[];
}

export interface ScoresResponse {
  ok: boolean;
  resolved: Record<string, string>;
}
