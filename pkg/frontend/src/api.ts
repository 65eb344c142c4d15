/** Typed client for the service's /v1 HTTP API. */

export interface Uncertainty {
  total: number;
  expected_data: number;
  knowledge: number;
  n_members: number;
}

export interface RiskScorePayload {
  change_id: string;
  probability: number;
  model_version: string;
  uncertainty: Uncertainty;
}

export interface ReviewItemPayload {
  change_id: string;
  risk_score: RiskScorePayload;
  enqueued_at: number;
  enqueued_at_iso?: string;
  status: string;
}

export interface ReviewsResponse {
  reviews: ReviewItemPayload[];
}

export interface VerdictPayload {
  change_id: string;
  expert_label: string;
  reviewer_id: string;
  decided_at: number;
  model_flagged: boolean;
  agrees_with_model: boolean;
}

export interface MonthlyRow {
  month: number;
  n_crq: number;
  majors_per_10k: number;
  man_machine_agreement: number | null;
  d_final: number | null;
  drift_alarm: boolean | string;
  retrained: string | null;
  model_version: string;
  tpr: number | null;
  fpr: number | null;
}

export interface MetricsResponse {
  active_version: string | null;
  model_metrics: Record<string, number>;
  operating_threshold: number | null;
  man_machine_agreement: number | null;
  n_verdicts: number;
  n_pending_reviews: number;
  pending_retrain: boolean;
  monthly: MonthlyRow[];
}

export interface ApiError {
  error: string;
  detail: string;
}

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiError,
  ) {
    super(`${body.error}: ${body.detail}`);
  }
}

async function request<T>(
  fetchFn: typeof fetch,
  path: string,
  init?: RequestInit,
): Promise<T> {
  const resp = await fetchFn(path, init);
  const body = await resp.json();
  if (!resp.ok) {
    throw new ApiRequestError(resp.status, body as ApiError);
  }
  return body as T;
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  listPendingReviews(): Promise<ReviewsResponse> {
    return request(this.fetchFn, `${this.base}/v1/reviews?status=pending`);
  }

  submitVerdict(
    changeId: string,
    label: "risky" | "normal",
    reviewerId: string,
  ): Promise<{ verdict: VerdictPayload }> {
    return request(
      this.fetchFn,
      `${this.base}/v1/reviews/${encodeURIComponent(changeId)}/verdict`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ expert_label: label, reviewer_id: reviewerId }),
      },
    );
  }

  metrics(): Promise<MetricsResponse> {
    return request(this.fetchFn, `${this.base}/v1/metrics`);
  }
}
