// Typed client for the annotation service HTTP API. The UI never computes
// precision itself; everything rendered comes from these endpoints.

export interface QueueItem {
  sample_id: string;
  title: string;
  image_url: string;
  prediction_score: number;
  rank: number;
}

export interface LabelRecord {
  sample_id: string;
  annotator: string;
  label: string;
  labeled_at: string;
}

export interface PrecisionReport {
  points: [number, number][];
  annotated_count: number;
  rule: string;
  disagreements: string[];
}

export interface PrecisionUnavailable {
  missing: string[];
  disagreed: string[];
}

export class PrecisionPendingError extends Error {
  constructor(public detail: PrecisionUnavailable) {
    super("precision curve not yet computable");
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    // Let network failures (TypeError from fetch) propagate; callers treat
    // them as "service unreachable".
    return this.fetchImpl(this.baseUrl + path, init);
  }

  async getQueue(annotator: string, limit: number): Promise<QueueItem[]> {
    const params = new URLSearchParams({ annotator, limit: String(limit) });
    const resp = await this.request(`/api/queue?${params}`);
    if (!resp.ok) throw new Error(`queue request failed: ${resp.status}`);
    return (await resp.json()) as QueueItem[];
  }

  async submitLabel(sampleId: string, annotator: string, label: string): Promise<LabelRecord> {
    const resp = await this.request("/api/labels", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ sample_id: sampleId, annotator, label }),
    });
    if (resp.status !== 201) throw new Error(`label submission failed: ${resp.status}`);
    return (await resp.json()) as LabelRecord;
  }

  async getPrecision(ks: number[], rule: string): Promise<PrecisionReport> {
    const params = new URLSearchParams({ ks: ks.join(","), rule });
    const resp = await this.request(`/api/report/precision?${params}`);
    if (resp.status === 409) {
      const body = await resp.json();
      throw new PrecisionPendingError(body.detail as PrecisionUnavailable);
    }
    if (!resp.ok) throw new Error(`precision request failed: ${resp.status}`);
    return (await resp.json()) as PrecisionReport;
  }
}
