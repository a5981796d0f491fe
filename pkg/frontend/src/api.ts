/**
 * Typed client for the scholar HTTP JSON API.
 *
 * The fetch implementation is injectable so tests can run against a
 * mocked transport; every method returns the parsed response body or
 * throws ApiError with the HTTP status and server detail.
 */

export type Pipeline = "vector" | "graph";

export interface AnswerView {
  text: string;
  citations: number[];
  abstained: boolean;
  pipeline: Pipeline;
  latency_seconds: number;
  cost_dollars: number;
  rerank_skipped: boolean;
}

export interface EvidenceItemView {
  index: number;
  kind: "chunk" | "tuple";
  text: string;
  source_doi: string;
  source_pids: string[];
  score: number;
  ref: string;
}

export interface SubgraphView {
  node_count: number;
  edge_count: number;
}

export interface QueryResponse {
  schema_version: string;
  answer: AnswerView;
  evidence: EvidenceItemView[];
  subgraph: SubgraphView | null;
  citation_violations: string[];
}

export interface ParagraphView {
  pid: string;
  section_path: string[];
  text: string;
}

export interface ChunkEvidence {
  kind: "chunk";
  chunk_id: string;
  doi: string;
  section_path: string[];
  text: string;
  paragraphs: ParagraphView[];
}

export interface TupleEvidence {
  kind: "tuple";
  tuple_id: string;
  subject: string;
  relation: string;
  object: string;
  reference_relation: string;
  reference_node: string;
  doi: string;
  source_paragraph: ParagraphView | null;
}

export type EvidenceDetail = ChunkEvidence | TupleEvidence;

export interface FeedbackRequest {
  ref: string;
  pipeline: Pipeline | "";
  content_score: number;
  citation_score: number;
  notes: string;
  rater_id: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ScholarApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof body?.detail === "string"
          ? body.detail
          : `request failed with status ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  query(
    question: string,
    pipeline: Pipeline,
    params: { k?: number; maxTuples?: number } = {},
  ): Promise<QueryResponse> {
    const payload: Record<string, unknown> = { question, pipeline };
    if (params.k !== undefined) payload.k = params.k;
    if (params.maxTuples !== undefined) payload.max_tuples = params.maxTuples;
    return this.request<QueryResponse>("/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  evidence(ref: string): Promise<EvidenceDetail> {
    return this.request<EvidenceDetail>(
      `/evidence/${encodeURIComponent(ref)}`,
    );
  }

  feedback(record: FeedbackRequest): Promise<{ feedback_id: string }> {
    return this.request<{ feedback_id: string }>("/feedback", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(record),
    });
  }
}
