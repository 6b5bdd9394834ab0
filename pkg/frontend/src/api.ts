/** Typed client for the engine HTTP API. The fetch implementation is
 * injectable so tests can drive the client against recorded responses. */

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ChatSource {
  tag: string;
  chunk_id: string;
  doc_id: string;
  score: number;
}

export interface ChatResponse {
  session_id: string;
  answer: string;
  citations: string[];
  grounded: boolean;
  sources: ChatSource[];
}

export interface IngestReport {
  doc_id: string;
  source_path: string;
  chunks: number;
  vectors: number;
  record_id: string | null;
  extraction_error: string | null;
  skipped: boolean;
}

export interface DocumentInfo {
  doc_id: string;
  source_path: string;
  ingested_at: string;
  chunks: number;
}

export interface RecordRow {
  record_id: string;
  doc_id: string;
  values: Record<string, string>;
}

export interface HealthResponse {
  status: string;
  index_size: number;
}

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly code: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      let code = "HttpError";
      try {
        const body = await response.json();
        if (body && typeof body.error === "string") message = body.error;
        if (body && typeof body.code === "string") code = body.code;
      } catch {
        // non-JSON error body; keep the defaults
      }
      throw new ApiError(message, code, response.status);
    }
    return response;
  }

  async health(): Promise<HealthResponse> {
    return (await this.request("/api/health")).json();
  }

  async chat(question: string, sessionId?: string): Promise<ChatResponse> {
    const response = await this.request("/api/chat", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ question, session_id: sessionId }),
    });
    return response.json();
  }

  async uploadDocument(file: File): Promise<IngestReport> {
    const form = new FormData();
    form.append("file", file, file.name);
    return (await this.request("/api/documents", { method: "POST", body: form })).json();
  }

  async listDocuments(): Promise<DocumentInfo[]> {
    const body = await (await this.request("/api/documents")).json();
    return body.documents;
  }

  async records(): Promise<RecordRow[]> {
    const text = await (await this.request("/api/records?format=json")).text();
    return JSON.parse(text);
  }

  async recordsCsv(): Promise<string> {
    return (await this.request("/api/records?format=csv")).text();
  }

  async chunkText(chunkId: string): Promise<string> {
    const body = await (await this.request(`/api/chunks/${encodeURIComponent(chunkId)}`)).json();
    return body.text;
  }
}
