/** Typed client for the sqlclarify session API. Pure HTTP: every piece of
 * session state shown in the UI comes back from these calls. */

export interface ColumnSummary {
  name: string;
  type: "text" | "number";
}

export interface TableSummary {
  id: string;
  name: string;
  columns: ColumnSummary[];
  preview_rows: unknown[][];
}

export interface FinalResult {
  sql: string;
  query: unknown;
  rows: unknown[][] | null;
  columns: string[] | null;
  execution_error?: string;
}

export interface SessionState {
  session_id: string;
  status: "asking" | "done";
  question?: string;
  partial_sql: string;
  final?: FinalResult;
}

export interface SessionEvent {
  slot: string;
  value: unknown;
  question: string;
  answer: "yes" | "no" | "left";
  category: string | null;
}

export interface SessionSnapshot extends SessionState {
  question_text: string;
  table_id: string;
  early_exit: boolean;
  events: SessionEvent[];
}

export type Answer = "yes" | "no";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message?: string) {
    super(message ?? `${code} (HTTP ${status})`);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function readError(response: Response): Promise<ApiError> {
  let code = "request_failed";
  try {
    const body = (await response.json()) as { detail?: { code?: string } | string };
    if (typeof body.detail === "object" && body.detail?.code) {
      code = body.detail.code;
    } else if (typeof body.detail === "string") {
      code = body.detail;
    }
  } catch {
    // non-JSON error body; keep the generic code
  }
  return new ApiError(response.status, code);
}

export class SessionApi {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw await readError(response);
    }
    return (await response.json()) as T;
  }

  listTables(rows = 3): Promise<TableSummary[]> {
    return this.request<TableSummary[]>(`/api/tables?rows=${rows}`);
  }

  createSession(question: string, tableId: string, config?: Record<string, unknown>): Promise<SessionState> {
    return this.request<SessionState>("/api/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ question, table_id: tableId, ...(config ? { config } : {}) }),
    });
  }

  answer(sessionId: string, value: Answer): Promise<SessionState> {
    return this.request<SessionState>(`/api/sessions/${sessionId}/answer`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ answer: value }),
    });
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.request<SessionSnapshot>(`/api/sessions/${sessionId}`);
  }
}
