/** View-model for one clarification session.
 *
 * Exactly one request is ever in flight: answer clicks while a request is
 * pending are dropped (the input-lock contract), and every state shown to
 * the user is refreshed from GET /api/sessions after each step, so the view
 * mirrors the service rather than accumulating client-side state.
 */
import { Answer, ApiError, FinalResult, SessionApi, SessionEvent } from "./api.js";

export type Phase = "idle" | "asking" | "done" | "error";

export interface SessionView {
  phase: Phase;
  inFlight: boolean;
  sessionId?: string;
  question?: string;
  partialSql?: string;
  events: SessionEvent[];
  earlyExit: boolean;
  final?: FinalResult;
  error?: string;
}

type Listener = (view: SessionView) => void;
type Action = () => Promise<void>;

export class SessionController {
  private readonly api: SessionApi;
  private readonly listeners: Listener[] = [];
  private view: SessionView = { phase: "idle", inFlight: false, events: [], earlyExit: false };
  private lastAction?: Action;

  constructor(api: SessionApi) {
    this.api = api;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
    listener(this.view);
  }

  get current(): SessionView {
    return this.view;
  }

  private emit(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    for (const listener of this.listeners) {
      listener(this.view);
    }
  }

  private async refresh(sessionId: string): Promise<void> {
    const snapshot = await this.api.getSession(sessionId);
    this.emit({
      phase: snapshot.status === "done" ? "done" : "asking",
      inFlight: false,
      sessionId,
      question: snapshot.question,
      partialSql: snapshot.partial_sql,
      events: snapshot.events,
      earlyExit: snapshot.early_exit,
      final: snapshot.final,
      error: undefined,
    });
  }

  private async run(action: Action): Promise<void> {
    if (this.view.inFlight) {
      return; // input lock: one request at a time
    }
    this.lastAction = action;
    this.emit({ inFlight: true, error: undefined });
    try {
      await action();
    } catch (error) {
      if (error instanceof ApiError && error.code === "session_closed" && this.view.sessionId) {
        // the session finished under us; show its final state
        await this.refresh(this.view.sessionId);
        return;
      }
      this.emit({ phase: "error", inFlight: false, error: String(error instanceof Error ? error.message : error) });
    }
  }

  start(question: string, tableId: string): Promise<void> {
    return this.run(async () => {
      const state = await this.api.createSession(question, tableId);
      await this.refresh(state.session_id);
    });
  }

  answer(value: Answer): Promise<void> {
    return this.run(async () => {
      const sessionId = this.view.sessionId;
      if (!sessionId) {
        throw new Error("no active session");
      }
      await this.api.answer(sessionId, value);
      await this.refresh(sessionId);
    });
  }

  /** Re-issue the action that failed (error banner's retry button). */
  retry(): Promise<void> {
    const action = this.lastAction;
    if (!action) {
      return Promise.resolve();
    }
    return this.run(action);
  }
}
