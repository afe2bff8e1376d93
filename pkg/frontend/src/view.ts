/** DOM rendering. No session logic lives here: the renderer draws whatever
 * the controller's view says, and button wiring is plain callbacks. */
import { Answer, TableSummary } from "./api.js";
import { SessionView } from "./session.js";

export interface ViewElements {
  question: HTMLElement;
  controls: HTMLElement;
  yesButton: HTMLButtonElement;
  noButton: HTMLButtonElement;
  partialSql: HTMLElement;
  history: HTMLElement;
  result: HTMLElement;
  errorBanner: HTMLElement;
  retryButton: HTMLButtonElement;
}

export function findElements(root: Document | HTMLElement): ViewElements {
  const get = <T extends HTMLElement>(id: string): T => {
    const el = root.querySelector<T>(`#${id}`);
    if (!el) {
      throw new Error(`missing element #${id}`);
    }
    return el;
  };
  return {
    question: get("question"),
    controls: get("controls"),
    yesButton: get<HTMLButtonElement>("answer-yes"),
    noButton: get<HTMLButtonElement>("answer-no"),
    partialSql: get("partial-sql"),
    history: get("history"),
    result: get("result"),
    errorBanner: get("error-banner"),
    retryButton: get<HTMLButtonElement>("retry"),
  };
}

function renderRows(doc: Document, columns: string[], rows: unknown[][]): HTMLTableElement {
  const table = doc.createElement("table");
  const head = doc.createElement("tr");
  for (const name of columns) {
    const th = doc.createElement("th");
    th.textContent = name;
    head.appendChild(th);
  }
  table.appendChild(head);
  for (const row of rows) {
    const tr = doc.createElement("tr");
    for (const cell of row) {
      const td = doc.createElement("td");
      td.textContent = String(cell);
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  return table;
}

export function render(view: SessionView, els: ViewElements): void {
  const doc = els.result.ownerDocument;
  const asking = view.phase === "asking";

  els.question.textContent = asking && view.question ? view.question : "";
  els.controls.style.display = asking ? "" : "none";
  els.yesButton.disabled = !asking || view.inFlight;
  els.noButton.disabled = !asking || view.inFlight;

  els.partialSql.textContent = view.partialSql ?? "";

  els.history.replaceChildren();
  for (const event of view.events) {
    const item = doc.createElement("li");
    item.textContent = `${event.question} — ${event.answer}`;
    els.history.appendChild(item);
  }

  els.result.replaceChildren();
  if (view.phase === "done" && view.final) {
    const sql = doc.createElement("code");
    sql.className = "final-sql";
    sql.textContent = view.final.sql;
    els.result.appendChild(sql);
    if (view.earlyExit) {
      const note = doc.createElement("p");
      note.className = "early-exit";
      note.textContent = "Session was abandoned before all questions were answered.";
      els.result.appendChild(note);
    }
    if (view.final.rows && view.final.columns) {
      els.result.appendChild(renderRows(doc, view.final.columns, view.final.rows));
    } else if (view.final.execution_error) {
      const err = doc.createElement("p");
      err.className = "execution-error";
      err.textContent = `Query could not be executed: ${view.final.execution_error}`;
      els.result.appendChild(err);
    }
  }

  els.errorBanner.style.display = view.phase === "error" ? "" : "none";
  els.errorBanner.querySelector(".error-text")!.textContent = view.error ?? "";
}

export function renderTablePreview(doc: Document, container: HTMLElement, table: TableSummary): void {
  container.replaceChildren();
  const title = doc.createElement("h3");
  title.textContent = table.name;
  container.appendChild(title);
  container.appendChild(
    renderRows(
      doc,
      table.columns.map((c) => c.name),
      table.preview_rows,
    ),
  );
}

export function wire(
  els: ViewElements,
  handlers: { onAnswer: (value: Answer) => void; onRetry: () => void },
): void {
  els.yesButton.addEventListener("click", () => handlers.onAnswer("yes"));
  els.noButton.addEventListener("click", () => handlers.onAnswer("no"));
  els.retryButton.addEventListener("click", () => handlers.onRetry());
}
