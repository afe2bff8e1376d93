import { SessionApi, TableSummary } from "./api.js";
import { SessionController } from "./session.js";
import { findElements, render, renderTablePreview, wire } from "./view.js";

function baseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  if (fromQuery) {
    return fromQuery;
  }
  const meta = document.querySelector<HTMLMetaElement>('meta[name="api-base"]');
  return meta?.content || "";
}

async function boot(): Promise<void> {
  const api = new SessionApi(baseUrl());
  const controller = new SessionController(api);
  const els = findElements(document);
  const form = document.querySelector<HTMLFormElement>("#ask-form")!;
  const questionInput = document.querySelector<HTMLInputElement>("#question-input")!;
  const tableSelect = document.querySelector<HTMLSelectElement>("#table-select")!;
  const preview = document.querySelector<HTMLElement>("#table-preview")!;

  let tables: TableSummary[] = [];
  try {
    tables = await api.listTables();
  } catch (error) {
    els.errorBanner.style.display = "";
    els.errorBanner.querySelector(".error-text")!.textContent = String(error);
  }
  for (const table of tables) {
    const option = document.createElement("option");
    option.value = table.id;
    option.textContent = `${table.id} — ${table.name}`;
    tableSelect.appendChild(option);
  }
  const showPreview = () => {
    const table = tables.find((t) => t.id === tableSelect.value);
    if (table) {
      renderTablePreview(document, preview, table);
    }
  };
  tableSelect.addEventListener("change", showPreview);
  showPreview();

  controller.subscribe((view) => {
    render(view, els);
    form.querySelector<HTMLButtonElement>("button[type=submit]")!.disabled = view.inFlight;
  });
  wire(els, {
    onAnswer: (value) => void controller.answer(value),
    onRetry: () => void controller.retry(),
  });
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const question = questionInput.value.trim();
    if (question && tableSelect.value) {
      void controller.start(question, tableSelect.value);
    }
  });
}

void boot();
