/**
 * DOM wiring: a two-view app over the local service.
 *
 *   #/review  queue with thumbnails, detail pane, a/e/r hotkeys
 *   #/eval    blinded scoring with live composite preview and multi-select
 *
 * All state logic lives in the imported models; this file only renders.
 */

import { ReviewApi } from "./api.js";
import { assertBlinded } from "./blinding.js";
import { formatComposite } from "./composite.js";
import { DraftStore } from "./drafts.js";
import { EvalFormModel } from "./evalForm.js";
import { ReviewQueueModel, validateEdit } from "./review.js";
import type { BlindedCase, ReviewRecord, ReviewType } from "./types.js";

const api = new ReviewApi("", undefined, localStorage.getItem("reviewerId") ?? "expert");
const queue = new ReviewQueueModel(api);
const drafts = new DraftStore(localStorage);

const app = document.getElementById("app")!;
let reviewType: ReviewType = "sft";
let selectedId: string | null = null;
let statusLine = "";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function setStatus(message: string): void {
  statusLine = message;
  const bar = document.getElementById("statusbar");
  if (bar) bar.textContent = message;
}

// ---------------------------------------------------------------------------
// Review view

function renderRecordDetail(container: HTMLElement, record: ReviewRecord): void {
  container.replaceChildren();
  container.append(el("h3", "", `${record.id}  [${record.status}]`));
  const img = el("img", "composite");
  img.src = record.image_url;
  img.alt = "composite frame";
  container.append(img);
  container.append(el("p", "prompt", record.prompt));
  if (record.type === "sft") {
    container.append(el("p", "answer", record.edited_answer ?? record.answer ?? ""));
  } else {
    container.append(el("p", "accepted", `accepted: ${record.accepted ?? ""}`));
    container.append(el("p", "rejected", `rejected: ${record.rejected ?? ""}`));
  }

  const actions = el("div", "actions");
  const approveBtn = el("button", "", "approve (a)");
  approveBtn.onclick = () => decide(record.id, "approve");
  const rejectBtn = el("button", "", "reject (r)");
  rejectBtn.onclick = () => decide(record.id, "reject");
  const editBtn = el("button", "", "edit (e)");
  const editor = el("textarea", "editor") as HTMLTextAreaElement;
  editor.value = record.edited_answer ?? record.answer ?? record.accepted ?? "";
  editor.hidden = true;
  const saveBtn = el("button", "", "save edit");
  saveBtn.hidden = true;
  editBtn.onclick = () => {
    editor.hidden = false;
    saveBtn.hidden = false;
    editor.focus();
  };
  saveBtn.onclick = () => {
    const invalid = validateEdit(editor.value);
    if (invalid) {
      setStatus(invalid);
      return;
    }
    void decide(record.id, "edit", editor.value);
  };
  actions.append(approveBtn, editBtn, rejectBtn);
  container.append(actions, editor, saveBtn);
}

async function decide(id: string, action: "approve" | "edit" | "reject", text?: string) {
  const outcome = await queue.decide(id, action, text);
  if (!outcome.ok) {
    setStatus(`decision failed: ${outcome.error}`);
  } else {
    setStatus(outcome.notice ?? `${id} ${action}d`);
  }
  renderReview();
}

function renderReview(): void {
  app.replaceChildren();
  const controls = el("div", "controls");
  for (const type of ["sft", "pref"] as const) {
    const button = el("button", type === reviewType ? "active" : "", `${type} queue`);
    button.onclick = () => {
      reviewType = type;
      selectedId = null;
      void loadReview();
    };
    controls.append(button);
  }
  app.append(controls);

  const layout = el("div", "layout");
  const list = el("ul", "queue");
  for (const record of queue.records) {
    const item = el("li", record.status);
    const thumb = el("img", "thumb");
    thumb.src = record.image_url;
    thumb.loading = "lazy";
    item.append(thumb, el("span", "", `${record.id} [${record.status}]`));
    item.onclick = () => {
      selectedId = record.id;
      renderReview();
    };
    if (record.id === selectedId) item.classList.add("selected");
    list.append(item);
  }
  const detail = el("div", "detail");
  const selected = selectedId ? queue.find(selectedId) : queue.records[0];
  if (selected) {
    selectedId = selected.id;
    renderRecordDetail(detail, selected);
  } else {
    detail.append(el("p", "", "queue is empty"));
  }
  layout.append(list, detail);
  app.append(layout);
}

async function loadReview(): Promise<void> {
  await queue.load(reviewType);
  renderReview();
}

// ---------------------------------------------------------------------------
// Blinded evaluation view

function renderEvalCase(container: HTMLElement, blinded: BlindedCase): void {
  assertBlinded(blinded); // refuse to render anything that leaks the mapping
  const form = new EvalFormModel(blinded, drafts);
  container.append(el("h3", "", `${blinded.case_id}${blinded.submitted ? " (submitted)" : ""}`));
  if (blinded.image_url) {
    const img = el("img", "composite");
    img.src = blinded.image_url;
    container.append(img);
  }
  container.append(el("p", "prompt", blinded.prompt));

  const submit = el("button", "submit", "submit scores");
  const refresh = () => {
    submit.disabled = !form.canSubmit;
    for (const alias of form.aliases) {
      const preview = form.previewFor(alias);
      const cell = container.querySelector<HTMLElement>(`[data-preview="${alias}"]`);
      if (cell) cell.textContent = preview === null ? "-" : formatComposite(preview);
    }
  };

  for (const answer of blinded.answers) {
    const block = el("div", "answer-block");
    block.append(el("h4", "", `Answer ${answer.alias}`));
    block.append(el("p", "answer", answer.text));
    for (const field of ["accuracy", "conciseness"] as const) {
      const label = el("label", "", `${field} `);
      const select = el("select") as HTMLSelectElement;
      select.append(new Option("-", ""));
      for (let score = 1; score <= 5; score++) {
        select.append(new Option(String(score), String(score)));
      }
      const existing = form.getScore(answer.alias, field);
      if (existing) select.value = String(existing);
      select.onchange = () => {
        const error = form.setScore(answer.alias, field, Number(select.value));
        if (error) setStatus(error);
        refresh();
      };
      label.append(select);
      block.append(label);
    }
    const preview = el("span", "preview", "-");
    preview.dataset.preview = answer.alias;
    block.append(el("span", "", " composite: "), preview);

    const preferredLabel = el("label", "preferred", " preferred ");
    const checkbox = el("input") as HTMLInputElement;
    checkbox.type = "checkbox";
    checkbox.checked = form.isPreferred(answer.alias);
    checkbox.onchange = () => {
      form.togglePreferred(answer.alias);
      refresh();
    };
    preferredLabel.prepend(checkbox);
    block.append(preferredLabel);
    container.append(block);
  }

  submit.onclick = async () => {
    try {
      const response = await api.submitScores(blinded.case_id, form.buildSubmission());
      form.clearDraft();
      setStatus(`submitted ${blinded.case_id}; identities: ${JSON.stringify(response.resolved)}`);
      await renderEval();
    } catch (error) {
      setStatus(`submission failed: ${error}`);
    }
  };
  container.append(submit);
  refresh();
}

async function renderEval(): Promise<void> {
  app.replaceChildren();
  const { cases } = await api.evalCases();
  const open = cases.find((c) => !c.submitted);
  app.append(el("p", "", `${cases.filter((c) => c.submitted).length}/${cases.length} cases submitted`));
  if (!open) {
    app.append(el("p", "", "all cases are scored"));
    return;
  }
  const container = el("div", "eval-case");
  renderEvalCase(container, open);
  app.append(container);
}

// ---------------------------------------------------------------------------
// Routing and hotkeys

function route(): void {
  const hash = location.hash || "#/review";
  document.querySelectorAll("nav a").forEach((a) => {
    a.classList.toggle("active", a.getAttribute("href") === hash);
  });
  if (hash.startsWith("#/eval")) {
    void renderEval();
  } else {
    void loadReview();
  }
}

document.addEventListener("keydown", (event) => {
  if (!location.hash.startsWith("#/eval") && selectedId) {
    const target = event.target as HTMLElement;
    if (target.tagName === "TEXTAREA" || target.tagName === "INPUT") return;
    if (event.key === "a") void decide(selectedId, "approve");
    if (event.key === "r") void decide(selectedId, "reject");
    if (event.key === "e") {
      const editor = document.querySelector<HTMLTextAreaElement>(".editor");
      const save = document.querySelector<HTMLButtonElement>(".detail ~ button, button");
      if (editor) {
        editor.hidden = false;
        editor.focus();
      }
      void save;
    }
  }
});

window.addEventListener("hashchange", route);
setStatus(statusLine);
route();
