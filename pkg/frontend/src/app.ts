// Wiring: queue -> item -> draft -> submit -> next. Keyboard-first:
// 1-5 fill the scores (S_pa then S_sr), j/k move the candidate selection,
// a approves, r rejects all, e focuses the edit box, enter submits.

import { ApiClient } from "./api.js";
import { renderChart } from "./chart.js";
import {
  decisionBody,
  draftValid,
  emptyDraft,
  initialState,
  mergeAfterConflict,
  reduceDraft,
  type DraftEvent,
  type ViewState,
} from "./state.js";
import { CHANNEL_NAMES, type ReviewItem } from "./types.js";

const api = new ApiClient("");
let state: ViewState = initialState();

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function dispatch(event: DraftEvent): void {
  state = { ...state, draft: reduceDraft(state.draft, event) };
  render();
}

async function loadNext(): Promise<void> {
  const queue = await api.getQueue(20);
  state = { ...state, queue: queue.pending };
  if (queue.pending.length === 0) {
    state = { ...state, item: null, banner: null };
    render();
    return;
  }
  const item = await api.getItem(queue.pending[0]);
  state = { ...state, item, draft: emptyDraft(), banner: null };
  render();
}

async function submit(): Promise<void> {
  const item = state.item;
  if (!item || !draftValid(state.draft) || state.submitting) return;
  state = { ...state, submitting: true };
  render();
  const result = await api.submitDecision(item.item_id, decisionBody(state.draft));
  state = { ...state, submitting: false };
  if (result.kind === "ok") {
    await refreshStats();
    await loadNext();
    return;
  }
  if (result.kind === "conflict") {
    const fresh = await api.getItem(item.item_id);
    state = mergeAfterConflict(state, fresh);
    render();
    return;
  }
  state = { ...state, banner: `Submit failed (${result.kind}): ${result.detail}` };
  render();
}

async function refreshStats(): Promise<void> {
  const stats = await api.getStats();
  $("stats").textContent =
    `decided ${stats.decided} | pending ${stats.pending}` +
    (stats.pass_rate !== null ? ` | pass rate ${stats.pass_rate.toFixed(1)}%` : "") +
    (stats.mean_s_pa !== null
      ? ` | S_pa ${stats.mean_s_pa.toFixed(2)} S_sr ${(stats.mean_s_sr ?? 0).toFixed(2)}`
      : "");
}

function renderCandidates(item: ReviewItem): void {
  const host = $("candidates");
  host.innerHTML = "";
  item.candidates.forEach((cand) => {
    const row = document.createElement("div");
    row.className =
      "candidate" + (state.draft.selectedIndex === cand.index ? " selected" : "");
    const badge = cand.reflector_status === "pass" ? "badge-pass" : "badge-reject";
    row.innerHTML = `
      <div class="candidate-head">
        <span class="badge ${badge}">${cand.reflector_status}</span>
        <span class="meta">${cand.backend_id} / ${cand.generator_role}</span>
        <span class="meta">utility ${cand.utility_score.toFixed(3)}
          (sim ${cand.sim_term.toFixed(3)}, judge ${cand.judge_term.toFixed(3)})</span>
      </div>
      <div class="candidate-text">${escapeHtml(cand.text)}</div>
      ${cand.reflector_feedback ? `<div class="feedback">${escapeHtml(cand.reflector_feedback)}</div>` : ""}
    `;
    row.addEventListener("click", () => dispatch({ type: "select", index: cand.index }));
    host.appendChild(row);
  });
}

function renderToggles(item: ReviewItem): void {
  const host = $("channel-toggles");
  host.innerHTML = "";
  CHANNEL_NAMES.forEach((name, i) => {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = state.visibleChannels[i];
    box.addEventListener("change", () => {
      state.visibleChannels[i] = box.checked;
      const canvas = $("chart") as HTMLCanvasElement;
      renderChart(canvas, item.series.values, state.visibleChannels);
    });
    label.appendChild(box);
    label.appendChild(document.createTextNode(name));
    host.appendChild(label);
  });
}

function render(): void {
  const banner = $("banner");
  banner.textContent = state.banner ?? "";
  banner.style.display = state.banner ? "block" : "none";

  const empty = $("empty-state");
  const panel = $("review-panel");
  if (!state.item) {
    empty.style.display = "block";
    panel.style.display = "none";
    return;
  }
  empty.style.display = "none";
  panel.style.display = "block";

  $("item-title").textContent =
    `${state.item.item_id} (${state.item.series.category}, D=` +
    `${state.item.series.complexity.toFixed(3)})`;
  renderChart(
    $("chart") as HTMLCanvasElement,
    state.item.series.values,
    state.visibleChannels,
  );
  renderToggles(state.item);
  renderCandidates(state.item);

  (["pa", "sr"] as const).forEach((which) => {
    const select = $(`score-${which}`) as HTMLSelectElement;
    const value = which === "pa" ? state.draft.sPa : state.draft.sSr;
    select.value = value === null ? "" : String(value);
  });
  const editBox = $("edit-box") as HTMLTextAreaElement;
  if (editBox.value !== state.draft.editedText) {
    editBox.value = state.draft.editedText;
  }
  const actionSel = $("action") as HTMLSelectElement;
  actionSel.value = state.draft.action;
  const button = $("submit") as HTMLButtonElement;
  button.disabled = !draftValid(state.draft) || state.submitting;
}

function escapeHtml(text: string): string {
  const div = document.createElement("div");
  div.textContent = text;
  return div.innerHTML;
}

function bindControls(): void {
  (["pa", "sr"] as const).forEach((which) => {
    ($(`score-${which}`) as HTMLSelectElement).addEventListener("change", (ev) => {
      const value = Number((ev.target as HTMLSelectElement).value);
      if (value) dispatch({ type: "set-score", which, value });
    });
  });
  ($("edit-box") as HTMLTextAreaElement).addEventListener("input", (ev) => {
    dispatch({ type: "set-text", text: (ev.target as HTMLTextAreaElement).value });
  });
  ($("action") as HTMLSelectElement).addEventListener("change", (ev) => {
    dispatch({
      type: "set-action",
      action: (ev.target as HTMLSelectElement).value as "approve" | "edit" | "reject",
    });
  });
  $("submit").addEventListener("click", () => void submit());

  document.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLTextAreaElement || ev.target instanceof HTMLInputElement) {
      return; // typing in the edit box
    }
    if (ev.key >= "1" && ev.key <= "5") {
      dispatch({ type: "score-key", value: Number(ev.key) });
    } else if (ev.key === "a") {
      dispatch({ type: "set-action", action: "approve" });
      void submit();
    } else if (ev.key === "r") {
      dispatch({ type: "set-action", action: "reject" });
      void submit();
    } else if (ev.key === "e") {
      dispatch({ type: "set-action", action: "edit" });
      ($("edit-box") as HTMLTextAreaElement).focus();
    } else if (ev.key === "j" || ev.key === "k") {
      const n = state.item?.candidates.length ?? 0;
      if (n > 0) {
        const current = state.draft.selectedIndex ?? -1;
        const next = ev.key === "j" ? Math.min(n - 1, current + 1) : Math.max(0, current - 1);
        dispatch({ type: "select", index: next });
      }
    } else if (ev.key === "Enter") {
      void submit();
    }
  });
}

export async function start(): Promise<void> {
  bindControls();
  await refreshStats();
  await loadNext();
}

if (typeof document !== "undefined" && document.getElementById("review-panel")) {
  void start();
}
