import { describe, expect, it } from "vitest";

import {
  decisionBody,
  draftValid,
  emptyDraft,
  initialState,
  mergeAfterConflict,
  reduceDraft,
} from "../src/state.js";
import type { ReviewItem } from "../src/types.js";

describe("draft validation invariant", () => {
  it("blocks submit until both scores and a selection exist", () => {
    let draft = emptyDraft();
    expect(draftValid(draft)).toBe(false);

    draft = reduceDraft(draft, { type: "select", index: 1 });
    expect(draftValid(draft)).toBe(false); // no scores yet

    draft = reduceDraft(draft, { type: "set-score", which: "pa", value: 4 });
    expect(draftValid(draft)).toBe(false); // one score missing

    draft = reduceDraft(draft, { type: "set-score", which: "sr", value: 5 });
    expect(draftValid(draft)).toBe(true);
  });

  it("blocks edit submissions without text", () => {
    let draft = emptyDraft();
    draft = reduceDraft(draft, { type: "select", index: 0 });
    draft = reduceDraft(draft, { type: "set-score", which: "pa", value: 3 });
    draft = reduceDraft(draft, { type: "set-score", which: "sr", value: 3 });
    draft = reduceDraft(draft, { type: "set-action", action: "edit" });
    expect(draftValid(draft)).toBe(false);
    draft = reduceDraft(draft, { type: "set-text", text: "  " });
    expect(draftValid(draft)).toBe(false);
    draft = reduceDraft(draft, { type: "set-text", text: "better wording" });
    expect(draftValid(draft)).toBe(true);
  });

  it("reject-all needs only the scores", () => {
    let draft = emptyDraft();
    draft = reduceDraft(draft, { type: "set-action", action: "reject" });
    expect(draftValid(draft)).toBe(false);
    draft = reduceDraft(draft, { type: "set-score", which: "pa", value: 1 });
    draft = reduceDraft(draft, { type: "set-score", which: "sr", value: 2 });
    expect(draftValid(draft)).toBe(true);
  });
});

describe("decision body", () => {
  it("throws when the invariant is not satisfied", () => {
    expect(() => decisionBody(emptyDraft())).toThrow();
  });

  it("maps approve drafts", () => {
    let draft = emptyDraft();
    draft = reduceDraft(draft, { type: "select", index: 2 });
    draft = reduceDraft(draft, { type: "set-score", which: "pa", value: 4 });
    draft = reduceDraft(draft, { type: "set-score", which: "sr", value: 5 });
    expect(decisionBody(draft)).toEqual({
      s_pa: 4,
      s_sr: 5,
      reviewer_id: "",
      selected_caption_index: 2,
    });
  });

  it("maps edit drafts with trimmed text", () => {
    let draft = emptyDraft();
    draft = reduceDraft(draft, { type: "select", index: 0 });
    draft = reduceDraft(draft, { type: "set-text", text: " fixed caption " });
    draft = reduceDraft(draft, { type: "set-score", which: "pa", value: 3 });
    draft = reduceDraft(draft, { type: "set-score", which: "sr", value: 4 });
    const body = decisionBody(draft);
    expect(body.edited_text).toBe("fixed caption");
    expect(body.selected_caption_index).toBe(0);
  });

  it("maps reject drafts", () => {
    let draft = emptyDraft();
    draft = reduceDraft(draft, { type: "set-action", action: "reject" });
    draft = reduceDraft(draft, { type: "set-score", which: "pa", value: 1 });
    draft = reduceDraft(draft, { type: "set-score", which: "sr", value: 1 });
    expect(decisionBody(draft).reject_all).toBe(true);
  });
});

describe("keyboard score flow", () => {
  it("fills S_pa first, then S_sr", () => {
    let draft = emptyDraft();
    draft = reduceDraft(draft, { type: "score-key", value: 4 });
    expect(draft.sPa).toBe(4);
    expect(draft.sSr).toBeNull();
    draft = reduceDraft(draft, { type: "score-key", value: 2 });
    expect(draft.sSr).toBe(2);
    draft = reduceDraft(draft, { type: "score-key", value: 5 });
    expect(draft.sSr).toBe(5); // later presses keep adjusting S_sr
  });

  it("clamps scores into 1..5", () => {
    let draft = emptyDraft();
    draft = reduceDraft(draft, { type: "set-score", which: "pa", value: 9 });
    expect(draft.sPa).toBe(5);
  });
});

describe("conflict flow", () => {
  it("reloads the item but preserves the draft", () => {
    const state = initialState();
    let draft = emptyDraft();
    draft = reduceDraft(draft, { type: "set-text", text: "my careful edit" });
    const withDraft = { ...state, draft };
    const fresh = {
      item_id: "x",
      status: "decided",
      decided_at: "2026-01-01T00:00:00Z",
      series: {
        station_id: "x",
        start_time: "2026-01-01T00:00:00Z",
        step_seconds: 3600,
        values: [[288, 1013, 60, 4, 0]],
        category: "steady",
        complexity: 0.2,
      },
      candidates: [],
    } as ReviewItem;
    const merged = mergeAfterConflict(withDraft, fresh);
    expect(merged.item).toBe(fresh);
    expect(merged.draft.editedText).toBe("my careful edit");
    expect(merged.banner).toMatch(/draft is preserved/);
  });
});
