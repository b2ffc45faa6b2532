// Review view state and the draft-decision reducer.
//
// The submit invariant: a decision can leave the client only when both
// scores are set and either a candidate is selected (approve / reject-all)
// or an edit with nonempty text exists.

import type { DecisionBody, ReviewItem } from "./types.js";

export type DraftAction = "approve" | "edit" | "reject";

export interface Draft {
  action: DraftAction;
  selectedIndex: number | null;
  editedText: string;
  sPa: number | null;
  sSr: number | null;
  reviewerId: string;
}

export interface ViewState {
  queue: string[];
  item: ReviewItem | null;
  draft: Draft;
  submitting: boolean;
  banner: string | null;
  visibleChannels: boolean[];
}

export function emptyDraft(): Draft {
  return {
    action: "approve",
    selectedIndex: null,
    editedText: "",
    sPa: null,
    sSr: null,
    reviewerId: "",
  };
}

export function initialState(): ViewState {
  return {
    queue: [],
    item: null,
    draft: emptyDraft(),
    submitting: false,
    banner: null,
    visibleChannels: [true, false, false, false, false],
  };
}

export function draftValid(draft: Draft): boolean {
  if (draft.sPa === null || draft.sSr === null) {
    return false;
  }
  if (draft.action === "reject") {
    return true;
  }
  if (draft.selectedIndex === null) {
    return false;
  }
  if (draft.action === "edit") {
    return draft.editedText.trim().length > 0;
  }
  return true;
}

export function decisionBody(draft: Draft): DecisionBody {
  if (!draftValid(draft)) {
    throw new Error("draft does not satisfy the submit invariant");
  }
  const body: DecisionBody = {
    s_pa: draft.sPa as number,
    s_sr: draft.sSr as number,
    reviewer_id: draft.reviewerId,
  };
  if (draft.action === "reject") {
    body.reject_all = true;
  } else {
    body.selected_caption_index = draft.selectedIndex;
    if (draft.action === "edit") {
      body.edited_text = draft.editedText.trim();
    }
  }
  return body;
}

export type DraftEvent =
  | { type: "select"; index: number }
  | { type: "set-action"; action: DraftAction }
  | { type: "set-score"; which: "pa" | "sr"; value: number }
  | { type: "score-key"; value: number }
  | { type: "set-text"; text: string }
  | { type: "set-reviewer"; id: string }
  | { type: "reset" };

export function reduceDraft(draft: Draft, event: DraftEvent): Draft {
  switch (event.type) {
    case "select":
      return { ...draft, selectedIndex: event.index };
    case "set-action":
      return { ...draft, action: event.action };
    case "set-score": {
      const value = clampScore(event.value);
      return event.which === "pa" ? { ...draft, sPa: value } : { ...draft, sSr: value };
    }
    case "score-key": {
      // keyboard flow: the first 1-5 press fills S_pa, the second S_sr,
      // further presses keep updating S_sr
      const value = clampScore(event.value);
      if (draft.sPa === null) {
        return { ...draft, sPa: value };
      }
      return { ...draft, sSr: value };
    }
    case "set-text":
      return { ...draft, editedText: event.text, action: "edit" };
    case "set-reviewer":
      return { ...draft, reviewerId: event.id };
    case "reset":
      return emptyDraft();
  }
}

function clampScore(value: number): number {
  return Math.max(1, Math.min(5, Math.round(value)));
}

// After a conflict the item is reloaded but the reviewer's draft (notably any
// edit text in progress) must survive.
export function mergeAfterConflict(state: ViewState, fresh: ReviewItem): ViewState {
  return {
    ...state,
    item: fresh,
    banner: "This item was decided elsewhere; your draft is preserved below.",
  };
}
