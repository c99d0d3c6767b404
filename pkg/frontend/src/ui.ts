// Pure HTML renderers for the console views; main.ts wires them to the DOM.

import { escapeHtml, renderHighlight } from "./highlight.js";
import type { ViewState } from "./session.js";

export const CONFIDENCE_PROMPT = "I am confident in this classification";
const LIKERT_ANCHORS: Record<number, string> = {
  1: "strongly disagree",
  7: "strongly agree",
};

export function renderStartHtml(): string {
  return [
    '<section class="start">',
    "<h1>Claim review session</h1>",
    "<p>You will review 8 accident statements in one sitting. Some show an",
    " AI suggestion, some do not. For each statement pick a liability",
    " decision and rate your confidence.</p>",
    '<label>Participant id <input id="participant" type="text" autocomplete="off"></label>',
    '<button id="start" type="button">Start session</button>',
    "</section>",
  ].join("");
}

export function renderItemHtml(state: ViewState): string {
  const item = state.item;
  if (!item) return "";
  const assisted = item.assisted && item.assist !== null;
  const parts: string[] = [];
  parts.push('<section class="item">');
  parts.push(
    `<p class="progress">Statement ${state.itemIndex + 1} of ${state.totalItems}</p>`,
  );
  if (assisted && item.assist) {
    parts.push(
      '<div class="assist" data-role="assist">' +
        `<p class="assist-prediction">AI suggestion: <strong>${escapeHtml(item.assist.prediction)}</strong></p>` +
        `<p class="assist-concept">Most relevant concept: ${escapeHtml(item.assist.concept)}</p>` +
        "</div>",
    );
  }
  const highlightSpan = assisted && item.assist ? item.assist.span : null;
  parts.push(`<blockquote class="statement">${renderHighlight(item.text, highlightSpan)}</blockquote>`);

  parts.push('<fieldset class="labels"><legend>Your decision</legend>');
  for (const option of state.classOptions) {
    const pressed = state.selectedLabel === option ? ' aria-pressed="true"' : ' aria-pressed="false"';
    parts.push(
      `<button type="button" data-label="${escapeHtml(option)}"${pressed}>${escapeHtml(option)}</button>`,
    );
  }
  parts.push("</fieldset>");

  parts.push(`<fieldset class="likert"><legend>${CONFIDENCE_PROMPT}</legend>`);
  for (let value = 1; value <= 7; value++) {
    const checked = state.confidence === value ? " checked" : "";
    const anchor = LIKERT_ANCHORS[value] ? `<small>${LIKERT_ANCHORS[value]}</small>` : "";
    parts.push(
      `<label class="likert-point"><input type="radio" name="confidence" value="${value}"${checked}>` +
        `${value}${anchor}</label>`,
    );
  }
  parts.push("</fieldset>");

  const disabled =
    state.phase === "submitting" || state.selectedLabel === null || state.confidence === null;
  parts.push(
    `<button id="submit" type="button"${disabled ? " disabled" : ""}>` +
      (state.phase === "submitting" ? "Submitting..." : "Submit answer") +
      "</button>",
  );
  if (state.error) {
    parts.push(`<p class="error" role="alert">${escapeHtml(state.error)}</p>`);
  }
  parts.push("</section>");
  return parts.join("");
}

export function renderDoneHtml(state: ViewState): string {
  return (
    '<section class="done"><h1>Session complete</h1>' +
    `<p>All ${state.totalItems} statements answered. Thank you.</p></section>`
  );
}

export function renderView(state: ViewState): string {
  switch (state.phase) {
    case "idle":
      return renderStartHtml();
    case "done":
      return renderDoneHtml(state);
    default:
      return renderItemHtml(state);
  }
}
