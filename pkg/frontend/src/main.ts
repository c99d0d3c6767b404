// DOM bootstrap: one container, event delegation, re-render on state change.

import { ApiClient } from "./api.js";
import { SessionRunner } from "./session.js";
import { renderView } from "./ui.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

const runner = new SessionRunner(new ApiClient(""));

function render(): void {
  if (root) root.innerHTML = renderView(runner.state());
}

runner.onChange(render);
render();

root.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.id === "start") {
    const input = document.getElementById("participant") as HTMLInputElement | null;
    const participant = input?.value.trim();
    if (participant) void runner.start(participant);
    return;
  }
  const label = target.getAttribute("data-label");
  if (label !== null) {
    runner.selectLabel(label);
    return;
  }
  if (target.id === "submit") {
    void runner.submit();
  }
});

root.addEventListener("change", (event) => {
  const target = event.target as HTMLInputElement;
  if (target.name === "confidence") {
    runner.setConfidence(Number(target.value));
  }
});
