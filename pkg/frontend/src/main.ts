// DOM binding for the review session. Keyboard-first: C marks congruent,
// I marks incongruent.

import { ApiClient } from "./api.js";
import { precisionCurveSvg } from "./chart.js";
import { CONGRUENT, INCONGRUENT, ReviewSession, SessionState } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function render(state: SessionState): void {
  el("annotator-name").textContent = state.annotator;
  el("progress").textContent = `${state.labeled} labeled · ${
    state.item ? state.remaining + 1 : 0
  }${state.remaining + 1 >= 20 ? "+" : ""} in queue`;

  const banner = el("banner");
  banner.hidden = !state.offline;

  const card = el("card");
  const done = el("done");
  if (state.item) {
    card.hidden = false;
    done.hidden = true;
    el("rank").textContent = `#${state.item.rank}`;
    el("score").textContent = state.item.prediction_score.toFixed(4);
    el("title").textContent = state.item.title;
    (el("thumb") as HTMLImageElement).src = state.item.image_url;
  } else {
    card.hidden = true;
    done.hidden = !state.exhausted;
  }

  const curveBox = el("curve-box");
  if (state.curve) {
    curveBox.innerHTML = precisionCurveSvg(state.curve.points);
    el("curve-meta").textContent = `${state.curve.annotated_count} annotated · rule ${state.curve.rule}`;
    const disagreements = el("disagreements");
    if (state.curve.disagreements.length > 0) {
      disagreements.hidden = false;
      disagreements.textContent = `needs re-review: ${state.curve.disagreements.join(", ")}`;
    } else {
      disagreements.hidden = true;
    }
  } else if (state.curvePending) {
    curveBox.textContent = "curve blocked";
    const parts = [];
    if (state.curvePending.missing.length) parts.push(`unlabeled: ${state.curvePending.missing.join(", ")}`);
    if (state.curvePending.disagreed.length) parts.push(`disagreed: ${state.curvePending.disagreed.join(", ")}`);
    el("curve-meta").textContent = parts.join(" · ");
  } else {
    curveBox.textContent = "no labels yet";
    el("curve-meta").textContent =
      state.pendingKs.length > 0 ? `computable after k=${state.pendingKs[0]} labels` : "";
  }
}

function annotatorName(): string {
  let name = localStorage.getItem("annotator") ?? "";
  while (!name) {
    name = (window.prompt("Annotator name:") ?? "").trim();
  }
  localStorage.setItem("annotator", name);
  return name;
}

export function boot(): void {
  const api = new ApiClient("");
  const session = new ReviewSession(api, annotatorName(), render);

  el("mark-congruent").addEventListener("click", () => void session.decide(CONGRUENT));
  el("mark-incongruent").addEventListener("click", () => void session.decide(INCONGRUENT));
  el("retry").addEventListener("click", () => void session.retry());
  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    const key = event.key.toLowerCase();
    if (key === "c") void session.decide(CONGRUENT);
    if (key === "i") void session.decide(INCONGRUENT);
  });

  void session.start();
}

boot();
