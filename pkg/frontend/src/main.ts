import { GatewayClient } from "./api.js";
import { ConsoleModel } from "./model.js";
import { refreshOnce, sendAnswer, sendSceneEdit, SceneEdit } from "./controller.js";
import { renderPage } from "./view.js";

const POLL_MS = 500;

const client = new GatewayClient("");
const model = new ConsoleModel();
const root = document.getElementById("app")!;

const FORM_IDS = ["edit-target", "edit-x", "edit-y", "add-id", "add-category", "add-x", "add-y"];

/** Re-render the whole page, carrying form values across the innerHTML swap. */
function render(): void {
  const saved: Record<string, string> = {};
  for (const id of FORM_IDS) {
    const el = document.getElementById(id) as HTMLInputElement | HTMLSelectElement | null;
    if (el) saved[id] = el.value;
  }
  const focused = document.activeElement instanceof HTMLElement ? document.activeElement.id : "";
  root.innerHTML = renderPage(model);
  for (const id of FORM_IDS) {
    const el = document.getElementById(id) as HTMLInputElement | HTMLSelectElement | null;
    if (el && id in saved && saved[id] !== "") el.value = saved[id];
  }
  if (focused) document.getElementById(focused)?.focus();
  const feed = root.querySelector(".feed");
  if (feed) feed.scrollTop = feed.scrollHeight;
}

async function refresh(): Promise<void> {
  await refreshOnce(client, model);
  render();
}

function num(id: string): number | null {
  const el = document.getElementById(id) as HTMLInputElement | null;
  if (!el || el.value.trim() === "") return null;
  const v = Number(el.value);
  return Number.isFinite(v) ? v : null;
}

function text(id: string): string {
  const el = document.getElementById(id) as HTMLInputElement | HTMLSelectElement | null;
  return el ? el.value.trim() : "";
}

function editFromForm(op: string): SceneEdit | null {
  if (op === "remove") {
    const id = text("edit-target");
    return id ? { op: "remove", id } : null;
  }
  if (op === "move") {
    const id = text("edit-target");
    const x = num("edit-x");
    const y = num("edit-y");
    if (!id || x === null || y === null) return null;
    return { op: "move", id, position: [x, y, 0] };
  }
  if (op === "add") {
    const id = text("add-id");
    const category = text("add-category");
    const x = num("add-x");
    const y = num("add-y");
    if (!id || !category || x === null || y === null) return null;
    return { op: "add", id, category, position: [x, y, 0] };
  }
  return null;
}

root.addEventListener("click", (ev) => {
  const target = ev.target instanceof Element ? ev.target : null;
  if (!target) return;
  const answerBtn = target.closest("[data-answer]");
  if (answerBtn) {
    const word = answerBtn.getAttribute("data-answer") === "yes" ? "yes" : "no";
    const done = sendAnswer(client, model, word);
    render(); // the slot is claimed synchronously, so both buttons grey out now
    void done.then(refresh);
    return;
  }
  const editBtn = target.closest("[data-edit]");
  if (editBtn) {
    const edit = editFromForm(editBtn.getAttribute("data-edit")!);
    if (edit) {
      const done = sendSceneEdit(client, model, edit);
      render();
      void done.then(refresh);
    }
    return;
  }
  if (target.closest("[data-dismiss]")) {
    model.dismissNotice();
    render();
  }
});

render();
void refresh();
setInterval(() => void refresh(), POLL_MS);
