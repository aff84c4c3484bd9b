import type { ConsoleModel } from "./model.js";
import type { GatewayEvent, TreeDoc } from "./types.js";

/** Escape text for interpolation into markup. */
export function esc(text: unknown): string {
  return String(text)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const CATEGORY_FILL: Record<string, string> = {
  banana: "#e3b341",
  bowl: "#58a6ff",
  cup: "#d2a8ff",
  apple: "#f85149",
  mug: "#79c0ff",
  plate: "#a5d6ff",
};

function fillFor(category: string): string {
  return CATEGORY_FILL[category] ?? "#8b949e";
}

export function renderStatusBar(m: ConsoleModel): string {
  if (!m.connected) {
    return `<header class="bar"><span class="dot down"></span> gateway unreachable, retrying</header>`;
  }
  if (m.idle || m.doc === null) {
    return `<header class="bar"><span class="dot"></span> idle: no run posted yet</header>`;
  }
  const d = m.doc;
  const live = d.live && !d.finished;
  const dot = `<span class="dot${live ? " live" : ""}"></span>`;
  const outcome = d.finished ? `finished: <b class="${esc(d.result)}">${esc(d.result)}</b>` : `status ${esc(d.status)}`;
  const queue = d.queue.length ? `<span class="chip">ambiguous: ${esc(d.queue.join(", "))}</span>` : "";
  const halted = d.perception_halted ? `<span class="chip warn">perception halted</span>` : "";
  const held = d.world.held ? `<span class="chip">holding ${esc(d.world.held)}</span>` : "";
  return `<header class="bar">${dot} tick ${d.tick} &middot; ${outcome} ${queue} ${halted} ${held}</header>`;
}

export function renderNotice(m: ConsoleModel): string {
  if (m.notice === null) return "";
  const label = m.notice.kind === "protocol" ? "out of step" : "request failed";
  return (
    `<div class="notice ${m.notice.kind}" data-dismiss="1">` +
    `<b>${label}:</b> ${esc(m.notice.text)} <span class="hint">(click to dismiss)</span></div>`
  );
}

/** Top-down plot: workspace disc, objects to scale, frame labels, gripper. */
export function renderScene(m: ConsoleModel): string {
  const parts: string[] = [];
  parts.push(`<circle class="workspace" cx="0" cy="0" r="0.6"></circle>`);
  parts.push(`<line class="axis" x1="-0.64" y1="0" x2="0.64" y2="0"></line>`);
  parts.push(`<line class="axis" x1="0" y1="0.64" x2="0" y2="-0.64"></line>`);
  const doc = m.doc;
  if (doc !== null) {
    for (const o of doc.world.objects) {
      const [x, y] = o.position;
      const cy = -y;
      const label = m.frameNameFor(o.id);
      parts.push(
        `<circle class="obj" cx="${x.toFixed(4)}" cy="${cy.toFixed(4)}" ` +
          `r="${o.footprint_radius.toFixed(4)}" fill="${fillFor(o.category)}"></circle>`,
      );
      parts.push(
        `<text class="tag${label ? "" : " dim"}" x="${x.toFixed(4)}" ` +
          `y="${(cy - o.footprint_radius - 0.02).toFixed(4)}">${esc(label ?? o.id)}</text>`,
      );
    }
    const [ex, ey] = doc.world.ee;
    const gy = -ey;
    parts.push(
      `<g class="gripper"><line x1="${(ex - 0.025).toFixed(4)}" y1="${gy.toFixed(4)}" ` +
        `x2="${(ex + 0.025).toFixed(4)}" y2="${gy.toFixed(4)}"></line>` +
        `<line x1="${ex.toFixed(4)}" y1="${(gy - 0.025).toFixed(4)}" ` +
        `x2="${ex.toFixed(4)}" y2="${(gy + 0.025).toFixed(4)}"></line></g>`,
    );
    if (doc.world.held) {
      parts.push(`<text class="tag" x="${ex.toFixed(4)}" y="${(gy + 0.05).toFixed(4)}">${esc(doc.world.held)}</text>`);
    }
  }
  return `<svg class="scene" viewBox="-0.68 -0.68 1.36 1.36" preserveAspectRatio="xMidYMid meet">${parts.join("")}</svg>`;
}

const KIND_GLYPH: Record<string, string> = {
  sequence: "&#8594;",
  fallback: "?",
  condition: "&#9671;",
  action: "&#9645;",
};

function renderTreeNode(node: TreeDoc, m: ConsoleModel): string {
  const color = m.colorFor(node.label);
  const glyph = KIND_GLYPH[node.kind] ?? node.kind;
  const row =
    `<span class="node st-${color}"><span class="glyph">${glyph}</span> ` + `${esc(node.label)}</span>`;
  const children = node.children ?? [];
  if (children.length === 0) return `<li>${row}</li>`;
  return `<li>${row}<ul>${children.map((c) => renderTreeNode(c, m)).join("")}</ul></li>`;
}

/** Tree panel; green, yellow, red mark the node's last return status. */
export function renderTree(m: ConsoleModel): string {
  if (m.tree === null) return `<p class="empty">no tree loaded</p>`;
  return `<ul class="tree">${renderTreeNode(m.tree, m)}</ul>`;
}

export function renderDialogue(m: ConsoleModel): string {
  const d = m.doc?.dialogue ?? null;
  const open = m.questionOpen();
  const enabled = m.canAnswer();
  const question = open ? esc(m.doc!.dialogue!.question) : "<span class='empty'>no question waiting</span>";
  const meta = d
    ? `<p class="meta">clarifying <b>${esc(d.query)}</b> &middot; ${d.questions_asked} asked` +
      (d.candidate && open ? ` &middot; about ${esc(d.candidate)}` : "") +
      `</p>`
    : "";
  const busy = m.mutationPending() ? ` <span class="hint">sending&hellip;</span>` : "";
  return (
    `<div class="question">${question}${busy}</div>${meta}` +
    `<div class="answers">` +
    `<button data-answer="yes"${enabled ? "" : " disabled"}>Yes</button>` +
    `<button data-answer="no"${enabled ? "" : " disabled"}>No</button>` +
    `</div>`
  );
}

function describe(e: GatewayEvent): string | null {
  switch (e.kind) {
    case "QueryEnqueued":
      return `ambiguity queued: ${esc(e.category)}`;
    case "QuestionAsked":
      return `asked: ${esc(e.text)}`;
    case "AnswerReceived":
      return `operator said ${esc(e.answer)}`;
    case "QueryResolved":
      return `resolved ${esc(e.query)} &rarr; ${esc(e.instance)}`;
    case "ActionStarted":
      return `started ${esc(e.action)} (${esc(e.node)})`;
    case "ActionCompleted":
      return `finished ${esc(e.action)}: ${esc(e.outcome)}`;
    case "RegistryUpdated":
      return `perceived: ${esc((e.frames as string[]).join(", ") || "nothing")}`;
    case "Warning":
      return `<span class="warn">${esc(e.message)}</span>`;
    default:
      // NodeVisit and TickResult are too chatty for the feed; the tree and
      // status bar already carry them
      return null;
  }
}

export function renderTimeline(m: ConsoleModel, limit = 40): string {
  const rows: string[] = [];
  for (const e of m.timeline) {
    const line = describe(e);
    if (line === null) continue;
    rows.push(`<li data-kind="${esc(e.kind)}"><span class="t">t${e.tick}</span> ${line}</li>`);
  }
  if (rows.length === 0) return `<p class="empty">nothing yet</p>`;
  return `<ol class="feed">${rows.slice(-limit).join("")}</ol>`;
}

export function renderEditPanel(m: ConsoleModel): string {
  const enabled = m.canEdit();
  const dis = enabled ? "" : " disabled";
  const options = (m.doc?.world.objects ?? [])
    .map((o) => `<option value="${esc(o.id)}">${esc(m.frameNameFor(o.id) ?? o.id)}</option>`)
    .join("");
  return (
    `<div class="edit-row">` +
    `<select id="edit-target"${dis}>${options}</select>` +
    `<button data-edit="remove"${dis}>Remove</button>` +
    `<input id="edit-x" type="number" step="0.05" placeholder="x"${dis}>` +
    `<input id="edit-y" type="number" step="0.05" placeholder="y"${dis}>` +
    `<button data-edit="move"${dis}>Move</button>` +
    `</div>` +
    `<div class="edit-row">` +
    `<input id="add-id" placeholder="id"${dis}>` +
    `<input id="add-category" placeholder="category"${dis}>` +
    `<input id="add-x" type="number" step="0.05" placeholder="x"${dis}>` +
    `<input id="add-y" type="number" step="0.05" placeholder="y"${dis}>` +
    `<button data-edit="add"${dis}>Add</button>` +
    `</div>`
  );
}

export function renderPage(m: ConsoleModel): string {
  return (
    renderStatusBar(m) +
    renderNotice(m) +
    `<main class="grid">` +
    `<section class="panel"><h2>scene</h2>${renderScene(m)}</section>` +
    `<section class="panel"><h2>behavior</h2>${renderTree(m)}</section>` +
    `<section class="panel"><h2>clarification</h2>${renderDialogue(m)}</section>` +
    `<section class="panel"><h2>scene edits</h2>${renderEditPanel(m)}</section>` +
    `<section class="panel wide"><h2>timeline</h2>${renderTimeline(m)}</section>` +
    `</main>`
  );
}
