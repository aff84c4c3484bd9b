import type { GatewayClient } from "./api.js";
import type { ConsoleModel } from "./model.js";
import type { Ack } from "./types.js";

/** One scene perturbation from the edit panel. */
export type SceneEdit =
  | { op: "add"; id: string; category: string; position: number[] }
  | { op: "move"; id: string; position: number[] }
  | { op: "remove"; id: string };

/**
 * One poll cycle: state, then the tree (once per run), then any events past
 * the timeline tail. A network failure marks the model disconnected and the
 * next cycle retries.
 */
export async function refreshOnce(client: GatewayClient, model: ConsoleModel): Promise<void> {
  try {
    const state = await client.state();
    model.acceptState(state);
    if (model.doc !== null) {
      if (model.tree === null) model.tree = await client.tree();
      const fresh = await client.events(model.lastSeq());
      model.acceptEvents(fresh);
    }
  } catch {
    model.connectionLost();
  }
}

/**
 * Post a Yes/No answer. The mutation slot is claimed before the request and
 * released when the ack lands, so the buttons stay disabled in between; a 409
 * (answered twice, or the question went away) surfaces as a protocol notice.
 */
export async function sendAnswer(
  client: GatewayClient,
  model: ConsoleModel,
  word: "yes" | "no",
): Promise<Ack | null> {
  if (!model.canAnswer() || !model.beginMutation("answer")) return null;
  const ack = await client.answer(word);
  model.settleMutation(ack.status, ack.detail);
  return ack;
}

/** Post a scene edit; same single-slot discipline as answers. */
export async function sendSceneEdit(
  client: GatewayClient,
  model: ConsoleModel,
  edit: SceneEdit,
): Promise<Ack | null> {
  if (!model.canEdit() || !model.beginMutation("edit")) return null;
  let ack: Ack;
  if (edit.op === "add") {
    ack = await client.addObject({ id: edit.id, category: edit.category, position: edit.position });
  } else if (edit.op === "move") {
    ack = await client.moveObject(edit.id, edit.position);
  } else {
    ack = await client.removeObject(edit.id);
  }
  model.settleMutation(ack.status, ack.detail);
  return ack;
}
