/** Documents served by the run gateway. Field names mirror the wire format. */

export interface SceneObjectDoc {
  id: string;
  category: string;
  position: number[];
  footprint_radius: number;
}

export interface WorldDoc {
  objects: SceneObjectDoc[];
  gripper: string;
  held: string | null;
  clock: number;
  ee: number[];
}

/** One perceived object; `name` is the frame label shown on the plot. */
export interface FrameDoc {
  name: string;
  instance: string;
  category: string;
  position: number[];
}

export interface DialogueDoc {
  query: string;
  awaiting: boolean;
  question: string | null;
  candidate: string | null;
  questions_asked: number;
}

export interface ActiveActionDoc {
  node: string;
  kind: string;
  progress: number;
}

export interface StateDocument {
  tick: number;
  status: string;
  finished: boolean;
  result: string | null;
  live?: boolean;
  world: WorldDoc;
  frames: FrameDoc[];
  counts: Record<string, number>;
  resolved: Record<string, string>;
  queue: string[];
  perception_halted: boolean;
  dialogue: DialogueDoc | null;
  active_action: ActiveActionDoc | null;
  node_status: Record<string, string>;
  events_count: number;
  hash: string;
}

/** GET /state before any run has been posted. */
export interface IdleDocument {
  status: "idle";
  tick: number;
  finished: boolean;
  live: boolean;
}

export type StateResponse = StateDocument | IdleDocument;

export function isIdle(doc: StateResponse): doc is IdleDocument {
  return doc.status === "idle" && !("world" in doc);
}

export interface GatewayEvent {
  seq: number;
  tick: number;
  kind: string;
  [field: string]: unknown;
}

export interface TreeDoc {
  kind: string;
  label: string;
  payload?: Record<string, unknown>;
  children?: TreeDoc[];
}

/** Outcome of a mutation POST; detail carries the gateway's error text. */
export interface Ack {
  status: number;
  detail: string | null;
}
