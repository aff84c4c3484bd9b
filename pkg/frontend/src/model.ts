import type { GatewayEvent, StateDocument, StateResponse, TreeDoc } from "./types.js";
import { isIdle } from "./types.js";

export type NodeColor = "green" | "yellow" | "red" | "none";

export interface Notice {
  kind: "protocol" | "error";
  text: string;
}

/**
 * Pure state behind the console. Holds the latest run document, the event
 * timeline and transient UI state; every render is a function of this object,
 * so reconnecting and replaying the same documents rebuilds the same view.
 */
export class ConsoleModel {
  doc: StateDocument | null = null;
  tree: TreeDoc | null = null;
  timeline: GatewayEvent[] = [];
  notice: Notice | null = null;
  connected = false;
  idle = false;
  private inflight: "answer" | "edit" | null = null;

  /**
   * Take a /state response. Documents whose tick regressed are stale reads
   * from an out-of-order poll and are dropped; returns whether it applied.
   */
  acceptState(doc: StateResponse): boolean {
    this.connected = true;
    if (isIdle(doc)) {
      this.idle = true;
      return false;
    }
    this.idle = false;
    if (this.doc !== null && doc.tick < this.doc.tick) return false;
    this.doc = doc;
    return true;
  }

  /** Append events newer than what the timeline already holds (dedupe by seq). */
  acceptEvents(batch: GatewayEvent[]): number {
    const have = this.lastSeq();
    const fresh = batch.filter((e) => e.seq > have);
    fresh.sort((a, b) => a.seq - b.seq);
    this.timeline.push(...fresh);
    return fresh.length;
  }

  lastSeq(): number {
    const n = this.timeline.length;
    return n === 0 ? 0 : this.timeline[n - 1].seq;
  }

  connectionLost(): void {
    this.connected = false;
  }

  /** An operator answer is wanted right now. */
  questionOpen(): boolean {
    const d = this.doc?.dialogue;
    return Boolean(d && d.awaiting && d.question !== null) && !this.doc!.finished;
  }

  /** Yes/No buttons are clickable: a question is open and nothing is in flight. */
  canAnswer(): boolean {
    return this.questionOpen() && this.inflight === null;
  }

  /** Scene edits are accepted while the run is live and nothing is in flight. */
  canEdit(): boolean {
    return this.doc !== null && !this.doc.finished && this.inflight === null;
  }

  mutationPending(): boolean {
    return this.inflight !== null;
  }

  /** Claim the single mutation slot; false means one is already in flight. */
  beginMutation(kind: "answer" | "edit"): boolean {
    if (this.inflight !== null) return false;
    this.inflight = kind;
    return true;
  }

  /** Release the slot; a 409 becomes a protocol notice, other errors a toast. */
  settleMutation(status: number, detail: string | null): void {
    this.inflight = null;
    if (status === 409) {
      this.notice = { kind: "protocol", text: detail ?? "rejected: state changed under you" };
    } else if (status === 0 || status >= 400) {
      this.notice = { kind: "error", text: detail ?? `request failed (${status})` };
    } else {
      this.notice = null;
    }
  }

  dismissNotice(): void {
    this.notice = null;
  }

  /** Status of a tree node on the last tick, as a traffic-light color. */
  colorFor(label: string): NodeColor {
    const status = this.doc?.node_status[label];
    switch (status) {
      case "success":
        return "green";
      case "running":
        return "yellow";
      case "failure":
        return "red";
      default:
        return "none";
    }
  }

  /** Frame label for a world object, when perception has registered one. */
  frameNameFor(objectId: string): string | null {
    const frame = this.doc?.frames.find((f) => f.instance === objectId);
    return frame ? frame.name : null;
  }

  reset(): void {
    this.doc = null;
    this.tree = null;
    this.timeline = [];
    this.notice = null;
    this.idle = false;
    this.inflight = null;
  }
}
