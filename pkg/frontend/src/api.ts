import type { Ack, GatewayEvent, StateResponse, TreeDoc } from "./types.js";

/**
 * Thin fetch client for the run gateway. Read calls throw on network
 * failure; mutation calls never throw, they report the HTTP status so the
 * model can turn a 409 into a protocol notice instead of a crash.
 */
export class GatewayClient {
  constructor(readonly base: string = "") {}

  async state(): Promise<StateResponse> {
    const res = await fetch(`${this.base}/state`);
    return (await res.json()) as StateResponse;
  }

  async events(after: number): Promise<GatewayEvent[]> {
    const res = await fetch(`${this.base}/events?after=${after}`);
    const text = await res.text();
    return text
      .split("\n")
      .filter((line) => line.trim() !== "")
      .map((line) => JSON.parse(line) as GatewayEvent);
  }

  async tree(): Promise<TreeDoc | null> {
    const res = await fetch(`${this.base}/tree`);
    if (res.status === 404) return null;
    return (await res.json()) as TreeDoc;
  }

  answer(word: "yes" | "no"): Promise<Ack> {
    return this.mutate("POST", "/dialogue/answer", { answer: word });
  }

  addObject(object: { id: string; category: string; position: number[] }): Promise<Ack> {
    return this.mutate("POST", "/scene/objects", object);
  }

  moveObject(id: string, position: number[]): Promise<Ack> {
    return this.mutate("PATCH", `/scene/objects/${encodeURIComponent(id)}`, { position });
  }

  removeObject(id: string): Promise<Ack> {
    return this.mutate("DELETE", `/scene/objects/${encodeURIComponent(id)}`);
  }

  private async mutate(method: string, path: string, body?: unknown): Promise<Ack> {
    try {
      const res = await fetch(`${this.base}${path}`, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
      let detail: string | null = null;
      try {
        const payload = (await res.json()) as { detail?: unknown };
        if (typeof payload.detail === "string") detail = payload.detail;
      } catch {
        // non-JSON body: keep the status only
      }
      return { status: res.status, detail };
    } catch (err) {
      return { status: 0, detail: err instanceof Error ? err.message : String(err) };
    }
  }
}
