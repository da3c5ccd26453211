// Session client over the websocket bridge: hello once, then one
// command in flight at a time. Replies route back through callbacks so
// the app stays a render loop.

import { CommandBody, Frame, RenderNode, decodeFrame, encodeFrame } from "./protocol.js";

/** The WebSocket subset the client needs; tests supply a fake. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export interface ClientEvents {
  onRender(tree: RenderNode): void;
  onEvent(body: Record<string, unknown>): void;
  onError(code: string, message: string): void;
  onState(state: "connecting" | "open" | "closed"): void;
}

export class SessionClient {
  private seq = 0;
  private session: string | null = null;
  private inFlight = false;
  commandsSent = 0;

  constructor(
    private socket: SocketLike,
    private secret: string,
    private events: ClientEvents,
  ) {
    socket.onopen = () => this.hello();
    socket.onmessage = (ev) => this.receive(ev.data);
    socket.onclose = () => events.onState("closed");
  }

  private send(frame: Frame): void {
    this.socket.send(encodeFrame(frame));
  }

  private hello(): void {
    this.seq += 1;
    this.send({
      v: 1,
      type: "hello",
      seq: this.seq,
      body: {
        agent: "web-ui",
        credentials: { principal: "owner", secret: this.secret },
      },
    });
  }

  invoke(tool: string, params: Record<string, unknown>): boolean {
    if (!this.session || this.inFlight) return false;
    this.seq += 1;
    this.commandsSent += 1;
    this.inFlight = true;
    const body: CommandBody = { tool, params, session: this.session };
    this.send({ v: 1, type: "command", seq: this.seq, body: body as unknown as Record<string, unknown> });
    return true;
  }

  /** Ask for the current space; used right after connect and on reload. */
  refresh(): void {
    this.invoke("enter", {});
  }

  private receive(raw: string): void {
    for (const line of raw.split("\n")) {
      if (!line.trim()) continue;
      const frame = decodeFrame(line);
      if (frame.type === "hello") {
        this.session = String(frame.body.session ?? "");
        this.events.onState("open");
        this.refresh();
        continue;
      }
      this.inFlight = false;
      if (frame.type === "render") {
        this.events.onRender(frame.body as unknown as RenderNode);
      } else if (frame.type === "event") {
        this.events.onEvent(frame.body);
      } else if (frame.type === "error") {
        this.events.onError(String(frame.body.code ?? "ERROR"),
                            String(frame.body.message ?? ""));
      }
    }
  }
}
