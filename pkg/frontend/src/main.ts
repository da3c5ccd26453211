// Browser entry point: connect to the websocket bridge, then loop
// render tree -> DOM -> gesture -> command -> render tree.

import { SessionClient, SocketLike } from "./client.js";
import { renderView } from "./dom.js";
import { Gesture, commandFor } from "./gestures.js";
import {
  ViewModel,
  applyError,
  applyRender,
  initialViewModel,
} from "./viewmodel.js";
import { RenderNode } from "./protocol.js";

export interface App {
  vm: ViewModel;
  client: SessionClient;
  dispatch(gesture: Gesture): void;
}

/** Wire the app into `mount`. The socket is injectable for tests. */
export function startApp(
  doc: Document,
  mount: HTMLElement,
  socket: SocketLike,
  secret: string,
): App {
  const app = {} as App;
  app.vm = initialViewModel();

  // stable sink: handlers follow app.dispatch even if it is wrapped
  const sink = (gesture: Gesture): void => app.dispatch(gesture);
  const redraw = (): void => renderView(doc, mount, app.vm, sink);

  app.client = new SessionClient(socket, secret, {
    onRender(tree: RenderNode): void {
      app.vm = applyRender(app.vm, tree);
      redraw();
    },
    onEvent(body): void {
      app.vm = { ...app.vm, pending: null, info: JSON.stringify(body) };
      redraw();
    },
    onError(code, message): void {
      app.vm = applyError(app.vm, code, message);
      redraw();
    },
    onState(state): void {
      app.vm = { ...app.vm, connection: state === "open" ? "open" : state };
      redraw();
    },
  });

  app.dispatch = (gesture: Gesture): void => {
    if (gesture.kind === "object") {
      // selection is the one piece of local view state
      app.vm = { ...app.vm, selection: gesture.sign };
    }
    const outgoing = commandFor(gesture, app.vm);
    if (outgoing) {
      app.vm = { ...app.vm, pending: outgoing.tool };
      app.client.invoke(outgoing.tool, outgoing.params);
    }
    redraw();
  };

  doc.addEventListener("keydown", (ev) => {
    const key = (ev as KeyboardEvent).key;
    if (key === "Escape") app.dispatch({ kind: "escape" });
    if (key === "F1") app.dispatch({ kind: "tool", command: "system" });
    if (key === "F2") app.dispatch({ kind: "tool", command: "site" });
  });

  redraw();
  return app;
}

declare const window: (Window & { WebSocket: new (url: string) => SocketLike }) | undefined;

export function boot(): void {
  if (typeof window === "undefined") return;
  const doc = window.document;
  const mount = doc.getElementById("app");
  if (!mount) return;
  const params = new URLSearchParams(window.location.search);
  const endpoint = params.get("ws") ?? `ws://${window.location.hostname}:7049`;
  const secret = params.get("secret") ?? window.localStorage.getItem("unispace-secret") ?? "";
  if (secret) window.localStorage.setItem("unispace-secret", secret);
  const socket = new window.WebSocket(endpoint);
  startApp(doc, mount as HTMLElement, socket, secret);
}

boot();
