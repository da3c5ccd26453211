// Browser-level walkthrough against recorded server traffic: the
// five-step task workflow in at most two gestures per step, tab
// rendering, reload reproducibility and the invalid-tree gate.

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { beforeEach, describe, expect, it } from "vitest";

import { startApp, App } from "../src/main";
import { RenderNode } from "../src/protocol";
import { applyRender, initialViewModel, taskTabs } from "../src/viewmodel";
import { renderView } from "../src/dom";
import { commandFor } from "../src/gestures";
import { Exchange, FakeSocket } from "./fakesocket";

const FIXTURES = join(__dirname, "fixtures");
const SESSION: Exchange[] = JSON.parse(
  readFileSync(join(FIXTURES, "session.json"), "utf-8"),
);
const THREE_TABS: RenderNode = JSON.parse(
  readFileSync(join(FIXTURES, "three-tabs.json"), "utf-8"),
);

function mountPoint(): HTMLElement {
  document.body.innerHTML = '<div id="app"></div>';
  return document.getElementById("app") as HTMLElement;
}

function clickByText(mount: HTMLElement, selector: string, text: string): void {
  const nodes = Array.from(mount.querySelectorAll<HTMLElement>(selector));
  const hit = nodes.find((el) => el.textContent === text);
  if (!hit) throw new Error(`no ${selector} with text ${text}`);
  hit.click();
}

describe("task workflow walkthrough", () => {
  let mount: HTMLElement;
  let socket: FakeSocket;
  let app: App;

  beforeEach(() => {
    mount = mountPoint();
    socket = new FakeSocket(SESSION);
    app = startApp(document, mount, socket, "secret");
    socket.open(); // hello + automatic refresh (the recorded "enter")
  });

  it("runs the five steps with at most two gestures each", () => {
    const gestureLog: number[] = [];
    let gestures = 0;
    const realDispatch = app.dispatch;
    app.dispatch = (g) => {
      gestures += 1;
      realDispatch(g);
    };
    const step = (): void => {
      gestureLog.push(gestures);
      gestures = 0;
    };

    // step 1: create a task (the "+" next to the tabs)
    (mount.querySelector(".un-tab-plus") as HTMLElement).click();
    expect(taskTabs(app.vm)).toHaveLength(1);
    step();

    // step 2: search for a site to solve the problem
    const box = mount.querySelector(".un-search") as HTMLInputElement;
    box.value = "document";
    box.dispatchEvent(new KeyboardEvent("keydown", { key: "Enter", bubbles: true }));
    step();

    // step 3: go to the found site (click the result portal)
    clickByText(mount, ".un-portal", "document-editor");
    step();

    // step 4: work on the site (enter a workplace, use a tool)
    clickByText(mount, ".un-portal", "Document");
    clickByText(mount, ".un-tool", "Open Document");
    step();

    // step 5: complete the task (the tab's "x")
    (mount.querySelector(".un-tab-close") as HTMLElement).click();
    expect(taskTabs(app.vm)).toHaveLength(0);
    step();

    expect(gestureLog.every((n) => n <= 2)).toBe(true);
    // one command per gesture; nothing over the two-command budget
    expect(app.client.commandsSent).toBeLessThanOrEqual(
      1 + gestureLog.reduce((a, b) => a + b, 0),
    );
  });

  it("keeps an exit control visible off the root space", () => {
    (mount.querySelector(".un-tab-plus") as HTMLElement).click();
    const exits = Array.from(mount.querySelectorAll<HTMLElement>(".un-tool"))
      .filter((el) => el.dataset.command === "exit");
    expect(exits.length).toBeGreaterThan(0);
  });
});

describe("tab rendering", () => {
  it("renders three clickable tabs with the active one highlighted", () => {
    const mount = mountPoint();
    let vm = applyRender(initialViewModel(), THREE_TABS);
    renderView(document, mount, vm, () => undefined);
    const tabs = Array.from(mount.querySelectorAll(".un-tab"));
    expect(tabs).toHaveLength(3);
    expect(tabs.filter((el) => el.classList.contains("active"))).toHaveLength(1);
    expect(mount.querySelectorAll(".un-tab-close")).toHaveLength(3);
  });
});

describe("statelessness", () => {
  it("reload reproduces the identical view from the server tree", () => {
    const mount = mountPoint();
    const socket = new FakeSocket(SESSION);
    const app = startApp(document, mount, socket, "secret");
    socket.open();
    (mount.querySelector(".un-tab-plus") as HTMLElement).click();
    const before = mount.innerHTML;
    const lastTree = app.vm.tree as RenderNode;

    // a fresh page: new socket, hello, refresh returns the same tree
    const mount2 = mountPoint();
    const replay = new FakeSocket([
      SESSION[0],
      { request: { type: "command", tool: "enter" },
        reply: { type: "render", body: lastTree as unknown as Record<string, unknown> } },
    ]);
    startApp(document, mount2, replay, "secret");
    replay.open();
    expect(mount2.innerHTML).toBe(before);
  });
});

describe("validator gate", () => {
  it("shows a diagnostic overlay instead of a partial render", () => {
    const badTree: RenderNode = {
      node_id: "root",
      kind: "space",
      bounds: [0, 0, 1000, 1000],
      label: "broken",
      meta: { depth: 2 }, // non-root, but no exit tool anywhere
      children: [
        { node_id: "a", kind: "label", bounds: [0, 0, 100, 100],
          label: "stray", children: [] },
      ],
    };
    const vm = applyRender(initialViewModel(), badTree);
    expect(vm.invalid).not.toBeNull();
    const mount = mountPoint();
    renderView(document, mount, vm, () => undefined);
    expect(mount.querySelector(".un-overlay")).not.toBeNull();
    expect(mount.querySelector(".un-stage")).toBeNull();
  });
});

describe("gesture mapping", () => {
  it("maps the browser-like gestures onto protocol tools", () => {
    const vm = initialViewModel();
    expect(commandFor({ kind: "tab-plus" }, vm)?.tool).toBe("create_task");
    expect(commandFor({ kind: "tab-close", task: "t1" }, vm)).toEqual({
      tool: "complete_task", params: { task: "t1" },
    });
    expect(commandFor({ kind: "escape" }, vm)?.tool).toBe("exit");
    expect(commandFor({ kind: "portal", portal: "p" }, vm)).toEqual({
      tool: "activate", params: { portal: "p" },
    });
    const selected = { ...vm, selection: "obj-1" };
    expect(commandFor({ kind: "tool", command: "delete" }, selected)).toEqual({
      tool: "delete", params: { object: "obj-1" },
    });
  });
});
