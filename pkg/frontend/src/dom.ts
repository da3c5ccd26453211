// Render-tree -> DOM. Nodes are drawn scaled from the abstract
// 0-1000 space into the viewport; the UI attaches no meaning beyond
// node kinds, so the server stays free to restructure spaces.

import { Bounds, RenderNode } from "./protocol.js";
import { Gesture, gestureForNode } from "./gestures.js";
import { ViewModel, taskTabs } from "./viewmodel.js";

export type GestureSink = (gesture: Gesture) => void;

const SCALE = 1000;

function place(el: HTMLElement, bounds: Bounds): void {
  el.style.position = "absolute";
  el.style.left = `${(bounds[0] / SCALE) * 100}%`;
  el.style.top = `${(bounds[1] / SCALE) * 100}%`;
  el.style.width = `${(bounds[2] / SCALE) * 100}%`;
  el.style.height = `${(bounds[3] / SCALE) * 100}%`;
}

function nodeElement(
  doc: Document,
  node: RenderNode,
  vm: ViewModel,
  sink: GestureSink,
): HTMLElement {
  const el = doc.createElement(node.kind === "tool" ? "button" : "div");
  el.className = `un-${node.kind}`;
  el.dataset.nodeId = node.node_id;
  if (node.sign) el.dataset.sign = node.sign;
  if (node.command) el.dataset.command = node.command;
  if (node.kind !== "space" && node.kind !== "desktop" && node.kind !== "toolbar") {
    el.textContent = node.label;
  }
  if (node.sign && node.sign === vm.selection) el.classList.add("selected");
  const meta = (node.meta ?? {}) as Record<string, unknown>;
  if (node.kind === "task_tab" && meta.active) el.classList.add("active");
  place(el, node.bounds);

  const gesture = gestureForNode(node);
  if (gesture) {
    el.addEventListener("click", (ev) => {
      ev.stopPropagation();
      sink(gesture);
    });
    el.classList.add("clickable");
  }
  for (const child of node.children ?? []) {
    el.appendChild(nodeElement(doc, child, vm, sink));
  }
  return el;
}

function tabStrip(doc: Document, vm: ViewModel, sink: GestureSink): HTMLElement {
  const strip = doc.createElement("div");
  strip.className = "un-tabstrip";
  for (const tab of taskTabs(vm)) {
    const el = doc.createElement("span");
    el.className = "un-tab" + (tab.active ? " active" : "");
    el.dataset.task = tab.task;
    const label = doc.createElement("span");
    label.className = "un-tab-label";
    label.textContent = `${tab.label} [${tab.state}]`;
    label.addEventListener("click", () => sink({ kind: "tab-switch", task: tab.task }));
    el.appendChild(label);
    const close = doc.createElement("button");
    close.className = "un-tab-close";
    close.textContent = "x";
    close.addEventListener("click", (ev) => {
      ev.stopPropagation();
      sink({ kind: "tab-close", task: tab.task });
    });
    el.appendChild(close);
    strip.appendChild(el);
  }
  const plus = doc.createElement("button");
  plus.className = "un-tab-plus";
  plus.textContent = "+";
  plus.addEventListener("click", () => sink({ kind: "tab-plus" }));
  strip.appendChild(plus);
  return strip;
}

function searchBox(doc: Document, sink: GestureSink): HTMLElement {
  const box = doc.createElement("input");
  box.className = "un-search";
  box.setAttribute("placeholder", "find resources");
  box.addEventListener("keydown", (ev) => {
    if ((ev as KeyboardEvent).key === "Enter") {
      sink({ kind: "search", query: (box as HTMLInputElement).value });
    }
  });
  return box;
}

/** Draw the whole view into `mount`. All-or-nothing: an invalid tree
 * renders only the diagnostic overlay. */
export function renderView(
  doc: Document,
  mount: HTMLElement,
  vm: ViewModel,
  sink: GestureSink,
): void {
  mount.textContent = "";
  const bar = doc.createElement("div");
  bar.className = "un-statusbar";
  bar.textContent = `connection: ${vm.connection}`;
  mount.appendChild(bar);

  if (vm.invalid) {
    const overlay = doc.createElement("div");
    overlay.className = "un-overlay";
    overlay.dataset.error = "INVALID_TREE";
    overlay.textContent = `INVALID_TREE: ${vm.invalid.join("; ")}`;
    mount.appendChild(overlay);
    return;
  }
  if (!vm.tree) return;

  mount.appendChild(tabStrip(doc, vm, sink));
  mount.appendChild(searchBox(doc, sink));

  if (vm.lastError) {
    const err = doc.createElement("div");
    err.className = "un-error";
    err.textContent = vm.lastError;
    mount.appendChild(err);
  }
  if (vm.info) {
    const info = doc.createElement("div");
    info.className = "un-info";
    info.textContent = vm.info;
    mount.appendChild(info);
  }

  const stage = doc.createElement("div");
  stage.className = "un-stage";
  stage.style.position = "relative";
  stage.appendChild(nodeElement(doc, vm.tree, vm, sink));
  mount.appendChild(stage);
}
