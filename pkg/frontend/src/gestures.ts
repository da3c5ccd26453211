// Gesture -> command translation. Every user intention reaches the wire
// in at most two gestures; most need one.

import { RenderNode } from "./protocol.js";
import { ViewModel } from "./viewmodel.js";

export type Gesture =
  | { kind: "tab-plus" } // the "+" next to the task tabs
  | { kind: "tab-close"; task: string } // the "x" on a tab
  | { kind: "tab-switch"; task: string }
  | { kind: "portal"; portal: string }
  | { kind: "tool"; command: string }
  | { kind: "object"; sign: string } // select an object on the desktop
  | { kind: "escape" }
  | { kind: "search"; query: string };

export interface Outgoing {
  tool: string;
  params: Record<string, unknown>;
}

// tools that act on the current selection
const SELECTION_TOOLS: Record<string, "sign" | "object"> = {
  what_is_this: "sign",
  properties: "sign",
  structure: "sign",
  select: "sign",
  move: "object",
  copy: "object",
  delete: "object",
  save: "object",
};

export function commandFor(gesture: Gesture, vm: ViewModel): Outgoing | null {
  switch (gesture.kind) {
    case "tab-plus":
      return { tool: "create_task", params: {} };
    case "tab-close":
      return { tool: "complete_task", params: { task: gesture.task } };
    case "tab-switch":
      return { tool: "switch_task", params: { task: gesture.task } };
    case "portal":
      return { tool: "activate", params: { portal: gesture.portal } };
    case "escape":
      return { tool: "exit", params: {} };
    case "search":
      return { tool: "find", params: { query: gesture.query } };
    case "object":
      return { tool: "select", params: { sign: gesture.sign } };
    case "tool": {
      const params: Record<string, unknown> = {};
      const wants = SELECTION_TOOLS[gesture.command];
      if (wants && vm.selection) params[wants] = vm.selection;
      return { tool: gesture.command, params };
    }
  }
}

/** The gesture a click on a rendered node produces, if any. */
export function gestureForNode(node: RenderNode): Gesture | null {
  if (node.kind === "task_tab" && node.sign) {
    return { kind: "tab-switch", task: node.sign };
  }
  if (node.kind === "portal" && node.sign) {
    return { kind: "portal", portal: node.sign };
  }
  if (node.kind === "tool" && node.command) {
    return { kind: "tool", command: node.command };
  }
  if ((node.kind === "object" || node.kind === "container") && node.sign) {
    return { kind: "object", sign: node.sign };
  }
  return null;
}
