// View state: a pure function of the last server render tree plus the
// local selection. No business state lives here — reloading the page
// and re-fetching the tree reproduces the same view.

import { RenderNode, validateRenderTree } from "./protocol.js";

export type Connection = "connecting" | "open" | "closed" | "error";

export interface TaskTab {
  label: string;
  task: string;
  state: string;
  active: boolean;
  portal: string;
}

export interface ViewModel {
  tree: RenderNode | null;
  invalid: string[] | null; // validator diagnostics for a refused tree
  selection: string | null;
  pending: string | null; // tool token of the in-flight command
  connection: Connection;
  lastError: string | null;
  info: string | null; // e.g. the "What is this?" text
}

export function initialViewModel(): ViewModel {
  return {
    tree: null,
    invalid: null,
    selection: null,
    pending: null,
    connection: "connecting",
    lastError: null,
    info: null,
  };
}

export function spaceDepth(tree: RenderNode): number {
  const meta = tree.meta as { depth?: number } | undefined;
  return meta?.depth ?? 1;
}

/** Accept a render tree from the server, or refuse it whole. */
export function applyRender(vm: ViewModel, tree: RenderNode): ViewModel {
  const problems = validateRenderTree(tree, spaceDepth(tree) <= 1);
  if (problems.length > 0) {
    return { ...vm, invalid: problems, pending: null };
  }
  const meta = tree.meta as { info?: string } | undefined;
  return {
    ...vm,
    tree,
    invalid: null,
    pending: null,
    lastError: null,
    info: meta?.info ?? null,
  };
}

export function applyError(vm: ViewModel, code: string, message: string): ViewModel {
  return { ...vm, lastError: `${code}: ${message}`, pending: null };
}

export function taskTabs(vm: ViewModel): TaskTab[] {
  const tabs: TaskTab[] = [];
  const walk = (node: RenderNode): void => {
    if (node.kind === "task_tab") {
      const meta = (node.meta ?? {}) as Record<string, unknown>;
      tabs.push({
        label: node.label,
        task: node.sign ?? "",
        state: String(meta.state ?? ""),
        active: Boolean(meta.active),
        portal: String(meta.portal ?? ""),
      });
    }
    for (const child of node.children ?? []) walk(child);
  };
  if (vm.tree) walk(vm.tree);
  return tabs;
}

export function findNodes(
  vm: ViewModel,
  pred: (node: RenderNode) => boolean,
): RenderNode[] {
  const out: RenderNode[] = [];
  const walk = (node: RenderNode): void => {
    if (pred(node)) out.push(node);
    for (const child of node.children ?? []) walk(child);
  };
  if (vm.tree) walk(vm.tree);
  return out;
}
