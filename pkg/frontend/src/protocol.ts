// Wire types shared with the server: one JSON object per frame.

export type FrameType = "hello" | "command" | "render" | "event" | "error" | "bye";

export interface Frame {
  v: 1;
  type: FrameType;
  seq: number;
  body: Record<string, unknown>;
}

export type Bounds = [number, number, number, number];

export type NodeKind =
  | "space"
  | "desktop"
  | "toolbar"
  | "tool"
  | "portal"
  | "object"
  | "container"
  | "label"
  | "task_tab";

export interface RenderNode {
  node_id: string;
  kind: NodeKind;
  bounds: Bounds;
  label: string;
  sign?: string | null;
  command?: string;
  meta?: Record<string, unknown>;
  children: RenderNode[];
}

export interface CommandBody {
  tool: string;
  params: Record<string, unknown>;
  session: string;
  target?: string;
}

const KINDS = new Set<string>([
  "space", "desktop", "toolbar", "tool", "portal",
  "object", "container", "label", "task_tab",
]);

/** Structural check mirroring the server-side validator; a tree that
 * fails here is shown as a diagnostic overlay, never partially drawn. */
export function validateRenderTree(tree: RenderNode, isRootSpace: boolean): string[] {
  const problems: string[] = [];
  const seen = new Set<string>();

  const within = (c: Bounds, p: Bounds): boolean => {
    const eps = 1e-6;
    return (
      c[0] >= p[0] - eps && c[1] >= p[1] - eps &&
      c[0] + c[2] <= p[0] + p[2] + eps && c[1] + c[3] <= p[1] + p[3] + eps
    );
  };

  const walk = (node: RenderNode, parent: Bounds | null): void => {
    if (typeof node.node_id !== "string") {
      problems.push("node without node_id");
      return;
    }
    if (seen.has(node.node_id)) {
      problems.push(`duplicate node_id ${node.node_id}`);
      return;
    }
    seen.add(node.node_id);
    if (!KINDS.has(node.kind)) problems.push(`${node.node_id}: unknown kind ${node.kind}`);
    const bounds = node.bounds;
    if (!Array.isArray(bounds) || bounds.length !== 4 || bounds.some((b) => typeof b !== "number")) {
      problems.push(`${node.node_id}: bad bounds`);
      return;
    }
    if (parent && !within(bounds, parent)) problems.push(`${node.node_id}: bounds escape parent`);
    for (const child of node.children ?? []) walk(child, bounds);
  };

  if (tree.kind !== "space") problems.push("root node must be a space");
  walk(tree, null);

  if (!isRootSpace && !hasExit(tree)) problems.push("non-root space lacks an exit control");
  return problems;
}

function hasExit(node: RenderNode): boolean {
  if (node.kind === "tool" && node.command === "exit") return true;
  return (node.children ?? []).some(hasExit);
}

export function encodeFrame(frame: Frame): string {
  return JSON.stringify(frame) + "\n";
}

export function decodeFrame(raw: string): Frame {
  const data = JSON.parse(raw);
  if (data.v !== 1) throw new Error(`unsupported protocol version ${data.v}`);
  return data as Frame;
}
