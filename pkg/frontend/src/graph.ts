/**
 * Client-side mirror of the server workflow graph.
 *
 * The panel never mutates the graph ad hoc: every change is expressed in
 * the same edit vocabulary the server accepts, so replaying the SSE diff
 * stream over a snapshot converges on exactly the server state.
 */

import type { EditData, WorkflowData, WorkflowNodeData } from './types.js';

export interface GraphNode {
  name: string;
  parent: string[];
  children: string[];
  tools: string[];
  prompt: string;
}

export class GraphError extends Error {}

function cloneNode(node: WorkflowNodeData): GraphNode {
  return {
    name: node.name,
    parent: [...node.parent],
    children: [...node.children],
    tools: [...node.tools],
    prompt: node.prompt,
  };
}

export class ClientGraph {
  private nodes = new Map<string, GraphNode>();
  private order: string[] = [];

  static fromWorkflow(workflow: WorkflowData): ClientGraph {
    const graph = new ClientGraph();
    for (const node of workflow.nodes) {
      graph.nodes.set(node.name, cloneNode(node));
      graph.order.push(node.name);
    }
    return graph;
  }

  clone(): ClientGraph {
    const copy = new ClientGraph();
    for (const name of this.order) {
      copy.nodes.set(name, cloneNode(this.nodes.get(name)!));
      copy.order.push(name);
    }
    return copy;
  }

  get(name: string): GraphNode | undefined {
    return this.nodes.get(name);
  }

  nodeNames(): string[] {
    return [...this.order];
  }

  nodeSet(): Set<string> {
    return new Set(this.order);
  }

  /** Directed edges as "parent->child" strings, set-comparable. */
  edgeSet(): Set<string> {
    const edges = new Set<string>();
    for (const node of this.nodes.values()) {
      for (const child of node.children) {
        edges.add(`${node.name}->${child}`);
      }
    }
    return edges;
  }

  /** Names reachable from `root` through children edges, root included. */
  subtree(root: string): Set<string> {
    const seen = new Set<string>([root]);
    const frontier = [root];
    while (frontier.length > 0) {
      const current = this.nodes.get(frontier.pop()!);
      if (!current) continue;
      for (const child of current.children) {
        if (!seen.has(child)) {
          seen.add(child);
          frontier.push(child);
        }
      }
    }
    return seen;
  }

  private named(name: string): GraphNode {
    const node = this.nodes.get(name);
    if (!node) throw new GraphError(`unknown node ${name}`);
    return node;
  }

  /** Apply one vocabulary edit in place; throws GraphError on bad references. */
  applyEdit(edit: EditData): void {
    switch (edit.kind) {
      case 'add_node': {
        const node = cloneNode(edit.node);
        if (!this.nodes.has(node.name)) {
          for (const p of node.parent) this.named(p).children.push(node.name);
          for (const c of node.children) this.named(c).parent.push(node.name);
        }
        this.nodes.set(node.name, node);
        this.order.push(node.name);
        break;
      }
      case 'delete_subtree': {
        const doomed = this.subtree(this.named(edit.name).name);
        this.order = this.order.filter((name) => !doomed.has(name));
        for (const name of doomed) this.nodes.delete(name);
        for (const node of this.nodes.values()) {
          node.parent = node.parent.filter((p) => !doomed.has(p));
          node.children = node.children.filter((c) => !doomed.has(c));
        }
        break;
      }
      case 'reconnect': {
        if (edit.remove) {
          const parent = this.named(edit.remove.parent);
          const child = this.named(edit.remove.child);
          if (!parent.children.includes(child.name)) {
            throw new GraphError(`edge ${parent.name}->${child.name} not present`);
          }
          parent.children = parent.children.filter((c) => c !== child.name);
          child.parent = child.parent.filter((p) => p !== parent.name);
        }
        if (edit.add) {
          const parent = this.named(edit.add.parent);
          const child = this.named(edit.add.child);
          if (parent.children.includes(child.name)) {
            throw new GraphError(`edge ${parent.name}->${child.name} already present`);
          }
          parent.children.push(child.name);
          child.parent.push(parent.name);
        }
        break;
      }
      case 'set_prompt':
        this.named(edit.name).prompt = edit.prompt;
        break;
      case 'set_tools':
        this.named(edit.name).tools = [...edit.tools];
        break;
    }
  }

  applyDiff(edits: EditData[]): void {
    for (const edit of edits) this.applyEdit(edit);
  }
}

/** One-line card description: the text after "Purpose:" up to its period. */
export function purposeOf(prompt: string): string {
  const match = /Purpose:\s*([^.]*)/.exec(prompt);
  return match ? match[1]!.trim() : prompt.slice(0, 60);
}
