/**
 * Layered auto-layout: columns are execution levels, left to right.
 *
 * A node sits one level right of its deepest parent, so nodes sharing a
 * column are exactly the ones the engine would run concurrently.
 */

import type { ClientGraph } from './graph.js';

export interface NodeBox {
  name: string;
  level: number;
  row: number;
  x: number;
  y: number;
}

export interface LayoutMetrics {
  columnWidth: number;
  rowHeight: number;
  paddingX: number;
  paddingY: number;
}

export const DEFAULT_METRICS: LayoutMetrics = {
  columnWidth: 190,
  rowHeight: 96,
  paddingX: 16,
  paddingY: 16,
};

/** Level per node; nodes in cycles or with missing parents get level 0. */
export function levelize(graph: ClientGraph): Map<string, number> {
  const names = graph.nodeNames();
  const level = new Map<string, number>();
  const pending = new Map<string, number>();
  for (const name of names) pending.set(name, graph.get(name)!.parent.length);

  let ready = names.filter((name) => pending.get(name) === 0).sort();
  while (ready.length > 0) {
    const next: string[] = [];
    for (const name of ready) {
      const node = graph.get(name)!;
      const parents = node.parent.filter((p) => level.has(p));
      level.set(name, parents.length === 0 ? 0 : 1 + Math.max(...parents.map((p) => level.get(p)!)));
      for (const child of node.children) {
        const left = (pending.get(child) ?? 0) - 1;
        pending.set(child, left);
        if (left === 0) next.push(child);
      }
    }
    ready = next.sort();
  }
  for (const name of names) if (!level.has(name)) level.set(name, 0);
  return level;
}

export function layout(graph: ClientGraph, metrics: LayoutMetrics = DEFAULT_METRICS): NodeBox[] {
  const levels = levelize(graph);
  const byLevel = new Map<number, string[]>();
  for (const name of graph.nodeNames()) {
    const lvl = levels.get(name)!;
    const column = byLevel.get(lvl) ?? [];
    column.push(name);
    byLevel.set(lvl, column);
  }
  const boxes: NodeBox[] = [];
  for (const [lvl, column] of byLevel) {
    column.sort();
    column.forEach((name, row) => {
      boxes.push({
        name,
        level: lvl,
        row,
        x: metrics.paddingX + lvl * metrics.columnWidth,
        y: metrics.paddingY + row * metrics.rowHeight,
      });
    });
  }
  return boxes.sort((a, b) => a.level - b.level || a.row - b.row);
}
