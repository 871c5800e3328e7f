/** DOM rendering and gesture wiring; all state lives in PanelModel. */

import { purposeOf } from './graph.js';
import { DEFAULT_METRICS, layout } from './layout.js';
import type { PanelModel } from './viewmodel.js';
import type { EditData } from './types.js';

const CARD_W = 160;
const CARD_H = 72;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderGraph(container: HTMLElement, model: PanelModel): void {
  container.textContent = '';
  const boxes = layout(model.graph);
  const byName = new Map(boxes.map((b) => [b.name, b]));
  const width = Math.max(...boxes.map((b) => b.x + CARD_W), 0) + DEFAULT_METRICS.paddingX;
  const height = Math.max(...boxes.map((b) => b.y + CARD_H), 0) + DEFAULT_METRICS.paddingY;

  const svg = document.createElementNS('http://www.w3.org/2000/svg', 'svg');
  svg.setAttribute('class', 'edges');
  svg.setAttribute('width', String(width));
  svg.setAttribute('height', String(height));
  for (const edge of model.graph.edgeSet()) {
    const [parent, child] = edge.split('->') as [string, string];
    const from = byName.get(parent);
    const to = byName.get(child);
    if (!from || !to) continue;
    const line = document.createElementNS('http://www.w3.org/2000/svg', 'line');
    line.setAttribute('x1', String(from.x + CARD_W));
    line.setAttribute('y1', String(from.y + CARD_H / 2));
    line.setAttribute('x2', String(to.x));
    line.setAttribute('y2', String(to.y + CARD_H / 2));
    line.setAttribute('class', 'edge');
    svg.appendChild(line);
  }
  container.appendChild(svg);

  for (const box of boxes) {
    const node = model.graph.get(box.name)!;
    const card = el('div', `node-card status-${model.statusOf(box.name)}`);
    if (model.freshNodes.has(box.name)) card.classList.add('fresh');
    if (model.selection === box.name) card.classList.add('selected');
    card.style.left = `${box.x}px`;
    card.style.top = `${box.y}px`;
    card.dataset['node'] = box.name;
    card.appendChild(el('div', 'node-name', box.name));
    card.appendChild(el('div', 'node-purpose', purposeOf(node.prompt)));
    card.appendChild(el('span', 'node-status', model.statusOf(box.name)));
    card.addEventListener('click', () => model.select(box.name));
    container.appendChild(card);
  }
  container.style.minHeight = `${height}px`;
}

export function renderResults(container: HTMLElement, model: PanelModel): void {
  container.classList.toggle('open', model.resultText !== '');
  const body = container.querySelector('.results-body') as HTMLElement | null;
  if (!body) return;
  body.textContent = model.resultText;
  const warnings = container.querySelector('.results-warnings') as HTMLElement | null;
  if (warnings) warnings.textContent = model.resultWarnings.join('\n');
}

export function renderStatusBar(container: HTMLElement, model: PanelModel): void {
  const badge = container.querySelector('.phase-badge') as HTMLElement | null;
  if (badge) {
    badge.textContent = model.phase;
    badge.className = `phase-badge phase-${model.phase}`;
  }
  const counter = container.querySelector('.event-counter') as HTMLElement | null;
  if (counter) counter.textContent = `${model.recorder.eventCount} events`;
  const banner = container.querySelector('.banner') as HTMLElement | null;
  if (banner) {
    banner.textContent = model.banner?.text ?? '';
    banner.className = `banner ${model.banner ? `banner-${model.banner.tone}` : 'banner-empty'}`;
  }
}

function renderInspector(container: HTMLElement, model: PanelModel): void {
  container.textContent = '';
  const name = model.selection;
  const node = name ? model.graph.get(name) : undefined;
  if (!name || !node) {
    container.appendChild(el('p', 'inspector-hint', 'Select a node to inspect it.'));
    return;
  }
  container.appendChild(el('h3', undefined, name));

  const prompt = el('textarea', 'inspector-prompt');
  prompt.value = node.prompt;
  container.appendChild(prompt);

  const tools = el('input', 'inspector-tools') as HTMLInputElement;
  tools.value = node.tools.join(', ');
  container.appendChild(tools);

  const save = el('button', undefined, 'Save node');
  save.addEventListener('click', () => {
    const edits: EditData[] = [];
    if (prompt.value !== node.prompt) edits.push({ kind: 'set_prompt', name, prompt: prompt.value });
    const toolList = tools.value.split(',').map((t) => t.trim()).filter(Boolean);
    if (toolList.join(',') !== node.tools.join(',')) {
      edits.push({ kind: 'set_tools', name, tools: toolList });
    }
    void (async () => {
      for (const edit of edits) {
        if (!(await model.submitEdit(edit))) break;
      }
    })();
  });
  container.appendChild(save);

  const remove = el('button', 'danger', 'Delete subtree');
  remove.addEventListener('click', () => {
    void model.submitEdit({ kind: 'delete_subtree', name });
    model.select(null);
  });
  container.appendChild(remove);

  const others = model.graph.nodeNames().filter((n) => n !== name);
  if (others.length > 0) {
    const target = el('select') as HTMLSelectElement;
    for (const other of others) {
      const option = el('option', undefined, other) as HTMLOptionElement;
      option.value = other;
      target.appendChild(option);
    }
    container.appendChild(target);

    const connect = el('button', undefined, 'Add edge to');
    connect.addEventListener('click', () => {
      void model.submitEdit({
        kind: 'reconnect',
        remove: null,
        add: { parent: name, child: target.value },
      });
    });
    container.appendChild(connect);

    const disconnect = el('button', undefined, 'Remove edge to');
    disconnect.addEventListener('click', () => {
      void model.submitEdit({
        kind: 'reconnect',
        remove: { parent: name, child: target.value },
        add: null,
      });
    });
    container.appendChild(disconnect);
  }
}

/** Wire the whole panel into pre-existing page regions. */
export function mountPanel(root: HTMLElement, model: PanelModel): void {
  const graphArea = root.querySelector('.graph-area') as HTMLElement;
  const results = root.querySelector('.results-panel') as HTMLElement;
  const statusBar = root.querySelector('.status-bar') as HTMLElement;
  const inspector = root.querySelector('.inspector') as HTMLElement;

  const recordBtn = root.querySelector('.record-toggle') as HTMLButtonElement | null;
  recordBtn?.addEventListener('click', () => {
    void (model.recorder.recording ? model.stopRecording() : model.startRecording());
  });

  const instruction = root.querySelector('.instruction-input') as HTMLInputElement | null;
  const adaptBtn = root.querySelector('.adapt-button') as HTMLButtonElement | null;
  adaptBtn?.addEventListener('click', () => {
    if (instruction && instruction.value.trim()) void model.adaptTo(instruction.value);
  });

  const executeBtn = root.querySelector('.execute-button') as HTMLButtonElement | null;
  executeBtn?.addEventListener('click', () => {
    void model.startExecution();
  });

  model.onChange(() => {
    renderGraph(graphArea, model);
    renderResults(results, model);
    renderStatusBar(statusBar, model);
    renderInspector(inspector, model);
    if (recordBtn) recordBtn.textContent = model.recorder.recording ? 'Stop' : 'Record';
    if (executeBtn) executeBtn.disabled = model.phase === 'executing';
  });
}
