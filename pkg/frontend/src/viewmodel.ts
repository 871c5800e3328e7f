/**
 * Panel state machine: one session, one SSE subscription, optimistic edits.
 *
 * The model is the single source the DOM renders from. Server events and
 * user gestures both funnel through it, so every mutation path ends in
 * exactly one emit() and the rendered graph can never drift silently:
 * diffs are applied in version order and anything out of step triggers a
 * full resync from GET /workflow.
 */

import { ApiError, PanelApi } from './api.js';
import { ClientGraph, GraphError } from './graph.js';
import type {
  EditData,
  FillNoteData,
  NodeStatus,
  Phase,
  StreamEvent,
  WorkflowBody,
} from './types.js';

export interface RecorderState {
  recording: boolean;
  eventCount: number;
  lastEventSummary: string;
}

export interface Banner {
  tone: 'error' | 'info';
  text: string;
}

type Listener = (model: PanelModel) => void;

export class PanelModel {
  version = 0;
  phase: Phase = 'recording';
  graph = new ClientGraph();
  statuses = new Map<string, NodeStatus>();
  resultText = '';
  resultWarnings: string[] = [];
  fillNotes: FillNoteData[] = [];
  banner: Banner | null = null;
  selection: string | null = null;
  recorder: RecorderState = { recording: false, eventCount: 0, lastEventSummary: '' };
  /** Nodes added by the latest diff; the renderer pulses them once. */
  freshNodes = new Set<string>();
  /** High-water mark of simultaneously running nodes this execution. */
  maxConcurrentRunning = 0;

  private listeners: Listener[] = [];

  constructor(
    readonly api: PanelApi,
    readonly sessionId: string,
  ) {}

  static async open(api: PanelApi): Promise<PanelModel> {
    const info = await api.createSession();
    const model = new PanelModel(api, info.session_id);
    model.version = info.version;
    model.phase = info.phase;
    model.recorder.recording = info.phase === 'recording';
    return model;
  }

  onChange(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this);
  }

  private adopt(body: WorkflowBody): void {
    this.graph = ClientGraph.fromWorkflow(body.workflow);
    this.version = body.version;
    this.phase = body.phase;
    if (body.fill_notes) this.fillNotes = body.fill_notes;
  }

  /** Replace local state with the server's; the recovery path for drift. */
  async resync(): Promise<void> {
    this.adopt(await this.api.getWorkflow(this.sessionId));
    this.freshNodes.clear();
    this.emit();
  }

  /** Route one server-sent event into the model. */
  handleEvent(event: StreamEvent): void {
    switch (event.name) {
      case 'phase': {
        const payload = event.payload as { phase: Phase; version: number };
        this.phase = payload.phase;
        this.recorder.recording = payload.phase === 'recording';
        if (payload.version > this.version) {
          // Connected mid-session with a stale snapshot; catch up.
          void this.resync();
          return;
        }
        break;
      }
      case 'workflow_diff': {
        const payload = event.payload as { version: number; edits: EditData[] };
        if (payload.version <= this.version) return; // own edit or replay
        if (payload.version !== this.version + 1) {
          void this.resync(); // missed a diff; do not guess
          return;
        }
        this.freshNodes = new Set(
          payload.edits.filter((e) => e.kind === 'add_node').map((e) => e.node.name),
        );
        try {
          this.graph.applyDiff(payload.edits);
          this.version = payload.version;
        } catch (error) {
          if (!(error instanceof GraphError)) throw error;
          void this.resync();
          return;
        }
        break;
      }
      case 'node_status': {
        const payload = event.payload as { node: string; status: NodeStatus };
        this.statuses.set(payload.node, payload.status);
        const running = this.runningNow().length;
        if (running > this.maxConcurrentRunning) this.maxConcurrentRunning = running;
        break;
      }
      case 'final_result': {
        const payload = event.payload as { output?: string; warnings?: string[]; error?: string };
        this.resultText = payload.output ?? `execution failed: ${payload.error ?? 'unknown'}`;
        this.resultWarnings = payload.warnings ?? [];
        break;
      }
    }
    this.emit();
  }

  runningNow(): string[] {
    return [...this.statuses.entries()]
      .filter(([, status]) => status === 'running')
      .map(([name]) => name);
  }

  statusOf(name: string): NodeStatus {
    return this.statuses.get(name) ?? 'pending';
  }

  /**
   * Optimistically apply one edit, then confirm it with the server.
   * Any rejection rolls the graph back to the pre-edit state.
   */
  async submitEdit(edit: EditData): Promise<boolean> {
    const before = this.graph.clone();
    const beforeVersion = this.version;
    try {
      this.graph.applyEdit(edit);
    } catch (error) {
      if (!(error instanceof GraphError)) throw error;
      this.graph = before;
      this.banner = { tone: 'error', text: error.message };
      this.emit();
      return false;
    }
    this.emit();
    try {
      const body = await this.api.putEdit(this.sessionId, beforeVersion, edit);
      this.version = body.version;
      this.banner = null;
      this.emit();
      return true;
    } catch (error) {
      this.graph = before;
      this.version = beforeVersion;
      if (error instanceof ApiError) {
        if (error.status === 409) {
          this.banner = { tone: 'info', text: 'workflow changed elsewhere; reloaded latest' };
          await this.resync();
          return false;
        }
        const detail = error.body.report?.errors.map((v) => v.code).join(', ');
        this.banner = {
          tone: 'error',
          text: detail ? `${error.body.message} [${detail}]` : error.body.message,
        };
      } else {
        this.banner = { tone: 'error', text: String(error) };
      }
      this.emit();
      return false;
    }
  }

  async startRecording(): Promise<void> {
    const info = await this.api.setPhase(this.sessionId, 'recording');
    this.phase = info.phase;
    this.recorder.recording = true;
    this.emit();
  }

  async stopRecording(): Promise<void> {
    const info = await this.api.setPhase(this.sessionId, 'reviewing');
    this.phase = info.phase;
    this.recorder.recording = false;
    this.emit();
  }

  /** Forward captured events; the server echoes how many it kept. */
  async forwardEvents(jsonl: string): Promise<void> {
    const accepted = await this.api.postEvents(this.sessionId, jsonl);
    this.recorder.eventCount += accepted.accepted;
    const lastLine = jsonl.trim().split('\n').at(-1) ?? '';
    this.recorder.lastEventSummary = lastLine.slice(0, 120);
    this.emit();
  }

  async adaptTo(instruction: string): Promise<boolean> {
    try {
      const body = await this.api.adapt(this.sessionId, instruction);
      this.adopt(body);
      this.banner = null;
      this.emit();
      return true;
    } catch (error) {
      if (!(error instanceof ApiError)) throw error;
      this.banner = { tone: 'error', text: `${error.body.stage}: ${error.body.message}` };
      this.emit();
      return false;
    }
  }

  async startExecution(pages?: Record<string, unknown>): Promise<string | null> {
    this.statuses = new Map(this.graph.nodeNames().map((name) => [name, 'pending']));
    this.resultText = '';
    this.resultWarnings = [];
    this.maxConcurrentRunning = 0;
    this.emit();
    try {
      const started = await this.api.execute(this.sessionId, pages);
      this.phase = started.phase;
      this.emit();
      return started.execution_id;
    } catch (error) {
      if (!(error instanceof ApiError)) throw error;
      this.banner = { tone: 'error', text: `${error.body.stage}: ${error.body.message}` };
      this.emit();
      return null;
    }
  }

  select(name: string | null): void {
    this.selection = name;
    this.emit();
  }
}
