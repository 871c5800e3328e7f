/** Wire types for the demoflow service API. */

export interface WorkflowNodeData {
  name: string;
  parent: string[];
  children: string[];
  tools: string[];
  prompt: string;
}

export interface WorkflowData {
  timestamp: string;
  context_info: Record<string, unknown>;
  action_info: Record<string, unknown>;
  nodes: WorkflowNodeData[];
  semantic_variables?: SemanticVariableData[];
  fill_notes?: FillNoteData[];
}

export interface SemanticVariableData {
  placeholder: string;
  semantic_description: string;
  paths: string[];
  example_values: string[];
}

export interface FillNoteData {
  placeholder: string;
  decision: string;
  source: string;
}

export type Phase = 'recording' | 'reviewing' | 'executing' | 'idle';

export type NodeStatus = 'pending' | 'running' | 'succeeded' | 'failed' | 'skipped';

/** One entry of the closed edit vocabulary, as sent to PUT /workflow. */
export type EditData =
  | { kind: 'add_node'; node: WorkflowNodeData }
  | { kind: 'delete_subtree'; name: string }
  | { kind: 'reconnect'; remove: EdgeData | null; add: EdgeData | null }
  | { kind: 'set_prompt'; name: string; prompt: string }
  | { kind: 'set_tools'; name: string; tools: string[] };

export interface EdgeData {
  parent: string;
  child: string;
}

export interface SessionInfo {
  session_id: string;
  phase: Phase;
  version: number;
}

export interface WorkflowBody extends SessionInfo {
  workflow: WorkflowData;
  fill_notes?: FillNoteData[];
}

export interface EventsAccepted {
  accepted: number;
  buffered: boolean;
  phase: Phase;
  version: number;
}

export interface ViolationData {
  code: string;
  nodes: string[];
  message: string;
}

export interface ReportData {
  errors: ViolationData[];
  warnings: ViolationData[];
}

export interface ErrorBody {
  code: string;
  message: string;
  stage: string;
  report?: ReportData;
}

export interface NodeResultData {
  node_name: string;
  status: NodeStatus;
  output: string;
  started_at: string;
  finished_at: string;
  attempts: number;
}

export interface ExecutionResultData {
  execution_id: string;
  plan: { levels: string[][]; workflow_version?: string };
  results: Record<string, NodeResultData>;
  final_output: string;
  warnings: string[];
}

export interface TemplateRecordData {
  template_id: string;
  name: string;
  lineage: string;
  created_at: string;
  content_hash: string;
  workflow?: WorkflowData;
}

/** Server-sent events, keyed by the SSE event name. */
export interface StreamEvents {
  phase: { phase: Phase; version: number };
  workflow_diff: { version: number; edits: Array<EditData & Record<string, unknown>> };
  node_status: { execution_id: string; node: string; status: NodeStatus };
  final_result: { execution_id: string; output?: string; warnings?: string[]; error?: string };
}

export type StreamEventName = keyof StreamEvents;

export interface StreamEvent<K extends StreamEventName = StreamEventName> {
  name: K;
  payload: StreamEvents[K];
}
