/** Typed fetch client for the demoflow service. */

import type {
  EditData,
  ErrorBody,
  EventsAccepted,
  ExecutionResultData,
  Phase,
  SessionInfo,
  TemplateRecordData,
  WorkflowBody,
  WorkflowData,
} from './types.js';

/** Structured service failure: carries the server's code/stage/report. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  if (response.ok) return (await response.json()) as T;
  let body: ErrorBody;
  try {
    body = (await response.json()) as ErrorBody;
  } catch {
    body = { code: 'http_error', message: response.statusText, stage: 'transport' };
  }
  throw new ApiError(response.status, body);
}

export class PanelApi {
  constructor(readonly baseUrl: string = '') {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async post<T>(path: string, body?: unknown): Promise<T> {
    return unwrap<T>(
      await fetch(this.url(path), {
        method: 'POST',
        headers: body === undefined ? {} : { 'content-type': 'application/json' },
        body: body === undefined ? null : JSON.stringify(body),
      }),
    );
  }

  createSession(): Promise<SessionInfo> {
    return this.post('/sessions');
  }

  /** Forward captured events as JSONL; the server echoes the kept count. */
  async postEvents(sessionId: string, jsonl: string): Promise<EventsAccepted> {
    return unwrap(
      await fetch(this.url(`/sessions/${sessionId}/events`), {
        method: 'POST',
        headers: { 'content-type': 'application/x-ndjson' },
        body: jsonl,
      }),
    );
  }

  async getWorkflow(sessionId: string): Promise<WorkflowBody> {
    return unwrap(await fetch(this.url(`/sessions/${sessionId}/workflow`)));
  }

  /** One edit at a pinned version; 409 means someone got there first. */
  async putEdit(sessionId: string, expectedVersion: number, edit: EditData): Promise<WorkflowBody> {
    return unwrap(
      await fetch(this.url(`/sessions/${sessionId}/workflow`), {
        method: 'PUT',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ expected_version: expectedVersion, edit }),
      }),
    );
  }

  setPhase(sessionId: string, phase: Phase): Promise<SessionInfo> {
    return this.post(`/sessions/${sessionId}/phase`, { phase });
  }

  adapt(sessionId: string, instruction: string): Promise<WorkflowBody> {
    return this.post(`/sessions/${sessionId}/adapt`, { instruction });
  }

  execute(
    sessionId: string,
    pages?: Record<string, unknown>,
  ): Promise<{ execution_id: string; phase: Phase }> {
    return this.post(`/sessions/${sessionId}/execute`, pages === undefined ? {} : { pages });
  }

  async getExecution(sessionId: string, executionId: string): Promise<ExecutionResultData> {
    return unwrap(await fetch(this.url(`/sessions/${sessionId}/executions/${executionId}`)));
  }

  streamUrl(sessionId: string): string {
    return this.url(`/sessions/${sessionId}/stream`);
  }

  saveTemplate(body: {
    name: string;
    workflow?: WorkflowData;
    session_id?: string;
    lineage?: string;
  }): Promise<TemplateRecordData> {
    return this.post('/templates', body);
  }

  async listTemplates(): Promise<{ templates: TemplateRecordData[] }> {
    return unwrap(await fetch(this.url('/templates')));
  }

  async getTemplate(templateId: string): Promise<TemplateRecordData> {
    return unwrap(await fetch(this.url(`/templates/${templateId}`)));
  }

  instantiate(templateId: string, instruction?: string): Promise<SessionInfo> {
    return this.post(
      `/templates/${templateId}/instantiate`,
      instruction ? { instruction } : {},
    );
  }
}
